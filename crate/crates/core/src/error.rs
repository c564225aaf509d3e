//! Crate-wide error type. Variants carry enough context to name the offending
//! quantity and its admissible range in the message.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("wavelength {wavelength_nm} nm outside supported range [{min_nm}, {max_nm}] nm")]
    WavelengthRange {
        wavelength_nm: f64,
        min_nm: f64,
        max_nm: f64,
    },

    #[error(
        "energy conservation violated for pump {pump_nm} nm, signal {signal_nm} nm, \
         idler {idler_nm} nm (relative mismatch {relative:.3e})"
    )]
    EnergyMismatch {
        pump_nm: f64,
        signal_nm: f64,
        idler_nm: f64,
        relative: f64,
    },

    #[error("no sign change in [{lo:.6e}, {hi:.6e}] while solving for {what}")]
    BracketFailure { what: &'static str, lo: f64, hi: f64 },

    #[error("mirror table does not cover {wavelength_nm} nm (table spans [{min_nm}, {max_nm}] nm)")]
    MirrorRange {
        wavelength_nm: f64,
        min_nm: f64,
        max_nm: f64,
    },

    #[error("mirror table {path}: {reason}")]
    MirrorTable { path: String, reason: String },

    #[error("round-trip amplitude is {rho:.3e}; finesse is undefined without feedback")]
    NoFeedback { rho: f64 },

    #[error("round-trip amplitude {rho} >= 1; a lossless or amplifying cavity has no steady state")]
    Divergent { rho: f64 },

    #[error("invalid {name} = {value}; expected {constraint}")]
    Domain {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("filter at {center_nm} nm does not overlap the spectral grid")]
    EmptyOverlap { center_nm: f64 },

    #[error("found {found} fringe maxima, need at least {needed} for a beat-period estimate")]
    InsufficientFringes { found: usize, needed: usize },

    #[error("fit did not converge within {iterations} iterations (residual norm {residual_norm:.6e})")]
    FitDiverged {
        iterations: usize,
        residual_norm: f64,
    },

    #[error("no peak above the prominence threshold")]
    NoPeak,

    #[error("channel '{label}' missing or empty")]
    EmptyChannel { label: String },

    #[error("estimate undefined: {reason}")]
    UndefinedEstimate { reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
