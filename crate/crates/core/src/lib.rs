//! Simulation and analysis suite for a frequency-multiplexed photon-pair source
//! built around a singly resonant nonlinear waveguide cavity.
//!
//! A periodically poled waveguide with dielectric end coatings acts as a monolithic
//! Fabry-Perot resonator for the longer-wavelength half of the down-converted
//! spectrum while the shorter-wavelength half leaves the crystal freely. Pumped far
//! below oscillation threshold, the device emits photon pairs on a comb of cavity
//! modes. The crate models that chain end to end:
//!
//! * [`dispersion`]: refractive and group index of the poled waveguide, quasi-phase
//!   matching, and the two-constraint calibration that pins the model to the
//!   measured phase-matching point and free spectral range.
//! * [`cavity`]: tabulated mirror spectra and the Fabry-Perot quantities built on
//!   them (free spectral range, finesse, linewidth, Airy transmission, emission
//!   amplitude, resonance comb).
//! * [`biphoton`]: the joint spectral amplitude of the pair on a detuning grid,
//!   per-mode rate tables, double-resonance cluster analysis, and the broadband
//!   spectral envelope.
//! * [`correlation`]: second-order cross-correlation obtained by Fourier transform
//!   of the filtered joint spectrum, detector-jitter convolution, beat-period and
//!   ring-down envelope estimation, heralded waveforms.
//! * [`montecarlo`]: seeded stochastic detection model (pair emission, losses,
//!   jitter, dark counts, dead time, beam splitting) producing timestamp streams,
//!   with TDC histogramming and heralded-autocorrelation estimators.
//! * [`analysis`]: small damped least-squares fitter with analytic Jacobians,
//!   Lorentzian/linear models, peak picking, and comb-spacing estimation.
//! * [`scenario`]: file-driven experiment runner behind the `sr-opo-comb` binary.
//!
//! Heavy inner loops (grid evaluation, per-tooth maps, Monte Carlo time slices) run
//! data-parallel on rayon when the default `parallel` feature is enabled and fall
//! back to sequential iteration without it; results are bit-identical either way.

pub mod analysis;
pub mod biphoton;
pub mod cavity;
pub mod config;
pub mod correlation;
pub mod dispersion;
pub mod error;
pub mod exec;
pub mod montecarlo;
pub mod scenario;

pub(crate) mod numeric;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Converts a vacuum wavelength in nm to frequency in Hz.
pub fn wavelength_nm_to_hz(wavelength_nm: f64) -> f64 {
    SPEED_OF_LIGHT / (wavelength_nm * 1e-9)
}

/// Converts a frequency in Hz to vacuum wavelength in nm.
pub fn hz_to_wavelength_nm(frequency_hz: f64) -> f64 {
    SPEED_OF_LIGHT / frequency_hz * 1e9
}
