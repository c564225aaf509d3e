//! Run configuration. A single TOML file with sections `[device]`,
//! `[cavity]`, `[filters]`, `[detectors]` and `[run]`; every physical key
//! carries its unit as a suffix (`length_mm`, `comb_fsr_ghz`) so a value can
//! never be read in the wrong unit. Missing keys and missing sections fall
//! back to the characterized device, so an empty file is a valid config.
//! Unknown keys are rejected rather than ignored.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::biphoton::ResonanceConfig;
use crate::cavity::{MirrorSpectrum, ResonatorSpec};
use crate::correlation::{BandpassFilter, FilterShape};
use crate::dispersion::{calibrate, CalibrationTargets, IndexModel, PhaseMatchSpec};
use crate::error::{Error, Result};
use crate::montecarlo::{
    ChannelDetectors, DetectorModel, ExperimentConfig, PairStatistics, SplitSide,
};

/// Environment variable consulted for the config path when `--config` is not
/// given.
pub const CONFIG_PATH_ENV: &str = "SR_OPO_COMB_CONFIG";

/// Crystal geometry, poling and the calibration anchors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceSection {
    pub length_mm: f64,
    pub poling_period_um: f64,
    pub temperature_c: f64,
    pub qpm_order: u32,
    pub pump_wavelength_nm: f64,
    /// Measured comb spacing the group index is calibrated to.
    pub comb_fsr_ghz: f64,
    /// Wavelength at which the comb spacing was measured.
    pub fsr_reference_nm: f64,
    /// Degenerate fundamental of the phase-matching anchor.
    pub shg_fundamental_nm: f64,
}

impl Default for DeviceSection {
    fn default() -> Self {
        DeviceSection {
            length_mm: 20.0,
            poling_period_um: 18.090,
            temperature_c: 50.0,
            qpm_order: 1,
            pump_wavelength_nm: 780.0,
            comb_fsr_ghz: 3.5,
            fsr_reference_nm: 1580.0,
            shg_fundamental_nm: 1560.0,
        }
    }
}

/// Coatings and internal loss. Mirror tables default to the built-in coating
/// curve; CSV paths are resolved relative to the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavitySection {
    pub internal_loss_per_pass: f64,
    pub front_mirror_csv: Option<PathBuf>,
    pub back_mirror_csv: Option<PathBuf>,
}

impl Default for CavitySection {
    fn default() -> Self {
        CavitySection {
            internal_loss_per_pass: 0.005,
            front_mirror_csv: None,
            back_mirror_csv: None,
        }
    }
}

/// Bandpass filters in front of the detectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiltersSection {
    pub shape: FilterShape,
    pub signal_center_nm: f64,
    pub signal_fwhm_nm: f64,
    pub idler_center_nm: f64,
    pub idler_fwhm_nm: f64,
    /// Width of the single-tooth filters used by the heralded waveform.
    pub herald_fwhm_nm: f64,
    /// Width of the scanning filter used by the spectrum scenario.
    pub spectrum_fwhm_nm: f64,
}

impl Default for FiltersSection {
    fn default() -> Self {
        FiltersSection {
            shape: FilterShape::Gaussian,
            signal_center_nm: 1600.0,
            signal_fwhm_nm: 1.0,
            idler_center_nm: 1522.0,
            idler_fwhm_nm: 1.0,
            herald_fwhm_nm: 0.03,
            spectrum_fwhm_nm: 3.0,
        }
    }
}

/// One detector model applied to every channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorsSection {
    pub quantum_efficiency: f64,
    /// Dark counts per second. Typical for the detector class, not measured.
    pub dark_rate_hz: f64,
    pub jitter_fwhm_ps: f64,
    pub dead_time_ns: f64,
}

impl Default for DetectorsSection {
    fn default() -> Self {
        DetectorsSection {
            quantum_efficiency: 0.6,
            dark_rate_hz: 100.0,
            jitter_fwhm_ps: 80.0,
            dead_time_ns: 0.0,
        }
    }
}

/// Source strength, paths, spectral grid and counting electronics.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub duration_s: f64,
    pub pump_power_mw: f64,
    /// Pump powers of the sweep scenarios (rates, heralded_g2).
    pub power_sweep_mw: Vec<f64>,
    pub intrinsic_pair_rate_hz_per_mw: f64,
    pub signal_path_transmittance: f64,
    pub idler_path_transmittance: f64,
    pub signal_port_split: f64,
    pub pair_statistics: PairStatistics,
    pub coherence_cell_ns: f64,
    pub pair_delay_offset_ps: f64,
    pub tdc_bin_ps: f64,
    pub histogram_window_ns: f64,
    /// Resonance layout assumed by the spectral scenarios.
    pub resonance_config: ResonanceConfig,
    /// Spectral grid: total span in cavity free spectral ranges.
    pub span_fsr: f64,
    /// Spectral grid: number of points, a power of two.
    pub grid_points: usize,
    /// Wavelength window of the spectrum and cluster scenarios.
    pub band_lo_nm: f64,
    pub band_hi_nm: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 1,
            duration_s: 1.0,
            pump_power_mw: 0.5,
            power_sweep_mw: vec![0.5, 1.0, 1.5, 2.0],
            intrinsic_pair_rate_hz_per_mw: 4.0e6,
            signal_path_transmittance: 0.009,
            idler_path_transmittance: 0.013,
            signal_port_split: 1.0,
            pair_statistics: PairStatistics::Poisson,
            coherence_cell_ns: 3.0,
            pair_delay_offset_ps: 1500.0,
            tdc_bin_ps: 16.0,
            histogram_window_ns: 9.0,
            resonance_config: ResonanceConfig::SinglyResonantSignal,
            span_fsr: crate::biphoton::DEFAULT_SPAN_FSR,
            grid_points: crate::biphoton::DEFAULT_POINTS,
            band_lo_nm: 1520.0,
            band_hi_nm: 1600.0,
        }
    }
}

/// Full configuration of one invocation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub device: DeviceSection,
    pub cavity: CavitySection,
    pub filters: FiltersSection,
    pub detectors: DetectorsSection,
    pub run: RunSection,
}

impl RunConfig {
    /// Loads `path`, or the file named by `SR_OPO_COMB_CONFIG`, or the
    /// built-in defaults when neither is set. Relative mirror CSV paths are
    /// resolved against the config file's directory.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let chosen: Option<PathBuf> = match path {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os(CONFIG_PATH_ENV).map(PathBuf::from),
        };
        let mut cfg = match &chosen {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Error::Config(format!("cannot read config {}: {}", p.display(), e))
                })?;
                toml::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {}", p.display(), e)))?
            }
        };
        if let Some(dir) = chosen.as_deref().and_then(Path::parent) {
            for mirror in [&mut cfg.cavity.front_mirror_csv, &mut cfg.cavity.back_mirror_csv] {
                if let Some(m) = mirror {
                    if m.is_relative() {
                        *m = dir.join(&*m);
                    }
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full fail-fast validation: every domain object is constructed once
    /// before any scenario computation starts.
    pub fn validate(&self) -> Result<()> {
        self.phase_match()?;
        self.index_model()?;
        self.resonator()?;
        self.detector_bank()?;
        self.signal_filter()?;
        self.idler_filter()?;
        self.experiment(self.run.pump_power_mw, None)?;
        if self.run.power_sweep_mw.is_empty() {
            return Err(Error::Config("power_sweep_mw must not be empty".into()));
        }
        for &p in &self.run.power_sweep_mw {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Config(format!(
                    "power_sweep_mw entry {} must be positive",
                    p
                )));
            }
        }
        if !(self.run.band_lo_nm < self.run.band_hi_nm) {
            return Err(Error::Config(format!(
                "band_lo_nm {} must lie below band_hi_nm {}",
                self.run.band_lo_nm, self.run.band_hi_nm
            )));
        }
        Ok(())
    }

    pub fn phase_match(&self) -> Result<PhaseMatchSpec> {
        PhaseMatchSpec::new(
            self.device.poling_period_um,
            self.device.length_mm,
            self.device.qpm_order,
        )
    }

    fn calibration_targets(&self) -> Result<CalibrationTargets> {
        Ok(CalibrationTargets {
            shg_pump_nm: self.device.pump_wavelength_nm,
            shg_fundamental_nm: self.device.shg_fundamental_nm,
            phase_match: self.phase_match()?,
            fsr_reference_nm: self.device.fsr_reference_nm,
            cavity_length_mm: self.device.length_mm,
            target_fsr_hz: self.device.comb_fsr_ghz * 1e9,
        })
    }

    /// Dispersion model calibrated to the configured anchors.
    pub fn index_model(&self) -> Result<IndexModel> {
        calibrate(
            &IndexModel::congruent_lithium_niobate(self.device.temperature_c),
            &self.calibration_targets()?,
        )
    }

    fn mirror(&self, path: &Option<PathBuf>) -> Result<MirrorSpectrum> {
        match path {
            None => Ok(MirrorSpectrum::device_high_reflector()),
            Some(p) => MirrorSpectrum::from_csv(p),
        }
    }

    /// Calibrated resonator with the configured coatings.
    pub fn resonator(&self) -> Result<ResonatorSpec> {
        ResonatorSpec::new(
            self.device.length_mm,
            self.index_model()?,
            self.mirror(&self.cavity.front_mirror_csv)?,
            self.mirror(&self.cavity.back_mirror_csv)?,
            self.cavity.internal_loss_per_pass,
        )
    }

    pub fn signal_filter(&self) -> Result<BandpassFilter> {
        BandpassFilter::new(
            self.filters.signal_center_nm,
            self.filters.signal_fwhm_nm,
            self.filters.shape,
        )
    }

    pub fn idler_filter(&self) -> Result<BandpassFilter> {
        BandpassFilter::new(
            self.filters.idler_center_nm,
            self.filters.idler_fwhm_nm,
            self.filters.shape,
        )
    }

    pub fn detector_bank(&self) -> Result<ChannelDetectors> {
        let d = DetectorModel::new(
            self.detectors.quantum_efficiency,
            self.detectors.dark_rate_hz,
            self.detectors.jitter_fwhm_ps,
            self.detectors.dead_time_ns,
        )?;
        Ok(ChannelDetectors {
            signal: d,
            idler: d,
            auxiliary: d,
        })
    }

    /// Counting-run settings at the given pump power. `split` arms the 50/50
    /// splitter for heralded measurements.
    pub fn experiment(
        &self,
        pump_power_mw: f64,
        split: Option<SplitSide>,
    ) -> Result<ExperimentConfig> {
        let cfg = ExperimentConfig {
            pump_power_mw,
            intrinsic_pair_rate_hz_per_mw: self.run.intrinsic_pair_rate_hz_per_mw,
            signal_path_transmittance: self.run.signal_path_transmittance,
            idler_path_transmittance: self.run.idler_path_transmittance,
            signal_port_split: self.run.signal_port_split,
            splitter_present: split.is_some(),
            split_side: split.unwrap_or(SplitSide::Idler),
            pair_statistics: self.run.pair_statistics,
            coherence_cell_ns: self.run.coherence_cell_ns,
            pair_delay_offset_ps: self.run.pair_delay_offset_ps,
            tdc_bin_ps: self.run.tdc_bin_ps,
            histogram_window_ns: self.run.histogram_window_ns,
            duration_s: self.run.duration_s,
            rng_seed: self.run.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
