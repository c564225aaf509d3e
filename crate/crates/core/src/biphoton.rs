//! Joint spectral amplitude of the photon pair and the comb structure it
//! inherits from the resonator.
//!
//! Far below threshold the two-photon state from a waveguide pumped at
//! frequency `nu_p` has one spectral degree of freedom: the signal detuning
//! `W` from a chosen center, with the idler pinned at `nu_i0 - W` by energy
//! conservation (the pump is treated as monochromatic). The amplitude used
//! throughout is
//!
//! ```text
//! f(W) = Phi(W) * G_s(nu_s0 + W) * G_i(nu_i0 - W)
//! ```
//!
//! where `Phi` is the phase-matching envelope of the poled crystal and the `G`
//! factors describe how each photon leaves the device:
//!
//! * singly resonant: the signal is confined, `G_s` is the comb-shaped cavity
//!   emission filter through the back facet; the idler sees anti-reflective
//!   facets and leaves directly, `G_i` a flat output-coupling constant.
//! * doubly resonant: both photons pick up emission combs. The signal center
//!   is snapped to the nearest cavity resonance; in degenerate operation
//!   (center within one free spectral range of half the pump frequency) the
//!   pump is re-derived as twice that resonance so the two combs coincide.
//! * non-resonant: both factors flat; `|f|^2` reduces to the phase-matching
//!   envelope.
//!
//! Amplitudes are normalized so the discrete sum of `|f|^2` times the grid
//! step equals one. The comb carries every tooth in the singly resonant case;
//! in the doubly resonant case dispersion misaligns the signal and idler
//! resonance ladders and only periodic clusters of teeth survive, which
//! [`cluster_analysis`] quantifies tooth by tooth.

use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cavity::{Port, ResonatorSpec};
use crate::dispersion::{phase_match_envelope, PhaseMatchSpec};
use crate::exec::try_map_indexed;
use crate::{hz_to_wavelength_nm, wavelength_nm_to_hz, Error, Result};

/// Which fields the resonator confines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResonanceConfig {
    SinglyResonantSignal,
    DoublyResonant,
    NonResonant,
}

/// Smallest accepted grid.
pub const MIN_POINTS: usize = 1 << 14;
/// Smallest accepted span in units of the free spectral range.
pub const MIN_SPAN_FSR: f64 = 20.0;
/// Default span in free spectral ranges; wide enough that the conjugate time
/// grid resolves 2 ps, well under detector jitter.
pub const DEFAULT_SPAN_FSR: f64 = 144.0;
/// Default grid size; keeps the frequency step near 2 MHz at the default span,
/// about thirty samples per cavity linewidth.
pub const DEFAULT_POINTS: usize = 1 << 18;

/// Two-photon spectral amplitude on a uniform detuning grid. Sample `j` sits
/// at detuning `W_j = (j - n/2) * step` relative to the signal center; the
/// signal frequency there is `nu_s0 + W_j` and the idler frequency
/// `nu_i0 - W_j`, so every sample conserves energy by construction.
#[derive(Clone, Debug)]
pub struct JointSpectrum {
    pub pump_frequency_hz: f64,
    pub center_signal_frequency_hz: f64,
    pub center_idler_frequency_hz: f64,
    pub detuning_step_hz: f64,
    pub amplitude: Vec<Complex64>,
    pub config: ResonanceConfig,
    /// Free spectral range at the signal center, carried along for fringe
    /// bookkeeping downstream.
    pub comb_fsr_hz: f64,
}

impl JointSpectrum {
    pub fn len(&self) -> usize {
        self.amplitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitude.is_empty()
    }

    /// Detuning of sample `j` from the signal center, Hz.
    pub fn detuning_hz(&self, j: usize) -> f64 {
        (j as f64 - (self.len() / 2) as f64) * self.detuning_step_hz
    }

    pub fn signal_frequency_hz(&self, j: usize) -> f64 {
        self.center_signal_frequency_hz + self.detuning_hz(j)
    }

    pub fn idler_frequency_hz(&self, j: usize) -> f64 {
        self.center_idler_frequency_hz - self.detuning_hz(j)
    }

    /// |f|^2 per sample.
    pub fn density(&self) -> Vec<f64> {
        self.amplitude.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Debug export, columns `detuning_hz,re,im`.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("detuning_hz,re,im\n");
        for (j, a) in self.amplitude.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.detuning_hz(j), a.re, a.im));
        }
        let mut file =
            tempfile::NamedTempFile::new_in(path.parent().unwrap_or_else(|| Path::new(".")))?;
        file.write_all(out.as_bytes())?;
        file.persist(path).map_err(|e| e.error)?;
        Ok(())
    }
}

/// Cavity resonance closest to `frequency_hz`; used to lock filter centers
/// and the doubly resonant operating point onto actual comb teeth.
pub fn nearest_resonance_hz(resonator: &ResonatorSpec, frequency_hz: f64) -> Result<f64> {
    let lam = hz_to_wavelength_nm(frequency_hz);
    let fsr = resonator.fsr(lam)?;
    let lo_nm = hz_to_wavelength_nm(frequency_hz + 0.75 * fsr);
    let hi_nm = hz_to_wavelength_nm(frequency_hz - 0.75 * fsr);
    let list = resonator.resonance_frequencies(lo_nm, hi_nm)?;
    list.into_iter()
        .min_by(|a, b| {
            (a - frequency_hz)
                .abs()
                .partial_cmp(&(b - frequency_hz).abs())
                .expect("finite frequencies")
        })
        .ok_or(Error::NoPeak)
}

/// Builds the joint spectral amplitude on `points` uniform samples spanning
/// `span_hz` around the (possibly resonance-snapped) signal center.
pub fn joint_amplitude(
    pm: &PhaseMatchSpec,
    resonator: &ResonatorSpec,
    config: ResonanceConfig,
    pump_nm: f64,
    center_signal_nm: f64,
    span_hz: f64,
    points: usize,
) -> Result<JointSpectrum> {
    if points < MIN_POINTS {
        return Err(Error::Domain {
            name: "grid points",
            value: points as f64,
            constraint: "at least 16384",
        });
    }
    if points % 2 != 0 {
        return Err(Error::Domain {
            name: "grid points",
            value: points as f64,
            constraint: "even",
        });
    }
    let mut nu_p = wavelength_nm_to_hz(pump_nm);
    let mut nu_s0 = wavelength_nm_to_hz(center_signal_nm);
    let fsr_guess = resonator.fsr(center_signal_nm)?;
    if span_hz < MIN_SPAN_FSR * fsr_guess {
        return Err(Error::Domain {
            name: "spectral span",
            value: span_hz,
            constraint: "at least 20 free spectral ranges",
        });
    }

    if config == ResonanceConfig::DoublyResonant {
        let snapped = nearest_resonance_hz(resonator, nu_s0)?;
        if (nu_s0 - nu_p / 2.0).abs() < fsr_guess {
            // degenerate operation: pump locked to twice the resonance
            nu_p = 2.0 * snapped;
        }
        nu_s0 = snapped;
    }
    let nu_i0 = nu_p - nu_s0;
    if nu_i0 <= 0.0 {
        return Err(Error::Domain {
            name: "idler center frequency",
            value: nu_i0,
            constraint: "positive (signal center below pump)",
        });
    }

    let step = span_hz / points as f64;
    let half = (points / 2) as f64;
    let model = &resonator.index_model;
    let pump_lam_nm = hz_to_wavelength_nm(nu_p);
    let bare_signal = (1.0
        - resonator
            .back_mirror
            .reflectance(hz_to_wavelength_nm(nu_s0))?)
    .sqrt();
    let bare_idler = (1.0
        - resonator
            .back_mirror
            .reflectance(hz_to_wavelength_nm(nu_i0))?)
    .sqrt();

    let mut amplitude = try_map_indexed(points, |j| -> Result<Complex64> {
        let omega = (j as f64 - half) * step;
        let nu_s = nu_s0 + omega;
        let nu_i = nu_i0 - omega;
        let lam_s = hz_to_wavelength_nm(nu_s);
        let lam_i = hz_to_wavelength_nm(nu_i);
        let phi = phase_match_envelope(model, pm, pump_lam_nm, lam_s, lam_i)?;
        let g_s = match config {
            ResonanceConfig::NonResonant => Complex64::new(bare_signal, 0.0),
            _ => resonator.emission_amplitude(nu_s, Port::Back)?,
        };
        let g_i = match config {
            ResonanceConfig::DoublyResonant => resonator.emission_amplitude(nu_i, Port::Back)?,
            _ => Complex64::new(bare_idler, 0.0),
        };
        Ok(phi * g_s * g_i)
    })?;

    let mass: f64 = amplitude.iter().map(|a| a.norm_sqr()).sum::<f64>() * step;
    if !(mass > 0.0) {
        return Err(Error::Domain {
            name: "joint spectrum power",
            value: mass,
            constraint: "positive",
        });
    }
    let scale = 1.0 / mass.sqrt();
    for a in &mut amplitude {
        *a *= scale;
    }

    Ok(JointSpectrum {
        pump_frequency_hz: nu_p,
        center_signal_frequency_hz: nu_s0,
        center_idler_frequency_hz: nu_i0,
        detuning_step_hz: step,
        amplitude,
        config,
        comb_fsr_hz: resonator.fsr(hz_to_wavelength_nm(nu_s0))?,
    })
}

/// One comb tooth: signal and idler wavelengths plus a relative pair rate.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ModeRow {
    pub signal_nm: f64,
    pub idler_nm: f64,
    pub rate: f64,
}

/// Per-tooth pair rates over a signal wavelength range, normalized to the
/// strongest tooth.
#[derive(Clone, Debug)]
pub struct ModeTable {
    pub pump_nm: f64,
    pub rows: Vec<ModeRow>,
}

impl ModeTable {
    /// Export with columns `signal_nm,idler_nm,rate`.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("signal_nm,idler_nm,rate\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.signal_nm, r.idler_nm, r.rate));
        }
        let mut file =
            tempfile::NamedTempFile::new_in(path.parent().unwrap_or_else(|| Path::new(".")))?;
        file.write_all(out.as_bytes())?;
        file.persist(path).map_err(|e| e.error)?;
        Ok(())
    }
}

/// One row per signal cavity resonance inside [lo_nm, hi_nm]; the rate is
/// |f|^2 integrated over one linewidth centered on the tooth (the same
/// captured fraction for every Lorentzian tooth, so rates stay comparable),
/// normalized to the largest row.
pub fn mode_table(
    pm: &PhaseMatchSpec,
    resonator: &ResonatorSpec,
    config: ResonanceConfig,
    pump_nm: f64,
    lo_nm: f64,
    hi_nm: f64,
) -> Result<ModeTable> {
    let nu_p = wavelength_nm_to_hz(pump_nm);
    let teeth = resonator.resonance_frequencies(lo_nm, hi_nm)?;
    let model = &resonator.index_model;

    let mut rows = try_map_indexed(teeth.len(), |k| -> Result<ModeRow> {
        let nu_r = teeth[k];
        let lam_r = hz_to_wavelength_nm(nu_r);
        let gamma = resonator.linewidth_hz(lam_r)?;
        let nu_i_center = nu_p - nu_r;
        let lam_i_center = hz_to_wavelength_nm(nu_i_center);
        let bare_s = (1.0 - resonator.back_mirror.reflectance(lam_r)?).sqrt();
        let bare_i = (1.0 - resonator.back_mirror.reflectance(lam_i_center)?).sqrt();

        // 65-point trapezoid across one linewidth
        let samples = 64_usize;
        let mut acc = 0.0;
        for s in 0..=samples {
            let nu_s = nu_r - gamma / 2.0 + gamma * s as f64 / samples as f64;
            let nu_i = nu_p - nu_s;
            let lam_s = hz_to_wavelength_nm(nu_s);
            let lam_i = hz_to_wavelength_nm(nu_i);
            let phi = phase_match_envelope(model, pm, pump_nm, lam_s, lam_i)?;
            let g_s = match config {
                ResonanceConfig::NonResonant => Complex64::new(bare_s, 0.0),
                _ => resonator.emission_amplitude(nu_s, Port::Back)?,
            };
            let g_i = match config {
                ResonanceConfig::DoublyResonant => {
                    resonator.emission_amplitude(nu_i, Port::Back)?
                }
                _ => Complex64::new(bare_i, 0.0),
            };
            let w = if s == 0 || s == samples { 0.5 } else { 1.0 };
            acc += w * (phi * g_s * g_i).norm_sqr();
        }
        Ok(ModeRow {
            signal_nm: lam_r,
            idler_nm: lam_i_center,
            rate: acc * gamma / samples as f64,
        })
    })?;

    let max = rows.iter().map(|r| r.rate).fold(0.0_f64, f64::max);
    if max > 0.0 {
        for r in &mut rows {
            r.rate /= max;
        }
    }
    Ok(ModeTable { pump_nm, rows })
}

/// Suppression of one comb tooth relative to the best-matched tooth.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ClusterTooth {
    pub signal_nm: f64,
    pub suppression_ratio: f64,
}

/// Tooth-by-tooth double-resonance bookkeeping over a signal range.
#[derive(Clone, Debug)]
pub struct ClusterReport {
    pub config: ResonanceConfig,
    /// Expected spacing between fully doubly resonant teeth, in modes; `None`
    /// when the signal and idler ladders share one spacing (no clustering
    /// within range).
    pub cluster_spacing_modes: Option<f64>,
    pub teeth: Vec<ClusterTooth>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Teeth with suppression ratio at least 0.99.
    pub near_unit_count: usize,
}

/// Quantifies the cluster effect. With only the signal confined every tooth
/// keeps ratio one: the idler imposes no resonance condition. With both
/// confined, each signal tooth needs its energy partner to land on an idler
/// resonance; the residual mismatch `delta` is scored with a Lorentzian
/// overlap kernel whose half width is the signal tooth linewidth, and ratios
/// are reported relative to the best tooth. The expected cluster period is
/// FSR / |FSR_s - FSR_i| from the group-index difference between the bands.
/// The pump is first snapped onto the double resonance nearest mid-range so a
/// dispersionless model scores every tooth at exactly one.
pub fn cluster_analysis(
    resonator: &ResonatorSpec,
    config: ResonanceConfig,
    pump_nm: f64,
    lo_nm: f64,
    hi_nm: f64,
) -> Result<ClusterReport> {
    let signal_teeth = resonator.resonance_frequencies(lo_nm, hi_nm)?;
    if signal_teeth.is_empty() {
        return Ok(ClusterReport {
            config,
            cluster_spacing_modes: None,
            teeth: Vec::new(),
            min_ratio: 1.0,
            max_ratio: 1.0,
            near_unit_count: 0,
        });
    }

    if config != ResonanceConfig::DoublyResonant {
        let teeth: Vec<ClusterTooth> = signal_teeth
            .iter()
            .map(|&nu| ClusterTooth {
                signal_nm: hz_to_wavelength_nm(nu),
                suppression_ratio: 1.0,
            })
            .collect();
        let n = teeth.len();
        return Ok(ClusterReport {
            config,
            cluster_spacing_modes: None,
            teeth,
            min_ratio: 1.0,
            max_ratio: 1.0,
            near_unit_count: n,
        });
    }

    let nu_p = wavelength_nm_to_hz(pump_nm);
    let nu_s_min = signal_teeth[0];
    let nu_s_max = signal_teeth[signal_teeth.len() - 1];
    if nu_p - nu_s_max <= 0.0 {
        return Err(Error::Domain {
            name: "idler band",
            value: nu_p - nu_s_max,
            constraint: "positive frequencies (pump above signal band)",
        });
    }
    // partner band, padded by one spacing so edge teeth can find a neighbor
    let pad = resonator.fsr(hz_to_wavelength_nm(nu_s_min))?;
    let idler_lo_nm = hz_to_wavelength_nm(nu_p - nu_s_min + pad);
    let idler_hi_nm = hz_to_wavelength_nm(nu_p - nu_s_max - pad);
    let idler_teeth = resonator.resonance_frequencies(idler_lo_nm, idler_hi_nm)?;
    if idler_teeth.len() < 2 {
        return Err(Error::Domain {
            name: "idler resonance count",
            value: idler_teeth.len() as f64,
            constraint: "at least 2 in the partner band",
        });
    }

    let mid_s = signal_teeth[signal_teeth.len() / 2];
    let fsr_s = resonator.fsr(hz_to_wavelength_nm(mid_s))?;
    let fsr_i = resonator.fsr(hz_to_wavelength_nm(nu_p - mid_s))?;
    let diff = (fsr_s - fsr_i).abs();
    let cluster_spacing_modes = if diff < 1e-9 * fsr_s {
        None
    } else {
        Some(fsr_s / diff)
    };

    let nearest = |target: f64| -> f64 {
        let i = idler_teeth.partition_point(|&nu| nu < target);
        let mut best = f64::INFINITY;
        if i < idler_teeth.len() {
            best = best.min((idler_teeth[i] - target).abs());
        }
        if i > 0 {
            best = best.min((idler_teeth[i - 1] - target).abs());
        }
        best
    };

    // lock the pump to the double resonance nearest mid-range
    let mid_partner = nu_p - mid_s;
    let j = idler_teeth.partition_point(|&nu| nu < mid_partner);
    let snap = if j == 0 {
        idler_teeth[0]
    } else if j >= idler_teeth.len() {
        idler_teeth[idler_teeth.len() - 1]
    } else if (idler_teeth[j] - mid_partner).abs() < (mid_partner - idler_teeth[j - 1]).abs() {
        idler_teeth[j]
    } else {
        idler_teeth[j - 1]
    };
    let nu_p_eff = mid_s + snap;

    let mut teeth_out = Vec::with_capacity(signal_teeth.len());
    let mut raw_max = 0.0_f64;
    for &nu_s in &signal_teeth {
        let lam_s = hz_to_wavelength_nm(nu_s);
        let hwhm = resonator.linewidth_hz(lam_s)?;
        let delta = nearest(nu_p_eff - nu_s);
        let overlap = 1.0 / (1.0 + (delta / hwhm).powi(2));
        raw_max = raw_max.max(overlap);
        teeth_out.push(ClusterTooth {
            signal_nm: lam_s,
            suppression_ratio: overlap,
        });
    }
    for t in &mut teeth_out {
        t.suppression_ratio /= raw_max;
    }
    let min_ratio = teeth_out
        .iter()
        .map(|t| t.suppression_ratio)
        .fold(f64::INFINITY, f64::min);
    let max_ratio = teeth_out
        .iter()
        .map(|t| t.suppression_ratio)
        .fold(0.0_f64, f64::max);
    let near_unit_count = teeth_out
        .iter()
        .filter(|t| t.suppression_ratio >= 0.99)
        .count();

    Ok(ClusterReport {
        config,
        cluster_spacing_modes,
        teeth: teeth_out,
        min_ratio,
        max_ratio,
        near_unit_count,
    })
}

/// Gaussian power transmission of a bandpass filter with the given full width
/// at half maximum.
fn filter_weight(lam_nm: f64, center_nm: f64, fwhm_nm: f64) -> f64 {
    let sigma = fwhm_nm / (8.0 * std::f64::consts::LN_2).sqrt();
    let z = (lam_nm - center_nm) / sigma;
    if z.abs() > 6.0 {
        0.0
    } else {
        (-0.5 * z * z).exp()
    }
}

/// Relative singles rate seen through a scanned bandpass filter, max one.
/// Comb teeth contribute with their filter weight times a port factor: the
/// confined signal splits between the two facets and internal loss, while the
/// unconfined idler co-propagates with the pump and leaves through the back
/// facet in a single pass. The non-resonant configuration has no teeth at
/// all, so its curve is the bare phase-matching envelope.
pub fn spectral_envelope(
    pm: &PhaseMatchSpec,
    resonator: &ResonatorSpec,
    config: ResonanceConfig,
    pump_nm: f64,
    lo_nm: f64,
    hi_nm: f64,
    filter_fwhm_nm: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(filter_fwhm_nm > 0.0) {
        return Err(Error::Domain {
            name: "filter width",
            value: filter_fwhm_nm,
            constraint: "positive",
        });
    }
    if !(hi_nm > lo_nm) {
        return Err(Error::Domain {
            name: "wavelength range",
            value: hi_nm - lo_nm,
            constraint: "positive width",
        });
    }
    let step = (filter_fwhm_nm / 4.0).clamp(0.02, 0.5);
    let n_centers = ((hi_nm - lo_nm) / step).floor() as usize + 1;
    let centers: Vec<f64> = (0..n_centers).map(|i| lo_nm + i as f64 * step).collect();

    if config == ResonanceConfig::NonResonant {
        let model = &resonator.index_model;
        let mut curve: Vec<(f64, f64)> = Vec::with_capacity(centers.len());
        for &lam in &centers {
            let partner = crate::dispersion::matched_idler_nm(pump_nm, lam);
            let phi = phase_match_envelope(model, pm, pump_nm, lam, partner)?;
            curve.push((lam, phi.norm_sqr()));
        }
        let max = curve.iter().map(|c| c.1).fold(0.0_f64, f64::max);
        if max > 0.0 {
            for c in &mut curve {
                c.1 /= max;
            }
        }
        return Ok(curve);
    }

    let degen_nm = hz_to_wavelength_nm(wavelength_nm_to_hz(pump_nm) / 2.0);
    // teeth beyond the scan range still shine through the filter, so build the
    // table out to the filter reach on both sides; idler-side coverage maps to
    // the mirrored signal range
    let reach = 1.5 * filter_fwhm_nm;
    let table_lo = (lo_nm - reach).max(degen_nm);
    let mut table_hi = hi_nm + reach;
    if lo_nm - reach < degen_nm {
        let lowest_idler = lo_nm - reach;
        table_hi = table_hi.max(crate::dispersion::matched_idler_nm(pump_nm, lowest_idler));
    }
    if !(table_hi > table_lo) {
        return Err(Error::Domain {
            name: "signal band",
            value: table_hi - table_lo,
            constraint: "filter coverage must reach comb teeth above degeneracy",
        });
    }
    let table = mode_table(pm, resonator, config, pump_nm, table_lo, table_hi)?;

    let mut curve: Vec<(f64, f64)> = Vec::with_capacity(centers.len());
    for &lam_c in &centers {
        let mut sum = 0.0;
        for row in &table.rows {
            let ws = filter_weight(row.signal_nm, lam_c, filter_fwhm_nm);
            if ws > 0.0 {
                sum += row.rate * ws * resonator.escape_fraction(row.signal_nm, Port::Back)?;
            }
            let wi = filter_weight(row.idler_nm, lam_c, filter_fwhm_nm);
            if wi > 0.0 {
                let transmit = 1.0 - resonator.back_mirror.reflectance(row.idler_nm)?;
                sum += row.rate * wi * transmit;
            }
        }
        curve.push((lam_c, sum));
    }
    let max = curve.iter().map(|c| c.1).fold(0.0_f64, f64::max);
    if max > 0.0 {
        for c in &mut curve {
            c.1 /= max;
        }
    }
    Ok(curve)
}
