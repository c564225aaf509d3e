//! Start-stop coincidence densities from the joint spectrum.
//!
//! The two-photon wavepacket behind a pair of bandpass filters has the
//! time-domain coincidence density
//!
//! ```text
//! G(tau) = | Int f(W) T_s(W) T_i(-W) e^{-i 2 pi W tau} dW |^2
//! ```
//!
//! with `tau = t_stop - t_start` (start on the idler, stop on the signal by
//! default) and the `T` amplitude transmissions sampled where each photon
//! actually lands. Wide filters pass many comb teeth, so `G` oscillates at the
//! cavity round-trip period (tooth beats); a filter narrower than the mode
//! spacing passes one Lorentzian tooth and the oscillation collapses to a
//! one-sided exponential whose intensity decay rate is twice the tooth's
//! linewidth, `gamma/(2 pi) = 2 gamma_f`. Detector jitter then convolves the
//! density with a Gaussian, lifting the fringe minima without moving the
//! period.
//!
//! The transform is a centered FFT: weights are taken on the detuning grid of
//! the [`JointSpectrum`](crate::biphoton::JointSpectrum), alternated in sign to
//! shift zero detuning to the array center, and the output bin `k` lands at
//! `tau_k = (k - n/2) / (n * step)`. A slow direct transform backs this
//! convention in the tests.

use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::analysis::{exponential_decay_fit, peak_pick};
use crate::biphoton::JointSpectrum;
use crate::exec::map_indexed;
use crate::{hz_to_wavelength_nm, Error, Result, SPEED_OF_LIGHT};

/// Spectral filter shapes. Gaussian matches real interference bandpass
/// filters; rectangular is the idealized single-tooth selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterShape {
    Gaussian,
    Rectangular,
}

/// Bandpass filter described by its power transmission: full width at half
/// maximum `fwhm_nm` around `center_nm`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BandpassFilter {
    pub center_nm: f64,
    pub fwhm_nm: f64,
    pub shape: FilterShape,
}

impl BandpassFilter {
    pub fn new(center_nm: f64, fwhm_nm: f64, shape: FilterShape) -> Result<Self> {
        if !(fwhm_nm > 0.0) || !(center_nm > 0.0) {
            return Err(Error::Domain {
                name: "filter width",
                value: fwhm_nm,
                constraint: "positive center and width",
            });
        }
        Ok(Self {
            center_nm,
            fwhm_nm,
            shape,
        })
    }

    pub fn gaussian(center_nm: f64, fwhm_nm: f64) -> Result<Self> {
        Self::new(center_nm, fwhm_nm, FilterShape::Gaussian)
    }

    pub fn rectangular(center_nm: f64, fwhm_nm: f64) -> Result<Self> {
        Self::new(center_nm, fwhm_nm, FilterShape::Rectangular)
    }

    /// Amplitude transmission at `lam_nm`, the square root of the power
    /// transmission.
    pub fn amplitude(&self, lam_nm: f64) -> f64 {
        match self.shape {
            FilterShape::Gaussian => {
                // power sigma from the power FWHM; amplitude is the sqrt
                let sigma = self.fwhm_nm / (8.0 * std::f64::consts::LN_2).sqrt();
                let z = (lam_nm - self.center_nm) / sigma;
                if z.abs() > 8.0 {
                    0.0
                } else {
                    (-0.25 * z * z).exp()
                }
            }
            FilterShape::Rectangular => {
                if (lam_nm - self.center_nm).abs() <= self.fwhm_nm / 2.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Power full width at half maximum converted to frequency at the filter
    /// center.
    pub fn fwhm_hz(&self) -> f64 {
        SPEED_OF_LIGHT * self.fwhm_nm / (self.center_nm * self.center_nm * 1e-9)
    }
}

/// Which physical channel supplies the start (trigger) click.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartChannel {
    Signal,
    Idler,
}

/// Coincidence density on a uniform delay grid; bin `k` sits at
/// `tau_k = (k - n/2) * tau_step_ps` with `tau = t_stop - t_start`.
#[derive(Clone, Debug)]
pub struct CorrelationFunction {
    pub tau_step_ps: f64,
    /// Density per second of delay, nonnegative.
    pub density: Vec<f64>,
    /// Comb spacing of the underlying spectrum, used to scale fringe searches.
    pub comb_fsr_hz: f64,
    /// Quadrature-summed Gaussian jitter already applied, ps.
    pub jitter_sigma_ps: f64,
    pub start: StartChannel,
}

impl CorrelationFunction {
    pub fn from_samples(
        tau_step_ps: f64,
        density: Vec<f64>,
        comb_fsr_hz: f64,
        start: StartChannel,
    ) -> Result<Self> {
        if !(tau_step_ps > 0.0) || density.len() < 8 {
            return Err(Error::Domain {
                name: "correlation grid",
                value: density.len() as f64,
                constraint: "positive step, at least 8 bins",
            });
        }
        if density.iter().any(|&d| !(d >= 0.0)) {
            return Err(Error::Domain {
                name: "correlation density",
                value: f64::NAN,
                constraint: "nonnegative finite",
            });
        }
        Ok(Self {
            tau_step_ps,
            density,
            comb_fsr_hz,
            jitter_sigma_ps: 0.0,
            start,
        })
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    /// Delay of bin `k`, ps.
    pub fn tau_ps(&self, k: usize) -> f64 {
        (k as f64 - (self.len() / 2) as f64) * self.tau_step_ps
    }

    /// Total mass, integral of the density over delay in seconds.
    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.tau_step_ps * 1e-12
    }

    /// Index and value of the density maximum.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, &d) in self.density.iter().enumerate() {
            if d > best.1 {
                best = (k, d);
            }
        }
        best
    }

    /// Flips the delay axis, the effect of exchanging start and stop roles.
    pub fn mirrored(&self) -> Self {
        let n = self.len();
        let density = (0..n).map(|k| self.density[(n - k) % n]).collect();
        Self {
            tau_step_ps: self.tau_step_ps,
            density,
            comb_fsr_hz: self.comb_fsr_hz,
            jitter_sigma_ps: self.jitter_sigma_ps,
            start: match self.start {
                StartChannel::Signal => StartChannel::Idler,
                StartChannel::Idler => StartChannel::Signal,
            },
        }
    }

    /// Export with columns `tau_ps,density`.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("tau_ps,density\n");
        for (k, &d) in self.density.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.tau_ps(k), d));
        }
        let mut file =
            tempfile::NamedTempFile::new_in(path.parent().unwrap_or_else(|| Path::new(".")))?;
        file.write_all(out.as_bytes())?;
        file.persist(path).map_err(|e| e.error)?;
        Ok(())
    }
}

fn filtered_weights(
    js: &JointSpectrum,
    signal_filter: &BandpassFilter,
    idler_filter: &BandpassFilter,
) -> Result<Vec<Complex64>> {
    let n = js.len();
    let mut signal_mass = 0.0;
    let mut idler_mass = 0.0;
    let mut w = Vec::with_capacity(n);
    for j in 0..n {
        let ts = signal_filter.amplitude(hz_to_wavelength_nm(js.signal_frequency_hz(j)));
        let ti = idler_filter.amplitude(hz_to_wavelength_nm(js.idler_frequency_hz(j)));
        signal_mass += ts * ts;
        idler_mass += ti * ti;
        w.push(js.amplitude[j] * ts * ti);
    }
    if signal_mass == 0.0 {
        return Err(Error::EmptyOverlap {
            center_nm: signal_filter.center_nm,
        });
    }
    if idler_mass == 0.0 {
        return Err(Error::EmptyOverlap {
            center_nm: idler_filter.center_nm,
        });
    }
    Ok(w)
}

fn transform_to_delay(
    w: &[Complex64],
    step_hz: f64,
    comb_fsr_hz: f64,
    start: StartChannel,
) -> CorrelationFunction {
    let n = w.len();
    let mut buf: Vec<Complex64> = (0..n)
        .map(|j| if j % 2 == 0 { w[j] } else { -w[j] })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = step_hz * step_hz;
    let density: Vec<f64> = buf.iter().map(|c| scale * c.norm_sqr()).collect();
    CorrelationFunction {
        tau_step_ps: 1e12 / (n as f64 * step_hz),
        density,
        comb_fsr_hz,
        jitter_sigma_ps: 0.0,
        start,
    }
}

/// Coincidence density between the filtered signal and idler photons, start
/// on the idler so positive delay means the signal arrived later.
pub fn g2_from_spectrum(
    js: &JointSpectrum,
    signal_filter: &BandpassFilter,
    idler_filter: &BandpassFilter,
) -> Result<CorrelationFunction> {
    let w = filtered_weights(js, signal_filter, idler_filter)?;
    Ok(transform_to_delay(
        &w,
        js.detuning_step_hz,
        js.comb_fsr_hz,
        StartChannel::Idler,
    ))
}

/// Heralded waveform: the same transform with the trigger role assigned
/// explicitly. The herald filter sits on the start channel, the heralded
/// filter on the stop channel; both must be narrow enough to address
/// individual teeth. Starting on the signal mirrors the delay axis.
pub fn heralded_waveform(
    js: &JointSpectrum,
    herald_filter: &BandpassFilter,
    heralded_filter: &BandpassFilter,
    start: StartChannel,
) -> Result<CorrelationFunction> {
    for f in [herald_filter, heralded_filter] {
        if f.fwhm_hz() > 2.0 * js.comb_fsr_hz {
            return Err(Error::Domain {
                name: "herald filter width",
                value: f.fwhm_hz(),
                constraint: "at most two free spectral ranges (single-tooth selection)",
            });
        }
    }
    let (signal_filter, idler_filter) = match start {
        StartChannel::Idler => (heralded_filter, herald_filter),
        StartChannel::Signal => (herald_filter, heralded_filter),
    };
    let base = g2_from_spectrum(js, signal_filter, idler_filter)?;
    Ok(match start {
        StartChannel::Idler => base,
        StartChannel::Signal => base.mirrored(),
    })
}

/// Combined Gaussian timing sigma of independent detectors, ps: per-detector
/// FWHM converted to sigma and summed in quadrature.
pub fn combined_jitter_sigma_ps(fwhm_ps: &[f64]) -> f64 {
    let to_sigma = 1.0 / (8.0 * std::f64::consts::LN_2).sqrt();
    fwhm_ps
        .iter()
        .map(|f| (f * to_sigma).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Convolves the density with a Gaussian of standard deviation `sigma_ps`.
/// The kernel is renormalized to unit sum, so the total mass is preserved
/// apart from leakage past the grid edges.
pub fn apply_jitter(cf: &CorrelationFunction, sigma_ps: f64) -> Result<CorrelationFunction> {
    if !(sigma_ps >= 0.0) {
        return Err(Error::Domain {
            name: "jitter sigma",
            value: sigma_ps,
            constraint: "nonnegative",
        });
    }
    if sigma_ps == 0.0 {
        return Ok(cf.clone());
    }
    let half = ((6.0 * sigma_ps / cf.tau_step_ps).ceil() as usize).max(1);
    let kernel: Vec<f64> = (0..=2 * half)
        .map(|m| {
            let x = (m as f64 - half as f64) * cf.tau_step_ps / sigma_ps;
            (-0.5 * x * x).exp()
        })
        .collect();
    let norm: f64 = kernel.iter().sum();
    let n = cf.len();
    let density = map_indexed(n, |k| {
        let mut acc = 0.0;
        let lo = k.saturating_sub(half);
        let hi = (k + half).min(n - 1);
        for j in lo..=hi {
            acc += cf.density[j] * kernel[k + half - j];
        }
        acc / norm
    });
    Ok(CorrelationFunction {
        tau_step_ps: cf.tau_step_ps,
        density,
        comb_fsr_hz: cf.comb_fsr_hz,
        jitter_sigma_ps: (cf.jitter_sigma_ps.powi(2) + sigma_ps * sigma_ps).sqrt(),
        start: cf.start,
    })
}

/// Fringe maxima of the density, as bin indices: prominence threshold 10% of
/// the range, minimum separation 0.4 of the comb beat period.
pub fn fringe_peaks(cf: &CorrelationFunction) -> Vec<usize> {
    let sep_bins = if cf.comb_fsr_hz > 0.0 {
        (0.4 / cf.comb_fsr_hz * 1e12 / cf.tau_step_ps).round() as usize
    } else {
        1
    };
    peak_pick(&cf.density, 0.10, sep_bins.max(1))
}

/// Mean spacing of the coincidence fringes, ps.
pub fn beat_period(cf: &CorrelationFunction) -> Result<f64> {
    let peaks = fringe_peaks(cf);
    if peaks.len() < 3 {
        return Err(Error::InsufficientFringes {
            found: peaks.len(),
            needed: 3,
        });
    }
    let first = cf.tau_ps(peaks[0]);
    let last = cf.tau_ps(peaks[peaks.len() - 1]);
    Ok((last - first) / (peaks.len() - 1) as f64)
}

/// Which flank of the coincidence peak the envelope is fitted on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeSide {
    Rising,
    Decaying,
}

/// Fitted envelope `A exp(-gamma (t - tau0)/2) + d` of the coincidence curve.
/// `gamma_hz` is the reported rate `gamma/(2 pi)`; for a single Lorentzian
/// tooth it equals twice the tooth linewidth.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnvelopeFit {
    #[serde(rename = "A")]
    pub a: f64,
    pub gamma_hz: f64,
    pub tau0_ps: f64,
    pub d: f64,
    pub residual: f64,
    #[serde(skip)]
    pub converged: bool,
    #[serde(skip)]
    pub point_count: usize,
}

impl EnvelopeFit {
    /// Decay constant in angular units, rad/s.
    pub fn gamma_angular(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.gamma_hz
    }

    pub fn to_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        let mut file =
            tempfile::NamedTempFile::new_in(path.parent().unwrap_or_else(|| Path::new(".")))?;
        file.write_all(text.as_bytes())?;
        file.persist(path).map_err(|e| e.error)?;
        Ok(())
    }
}

/// Fits the chosen flank of the coincidence curve with a one-sided
/// exponential. The anchor `tau0` is the delay of maximum density. Envelope
/// samples are the fringe maxima when at least ten fringes exist on that
/// side, otherwise every bin above three times the noise floor (median of the
/// side).
pub fn envelope_fit(cf: &CorrelationFunction, side: EnvelopeSide) -> Result<EnvelopeFit> {
    let (k0, peak) = cf.argmax();
    if !(peak > 0.0) {
        return Err(Error::NoPeak);
    }
    let step_s = cf.tau_step_ps * 1e-12;
    // side samples with time measured away from the peak, seconds
    let (times, values): (Vec<f64>, Vec<f64>) = match side {
        EnvelopeSide::Decaying => (cf.density[k0..])
            .iter()
            .enumerate()
            .map(|(m, &v)| (m as f64 * step_s, v))
            .unzip(),
        // bin 0 is skipped so a mirrored curve yields the identical sample set
        EnvelopeSide::Rising => (1..=k0)
            .rev()
            .map(|k| ((k0 - k) as f64 * step_s, cf.density[k]))
            .unzip(),
    };

    let side_cf = CorrelationFunction {
        tau_step_ps: cf.tau_step_ps,
        density: values.clone(),
        comb_fsr_hz: cf.comb_fsr_hz,
        jitter_sigma_ps: cf.jitter_sigma_ps,
        start: cf.start,
    };
    let peaks = fringe_peaks(&side_cf);
    let (fit_t, fit_v): (Vec<f64>, Vec<f64>) = if peaks.len() >= 10 {
        peaks.iter().map(|&k| (times[k], values[k])).unzip()
    } else {
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite density"));
        let floor = sorted[sorted.len() / 2];
        times
            .iter()
            .zip(&values)
            .filter(|(_, &v)| v > 3.0 * floor)
            .map(|(&t, &v)| (t, v))
            .unzip()
    };
    if fit_t.len() < 8 {
        return Err(Error::Domain {
            name: "envelope sample count",
            value: fit_t.len() as f64,
            constraint: "at least 8 bins on the fitted side",
        });
    }

    let fit = exponential_decay_fit(&fit_t, &fit_v, 0.0, None)?;
    let gamma = fit.value("gamma").expect("fitted parameter");
    Ok(EnvelopeFit {
        a: fit.value("amplitude").expect("fitted parameter"),
        gamma_hz: gamma / (2.0 * std::f64::consts::PI),
        tau0_ps: cf.tau_ps(k0),
        d: fit.value("offset").expect("fitted parameter"),
        residual: fit.residual_norm,
        converged: fit.converged,
        point_count: fit_t.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biphoton::{joint_amplitude, ResonanceConfig};
    use crate::cavity::ResonatorSpec;
    use crate::dispersion::{matched_idler_nm, PhaseMatchSpec};
    use approx::assert_relative_eq;

    const PUMP_NM: f64 = 780.0;

    fn spectrum(config: ResonanceConfig, center_nm: f64, span_fsr: f64) -> JointSpectrum {
        let pm = PhaseMatchSpec::device_default();
        let res = ResonatorSpec::device_default().unwrap();
        let span = span_fsr * res.fsr(center_nm).unwrap();
        joint_amplitude(&pm, &res, config, PUMP_NM, center_nm, span, 1 << 14).unwrap()
    }

    fn sr_1600() -> JointSpectrum {
        spectrum(ResonanceConfig::SinglyResonantSignal, 1600.0, 48.0)
    }

    fn wide_filters() -> (BandpassFilter, BandpassFilter) {
        (
            BandpassFilter::gaussian(1600.0, 1.0).unwrap(),
            BandpassFilter::gaussian(matched_idler_nm(PUMP_NM, 1600.0), 1.0).unwrap(),
        )
    }

    /// Rectangular 0.03 nm filters locked onto the comb tooth nearest the
    /// spectrum center and its energy partner.
    fn tooth_filters(js: &JointSpectrum) -> (BandpassFilter, BandpassFilter) {
        let res = ResonatorSpec::device_default().unwrap();
        let nu_r =
            crate::biphoton::nearest_resonance_hz(&res, js.center_signal_frequency_hz).unwrap();
        let nu_i = js.pump_frequency_hz - nu_r;
        (
            BandpassFilter::rectangular(hz_to_wavelength_nm(nu_r), 0.03).unwrap(),
            BandpassFilter::rectangular(hz_to_wavelength_nm(nu_i), 0.03).unwrap(),
        )
    }

    /// Visibility between the central fringe peak and the following trough.
    fn fringe_visibility(cf: &CorrelationFunction) -> f64 {
        let peaks = fringe_peaks(cf);
        assert!(peaks.len() >= 2, "{} fringe peaks", peaks.len());
        let (i, j) = (peaks[peaks.len() / 2], peaks[peaks.len() / 2 + 1]);
        let max = cf.density[i].max(cf.density[j]);
        let min = cf.density[i..=j]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        (max - min) / (max + min)
    }

    #[test]
    fn beat_period_matches_round_trip_time() {
        let js = sr_1600();
        let (fs, fi) = wide_filters();
        let cf = g2_from_spectrum(&js, &fs, &fi).unwrap();
        let period = beat_period(&cf).unwrap();
        assert!(
            (period - 285.7).abs() < 2.0,
            "beat period {period:.2} ps vs 1/FSR = 285.7 ps"
        );
    }

    #[test]
    fn fft_matches_direct_transform() {
        let js = spectrum(ResonanceConfig::SinglyResonantSignal, 1600.0, 24.0);
        let (fs, fi) = wide_filters();
        let w = filtered_weights(&js, &fs, &fi).unwrap();
        let cf = g2_from_spectrum(&js, &fs, &fi).unwrap();
        let n = js.len();
        let step = js.detuning_step_hz;
        for &k in &[n / 2, n / 2 + 37, n / 2 - 501, n / 2 + 4096] {
            let tau = cf.tau_ps(k) * 1e-12;
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, wj) in w.iter().enumerate() {
                let nu = (j as f64 - (n / 2) as f64) * step;
                acc += wj * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * nu * tau);
            }
            let slow = step * step * acc.norm_sqr();
            let fast = cf.density[k];
            let scale = cf.density[n / 2].max(1e-300);
            assert!(
                (slow - fast).abs() <= 1e-9 * scale,
                "bin {k}: direct {slow:.6e} vs fft {fast:.6e}"
            );
        }
    }

    #[test]
    fn parseval_mass_is_preserved() {
        let js = spectrum(ResonanceConfig::SinglyResonantSignal, 1600.0, 24.0);
        let (fs, fi) = wide_filters();
        let w = filtered_weights(&js, &fs, &fi).unwrap();
        let cf = g2_from_spectrum(&js, &fs, &fi).unwrap();
        let spectral_mass: f64 =
            w.iter().map(|c| c.norm_sqr()).sum::<f64>() * js.detuning_step_hz;
        assert_relative_eq!(cf.integral(), spectral_mass, max_relative = 1e-6);
    }

    #[test]
    fn single_tooth_decays_without_fringes() {
        let js = sr_1600();
        let (fs, fi) = tooth_filters(&js);
        let cf = g2_from_spectrum(&js, &fs, &fi).unwrap();
        assert!(matches!(
            beat_period(&cf),
            Err(Error::InsufficientFringes { .. })
        ));
        // causal side: the confined signal photon leaves after the idler. The
        // filter's own time response smears the rising edge over roughly one
        // round trip, so compare well outside that lobe.
        let (k0, peak) = cf.argmax();
        assert!(peak > 0.0);
        assert!(
            cf.tau_ps(k0).abs() < 300.0,
            "peak at {} ps, expected within the filter response of zero",
            cf.tau_ps(k0)
        );
        let shift = (1500.0 / cf.tau_step_ps) as usize;
        let late = cf.density[k0 + shift];
        let early = cf.density[k0 - shift];
        assert!(
            late > 100.0 * early,
            "causal tail {late:.3e} vs acausal {early:.3e} at 1.5 ns"
        );
        let mass_before: f64 = cf.density[..k0].iter().sum();
        let mass_after: f64 = cf.density[k0..].iter().sum();
        assert!(
            mass_after > 5.0 * mass_before,
            "decay mass {mass_after:.3e} vs acausal {mass_before:.3e}"
        );
    }

    #[test]
    fn single_tooth_envelope_rate_is_twice_the_linewidth() {
        let js = sr_1600();
        let res = ResonatorSpec::device_default().unwrap();
        let (fs, fi) = tooth_filters(&js);
        let gamma_f = res.linewidth_hz(fs.center_nm).unwrap();
        let cf = g2_from_spectrum(&js, &fs, &fi).unwrap();
        let fit = envelope_fit(&cf, EnvelopeSide::Decaying).unwrap();
        assert!(fit.converged, "fit did not converge: {fit:?}");
        // the filter's time-response lobe biases the first few hundred ps, so
        // the device-level identity holds at the few-percent level
        assert_relative_eq!(fit.gamma_hz, 2.0 * gamma_f, max_relative = 0.05);
        assert!(fit.tau0_ps.abs() < 300.0, "peak at {} ps", fit.tau0_ps);
    }

    #[test]
    fn synthetic_lorentzian_tooth_fits_exactly_twice_its_width() {
        // pure one-pole spectrum: amplitude 1/(1 - 2 i detuning / gamma_f),
        // the local form of a cavity tooth, causal on the positive-delay side
        let gamma_f = 59.33e6;
        let n = 1 << 14;
        let step = 24.0 * 3.5e9 / n as f64;
        let amp: Vec<Complex64> = (0..n)
            .map(|j| {
                let nu = (j as f64 - (n / 2) as f64) * step;
                Complex64::new(1.0, 0.0) / Complex64::new(1.0, -2.0 * nu / gamma_f)
            })
            .collect();
        let js = JointSpectrum {
            pump_frequency_hz: 2.0 * crate::wavelength_nm_to_hz(1580.0),
            center_signal_frequency_hz: crate::wavelength_nm_to_hz(1580.0),
            center_idler_frequency_hz: crate::wavelength_nm_to_hz(1580.0),
            detuning_step_hz: step,
            amplitude: amp,
            config: ResonanceConfig::SinglyResonantSignal,
            comb_fsr_hz: 3.5e9,
        };
        let open = BandpassFilter::rectangular(1580.0, 10.0).unwrap();
        let cf = g2_from_spectrum(&js, &open, &open).unwrap();
        let fit = envelope_fit(&cf, EnvelopeSide::Decaying).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.gamma_hz, 2.0 * gamma_f, max_relative = 0.01);
    }

    #[test]
    fn degenerate_dr_correlation_is_symmetric() {
        let js = spectrum(ResonanceConfig::DoublyResonant, 1560.0, 24.0);
        let f = BandpassFilter::gaussian(1560.0, 1.0).unwrap();
        let cf = g2_from_spectrum(&js, &f, &f).unwrap();
        let n = cf.len();
        let peak = cf.argmax().1;
        for k in 1..n {
            let diff = (cf.density[k] - cf.density[n - k]).abs();
            assert!(
                diff <= 1e-3 * peak,
                "asymmetry {diff:.3e} at bin {k} (peak {peak:.3e})"
            );
        }
    }

    #[test]
    fn start_swap_mirrors_the_histogram() {
        let js = sr_1600();
        let (fs, fi) = tooth_filters(&js);
        let from_idler = heralded_waveform(&js, &fi, &fs, StartChannel::Idler).unwrap();
        let from_signal = heralded_waveform(&js, &fs, &fi, StartChannel::Signal).unwrap();
        let n = from_idler.len();
        for k in 0..n {
            assert_eq!(
                from_signal.density[k],
                from_idler.density[(n - k) % n],
                "bin {k} not mirrored"
            );
        }
        // heralding on the signal yields the rising waveform
        let fit = envelope_fit(&from_signal, EnvelopeSide::Rising).unwrap();
        let direct = envelope_fit(&from_idler, EnvelopeSide::Decaying).unwrap();
        assert_relative_eq!(fit.gamma_hz, direct.gamma_hz, max_relative = 1e-9);
    }

    #[test]
    fn heralded_waveform_rejects_wide_filters() {
        let js = sr_1600();
        let wide = BandpassFilter::gaussian(1600.0, 1.0).unwrap();
        let narrow = BandpassFilter::rectangular(1521.95, 0.03).unwrap();
        assert!(matches!(
            heralded_waveform(&js, &wide, &narrow, StartChannel::Idler),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn filter_outside_grid_is_an_error() {
        let js = spectrum(ResonanceConfig::SinglyResonantSignal, 1600.0, 24.0);
        let off = BandpassFilter::rectangular(1590.0, 0.05).unwrap();
        let fi = BandpassFilter::gaussian(1521.95, 1.0).unwrap();
        match g2_from_spectrum(&js, &off, &fi) {
            Err(Error::EmptyOverlap { center_nm }) => {
                assert_relative_eq!(center_nm, 1590.0, max_relative = 1e-12)
            }
            other => panic!("expected empty overlap, got {other:?}"),
        }
    }

    #[test]
    fn jitter_preserves_mass_and_identity_at_zero() {
        let js = sr_1600();
        let (fs, fi) = wide_filters();
        let cf = g2_from_spectrum(&js, &fs, &fi).unwrap();
        let same = apply_jitter(&cf, 0.0).unwrap();
        assert_eq!(same.density, cf.density);
        let sigma = combined_jitter_sigma_ps(&[80.0, 80.0]);
        assert_relative_eq!(sigma, 48.04, max_relative = 1e-3);
        let blurred = apply_jitter(&cf, sigma).unwrap();
        assert_relative_eq!(blurred.integral(), cf.integral(), max_relative = 1e-6);
        assert_relative_eq!(blurred.jitter_sigma_ps, sigma, max_relative = 1e-12);
    }

    #[test]
    fn jitter_lifts_fringe_minima_and_lowers_visibility() {
        let js = sr_1600();
        let (fs, fi) = wide_filters();
        let cf = g2_from_spectrum(&js, &fs, &fi).unwrap();
        let mut last = f64::INFINITY;
        for sigma in [0.0, 20.0, 48.04, 80.0] {
            let v = fringe_visibility(&apply_jitter(&cf, sigma).unwrap());
            assert!(
                v <= last + 1e-12,
                "visibility {v:.4} rose at sigma {sigma} ps (was {last:.4})"
            );
            last = v;
        }
        // the jittered fringe floor is strictly positive
        let blurred = apply_jitter(&cf, 48.04).unwrap();
        let peaks = fringe_peaks(&blurred);
        let (i, j) = (peaks[peaks.len() / 2], peaks[peaks.len() / 2 + 1]);
        let min = blurred.density[i..=j]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(
            min > 0.01 * blurred.density[i],
            "fringe floor {min:.3e} vs peak {:.3e}",
            blurred.density[i]
        );
    }

    #[test]
    fn synthetic_two_tooth_beat_and_doubling() {
        // two equal teeth split by the comb spacing beat at 1/spacing
        let make = |spacing_hz: f64| {
            let n = 1 << 14;
            let step = 24.0 * 3.5e9 / n as f64;
            let gamma = 60e6;
            let mut amp = vec![Complex64::new(0.0, 0.0); n];
            for (j, a) in amp.iter_mut().enumerate() {
                let nu = (j as f64 - (n / 2) as f64) * step;
                for tooth in [-0.5, 0.5] {
                    let det = nu - tooth * spacing_hz;
                    *a += Complex64::new(1.0, 0.0) / Complex64::new(1.0, -2.0 * det / gamma);
                }
            }
            let mass: f64 = amp.iter().map(|c| c.norm_sqr()).sum::<f64>() * step;
            let scale = mass.sqrt().recip();
            for a in &mut amp {
                *a *= scale;
            }
            JointSpectrum {
                pump_frequency_hz: 2.0 * crate::wavelength_nm_to_hz(1580.0),
                center_signal_frequency_hz: crate::wavelength_nm_to_hz(1580.0),
                center_idler_frequency_hz: crate::wavelength_nm_to_hz(1580.0),
                detuning_step_hz: step,
                amplitude: amp,
                config: ResonanceConfig::SinglyResonantSignal,
                comb_fsr_hz: spacing_hz,
            }
        };
        let wide = BandpassFilter::gaussian(1580.0, 5.0).unwrap();
        let single = beat_period(&g2_from_spectrum(&make(3.5e9), &wide, &wide).unwrap()).unwrap();
        let double = beat_period(&g2_from_spectrum(&make(7.0e9), &wide, &wide).unwrap()).unwrap();
        let cf = g2_from_spectrum(&make(3.5e9), &wide, &wide).unwrap();
        assert!(
            (single - 285.714).abs() <= cf.tau_step_ps,
            "two-tooth beat {single:.2} ps"
        );
        assert_relative_eq!(double, single / 2.0, max_relative = 0.02);
    }

    #[test]
    fn envelope_fit_convention_on_synthetic_decay() {
        // e^{-t/theta} has gamma = 2/theta in the A e^{-gamma t/2} convention
        let theta_s = 1.0e-9;
        let n = 4096;
        let step_ps = 4.0;
        let density: Vec<f64> = (0..n)
            .map(|k| {
                let t = (k as f64 - (n / 2) as f64) * step_ps * 1e-12;
                if t >= 0.0 {
                    (-t / theta_s).exp()
                } else {
                    0.0
                }
            })
            .collect();
        let cf = CorrelationFunction::from_samples(step_ps, density, 3.5e9, StartChannel::Idler)
            .unwrap();
        let fit = envelope_fit(&cf, EnvelopeSide::Decaying).unwrap();
        assert_relative_eq!(fit.gamma_angular(), 2.0 / theta_s, max_relative = 1e-6);
        assert_relative_eq!(fit.tau0_ps, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn correlation_csv_round_trip() {
        let js = spectrum(ResonanceConfig::SinglyResonantSignal, 1600.0, 24.0);
        let (fs, fi) = wide_filters();
        let cf = g2_from_spectrum(&js, &fs, &fi).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corr.csv");
        cf.to_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("tau_ps,density"));
        assert_eq!(lines.count(), cf.len());
        let fit = envelope_fit(&cf, EnvelopeSide::Decaying).unwrap();
        let json_path = dir.path().join("fit.json");
        fit.to_json(&json_path).unwrap();
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
        for key in ["A", "gamma_hz", "tau0_ps", "d", "residual"] {
            assert!(parsed.get(key).is_some(), "missing fit field {key}");
        }
    }
}
