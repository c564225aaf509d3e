//! Scenario runner: wires the physics and counting modules into figure-level
//! reproductions. Every scenario writes plot-ready CSV curves plus a JSON
//! summary of extracted scalars into the output directory, atomically and
//! with timestamp-free names, so reruns with one config and seed produce
//! byte-identical files.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::biphoton;
use crate::cavity::{Port, ResonatorSpec};
use crate::config::RunConfig;
use crate::correlation::{
    self, BandpassFilter, CorrelationFunction, EnvelopeSide, StartChannel,
};
use crate::dispersion::{self, PhaseMatchSpec};
use crate::error::{Error, Result};
use crate::montecarlo::{self, ChannelId, EventStream, SplitSide};
use crate::{hz_to_wavelength_nm, wavelength_nm_to_hz};

/// Data-producing scenarios, each mapping to one figure-level artifact.
pub const SCENARIOS: [&str; 7] = [
    "scan",
    "beats",
    "heralded_waveform",
    "heralded_g2",
    "rates",
    "spectrum",
    "cluster",
];

/// Runs one named scenario. `parallel` applies to parameter sweeps; the
/// outputs do not depend on it.
pub fn run_scenario(
    name: &str,
    cfg: &RunConfig,
    out_dir: &Path,
    parallel: bool,
) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    match name {
        "calibrate" => run_calibrate(cfg, out_dir),
        "scan" => run_scan(cfg, out_dir, parallel),
        "beats" => run_beats(cfg, out_dir),
        "heralded_waveform" => run_heralded_waveform(cfg, out_dir),
        "heralded_g2" => run_heralded_g2(cfg, out_dir, parallel),
        "rates" => run_rates(cfg, out_dir, parallel),
        "spectrum" => run_spectrum(cfg, out_dir),
        "cluster" => run_cluster(cfg, out_dir),
        other => Err(Error::Config(format!(
            "unknown scenario '{}'; expected calibrate or one of {}",
            other,
            SCENARIOS.join(", ")
        ))),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut file =
        tempfile::NamedTempFile::new_in(path.parent().unwrap_or_else(|| Path::new(".")))?;
    file.write_all(text.as_bytes())?;
    file.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write_text(path, &format!("{:#}\n", value))
}

/// Maps a parameter sweep, in parallel only when asked to; results keep
/// sweep order either way.
fn sweep_map<T, F>(parallel: bool, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if parallel {
        crate::exec::map_indexed(n, f)
    } else {
        crate::exec::map_indexed_seq(n, f)
    }
}

/// Calibrates the dispersion model and reconciles the resonator numbers at
/// the three reference wavelengths; report in JSON.
pub fn run_calibrate(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let model = cfg.index_model()?;
    let pm = cfg.phase_match()?;
    let resonator = cfg.resonator()?;
    let anchor_nm = cfg.device.shg_fundamental_nm;
    let mismatch = dispersion::qpm_mismatch(
        &model,
        &pm,
        cfg.device.pump_wavelength_nm,
        anchor_nm,
        anchor_nm,
    )?;
    let mut bands = Vec::new();
    for nm in [1560.0, 1580.0, 1600.0] {
        bands.push(json!({
            "wavelength_nm": nm,
            "fsr_ghz": resonator.fsr(nm)? / 1e9,
            "finesse": resonator.finesse(nm)?,
            "linewidth_mhz": resonator.linewidth_hz(nm)? / 1e6,
            "quality_factor": resonator.quality_factor(nm)?,
            "back_escape_fraction": resonator.escape_fraction(nm, Port::Back)?,
        }));
    }
    let report = json!({
        "pump_index_offset": model.pump_index_offset,
        "group_index_offset": model.group_offset,
        "group_reference_nm": model.group_reference_nm,
        "group_index_at_reference": model.group_index(model.group_reference_nm)?,
        "comb_fsr_target_ghz": cfg.device.comb_fsr_ghz,
        "qpm_mismatch_per_m": mismatch,
        "qpm_mismatch_times_length": mismatch * pm.crystal_length_m(),
        "bands": bands,
    });
    let path = out_dir.join("calibrate_report.json");
    write_json(&path, &report)?;
    Ok(vec![path])
}

/// Classical transmission scans around one resonance per reference
/// wavelength, with Lorentzian linewidth fits and a comb-spacing estimate
/// from the peak positions.
fn run_scan(cfg: &RunConfig, out_dir: &Path, parallel: bool) -> Result<Vec<PathBuf>> {
    let resonator = cfg.resonator()?;
    let span_fsr = 3.2;
    let points = 4001usize;
    let mut files = Vec::new();
    let mut bands = Vec::new();
    for nm in [1560.0, 1580.0, 1600.0] {
        let fsr = resonator.fsr(nm)?;
        let center = biphoton::nearest_resonance_hz(&resonator, wavelength_nm_to_hz(nm))?;
        let step = span_fsr * fsr / (points - 1) as f64;
        let offsets: Vec<f64> = (0..points)
            .map(|k| (k as f64 - (points / 2) as f64) * step)
            .collect();
        let power: Vec<f64> = {
            let res = &resonator;
            let offs = &offsets;
            sweep_map(parallel, points, move |k| {
                res.transmission_amplitude(center + offs[k])
                    .map(|t| t.norm_sqr())
            })
            .into_iter()
            .collect::<Result<Vec<f64>>>()?
        };

        let mut csv = String::from("offset_hz,transmission\n");
        for (o, p) in offsets.iter().zip(&power) {
            csv.push_str(&format!("{},{}\n", o, p));
        }
        let path = out_dir.join(format!("scan_{:.0}nm.csv", nm));
        write_text(&path, &csv)?;
        files.push(path);

        // central peak only; the neighbors would bias a single-peak fit
        let window = 0.35 * fsr;
        let (fit_x, fit_y): (Vec<f64>, Vec<f64>) = offsets
            .iter()
            .zip(&power)
            .filter(|(o, _)| o.abs() < window)
            .map(|(&o, &p)| (o, p))
            .unzip();
        let trace = crate::analysis::ScanTrace::new(fit_x, fit_y)?;
        let fit = crate::analysis::lorentzian_fit(&trace, None)?;
        let peaks = crate::analysis::peak_pick(&power, 0.5, (0.5 * fsr / step) as usize);
        let peak_offsets: Vec<f64> = peaks.iter().map(|&k| offsets[k]).collect();
        let (fsr_fit, fsr_sd) = crate::analysis::fsr_estimate(&peak_offsets)?;
        bands.push(json!({
            "wavelength_nm": nm,
            "fitted_linewidth_mhz": fit.value("gamma").unwrap() / 1e6,
            "model_linewidth_mhz": resonator.linewidth_hz(nm)? / 1e6,
            "fitted_fsr_ghz": fsr_fit / 1e9,
            "fsr_scatter_ghz": fsr_sd / 1e9,
            "model_fsr_ghz": fsr / 1e9,
            "finesse": resonator.finesse(nm)?,
        }));
    }
    let summary = out_dir.join("scan_summary.json");
    write_json(&summary, &json!({ "bands": bands }))?;
    files.push(summary);
    Ok(files)
}

struct SpectralContext {
    pm: PhaseMatchSpec,
    resonator: ResonatorSpec,
}

impl SpectralContext {
    fn new(cfg: &RunConfig) -> Result<Self> {
        Ok(SpectralContext {
            pm: cfg.phase_match()?,
            resonator: cfg.resonator()?,
        })
    }

    fn joint_spectrum(&self, cfg: &RunConfig) -> Result<biphoton::JointSpectrum> {
        let fsr = self.resonator.fsr(cfg.filters.signal_center_nm)?;
        biphoton::joint_amplitude(
            &self.pm,
            &self.resonator,
            cfg.run.resonance_config,
            cfg.device.pump_wavelength_nm,
            cfg.filters.signal_center_nm,
            cfg.run.span_fsr * fsr,
            cfg.run.grid_points,
        )
    }
}

fn detector_jitter_sigma_ps(cfg: &RunConfig) -> f64 {
    correlation::combined_jitter_sigma_ps(&[
        cfg.detectors.jitter_fwhm_ps,
        cfg.detectors.jitter_fwhm_ps,
    ])
}

/// Filtered coincidence curve of the comb: fringes at the round-trip time
/// under an envelope set by the tooth linewidth.
fn run_beats(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let ctx = SpectralContext::new(cfg)?;
    let js = ctx.joint_spectrum(cfg)?;
    let g2 = correlation::g2_from_spectrum(&js, &cfg.signal_filter()?, &cfg.idler_filter()?)?;
    let sigma = detector_jitter_sigma_ps(cfg);
    let observed = correlation::apply_jitter(&g2, sigma)?;
    let period = correlation::beat_period(&observed)?;
    let envelope = correlation::envelope_fit(&observed, EnvelopeSide::Decaying)?;
    let fringes = correlation::fringe_peaks(&observed).len();
    let csv = out_dir.join("beats_correlation.csv");
    observed.to_csv(&csv)?;
    let summary = out_dir.join("beats_summary.json");
    write_json(
        &summary,
        &json!({
            "resonance_config": cfg.run.resonance_config,
            "signal_center_nm": cfg.filters.signal_center_nm,
            "idler_center_nm": cfg.filters.idler_center_nm,
            "filter_fwhm_nm": cfg.filters.signal_fwhm_nm,
            "beat_period_ps": period,
            "round_trip_ps": 1e12 / js.comb_fsr_hz,
            "gamma_over_2pi_hz": envelope.gamma_hz,
            "fringe_count": fringes,
            "jitter_sigma_ps": sigma,
        }),
    )?;
    Ok(vec![csv, summary])
}

/// Single-tooth heralded waveform: one comb tooth and its energy partner,
/// start on the signal click so the heralded flank rises.
fn run_heralded_waveform(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let ctx = SpectralContext::new(cfg)?;
    let js = ctx.joint_spectrum(cfg)?;
    let tooth_hz = biphoton::nearest_resonance_hz(
        &ctx.resonator,
        wavelength_nm_to_hz(cfg.filters.signal_center_nm),
    )?;
    let partner_hz = js.pump_frequency_hz - tooth_hz;
    let herald =
        BandpassFilter::rectangular(hz_to_wavelength_nm(tooth_hz), cfg.filters.herald_fwhm_nm)?;
    let heralded =
        BandpassFilter::rectangular(hz_to_wavelength_nm(partner_hz), cfg.filters.herald_fwhm_nm)?;
    let wf = correlation::heralded_waveform(&js, &herald, &heralded, StartChannel::Signal)?;
    let sigma = detector_jitter_sigma_ps(cfg);
    let observed = correlation::apply_jitter(&wf, sigma)?;
    let rising = correlation::envelope_fit(&observed, EnvelopeSide::Rising)?;
    let decaying = correlation::envelope_fit(&observed, EnvelopeSide::Decaying)?;
    let (k0, _) = observed.argmax();
    let tooth_linewidth = ctx
        .resonator
        .linewidth_hz(hz_to_wavelength_nm(tooth_hz))?;
    let csv = out_dir.join("heralded_waveform_correlation.csv");
    observed.to_csv(&csv)?;
    let summary = out_dir.join("heralded_waveform_summary.json");
    write_json(
        &summary,
        &json!({
            "herald_center_nm": hz_to_wavelength_nm(tooth_hz),
            "heralded_center_nm": hz_to_wavelength_nm(partner_hz),
            "filter_fwhm_nm": cfg.filters.herald_fwhm_nm,
            "start_channel": StartChannel::Signal,
            "gamma_rising_over_2pi_hz": rising.gamma_hz,
            "gamma_decaying_over_2pi_hz": decaying.gamma_hz,
            "tooth_linewidth_hz": tooth_linewidth,
            "two_tooth_linewidths_hz": 2.0 * tooth_linewidth,
            "peak_tau_ps": observed.tau_ps(k0),
            "jitter_sigma_ps": sigma,
        }),
    )?;
    Ok(vec![csv, summary])
}

fn experiment_streams(
    cfg: &RunConfig,
    correlation: &CorrelationFunction,
    split: Option<SplitSide>,
    parallel: bool,
) -> Result<Vec<(f64, EventStream)>> {
    let detectors = cfg.detector_bank()?;
    let powers = cfg.run.power_sweep_mw.clone();
    let runs: Vec<Result<(f64, EventStream)>> = sweep_map(parallel, powers.len(), |i| {
        let mut exp = cfg.experiment(powers[i], split)?;
        // sweep points draw from unrelated streams
        exp.rng_seed = cfg.run.seed.wrapping_add(i as u64);
        let stream = montecarlo::sample_experiment(&exp, correlation, &detectors)?;
        Ok((powers[i], stream))
    });
    runs.into_iter().collect()
}

/// Pump-power sweep of the heralded autocorrelation on the split idler path.
fn run_heralded_g2(cfg: &RunConfig, out_dir: &Path, parallel: bool) -> Result<Vec<PathBuf>> {
    let ctx = SpectralContext::new(cfg)?;
    let js = ctx.joint_spectrum(cfg)?;
    let g2curve = correlation::g2_from_spectrum(&js, &cfg.signal_filter()?, &cfg.idler_filter()?)?;
    let streams = experiment_streams(cfg, &g2curve, Some(SplitSide::Idler), parallel)?;
    let mut csv = String::from("power_mw,g2,standard_error,herald_count,triples\n");
    let mut powers = Vec::new();
    let mut values = Vec::new();
    for (power, stream) in &streams {
        let est = montecarlo::heralded_g2(
            stream,
            ChannelId::Signal,
            ChannelId::IdlerA,
            ChannelId::IdlerB,
            cfg.run.histogram_window_ns,
        )?;
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            power, est.value, est.standard_error, est.herald_count, est.triples
        ));
        powers.push(*power);
        values.push(est.value);
    }
    let fit = crate::analysis::linear_fit(&powers, &values, true)?;
    let slope = fit.value("slope").unwrap();
    let r2 = crate::analysis::r_squared(&powers, &values, |x| slope * x);
    let csv_path = out_dir.join("heralded_g2_sweep.csv");
    write_text(&csv_path, &csv)?;
    let summary = out_dir.join("heralded_g2_summary.json");
    write_json(
        &summary,
        &json!({
            "window_ns": cfg.run.histogram_window_ns,
            "duration_s": cfg.run.duration_s,
            "slope_per_mw": slope,
            "r_squared_through_origin": r2,
            "points": powers.len(),
        }),
    )?;
    Ok(vec![csv_path, summary])
}

/// Pump-power sweep of singles, coincidences and the efficiency estimators.
fn run_rates(cfg: &RunConfig, out_dir: &Path, parallel: bool) -> Result<Vec<PathBuf>> {
    let ctx = SpectralContext::new(cfg)?;
    let js = ctx.joint_spectrum(cfg)?;
    let g2curve = correlation::g2_from_spectrum(&js, &cfg.signal_filter()?, &cfg.idler_filter()?)?;
    let streams = experiment_streams(cfg, &g2curve, None, parallel)?;
    let window = 5.0 * cfg.run.histogram_window_ns;
    let mut csv =
        String::from("power_mw,signal_singles,idler_singles,coincidences,accidentals\n");
    let (mut powers, mut signal, mut idler, mut pairs) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut last = None;
    for (power, stream) in &streams {
        let est = montecarlo::coincidence_efficiency(
            stream,
            ChannelId::Signal,
            ChannelId::Idler,
            window,
        )?;
        let n_s = stream.count(ChannelId::Signal);
        let n_i = stream.count(ChannelId::Idler);
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            power, n_s, n_i, est.coincidences, est.accidentals
        ));
        powers.push(*power);
        signal.push(n_s as f64);
        idler.push(n_i as f64);
        pairs.push(est.coincidences as f64 - est.accidentals as f64);
        last = Some((stream, est));
    }
    let r2_of = |y: &[f64]| -> Result<f64> {
        let fit = crate::analysis::linear_fit(&powers, y, false)?;
        let (a, b) = (fit.value("slope").unwrap(), fit.value("intercept").unwrap());
        Ok(crate::analysis::r_squared(&powers, y, |x| a * x + b))
    };
    let (top_stream, top_eff) = last.expect("validated non-empty sweep");
    let eff_signal = montecarlo::coincidence_efficiency(
        top_stream,
        ChannelId::Idler,
        ChannelId::Signal,
        window,
    )?;
    let csv_path = out_dir.join("rates_sweep.csv");
    write_text(&csv_path, &csv)?;
    let summary = out_dir.join("rates_summary.json");
    write_json(
        &summary,
        &json!({
            "r_squared_signal": r2_of(&signal)?,
            "r_squared_idler": r2_of(&idler)?,
            "r_squared_coincidences": r2_of(&pairs)?,
            "singles_ratio_at_top_power": montecarlo::singles_ratio(top_stream)?,
            "idler_efficiency_estimate": top_eff.value,
            "idler_efficiency_sigma": top_eff.standard_error,
            "idler_efficiency_configured":
                cfg.run.idler_path_transmittance * cfg.detectors.quantum_efficiency,
            "signal_efficiency_estimate": eff_signal.value,
            "signal_efficiency_sigma": eff_signal.standard_error,
            "signal_efficiency_configured":
                cfg.run.signal_path_transmittance * cfg.detectors.quantum_efficiency,
            "coincidence_window_ns": window,
        }),
    )?;
    Ok(vec![csv_path, summary])
}

/// Filter-scanned emission envelope over the full band plus the resonant
/// mode count of the signal half.
fn run_spectrum(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let ctx = SpectralContext::new(cfg)?;
    let envelope = biphoton::spectral_envelope(
        &ctx.pm,
        &ctx.resonator,
        cfg.run.resonance_config,
        cfg.device.pump_wavelength_nm,
        cfg.run.band_lo_nm,
        cfg.run.band_hi_nm,
        cfg.filters.spectrum_fwhm_nm,
    )?;
    let mut csv = String::from("wavelength_nm,relative_counts\n");
    for (nm, v) in &envelope {
        csv.push_str(&format!("{},{}\n", nm, v));
    }
    let degenerate_nm = 2.0 * cfg.device.pump_wavelength_nm;
    let signal_lo = cfg.run.band_lo_nm.max(degenerate_nm);
    let modes = biphoton::mode_table(
        &ctx.pm,
        &ctx.resonator,
        cfg.run.resonance_config,
        cfg.device.pump_wavelength_nm,
        signal_lo,
        cfg.run.band_hi_nm,
    )?;
    let value_near = |nm: f64| -> f64 {
        envelope
            .iter()
            .min_by(|a, b| (a.0 - nm).abs().total_cmp(&(b.0 - nm).abs()))
            .map(|&(_, v)| v)
            .unwrap_or(f64::NAN)
    };
    let idler_partner = dispersion::matched_idler_nm(
        cfg.device.pump_wavelength_nm,
        cfg.filters.signal_center_nm,
    );
    let csv_path = out_dir.join("spectrum_envelope.csv");
    write_text(&csv_path, &csv)?;
    let summary = out_dir.join("spectrum_summary.json");
    write_json(
        &summary,
        &json!({
            "band_lo_nm": cfg.run.band_lo_nm,
            "band_hi_nm": cfg.run.band_hi_nm,
            "filter_fwhm_nm": cfg.filters.spectrum_fwhm_nm,
            "mode_count": modes.rows.len(),
            "mode_band_lo_nm": signal_lo,
            "signal_to_idler_edge_ratio":
                value_near(cfg.filters.signal_center_nm) / value_near(idler_partner),
        }),
    )?;
    Ok(vec![csv_path, summary])
}

/// Per-tooth suppression map; clustered for a doubly resonant layout,
/// uniform for the singly resonant one.
fn run_cluster(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let ctx = SpectralContext::new(cfg)?;
    let report = biphoton::cluster_analysis(
        &ctx.resonator,
        cfg.run.resonance_config,
        cfg.device.pump_wavelength_nm,
        cfg.run.band_lo_nm,
        cfg.run.band_hi_nm,
    )?;
    let mut csv = String::from("signal_nm,suppression_ratio\n");
    for tooth in &report.teeth {
        csv.push_str(&format!("{},{}\n", tooth.signal_nm, tooth.suppression_ratio));
    }
    let near_unit_fraction = if report.teeth.is_empty() {
        0.0
    } else {
        report.near_unit_count as f64 / report.teeth.len() as f64
    };
    let csv_path = out_dir.join("cluster_map.csv");
    write_text(&csv_path, &csv)?;
    let summary = out_dir.join("cluster_summary.json");
    write_json(
        &summary,
        &json!({
            "resonance_config": report.config,
            "band_lo_nm": cfg.run.band_lo_nm,
            "band_hi_nm": cfg.run.band_hi_nm,
            "tooth_count": report.teeth.len(),
            "min_ratio": report.min_ratio,
            "max_ratio": report.max_ratio,
            "near_unit_fraction": near_unit_fraction,
            "cluster_spacing_modes": report.cluster_spacing_modes,
        }),
    )?;
    Ok(vec![csv_path, summary])
}
