//! End-to-end acceptance gate. Each test covers one headline claim of the
//! modeled experiment, checks it at fixed tolerances against first-principles
//! expectations, and prints one pass line with the measured numbers. The
//! Monte Carlo criteria run on seeded streams of a few million events.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use sr_opo_comb::biphoton::{self, JointSpectrum, ResonanceConfig};
use sr_opo_comb::cavity::ResonatorSpec;
use sr_opo_comb::correlation::{
    self,BandpassFilter, CorrelationFunction, EnvelopeSide, StartChannel,
};
use sr_opo_comb::dispersion::{self, PhaseMatchSpec};
use sr_opo_comb::montecarlo::{
    self, ChannelDetectors, ChannelId, ExperimentConfig, SplitSide,
};
use sr_opo_comb::{analysis, hz_to_wavelength_nm, wavelength_nm_to_hz};

const PUMP_NM: f64 = 780.0;

fn device() -> &'static (PhaseMatchSpec, ResonatorSpec) {
    static DEVICE: OnceLock<(PhaseMatchSpec, ResonatorSpec)> = OnceLock::new();
    DEVICE.get_or_init(|| {
        (
            PhaseMatchSpec::device_default(),
            ResonatorSpec::device_default().expect("device resonator"),
        )
    })
}

/// Joint spectrum around a signal center at the production grid.
fn spectrum_at(center_nm: f64, config: ResonanceConfig) -> JointSpectrum {
    let (pm, resonator) = device();
    let fsr = resonator.fsr(center_nm).expect("fsr");
    biphoton::joint_amplitude(
        pm,
        resonator,
        config,
        PUMP_NM,
        center_nm,
        biphoton::DEFAULT_SPAN_FSR * fsr,
        biphoton::DEFAULT_POINTS,
    )
    .expect("joint spectrum")
}

/// The 1600 nm singly resonant spectrum reused by several criteria.
fn band_edge_spectrum() -> &'static JointSpectrum {
    static JS: OnceLock<JointSpectrum> = OnceLock::new();
    JS.get_or_init(|| spectrum_at(1600.0, ResonanceConfig::SinglyResonantSignal))
}

fn band_edge_beats() -> CorrelationFunction {
    let js = band_edge_spectrum();
    let signal = BandpassFilter::gaussian(1600.0, 1.0).unwrap();
    let idler = BandpassFilter::gaussian(
        hz_to_wavelength_nm(js.pump_frequency_hz - wavelength_nm_to_hz(1600.0)),
        1.0,
    )
    .unwrap();
    correlation::g2_from_spectrum(js, &signal, &idler).unwrap()
}

#[test]
fn acceptance_1_calibrated_dispersion_hits_the_measured_anchors() {
    let t0 = Instant::now();
    let model = dispersion::device_model(50.0).expect("calibration");
    let group = model.group_index(1580.0).expect("group index");
    assert!(
        (group - 2.1414).abs() < 0.0005,
        "group index {} outside 2.1414 +- 0.0005",
        group
    );
    let pm = PhaseMatchSpec::device_default();
    let mismatch = dispersion::qpm_mismatch(&model, &pm, PUMP_NM, 1560.0, 1560.0)
        .expect("mismatch")
        * pm.crystal_length_m();
    assert!(
        mismatch.abs() < 1e-6,
        "|dk L| = {} at the degenerate anchor",
        mismatch.abs()
    );
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 1.0, "calibration took {:?}", dt);
    println!(
        "[PASS] 1 calibration: group index {:.7} (target 2.1414 +- 0.0005), |dk L| = {:.2e}, {:?}",
        group,
        mismatch.abs(),
        dt
    );
}

#[test]
fn acceptance_2_resonator_table_reproduces_the_three_bands() {
    let t0 = Instant::now();
    let resonator = &device().1;
    // (wavelength, finesse, linewidth MHz, quality factor)
    let targets = [
        (1560.0, 7.0, 470.0, 0.4e6),
        (1580.0, 29.0, 116.0, 1.6e6),
        (1600.0, 59.0, 60.0, 3.2e6),
    ];
    let mut lines = Vec::new();
    for (nm, f_t, lw_t, q_t) in targets {
        let f = resonator.finesse(nm).unwrap();
        let lw = resonator.linewidth_hz(nm).unwrap() / 1e6;
        let q = resonator.quality_factor(nm).unwrap();
        assert!(
            (f - f_t).abs() / f_t < 0.10,
            "finesse {} vs {} at {} nm",
            f,
            f_t,
            nm
        );
        assert!(
            (lw - lw_t).abs() / lw_t < 0.10,
            "linewidth {} MHz vs {} at {} nm",
            lw,
            lw_t,
            nm
        );
        assert!(
            (q - q_t).abs() / q_t < 0.10,
            "quality factor {} vs {} at {} nm",
            q,
            q_t,
            nm
        );
        lines.push(format!("{}nm F={:.1} lw={:.1}MHz Q={:.2e}", nm, f, lw, q));
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 1.0, "table took {:?}", dt);
    println!("[PASS] 2 resonator table: {} ({:?})", lines.join(", "), dt);
}

#[test]
fn acceptance_3_comb_beats_sit_at_the_round_trip_time() {
    // two singly resonant filter pairs plus the degenerate doubly resonant case
    let mut lines = Vec::new();
    for (signal_nm, idler_nm) in [(1600.0, 1522.0), (1580.0, 1540.0)] {
        let t0 = Instant::now();
        let js = spectrum_at(signal_nm, ResonanceConfig::SinglyResonantSignal);
        let sf = BandpassFilter::gaussian(signal_nm, 1.0).unwrap();
        let idf = BandpassFilter::gaussian(idler_nm, 1.0).unwrap();
        let g2 = correlation::g2_from_spectrum(&js, &sf, &idf).unwrap();
        let period = correlation::beat_period(&g2).unwrap();
        assert!(
            (period - 285.7).abs() < 2.0,
            "beat period {} ps for {}/{} nm",
            period,
            signal_nm,
            idler_nm
        );
        let dt = t0.elapsed();
        assert!(dt.as_secs_f64() < 30.0, "beats took {:?}", dt);
        lines.push(format!("{}/{}nm {:.2}ps", signal_nm, idler_nm, period));
    }

    let t0 = Instant::now();
    let degenerate_nm = 2.0 * PUMP_NM;
    let js = spectrum_at(degenerate_nm, ResonanceConfig::DoublyResonant);
    let filt = BandpassFilter::gaussian(degenerate_nm, 1.0).unwrap();
    let g2 = correlation::g2_from_spectrum(&js, &filt, &filt).unwrap();
    let period = correlation::beat_period(&g2).unwrap();
    let round_trip = 1e12 / js.comb_fsr_hz;
    assert!(
        (period - round_trip).abs() < 4.0 && (278.0..=290.0).contains(&period),
        "degenerate beat period {} ps vs round trip {} ps",
        period,
        round_trip
    );
    let mirrored = g2.mirrored();
    let peak = g2.argmax().1;
    let asymmetry = g2
        .density
        .iter()
        .zip(&mirrored.density)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(
        asymmetry < 0.02 * peak,
        "degenerate correlation asymmetry {} of peak {}",
        asymmetry,
        peak
    );
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 30.0, "degenerate beats took {:?}", dt);
    lines.push(format!(
        "degenerate {:.2}ps asym {:.1e}",
        period,
        asymmetry / peak
    ));
    println!("[PASS] 3 comb beats: {}", lines.join("; "));
}

#[test]
fn acceptance_4_single_tooth_waveforms_decay_at_twice_the_linewidth() {
    let t0 = Instant::now();
    let mut lines = Vec::new();
    for gamma_f in [60.0e6, 116.0e6] {
        let n = 1usize << 14;
        let step = 24.0 * 3.5e9 / n as f64;
        let amp: Vec<num_complex::Complex64> = (0..n)
            .map(|j| {
                let nu = (j as f64 - (n / 2) as f64) * step;
                num_complex::Complex64::new(1.0, 0.0)
                    / num_complex::Complex64::new(1.0, -2.0 * nu / gamma_f)
            })
            .collect();
        let js = JointSpectrum {
            pump_frequency_hz: 2.0 * wavelength_nm_to_hz(1580.0),
            center_signal_frequency_hz: wavelength_nm_to_hz(1580.0),
            center_idler_frequency_hz: wavelength_nm_to_hz(1580.0),
            detuning_step_hz: step,
            amplitude: amp,
            config: ResonanceConfig::SinglyResonantSignal,
            comb_fsr_hz: 3.5e9,
        };
        let open = BandpassFilter::rectangular(1580.0, 10.0).unwrap();
        let cf = correlation::g2_from_spectrum(&js, &open, &open).unwrap();
        let fit = correlation::envelope_fit(&cf, EnvelopeSide::Decaying).unwrap();
        let expected = 2.0 * gamma_f;
        assert!(
            fit.converged && (fit.gamma_hz - expected).abs() / expected < 0.01,
            "envelope rate {} Hz vs 2 linewidths {} Hz for a {} MHz tooth",
            fit.gamma_hz,
            expected,
            gamma_f / 1e6
        );
        lines.push(format!(
            "{:.0}MHz tooth -> {:.2}MHz vs {:.0}MHz",
            gamma_f / 1e6,
            fit.gamma_hz / 1e6,
            expected / 1e6
        ));
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 10.0, "waveform fits took {:?}", dt);
    println!("[PASS] 4 single-tooth decay: {} ({:?})", lines.join(", "), dt);
}

#[test]
fn acceptance_5_swapping_herald_roles_mirrors_the_waveform() {
    let t0 = Instant::now();
    let js = band_edge_spectrum();
    let resonator = &device().1;
    let tooth_hz =
        biphoton::nearest_resonance_hz(resonator, wavelength_nm_to_hz(1600.0)).unwrap();
    let partner_hz = js.pump_frequency_hz - tooth_hz;
    let on_signal = BandpassFilter::rectangular(hz_to_wavelength_nm(tooth_hz), 0.03).unwrap();
    let on_idler = BandpassFilter::rectangular(hz_to_wavelength_nm(partner_hz), 0.03).unwrap();
    // same physical filters, opposite photon starting the clock
    let idler_starts =
        correlation::heralded_waveform(js, &on_idler, &on_signal, StartChannel::Idler).unwrap();
    let signal_starts =
        correlation::heralded_waveform(js, &on_signal, &on_idler, StartChannel::Signal).unwrap();
    let mirrored = idler_starts.mirrored();
    let peak = idler_starts.argmax().1;
    let worst = signal_starts
        .density
        .iter()
        .zip(&mirrored.density)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(
        worst < 1e-9 * peak,
        "role swap deviates by {} of peak {}",
        worst,
        peak
    );
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 10.0, "mirror check took {:?}", dt);
    println!(
        "[PASS] 5 herald-role mirror: max deviation {:.1e} of peak ({:?})",
        worst / peak,
        dt
    );
}

#[test]
fn acceptance_6_cluster_dichotomy_and_mode_count() {
    let t0 = Instant::now();
    let (pm, resonator) = device();
    let sr = biphoton::cluster_analysis(
        resonator,
        ResonanceConfig::SinglyResonantSignal,
        PUMP_NM,
        1520.0,
        1600.0,
    )
    .unwrap();
    assert!(
        sr.min_ratio >= 0.99,
        "singly resonant suppression dips to {}",
        sr.min_ratio
    );
    let dr = biphoton::cluster_analysis(
        resonator,
        ResonanceConfig::DoublyResonant,
        PUMP_NM,
        1520.0,
        1600.0,
    )
    .unwrap();
    assert!(
        dr.min_ratio < 0.5,
        "doubly resonant suppression only reaches {}",
        dr.min_ratio
    );
    let modes = biphoton::mode_table(
        pm,
        resonator,
        ResonanceConfig::SinglyResonantSignal,
        PUMP_NM,
        1560.0,
        1600.0,
    )
    .unwrap();
    let count = modes.rows.len() as i64;
    assert!(
        (count - 1400).abs() <= 30,
        "signal-band mode count {}",
        count
    );
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 60.0, "cluster sweep took {:?}", dt);
    println!(
        "[PASS] 6 cluster dichotomy: SR min {:.4}, DR min {:.4}, {} modes ({:?})",
        sr.min_ratio, dr.min_ratio, count, dt
    );
}

fn counting_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::device_default();
    // low gain and strong collection: multi-pair droop of g2 stays inside the
    // counting error while triples stay plentiful, and the whole sweep lands
    // between one and ten million detector events
    cfg.intrinsic_pair_rate_hz_per_mw = 1.0e6;
    cfg.signal_path_transmittance = 0.8;
    cfg.idler_path_transmittance = 0.8;
    cfg.duration_s = 0.6;
    cfg.rng_seed = 11;
    cfg
}

#[test]
fn acceptance_7_counting_statistics_from_seeded_streams() {
    let t0 = Instant::now();
    let beats = band_edge_beats();
    let detectors = ChannelDetectors::device_default();
    let window_ns = 9.0;
    let powers = [0.5, 1.0, 1.5, 2.0];

    let mut total_events = 0usize;
    let mut singles_s = Vec::new();
    let mut singles_i = Vec::new();
    let mut pairs = Vec::new();
    let mut g2_points = Vec::new();
    let mut efficiency = None;
    for (k, &p) in powers.iter().enumerate() {
        let mut cfg = counting_config();
        cfg.pump_power_mw = p;
        cfg.rng_seed = 11 + k as u64;
        let stream = montecarlo::sample_experiment(&cfg, &beats, &detectors).unwrap();
        total_events += ChannelId::ALL.iter().map(|&c| stream.count(c)).sum::<usize>();
        singles_s.push(stream.count(ChannelId::Signal) as f64);
        singles_i.push(stream.count(ChannelId::Idler) as f64);
        // wide window: the correlation rings down over 1/(2 pi linewidth),
        // about 2.7 ns, so +-9 ns would clip a few percent of the partners
        let eff = montecarlo::coincidence_efficiency(
            &stream,
            ChannelId::Signal,
            ChannelId::Idler,
            5.0 * window_ns,
        )
        .unwrap();
        pairs.push(eff.coincidences as f64 - eff.accidentals as f64);
        if p == 2.0 {
            efficiency = Some(eff);
        }

        let mut split_cfg = cfg.clone();
        split_cfg.splitter_present = true;
        split_cfg.split_side = SplitSide::Idler;
        split_cfg.rng_seed = 211 + k as u64;
        let split = montecarlo::sample_experiment(&split_cfg, &beats, &detectors).unwrap();
        total_events += ChannelId::ALL.iter().map(|&c| split.count(c)).sum::<usize>();
        let est = montecarlo::heralded_g2(
            &split,
            ChannelId::Signal,
            ChannelId::IdlerA,
            ChannelId::IdlerB,
            window_ns,
        )
        .unwrap();
        g2_points.push(est);
    }

    // singles and background-corrected coincidences linear in pump power
    let x = powers.to_vec();
    let mut r2_line = String::new();
    for (label, y) in [("signal", &singles_s), ("idler", &singles_i), ("pairs", &pairs)] {
        let fit = analysis::linear_fit(&x, y, false).unwrap();
        let (a, b) = (fit.value("slope").unwrap(), fit.value("intercept").unwrap());
        let r2 = analysis::r_squared(&x, y, |v| a * v + b);
        assert!(r2 > 0.99, "{} rate linearity r2 = {}", label, r2);
        r2_line.push_str(&format!("{} r2={:.5} ", label, r2));
    }

    // heralded g2 linear through the origin within the counting errors
    let g2_values: Vec<f64> = g2_points.iter().map(|e| e.value).collect();
    let fit = analysis::linear_fit(&x, &g2_values, true).unwrap();
    let slope = fit.value("slope").unwrap();
    let r2 = analysis::r_squared(&x, &g2_values, |v| slope * v);
    assert!(r2 > 0.99, "g2 through-origin r2 = {}", r2);
    for (p, est) in x.iter().zip(&g2_points) {
        assert!(
            (est.value - slope * p).abs() <= 3.0 * est.standard_error,
            "g2 {} at {} mW off the origin line {} by more than 3 x {}",
            est.value,
            p,
            slope * p,
            est.standard_error
        );
        assert!(est.triples > 100, "only {} triples at {} mW", est.triples, p);
    }

    // heralding from either side must agree
    let mut arm_results = Vec::new();
    for (side, herald, a, b, seed) in [
        (
            SplitSide::Idler,
            ChannelId::Signal,
            ChannelId::IdlerA,
            ChannelId::IdlerB,
            401u64,
        ),
        (
            SplitSide::Signal,
            ChannelId::Idler,
            ChannelId::SignalA,
            ChannelId::SignalB,
            402u64,
        ),
    ] {
        let mut cfg = counting_config();
        cfg.pump_power_mw = 1.0;
        cfg.splitter_present = true;
        cfg.split_side = side;
        cfg.rng_seed = seed;
        let stream = montecarlo::sample_experiment(&cfg, &beats, &detectors).unwrap();
        total_events += ChannelId::ALL.iter().map(|&c| stream.count(c)).sum::<usize>();
        arm_results.push(montecarlo::heralded_g2(&stream, herald, a, b, window_ns).unwrap());
    }
    let combined = (arm_results[0].standard_error.powi(2)
        + arm_results[1].standard_error.powi(2))
    .sqrt();
    assert!(
        (arm_results[0].value - arm_results[1].value).abs() <= 3.0 * combined,
        "signal-heralded {} vs idler-heralded {} beyond 3 x {}",
        arm_results[1].value,
        arm_results[0].value,
        combined
    );

    // the efficiency estimator recovers the configured collection
    let eff = efficiency.expect("top-power efficiency");
    let cfg = counting_config();
    let truth = cfg.idler_path_transmittance * detectors.idler.efficiency;
    assert!(
        (eff.value - truth).abs() <= 3.0 * eff.standard_error,
        "efficiency {} vs configured {} beyond 3 x {}",
        eff.value,
        truth,
        eff.standard_error
    );

    assert!(
        (1_000_000..=10_000_000).contains(&total_events),
        "{} detector events outside the intended scale",
        total_events
    );
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 300.0, "counting suite took {:?}", dt);
    println!(
        "[PASS] 7 counting statistics: {}events {:.2e}, g2 r2={:.4}, arms {:.4}/{:.4}, eff {:.4}+-{:.4} ({:?})",
        r2_line,
        total_events as f64,
        r2,
        arm_results[0].value,
        arm_results[1].value,
        eff.value,
        eff.standard_error,
        dt
    );
}

#[test]
fn acceptance_8_detector_jitter_washes_out_the_fringes_monotonically() {
    let t0 = Instant::now();
    let g2 = band_edge_beats();

    // visibility of the central fringe against its neighboring minimum
    let visibility = |cf: &CorrelationFunction| -> f64 {
        let peaks = correlation::fringe_peaks(cf);
        let (k0, _) = cf.argmax();
        let pos = peaks.binary_search(&k0).expect("argmax is a fringe peak");
        let next = peaks[pos + 1];
        let valley = cf.density[k0..next]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let peak = cf.density[k0];
        (peak - valley) / (peak + valley)
    };

    let two_detectors = correlation::combined_jitter_sigma_ps(&[80.0, 80.0]);
    let observed = correlation::apply_jitter(&g2, two_detectors).unwrap();
    let peaks = correlation::fringe_peaks(&observed);
    let (k0, peak) = observed.argmax();
    let pos = peaks.binary_search(&k0).expect("argmax is a fringe peak");
    let mut worst_valley = f64::INFINITY;
    for w in peaks[pos.saturating_sub(2)..(pos + 3).min(peaks.len())].windows(2) {
        let valley = observed.density[w[0]..w[1]]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        worst_valley = worst_valley.min(valley);
    }
    assert!(
        worst_valley > 0.0,
        "fringe minima must stay positive, found {}",
        worst_valley
    );

    let sigmas = [0.0, 20.0, 34.0, 50.0];
    let mut vis = Vec::new();
    for &s in &sigmas {
        let blurred = if s == 0.0 {
            g2.clone()
        } else {
            correlation::apply_jitter(&g2, s).unwrap()
        };
        vis.push(visibility(&blurred));
    }
    for pair in vis.windows(2) {
        assert!(
            pair[1] < pair[0],
            "visibility must fall with jitter: {:?} from sigmas {:?}",
            vis,
            sigmas
        );
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 10.0, "jitter sweep took {:?}", dt);
    println!(
        "[PASS] 8 jitter: min/peak {:.3} at 2x80ps, visibility {:.3}/{:.3}/{:.3}/{:.3} ({:?})",
        worst_valley / peak,
        vis[0],
        vis[1],
        vis[2],
        vis[3],
        dt
    );
}

#[test]
fn acceptance_9_fitters_and_spectra_pass_randomized_audits() {
    let t0 = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(909);

    // fit recovery on 100 random noiseless instances per model
    for _ in 0..100 {
        let peak: f64 = rng.gen_range(0.5..50.0);
        let f0: f64 = rng.gen_range(-2.0e9..2.0e9);
        let gamma: f64 = rng.gen_range(1.0e8..2.0e9);
        let d = rng.gen_range(0.0..0.3) * peak;
        let a = peak * (gamma / 2.0) * (gamma / 2.0);
        let offsets: Vec<f64> = (0..801).map(|k| (k as f64 / 800.0 - 0.5) * 10.0e9).collect();
        let power: Vec<f64> = offsets
            .iter()
            .map(|&x| a / ((x - f0).powi(2) + (gamma / 2.0).powi(2)) + d)
            .collect();
        let trace = analysis::ScanTrace::new(offsets, power).unwrap();
        let fit = analysis::lorentzian_fit(&trace, None).unwrap();
        let g = fit.value("gamma").unwrap();
        assert!((g - gamma).abs() / gamma < 1e-6, "lorentzian gamma {} vs {}", g, gamma);

        let amp: f64 = rng.gen_range(0.5..50.0);
        let rate: f64 = rng.gen_range(2.0e8..4.0e9);
        let off = rng.gen_range(0.0..0.2) * amp;
        let times: Vec<f64> = (0..301).map(|k| k as f64 / 300.0 * 30.0e-9).collect();
        let values: Vec<f64> = times
            .iter()
            .map(|&t| amp * (-rate * t / 2.0).exp() + off)
            .collect();
        let efit = analysis::exponential_decay_fit(&times, &values, 0.0, None).unwrap();
        let r = efit.value("gamma").unwrap();
        assert!((r - rate).abs() / rate < 1e-6, "decay rate {} vs {}", r, rate);

        let slope: f64 = rng.gen_range(-10.0..10.0);
        let intercept: f64 = rng.gen_range(-5.0..5.0);
        let x: Vec<f64> = (0..26).map(|k| k as f64 * 0.4).collect();
        let y: Vec<f64> = x.iter().map(|&v| slope * v + intercept).collect();
        let lfit = analysis::linear_fit(&x, &y, false).unwrap();
        assert!(
            (lfit.value("slope").unwrap() - slope).abs() < 1e-9
                && (lfit.value("intercept").unwrap() - intercept).abs() < 1e-9,
            "line {}x+{} not recovered",
            slope,
            intercept
        );
    }

    // normalization and delay-domain mass conservation on 100 random spectra
    let (pm, resonator) = device();
    for _ in 0..100 {
        let center = rng.gen_range(1565.0..1598.0);
        let span_fsr = rng.gen_range(20.0..60.0);
        let config = if rng.gen::<bool>() {
            ResonanceConfig::DoublyResonant
        } else {
            ResonanceConfig::SinglyResonantSignal
        };
        let fsr = resonator.fsr(center).unwrap();
        let js = biphoton::joint_amplitude(
            pm,
            resonator,
            config,
            PUMP_NM,
            center,
            span_fsr * fsr,
            biphoton::MIN_POINTS,
        )
        .unwrap();
        let mass: f64 = js.density().iter().sum::<f64>() * js.detuning_step_hz;
        assert!((mass - 1.0).abs() < 1e-9, "spectral mass {}", mass);

        let sf = BandpassFilter::gaussian(center, 2.0).unwrap();
        let idf =
            BandpassFilter::gaussian(hz_to_wavelength_nm(js.center_idler_frequency_hz), 2.0)
                .unwrap();
        let g2 = correlation::g2_from_spectrum(&js, &sf, &idf).unwrap();
        let filtered: f64 = (0..js.len())
            .map(|j| {
                let ts = sf.amplitude(hz_to_wavelength_nm(js.signal_frequency_hz(j)));
                let ti = idf.amplitude(hz_to_wavelength_nm(js.idler_frequency_hz(j)));
                js.amplitude[j].norm_sqr() * ts * ts * ti * ti
            })
            .sum::<f64>()
            * js.detuning_step_hz;
        let integral = g2.integral();
        assert!(
            (integral - filtered).abs() / filtered < 1e-6,
            "mass {} vs {}",
            integral,
            filtered
        );
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 120.0, "randomized audits took {:?}", dt);
    println!(
        "[PASS] 9 randomized audits: 300 fit instances, 100 spectra ({:?})",
        dt
    );
}
