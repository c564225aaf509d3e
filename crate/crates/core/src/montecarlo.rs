//! Synthetic detection-timestamp streams for the counting experiment.
//!
//! The source emits photon pairs at a rate proportional to pump power. Each
//! pair is split over two detection paths: the idler leaves the resonator
//! promptly while the signal is delayed by the cavity storage time, so the
//! pair's relative delay is a random draw from the normalized coincidence
//! density G(tau). Every photon then runs a gauntlet of Bernoulli losses
//! (port split, path transmittance, detector quantum efficiency), picks up
//! Gaussian timing jitter, and is quantized to 1 ps. Dark counts join as
//! independent Poisson processes per detector and non-paralyzable dead time
//! prunes the merged click record.
//!
//! Sampling is deterministic: the run is cut into 100 ms slices and slice
//! `s` draws from an independent counter-mode RNG stream (`seed_from_u64`
//! on the master seed, then `set_stream(s + 1)`). Slices are merged in index
//! order, so the stream is bit-identical whether slices run in parallel or
//! sequentially. Dead time and the thermal cell grid reset at slice
//! boundaries; at 100 ms per slice the affected fraction of events is below
//! 1e-6 for any realistic setting.
//!
//! Pair-number statistics are a config switch. `poisson` draws independent
//! pairs (accidentals averaged over many comb teeth are Poissonian),
//! `thermal_single_mode` draws Bose-Einstein pair numbers per coherence cell
//! to expose single-mode bunching, and `single_pair` suppresses any two
//! pairs closer than one coincidence neighborhood as a diagnostic source
//! with multi-pair emission disabled.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::correlation::{CorrelationFunction, StartChannel};
use crate::error::{Error, Result};
use crate::exec;

/// Slice length for the parallel RNG schedule, seconds.
pub const SLICE_S: f64 = 0.1;

/// One timing channel of the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelId {
    Signal,
    Idler,
    SignalA,
    SignalB,
    IdlerA,
    IdlerB,
}

impl ChannelId {
    pub const ALL: [ChannelId; 6] = [
        ChannelId::Signal,
        ChannelId::Idler,
        ChannelId::SignalA,
        ChannelId::SignalB,
        ChannelId::IdlerA,
        ChannelId::IdlerB,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ChannelId::Signal => "signal",
            ChannelId::Idler => "idler",
            ChannelId::SignalA => "signal_a",
            ChannelId::SignalB => "signal_b",
            ChannelId::IdlerA => "idler_a",
            ChannelId::IdlerB => "idler_b",
        }
    }

    /// Byte code used by the binary event format.
    pub fn code(self) -> u8 {
        match self {
            ChannelId::Signal => 0,
            ChannelId::Idler => 1,
            ChannelId::SignalA => 2,
            ChannelId::SignalB => 3,
            ChannelId::IdlerA => 4,
            ChannelId::IdlerB => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<ChannelId> {
        ChannelId::ALL.into_iter().find(|c| c.code() == code)
    }

    pub fn from_label(label: &str) -> Option<ChannelId> {
        ChannelId::ALL.into_iter().find(|c| c.label() == label)
    }

    fn is_signal_side(self) -> bool {
        matches!(
            self,
            ChannelId::Signal | ChannelId::SignalA | ChannelId::SignalB
        )
    }
}

/// Imperfections of one single-photon detector.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectorModel {
    /// Click probability for an arriving photon.
    pub efficiency: f64,
    /// Dark counts per second, Poisson.
    pub dark_rate_hz: f64,
    /// Gaussian timing jitter, full width at half maximum, ps.
    pub jitter_fwhm_ps: f64,
    /// Non-paralyzable dead time after each accepted click, ns.
    pub dead_time_ns: f64,
}

impl DetectorModel {
    pub fn new(
        efficiency: f64,
        dark_rate_hz: f64,
        jitter_fwhm_ps: f64,
        dead_time_ns: f64,
    ) -> Result<Self> {
        let d = DetectorModel {
            efficiency,
            dark_rate_hz,
            jitter_fwhm_ps,
            dead_time_ns,
        };
        d.validate()?;
        Ok(d)
    }

    /// Superconducting nanowire detector as used on both channels: quantum
    /// efficiency 0.6, 80 ps jitter. The dark rate is a typical figure for
    /// this detector class, not a measured one, and dead time defaults to 0.
    pub fn device_default() -> Self {
        DetectorModel {
            efficiency: 0.6,
            dark_rate_hz: 100.0,
            jitter_fwhm_ps: 80.0,
            dead_time_ns: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::Domain {
                name: "detector efficiency",
                value: self.efficiency,
                constraint: "within [0, 1]",
            });
        }
        for (name, v) in [
            ("dark rate", self.dark_rate_hz),
            ("jitter fwhm", self.jitter_fwhm_ps),
            ("dead time", self.dead_time_ns),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Domain {
                    name,
                    value: v,
                    constraint: "finite and >= 0",
                });
            }
        }
        Ok(())
    }
}

/// Detector assignment. `signal` and `idler` serve the two main paths; when a
/// channel is split for heralded g2, `auxiliary` takes the second splitter
/// output.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChannelDetectors {
    pub signal: DetectorModel,
    pub idler: DetectorModel,
    pub auxiliary: DetectorModel,
}

impl ChannelDetectors {
    pub fn device_default() -> Self {
        let d = DetectorModel::device_default();
        ChannelDetectors {
            signal: d,
            idler: d,
            auxiliary: d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.signal.validate()?;
        self.idler.validate()?;
        self.auxiliary.validate()
    }
}

/// Pair-number statistics of the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatistics {
    /// Independent pairs, Poisson numbers in any interval.
    Poisson,
    /// Bose-Einstein pair number per coherence cell; bunched accidentals.
    ThermalSingleMode,
    /// Multi-pair emission disabled: no two pairs within one coincidence
    /// neighborhood (twice the histogram window).
    SinglePair,
}

/// Which path feeds the 50/50 splitter when `splitter_present` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSide {
    Signal,
    Idler,
}

/// Source, path, and timing-electronics settings for one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub pump_power_mw: f64,
    /// Emitted pairs per second per mW of pump.
    pub intrinsic_pair_rate_hz_per_mw: f64,
    /// Pre-detector survival probability of the signal path.
    pub signal_path_transmittance: f64,
    /// Pre-detector survival probability of the idler path.
    pub idler_path_transmittance: f64,
    /// Probability that the signal photon exits through the collected end
    /// of the resonator. 1.0 means the port choice is already folded into
    /// `signal_path_transmittance`; 0.5 models equal end mirrors explicitly.
    pub signal_port_split: f64,
    /// Insert a 50/50 splitter on one path for heralded g2.
    pub splitter_present: bool,
    pub split_side: SplitSide,
    pub pair_statistics: PairStatistics,
    /// Cell length for `thermal_single_mode`, ns. On the order of one comb
    /// tooth's coherence time 1/(pi gamma_f).
    pub coherence_cell_ns: f64,
    /// Extra electronic delay on the signal detection path, ps. Shifts the
    /// coincidence peak to positive delay so one-sided TDC windows catch it.
    pub pair_delay_offset_ps: f64,
    /// Histogram bin width, ps. Timestamps themselves are quantized to 1 ps.
    pub tdc_bin_ps: f64,
    /// Coincidence window, ns.
    pub histogram_window_ns: f64,
    pub duration_s: f64,
    pub rng_seed: u64,
}

impl ExperimentConfig {
    /// Settings of the characterized source: 4e6 pairs/(s mW), overall path
    /// transmittances 0.009 (signal) and 0.013 (idler), 500 uW pump, 9 ns
    /// window with 16 ps bins.
    pub fn device_default() -> Self {
        ExperimentConfig {
            pump_power_mw: 0.5,
            intrinsic_pair_rate_hz_per_mw: 4.0e6,
            signal_path_transmittance: 0.009,
            idler_path_transmittance: 0.013,
            signal_port_split: 1.0,
            splitter_present: false,
            split_side: SplitSide::Idler,
            pair_statistics: PairStatistics::Poisson,
            coherence_cell_ns: 3.0,
            pair_delay_offset_ps: 1500.0,
            tdc_bin_ps: 16.0,
            histogram_window_ns: 9.0,
            duration_s: 1.0,
            rng_seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v, lo) in [
            ("pump power", self.pump_power_mw, 0.0),
            ("intrinsic pair rate", self.intrinsic_pair_rate_hz_per_mw, 0.0),
            ("coherence cell", self.coherence_cell_ns, f64::MIN_POSITIVE),
            ("tdc bin", self.tdc_bin_ps, f64::MIN_POSITIVE),
            ("histogram window", self.histogram_window_ns, f64::MIN_POSITIVE),
            ("duration", self.duration_s, f64::MIN_POSITIVE),
        ] {
            if !(v >= lo && v.is_finite()) {
                return Err(Error::Domain {
                    name,
                    value: v,
                    constraint: "finite and positive (rates may be 0)",
                });
            }
        }
        for (name, p) in [
            ("signal path transmittance", self.signal_path_transmittance),
            ("idler path transmittance", self.idler_path_transmittance),
            ("signal port split", self.signal_port_split),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain {
                    name,
                    value: p,
                    constraint: "within [0, 1]",
                });
            }
        }
        if !self.pair_delay_offset_ps.is_finite() || self.pair_delay_offset_ps < 0.0 {
            return Err(Error::Domain {
                name: "pair delay offset",
                value: self.pair_delay_offset_ps,
                constraint: "finite and >= 0",
            });
        }
        Ok(())
    }
}

/// Timestamp record of one run: per channel, click times in integer ps,
/// non-decreasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    channels: Vec<(ChannelId, Vec<i64>)>,
}

impl EventStream {
    /// Builds a stream from per-channel timestamp lists. Each list is sorted;
    /// duplicate channel ids are rejected.
    pub fn from_channels(mut channels: Vec<(ChannelId, Vec<i64>)>) -> Result<Self> {
        for i in 0..channels.len() {
            for j in (i + 1)..channels.len() {
                if channels[i].0 == channels[j].0 {
                    return Err(Error::Config(format!(
                        "duplicate event channel '{}'",
                        channels[i].0.label()
                    )));
                }
            }
        }
        for (_, v) in &mut channels {
            v.sort_unstable();
        }
        Ok(EventStream { channels })
    }

    pub fn channels(&self) -> &[(ChannelId, Vec<i64>)] {
        &self.channels
    }

    /// Timestamps of one channel, if the channel exists in this stream.
    pub fn timestamps(&self, id: ChannelId) -> Option<&[i64]> {
        self.channels
            .iter()
            .find(|(c, _)| *c == id)
            .map(|(_, v)| v.as_slice())
    }

    /// Click count of one channel, 0 when absent.
    pub fn count(&self, id: ChannelId) -> usize {
        self.timestamps(id).map_or(0, |v| v.len())
    }

    fn require(&self, id: ChannelId) -> Result<&[i64]> {
        match self.timestamps(id) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(Error::EmptyChannel {
                label: id.label().to_string(),
            }),
        }
    }

    /// All clicks merged and sorted by time, ties broken by channel code.
    fn merged(&self) -> Vec<(ChannelId, i64)> {
        let mut rows: Vec<(ChannelId, i64)> = self
            .channels
            .iter()
            .flat_map(|(id, v)| v.iter().map(move |&t| (*id, t)))
            .collect();
        rows.sort_unstable_by_key(|&(id, t)| (t, id.code()));
        rows
    }

    /// Writes `channel,timestamp_ps` rows sorted by timestamp.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("channel,timestamp_ps\n");
        for (id, t) in self.merged() {
            out.push_str(&format!("{},{}\n", id.label(), t));
        }
        atomic_write(path, out.as_bytes())
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut channels: Vec<(ChannelId, Vec<i64>)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if n == 0 || line.is_empty() {
                continue;
            }
            let bad = || Error::Config(format!("event csv line {}: '{}'", n + 1, line));
            let (label, ts) = line.split_once(',').ok_or_else(bad)?;
            let id = ChannelId::from_label(label).ok_or_else(bad)?;
            let t: i64 = ts.trim().parse().map_err(|_| bad())?;
            match channels.iter_mut().find(|(c, _)| *c == id) {
                Some((_, v)) => v.push(t),
                None => channels.push((id, vec![t])),
            }
        }
        EventStream::from_channels(channels)
    }

    /// Binary layout: records of `u8` channel code then `u64` ps,
    /// little-endian, sorted by timestamp.
    pub fn to_binary(&self, path: &Path) -> Result<()> {
        let rows = self.merged();
        let mut out = Vec::with_capacity(rows.len() * 9);
        for (id, t) in rows {
            out.push(id.code());
            out.extend_from_slice(&(t.max(0) as u64).to_le_bytes());
        }
        atomic_write(path, &out)
    }

    pub fn from_binary(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.len() % 9 != 0 {
            return Err(Error::Config(format!(
                "event binary length {} is not a multiple of 9",
                bytes.len()
            )));
        }
        let mut channels: Vec<(ChannelId, Vec<i64>)> = Vec::new();
        for rec in bytes.chunks_exact(9) {
            let id = ChannelId::from_code(rec[0]).ok_or_else(|| {
                Error::Config(format!("unknown event channel code {}", rec[0]))
            })?;
            let raw = u64::from_le_bytes(rec[1..9].try_into().unwrap());
            if raw > i64::MAX as u64 {
                return Err(Error::Config(format!("timestamp {} overflows", raw)));
            }
            match channels.iter_mut().find(|(c, _)| *c == id) {
                Some((_, v)) => v.push(raw as i64),
                None => channels.push((id, vec![raw as i64])),
            }
        }
        EventStream::from_channels(channels)
    }
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file =
        tempfile::NamedTempFile::new_in(path.parent().unwrap_or_else(|| Path::new(".")))?;
    file.write_all(bytes)?;
    file.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Inverse-CDF sampler over the coincidence density. Bin k covers
/// `[tau_k - step/2, tau_k + step/2)`; a uniform draw picks a bin with
/// probability proportional to its mass and interpolates linearly inside.
struct DelaySampler {
    left_edge_ps: f64,
    step_ps: f64,
    cumulative: Vec<f64>,
}

impl DelaySampler {
    fn new(cf: &CorrelationFunction) -> Result<Self> {
        let mut run = 0.0;
        let cumulative: Vec<f64> = cf
            .density
            .iter()
            .map(|&d| {
                run += d;
                run
            })
            .collect();
        if !(run > 0.0 && run.is_finite()) {
            return Err(Error::Domain {
                name: "correlation mass",
                value: run,
                constraint: "positive and finite to sample delays from",
            });
        }
        Ok(DelaySampler {
            left_edge_ps: cf.tau_ps(0) - 0.5 * cf.tau_step_ps,
            step_ps: cf.tau_step_ps,
            cumulative,
        })
    }

    fn sample(&self, u: f64) -> f64 {
        let total = *self.cumulative.last().unwrap();
        let target = u * total;
        let idx = self
            .cumulative
            .partition_point(|&c| c <= target)
            .min(self.cumulative.len() - 1);
        let prev = if idx == 0 { 0.0 } else { self.cumulative[idx - 1] };
        let mass = self.cumulative[idx] - prev;
        let frac = if mass > 0.0 {
            ((target - prev) / mass).clamp(0.0, 1.0)
        } else {
            0.5
        };
        self.left_edge_ps + (idx as f64 + frac) * self.step_ps
    }
}

struct Route {
    id: ChannelId,
    detector: DetectorModel,
    jitter: Option<Normal<f64>>,
    /// Loss applied before the detector: port split times path transmittance.
    path_survival: f64,
}

fn poisson_count(rng: &mut ChaCha12Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as usize
}

fn quantize_ps(t: f64) -> i64 {
    t.round().max(0.0) as i64
}

/// Geometric number of failures before a success, probability `p` per trial.
fn geometric(rng: &mut ChaCha12Rng, p: f64) -> u64 {
    let u: f64 = rng.gen();
    ((1.0 - u).ln() / (1.0 - p).ln()).floor() as u64
}

fn emission_times(
    rng: &mut ChaCha12Rng,
    cfg: &ExperimentConfig,
    rate_hz: f64,
    t0_s: f64,
    len_s: f64,
) -> Vec<f64> {
    match cfg.pair_statistics {
        PairStatistics::Poisson => {
            let n = poisson_count(rng, rate_hz * len_s);
            (0..n).map(|_| t0_s + rng.gen::<f64>() * len_s).collect()
        }
        PairStatistics::SinglePair => {
            let mut times: Vec<f64> = {
                let n = poisson_count(rng, rate_hz * len_s);
                (0..n).map(|_| t0_s + rng.gen::<f64>() * len_s).collect()
            };
            times.sort_unstable_by(f64::total_cmp);
            // one coincidence neighborhood is +-window around any click
            let min_sep = 2.0 * cfg.histogram_window_ns * 1e-9;
            let mut kept = Vec::with_capacity(times.len());
            let mut last = f64::NEG_INFINITY;
            for t in times {
                if t - last >= min_sep {
                    kept.push(t);
                    last = t;
                }
            }
            kept
        }
        PairStatistics::ThermalSingleMode => {
            let cell_s = cfg.coherence_cell_ns * 1e-9;
            let mean = rate_hz * cell_s;
            // Bose-Einstein P(n) = r^n (1-r) with r = mean/(1+mean); the
            // occupancy P(n >= 1) equals r, and the count conditioned on
            // occupancy is 1 plus a geometric tail with the same ratio.
            let r = mean / (1.0 + mean);
            if r <= 0.0 {
                return Vec::new();
            }
            let n_cells = (len_s / cell_s).ceil() as u64;
            let mut times = Vec::new();
            let mut cell = geometric(rng, r);
            while cell < n_cells {
                let pairs = 1 + geometric(rng, 1.0 - r);
                for _ in 0..pairs {
                    times.push(t0_s + (cell as f64 + rng.gen::<f64>()) * cell_s);
                }
                cell += 1 + geometric(rng, r);
            }
            times
        }
    }
}

fn detect_photon(
    rng: &mut ChaCha12Rng,
    routes: &[Route],
    indices: &[usize],
    base_ps: f64,
    out: &mut [Vec<i64>],
) {
    let ri = if indices.len() == 2 {
        // 50/50 splitter routes the photon, it does not absorb it
        indices[(rng.gen::<f64>() < 0.5) as usize]
    } else {
        indices[0]
    };
    let route = &routes[ri];
    if rng.gen::<f64>() < route.path_survival * route.detector.efficiency {
        let mut t = base_ps;
        if let Some(j) = route.jitter {
            t += j.sample(rng);
        }
        out[ri].push(quantize_ps(t));
    }
}

fn prune_dead_time(clicks: &mut Vec<i64>, dead_ps: i64) {
    if dead_ps <= 0 {
        return;
    }
    let mut last = i64::MIN / 2;
    clicks.retain(|&t| {
        if t - last >= dead_ps {
            last = t;
            true
        } else {
            false
        }
    });
}

/// Samples one full run of the counting experiment.
///
/// Pair emission times follow `pump_power * intrinsic_pair_rate`; each pair's
/// internal delay is drawn from the normalized density of `correlation`
/// (whose `start` field says which photon lags). The signal detection path
/// additionally carries `pair_delay_offset_ps`. When `splitter_present`, the
/// side named by `split_side` feeds two detectors through a 50/50 splitter:
/// the primary detector of that side on output A and `detectors.auxiliary`
/// on output B.
pub fn sample_experiment(
    config: &ExperimentConfig,
    correlation: &CorrelationFunction,
    detectors: &ChannelDetectors,
) -> Result<EventStream> {
    config.validate()?;
    detectors.validate()?;
    let sampler = DelaySampler::new(correlation)?;

    let jitter_of = |d: &DetectorModel| -> Option<Normal<f64>> {
        let sigma = d.jitter_fwhm_ps / (8.0 * std::f64::consts::LN_2).sqrt();
        if sigma > 0.0 {
            Some(Normal::new(0.0, sigma).expect("finite positive sigma"))
        } else {
            None
        }
    };
    let route = |id: ChannelId, d: DetectorModel| -> Route {
        let port = if id.is_signal_side() {
            config.signal_port_split
        } else {
            1.0
        };
        let path = if id.is_signal_side() {
            config.signal_path_transmittance
        } else {
            config.idler_path_transmittance
        };
        Route {
            id,
            detector: d,
            jitter: jitter_of(&d),
            path_survival: port * path,
        }
    };

    // route 0.. hold the signal photon's candidates, then the idler's
    let (routes, n_signal_routes): (Vec<Route>, usize) = if !config.splitter_present {
        (
            vec![
                route(ChannelId::Signal, detectors.signal),
                route(ChannelId::Idler, detectors.idler),
            ],
            1,
        )
    } else {
        match config.split_side {
            SplitSide::Signal => (
                vec![
                    route(ChannelId::SignalA, detectors.signal),
                    route(ChannelId::SignalB, detectors.auxiliary),
                    route(ChannelId::Idler, detectors.idler),
                ],
                2,
            ),
            SplitSide::Idler => (
                vec![
                    route(ChannelId::Signal, detectors.signal),
                    route(ChannelId::IdlerA, detectors.idler),
                    route(ChannelId::IdlerB, detectors.auxiliary),
                ],
                1,
            ),
        }
    };
    let signal_indices: Vec<usize> = (0..n_signal_routes).collect();
    let idler_indices: Vec<usize> = (n_signal_routes..routes.len()).collect();

    let rate_hz = config.pump_power_mw * config.intrinsic_pair_rate_hz_per_mw;
    let start = correlation.start;
    let n_slices = ((config.duration_s / SLICE_S).ceil() as usize).max(1);

    let per_slice: Vec<Vec<Vec<i64>>> = exec::map_indexed(n_slices, |s| {
        let t0 = s as f64 * SLICE_S;
        let t1 = (t0 + SLICE_S).min(config.duration_s);
        let len = t1 - t0;
        let mut rng = ChaCha12Rng::seed_from_u64(config.rng_seed);
        rng.set_stream(s as u64 + 1);
        let mut clicks: Vec<Vec<i64>> = routes.iter().map(|_| Vec::new()).collect();

        for t in emission_times(&mut rng, config, rate_hz, t0, len) {
            let delay_ps = sampler.sample(rng.gen());
            let base_ps = t * 1e12;
            let (signal_lag, idler_lag) = match start {
                StartChannel::Idler => (delay_ps, 0.0),
                StartChannel::Signal => (0.0, delay_ps),
            };
            detect_photon(
                &mut rng,
                &routes,
                &signal_indices,
                base_ps + signal_lag + config.pair_delay_offset_ps,
                &mut clicks,
            );
            detect_photon(&mut rng, &routes, &idler_indices, base_ps + idler_lag, &mut clicks);
        }

        for (r, out) in routes.iter().zip(clicks.iter_mut()) {
            let n = poisson_count(&mut rng, r.detector.dark_rate_hz * len);
            for _ in 0..n {
                out.push(quantize_ps((t0 + rng.gen::<f64>() * len) * 1e12));
            }
            out.sort_unstable();
            prune_dead_time(out, (r.detector.dead_time_ns * 1e3).round() as i64);
        }
        clicks
    });

    let channels = routes
        .iter()
        .enumerate()
        .map(|(ri, r)| {
            let mut all: Vec<i64> = per_slice.iter().flat_map(|s| s[ri].iter().copied()).collect();
            // jitter can carry a click across a slice edge
            all.sort_unstable();
            (r.id, all)
        })
        .collect();
    Ok(EventStream { channels })
}

/// Start-stop delay histogram with multi-stop: every stop inside the window
/// after each start is binned.
#[derive(Debug, Clone, Serialize)]
pub struct TdcHistogram {
    pub start: ChannelId,
    pub stop: ChannelId,
    pub bin_ps: f64,
    pub window_ns: f64,
    pub counts: Vec<u64>,
}

impl TdcHistogram {
    /// Center delay of bin k, ps.
    pub fn delay_ps(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.bin_ps
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin with the most counts, None when the histogram is empty.
    pub fn argmax_bin(&self) -> Option<usize> {
        let (k, &c) = self
            .counts
            .iter()
            .enumerate()
            .max_by_key(|&(_, &c)| c)?;
        if c == 0 { None } else { Some(k) }
    }

    /// Export with columns `delay_ps,counts` (bin centers).
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("delay_ps,counts\n");
        for (k, &c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.delay_ps(k), c));
        }
        atomic_write(path, out.as_bytes())
    }
}

/// Histograms delays `t_stop - t_start` in `[0, window)`. Channels that are
/// missing or empty yield an all-zero histogram.
pub fn tdc_histogram(
    stream: &EventStream,
    start: ChannelId,
    stop: ChannelId,
    bin_ps: f64,
    window_ns: f64,
) -> Result<TdcHistogram> {
    if !(bin_ps > 0.0 && bin_ps.is_finite()) {
        return Err(Error::Domain {
            name: "tdc bin",
            value: bin_ps,
            constraint: "positive and finite",
        });
    }
    let window_ps = window_ns * 1e3;
    if !(window_ps >= bin_ps && window_ps.is_finite()) {
        return Err(Error::Domain {
            name: "histogram window",
            value: window_ns,
            constraint: "finite and at least one bin wide",
        });
    }
    let bins = (window_ps / bin_ps).floor() as usize;
    let mut counts = vec![0u64; bins];
    let starts = stream.timestamps(start).unwrap_or(&[]);
    let stops = stream.timestamps(stop).unwrap_or(&[]);
    let mut lo = 0usize;
    for &ts in starts {
        while lo < stops.len() && stops[lo] < ts {
            lo += 1;
        }
        for &tp in &stops[lo..] {
            let delay = (tp - ts) as f64;
            if delay >= window_ps {
                break;
            }
            let k = (delay / bin_ps) as usize;
            if k < bins {
                counts[k] += 1;
            }
        }
    }
    Ok(TdcHistogram {
        start,
        stop,
        bin_ps,
        window_ns,
        counts,
    })
}

fn any_in(sorted: &[i64], lo: i64, hi: i64) -> bool {
    let i = sorted.partition_point(|&t| t < lo);
    i < sorted.len() && sorted[i] < hi
}

fn count_in(sorted: &[i64], lo: i64, hi: i64) -> u64 {
    let a = sorted.partition_point(|&t| t < lo);
    let b = sorted.partition_point(|&t| t < hi);
    (b - a) as u64
}

/// Heralded second-order coherence estimate with its counting error.
#[derive(Debug, Clone, Serialize)]
pub struct G2Estimate {
    pub value: f64,
    pub standard_error: f64,
    pub herald_count: u64,
    pub herald_a: u64,
    pub herald_b: u64,
    pub triples: u64,
}

/// g2 = N_H N_HAB / (N_HA N_HB) over a window of `+-window_ns` around each
/// herald. The window is symmetric because the herald and the split arms
/// carry an uncompensated relative delay; a two-sided window needs no delay
/// calibration and enters all four counters alike. Errors are propagated as
/// independent Poisson counts; with zero triples the error falls back to the
/// one-triple scale so "consistent with zero" stays testable.
pub fn heralded_g2(
    stream: &EventStream,
    herald: ChannelId,
    arm_a: ChannelId,
    arm_b: ChannelId,
    window_ns: f64,
) -> Result<G2Estimate> {
    if !(window_ns > 0.0 && window_ns.is_finite()) {
        return Err(Error::Domain {
            name: "coincidence window",
            value: window_ns,
            constraint: "positive and finite",
        });
    }
    let heralds = stream.require(herald)?;
    let a = stream.require(arm_a)?;
    let b = stream.require(arm_b)?;
    let w = (window_ns * 1e3).round() as i64;
    let (mut n_ha, mut n_hb, mut n_hab) = (0u64, 0u64, 0u64);
    for &t in heralds {
        let in_a = any_in(a, t - w, t + w);
        let in_b = any_in(b, t - w, t + w);
        n_ha += in_a as u64;
        n_hb += in_b as u64;
        n_hab += (in_a && in_b) as u64;
    }
    if n_ha == 0 || n_hb == 0 {
        return Err(Error::UndefinedEstimate {
            reason: format!(
                "pairwise coincidences {} (herald-A) and {} (herald-B); need both positive",
                n_ha, n_hb
            ),
        });
    }
    let n_h = heralds.len() as u64;
    let value = (n_h as f64 * n_hab as f64) / (n_ha as f64 * n_hb as f64);
    let floor = n_hab.max(1) as f64;
    let relative = 1.0 / floor + 1.0 / n_ha as f64 + 1.0 / n_hb as f64 + 1.0 / n_h as f64;
    let standard_error = (n_h as f64 * floor) / (n_ha as f64 * n_hb as f64) * relative.sqrt();
    Ok(G2Estimate {
        value,
        standard_error,
        herald_count: n_h,
        herald_a: n_ha,
        herald_b: n_hb,
        triples: n_hab,
    })
}

/// Background-corrected transmission estimate of the partner channel.
#[derive(Debug, Clone, Serialize)]
pub struct EfficiencyEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub coincidences: u64,
    pub accidentals: u64,
    pub singles: u64,
}

/// Klyshko-style efficiency estimator: partner counts within `+-window_ns`
/// of each `singles_channel` click, minus the counts in a sideband window of
/// equal width displaced by four window lengths, per click. Counting every
/// partner event rather than flagging windows keeps the subtraction unbiased
/// when the accidental occupancy per window is not small.
pub fn coincidence_efficiency(
    stream: &EventStream,
    singles_channel: ChannelId,
    partner_channel: ChannelId,
    window_ns: f64,
) -> Result<EfficiencyEstimate> {
    if !(window_ns > 0.0 && window_ns.is_finite()) {
        return Err(Error::Domain {
            name: "coincidence window",
            value: window_ns,
            constraint: "positive and finite",
        });
    }
    let singles = stream.require(singles_channel)?;
    let partner = stream.require(partner_channel)?;
    let w = (window_ns * 1e3).round() as i64;
    let (mut near, mut side) = (0u64, 0u64);
    for &t in singles {
        near += count_in(partner, t - w, t + w);
        side += count_in(partner, t + 3 * w, t + 5 * w);
    }
    let n = singles.len() as f64;
    Ok(EfficiencyEstimate {
        value: (near as f64 - side as f64) / n,
        standard_error: ((near + side) as f64).sqrt() / n,
        coincidences: near,
        accidentals: side,
        singles: singles.len() as u64,
    })
}

/// Signal singles over idler singles, summed over splitter arms.
pub fn singles_ratio(stream: &EventStream) -> Result<f64> {
    let side = |signal: bool| -> usize {
        ChannelId::ALL
            .into_iter()
            .filter(|c| c.is_signal_side() == signal)
            .map(|c| stream.count(c))
            .sum()
    };
    let (s, i) = (side(true), side(false));
    if s == 0 || i == 0 {
        return Err(Error::UndefinedEstimate {
            reason: format!("signal singles {}, idler singles {}; need both positive", s, i),
        });
    }
    Ok(s as f64 / i as f64)
}
