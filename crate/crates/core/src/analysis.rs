//! Parameter extraction from scans, histograms and sweeps: damped least-squares
//! fitting of Lorentzian resonances and exponential decay envelopes, closed-form
//! linear regression, topographic peak picking, and mode-spacing estimation.
//!
//! The fitter is a Levenberg-Marquardt loop with analytic Jacobians and
//! Marquardt column scaling, so parameters of wildly different magnitude
//! (amplitudes near 1e15 next to offsets near 1) solve without preconditioning
//! by the caller. Accepted steps never increase the residual. Convergence is
//! declared on relative parameter change below 1e-8 or relative residual change
//! below 1e-10, capped at 200 iterations.

use serde::Serialize;

use crate::numeric::median;
use crate::{Error, Result};

/// Classical transmission scan: strictly increasing frequency offsets with one
/// power sample each.
#[derive(Clone, Debug)]
pub struct ScanTrace {
    pub offsets_hz: Vec<f64>,
    pub power: Vec<f64>,
}

impl ScanTrace {
    pub fn new(offsets_hz: Vec<f64>, power: Vec<f64>) -> Result<Self> {
        if offsets_hz.len() != power.len() {
            return Err(Error::Config(format!(
                "scan trace length mismatch: {} offsets, {} powers",
                offsets_hz.len(),
                power.len()
            )));
        }
        if offsets_hz.len() < 5 {
            return Err(Error::Domain {
                name: "scan sample count",
                value: offsets_hz.len() as f64,
                constraint: "at least 5",
            });
        }
        if !offsets_hz.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Config(
                "scan offsets must be strictly increasing".into(),
            ));
        }
        Ok(Self { offsets_hz, power })
    }
}

/// One named fitted parameter with its 1-sigma uncertainty.
#[derive(Clone, Debug, Serialize)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    pub sigma: f64,
}

/// Outcome of a least-squares fit. `residual_norm` is the root of the summed
/// squared residuals at the solution.
#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub parameters: Vec<FitParameter>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.value)
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.sigma)
    }
}

/// Solves (H + lambda diag(H)) delta = g in Marquardt-scaled form: columns are
/// normalized by sqrt(H_jj) so the damped system has a unit diagonal and
/// Gaussian elimination stays well conditioned. Returns None on a singular
/// pivot, which the caller treats as a rejected step.
fn solve_damped<const P: usize>(
    h: &[[f64; P]; P],
    g: &[f64; P],
    lambda: f64,
) -> Option<[f64; P]> {
    let mut scale = [1.0_f64; P];
    for j in 0..P {
        if h[j][j] > 0.0 {
            scale[j] = h[j][j].sqrt();
        }
    }
    let mut a = [[0.0_f64; P]; P];
    let mut b = [0.0_f64; P];
    for j in 0..P {
        for k in 0..P {
            a[j][k] = h[j][k] / (scale[j] * scale[k]);
        }
        a[j][j] += lambda;
        b[j] = g[j] / scale[j];
    }
    // Gaussian elimination with partial pivoting on the small scaled system
    for col in 0..P {
        let mut pivot = col;
        for row in col + 1..P {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..P {
            let m = a[row][col] / a[col][col];
            for k in col..P {
                a[row][k] -= m * a[col][k];
            }
            b[row] -= m * b[col];
        }
    }
    let mut x = [0.0_f64; P];
    for col in (0..P).rev() {
        let mut s = b[col];
        for k in col + 1..P {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    for j in 0..P {
        x[j] /= scale[j];
    }
    Some(x)
}

/// Inverse of H via the same column scaling; used for the covariance estimate.
fn invert_scaled<const P: usize>(h: &[[f64; P]; P]) -> Option<[[f64; P]; P]> {
    let mut inv = [[0.0_f64; P]; P];
    for col in 0..P {
        let mut e = [0.0_f64; P];
        e[col] = 1.0;
        let x = solve_damped(h, &e, 0.0)?;
        for row in 0..P {
            inv[row][col] = x[row];
        }
    }
    Some(inv)
}

struct LmOutcome<const P: usize> {
    params: [f64; P],
    sigmas: [f64; P],
    ssr: f64,
    iterations: usize,
}

/// Core damped least-squares loop. `model` returns the value and the gradient
/// with respect to the parameters at one abscissa.
fn lm_fit<const P: usize>(
    t: &[f64],
    y: &[f64],
    start: [f64; P],
    model: &dyn Fn(f64, &[f64; P]) -> (f64, [f64; P]),
) -> Result<LmOutcome<P>> {
    assert_eq!(t.len(), y.len());
    let n = t.len();

    let linearize = |p: &[f64; P]| {
        let mut ssr = 0.0;
        let mut h = [[0.0_f64; P]; P];
        let mut g = [0.0_f64; P];
        for i in 0..n {
            let (m, jac) = model(t[i], p);
            let r = y[i] - m;
            ssr += r * r;
            for j in 0..P {
                g[j] += r * jac[j];
                for k in j..P {
                    h[j][k] += jac[j] * jac[k];
                }
            }
        }
        for j in 0..P {
            for k in 0..j {
                h[j][k] = h[k][j];
            }
        }
        (ssr, h, g)
    };

    let ssr_only = |p: &[f64; P]| {
        let mut ssr = 0.0;
        for i in 0..n {
            ssr += (y[i] - model(t[i], p).0).powi(2);
        }
        ssr
    };

    let mut params = start;
    let (mut ssr, mut h, mut g) = linearize(&params);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut accepted = 0;
    let mut converged = false;

    while iterations < 200 {
        iterations += 1;
        let delta = match solve_damped(&h, &g, lambda) {
            Some(d) => d,
            None => {
                lambda *= 10.0;
                if lambda > 1e14 {
                    break;
                }
                continue;
            }
        };
        let mut trial = params;
        for j in 0..P {
            trial[j] += delta[j];
        }
        let ssr_trial = ssr_only(&trial);
        if ssr_trial.is_finite() && ssr_trial <= ssr {
            let small_step = (0..P).all(|j| delta[j].abs() <= 1e-8 * (params[j].abs() + 1e-12));
            let small_residual = ssr - ssr_trial <= 1e-10 * ssr;
            params = trial;
            let relin = linearize(&params);
            ssr = relin.0;
            h = relin.1;
            g = relin.2;
            lambda = (lambda / 3.0).max(1e-12);
            accepted += 1;
            if ssr == 0.0 || small_step || (small_residual && accepted >= 3) {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e14 {
                break;
            }
        }
    }

    if !converged {
        return Err(Error::FitDiverged {
            iterations,
            residual_norm: ssr.sqrt(),
        });
    }

    let mut sigmas = [0.0_f64; P];
    if n > P {
        if let Some(cov) = invert_scaled(&h) {
            let s2 = ssr / (n - P) as f64;
            for j in 0..P {
                let v = cov[j][j] * s2;
                sigmas[j] = if v > 0.0 { v.sqrt() } else { 0.0 };
            }
        }
    }

    Ok(LmOutcome {
        params,
        sigmas,
        ssr,
        iterations,
    })
}

fn named_result<const P: usize>(names: [&str; P], out: LmOutcome<P>) -> FitResult {
    FitResult {
        parameters: names
            .iter()
            .zip(out.params.iter().zip(out.sigmas.iter()))
            .map(|(name, (&value, &sigma))| FitParameter {
                name: (*name).to_string(),
                value,
                sigma,
            })
            .collect(),
        residual_norm: out.ssr.sqrt(),
        converged: true,
        iterations: out.iterations,
    }
}

/// Fits A/((f-f0)^2 + (gamma/2)^2) + d to a single-peak trace. Parameter names
/// in the result: `a`, `f0`, `gamma`, `d`; `gamma` is the FWHM in the units of
/// the trace offsets. Without an explicit starting point the guess is f0 at the
/// maximum, d at the median, gamma from the width at half prominence and A from
/// the peak height.
pub fn lorentzian_fit(trace: &ScanTrace, initial: Option<[f64; 4]>) -> Result<FitResult> {
    let start = match initial {
        Some(s) => s,
        None => lorentzian_guess(trace)?,
    };
    let model = |f: f64, p: &[f64; 4]| {
        let (a, f0, gamma, d) = (p[0], p[1], p[2], p[3]);
        let half = gamma / 2.0;
        let den = (f - f0).powi(2) + half * half;
        let value = a / den + d;
        let dd = den * den;
        (
            value,
            [
                1.0 / den,
                a * 2.0 * (f - f0) / dd,
                -a * half / dd,
                1.0,
            ],
        )
    };
    let out = lm_fit(&trace.offsets_hz, &trace.power, start, &model)?;
    Ok(named_result(["a", "f0", "gamma", "d"], out))
}

fn lorentzian_guess(trace: &ScanTrace) -> Result<[f64; 4]> {
    let n = trace.power.len();
    let (imax, &peak) = trace
        .power
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite power"))
        .expect("nonempty trace");
    let d = median(&trace.power);
    if !(peak > d) {
        return Err(Error::NoPeak);
    }
    let half_level = d + (peak - d) / 2.0;
    let mut left = imax;
    while left > 0 && trace.power[left - 1] > half_level {
        left -= 1;
    }
    let mut right = imax;
    while right + 1 < n && trace.power[right + 1] > half_level {
        right += 1;
    }
    let gamma = (trace.offsets_hz[right] - trace.offsets_hz[left])
        .max(trace.offsets_hz[1] - trace.offsets_hz[0]);
    let a = (peak - d) * (gamma / 2.0).powi(2);
    Ok([a, trace.offsets_hz[imax], gamma, d])
}

/// Fits A exp(-gamma (t - tau0) / 2) + d with tau0 held fixed. Parameter names:
/// `amplitude`, `gamma`, `offset`. With times in seconds, gamma comes out in
/// rad/s, so gamma / (2 pi) is the decay rate in ordinary frequency units.
pub fn exponential_decay_fit(
    times_s: &[f64],
    values: &[f64],
    tau0_s: f64,
    initial: Option<[f64; 3]>,
) -> Result<FitResult> {
    if times_s.len() != values.len() || times_s.len() < 4 {
        return Err(Error::Domain {
            name: "envelope sample count",
            value: times_s.len() as f64,
            constraint: "matching lengths, at least 4",
        });
    }
    let start = match initial {
        Some(s) => s,
        None => {
            let d = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let peak = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let a = (peak - d).max(1e-300);
            let t_first = times_s[0];
            let t_last = times_s[times_s.len() - 1];
            let v_first = (values[0] - d).max(a * 1e-6);
            let v_last = (values[values.len() - 1] - d).max(a * 1e-6);
            let span = (t_last - t_first).max(1e-300);
            let mut gamma = 2.0 * (v_first / v_last).ln() / span;
            if !gamma.is_finite() || gamma <= 0.0 {
                gamma = 2.0 / span;
            }
            [a, gamma, d]
        }
    };
    let model = move |t: f64, p: &[f64; 3]| {
        let (a, gamma, d) = (p[0], p[1], p[2]);
        let e = (-gamma * (t - tau0_s) / 2.0).exp();
        (a * e + d, [e, -a * (t - tau0_s) / 2.0 * e, 1.0])
    };
    let out = lm_fit(times_s, values, start, &model)?;
    Ok(named_result(["amplitude", "gamma", "offset"], out))
}

/// Least-squares line, closed form. Parameter names: `slope` and, unless the
/// fit is constrained through the origin, `intercept`.
pub fn linear_fit(x: &[f64], y: &[f64], through_origin: bool) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(Error::Config(format!(
            "linear fit length mismatch: {} x, {} y",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    let needed = if through_origin { 1 } else { 2 };
    if n < needed {
        return Err(Error::Domain {
            name: "point count",
            value: n as f64,
            constraint: "at least 2 (1 through origin)",
        });
    }

    if through_origin {
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        if sxx == 0.0 {
            return Err(Error::Domain {
                name: "abscissa spread",
                value: 0.0,
                constraint: "some nonzero x",
            });
        }
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let slope = sxy / sxx;
        let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a).powi(2)).sum();
        let sigma = if n > 1 {
            (ssr / (n - 1) as f64 / sxx).sqrt()
        } else {
            0.0
        };
        return Ok(FitResult {
            parameters: vec![FitParameter {
                name: "slope".into(),
                value: slope,
                sigma,
            }],
            residual_norm: ssr.sqrt(),
            converged: true,
            iterations: 0,
        });
    }

    let xm = x.iter().sum::<f64>() / n as f64;
    let ym = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain {
            name: "abscissa spread",
            value: xm,
            constraint: "at least two distinct x",
        });
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum();
    let s2 = if n > 2 { ssr / (n - 2) as f64 } else { 0.0 };
    Ok(FitResult {
        parameters: vec![
            FitParameter {
                name: "slope".into(),
                value: slope,
                sigma: (s2 / sxx).sqrt(),
            },
            FitParameter {
                name: "intercept".into(),
                value: intercept,
                sigma: (s2 * (1.0 / n as f64 + xm * xm / sxx)).sqrt(),
            },
        ],
        residual_norm: ssr.sqrt(),
        converged: true,
        iterations: 0,
    })
}

/// Coefficient of determination of `predict` against the data.
pub fn r_squared(x: &[f64], y: &[f64], predict: impl Fn(f64) -> f64) -> f64 {
    let ym = y.iter().sum::<f64>() / y.len() as f64;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - predict(*a)).powi(2)).sum();
    let tss: f64 = y.iter().map(|b| (b - ym).powi(2)).sum();
    if tss == 0.0 {
        if ssr == 0.0 { 1.0 } else { 0.0 }
    } else {
        1.0 - ssr / tss
    }
}

/// Mean and population standard deviation of adjacent resonance spacings.
pub fn fsr_estimate(resonances_hz: &[f64]) -> Result<(f64, f64)> {
    if resonances_hz.len() < 2 {
        return Err(Error::UndefinedEstimate {
            reason: format!(
                "free-spectral-range estimate needs at least two resonances, got {}",
                resonances_hz.len()
            ),
        });
    }
    let mut sorted = resonances_hz.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite frequencies"));
    let gaps: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / gaps.len() as f64;
    Ok((mean, var.sqrt()))
}

/// Indices of local maxima kept greedily by descending topographic prominence,
/// with a minimum index separation enforced and a prominence threshold of
/// `prominence_frac` times the full value range of the series (so the picker is
/// invariant under positive affine rescaling). Ties in prominence keep the
/// earlier peak. Result is ascending.
pub fn peak_pick(values: &[f64], prominence_frac: f64, min_separation: usize) -> Vec<usize> {
    let n = values.len();
    if n < 3 {
        return Vec::new();
    }
    let vmax = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let vmin = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(vmax > vmin) {
        return Vec::new();
    }
    let threshold = prominence_frac * (vmax - vmin);

    // local maxima; a flat plateau counts once at its first sample
    let mut candidates = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if values[i] > values[i - 1] {
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[i] {
                candidates.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }

    // topographic prominence: drop to the highest saddle separating the peak
    // from higher ground on either side
    let mut ranked: Vec<(usize, f64)> = candidates
        .into_iter()
        .map(|p| {
            let vp = values[p];
            let mut left_ref = vp;
            for k in (0..p).rev() {
                left_ref = left_ref.min(values[k]);
                if values[k] > vp {
                    break;
                }
            }
            let mut right_ref = vp;
            for k in p + 1..n {
                right_ref = right_ref.min(values[k]);
                if values[k] > vp {
                    break;
                }
            }
            (p, vp - left_ref.max(right_ref))
        })
        .filter(|&(_, prom)| prom >= threshold)
        .collect();

    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite prominence")
            .then(a.0.cmp(&b.0))
    });

    let mut kept: Vec<usize> = Vec::new();
    for (p, _) in ranked {
        if kept.iter().all(|&k| k.abs_diff(p) >= min_separation.max(1)) {
            kept.push(p);
        }
    }
    kept.sort_unstable();
    kept
}
