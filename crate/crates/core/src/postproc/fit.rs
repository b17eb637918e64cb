use std::f64::consts::PI;

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};
use crate::trace::PopulationTrace;

/// `p1(t) ≈ baseline + amplitude·e^{−αt}·cos(ωt + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub alpha: f64,
    pub omega: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub baseline: f64,
    /// Root-mean-square residual of the fit.
    pub rms: f64,
    /// LM iterations spent on the winning start.
    pub iterations: usize,
}

impl DecayFit {
    pub fn eval(&self, t: f64) -> f64 {
        model(&self.params(), t)
    }

    fn params(&self) -> Params {
        Params::from([
            self.baseline,
            self.amplitude,
            self.alpha,
            self.omega,
            self.phase,
        ])
    }
}

pub const MIN_FIT_POINTS: usize = 8;

type Params = SVector<f64, 5>;

fn model(p: &Params, t: f64) -> f64 {
    p[0] + p[1] * (-p[2] * t).exp() * (p[3] * t + p[4]).cos()
}

fn sse(p: &Params, t: &[f64], y: &[f64]) -> f64 {
    t.iter()
        .zip(y)
        .map(|(&t, &y)| (model(p, t) - y).powi(2))
        .sum()
}

fn project(mut p: Params) -> Params {
    p[2] = p[2].max(0.0);
    p[3] = p[3].max(0.0);
    p
}

const MAX_ITER: usize = 500;

/// Levenberg–Marquardt with the rate and frequency held nonnegative.
fn levenberg_marquardt(start: Params, t: &[f64], y: &[f64]) -> (Params, f64, usize) {
    let mut p = project(start);
    let mut cost = sse(&p, t, y);
    let mut mu = 1e-3;
    let mut iters = 0;
    while iters < MAX_ITER {
        iters += 1;
        let mut jtj = SMatrix::<f64, 5, 5>::zeros();
        let mut jtr = Params::zeros();
        for (&t, &y) in t.iter().zip(y) {
            let e = (-p[2] * t).exp();
            let arg = p[3] * t + p[4];
            let (s, c) = arg.sin_cos();
            let r = p[0] + p[1] * e * c - y;
            let g = Params::from([
                1.0,
                e * c,
                -t * p[1] * e * c,
                -t * p[1] * e * s,
                -p[1] * e * s,
            ]);
            jtj += g * g.transpose();
            jtr += g * r;
        }
        let mut improved = false;
        while mu < 1e12 {
            let mut a = jtj;
            for i in 0..5 {
                a[(i, i)] += mu * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|ch| ch.solve(&-jtr)) else {
                mu *= 10.0;
                continue;
            };
            let trial = project(p + step);
            let trial_cost = sse(&trial, t, y);
            if trial_cost.is_finite() && trial_cost < cost {
                let rel = (cost - trial_cost) / cost.max(1e-300);
                p = trial;
                cost = trial_cost;
                mu = (mu * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-13 || step.norm() < 1e-13 * (1.0 + p.norm()) {
                    return (p, cost, iters);
                }
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (p, cost, iters)
}

/// Peak of `|Σ (y − ȳ) e^{−iωt}|²` over `ω ∈ (0, π/dt_min]`.
fn spectral_peaks(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let dt_min = t
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let span = t[t.len() - 1] - t[0];
    let w_max = PI / dt_min;
    // Oversample by 8 relative to the natural resolution 2π/span.
    let n = ((w_max * span / (2.0 * PI)) * 8.0)
        .ceil()
        .clamp(64.0, 20_000.0) as usize;
    let power: Vec<(f64, f64)> = (1..=n)
        .map(|k| {
            let w = w_max * k as f64 / n as f64;
            let (mut re, mut im) = (0.0, 0.0);
            for (&t, &y) in t.iter().zip(y) {
                let (s, c) = (w * t).sin_cos();
                re += (y - mean) * c;
                im -= (y - mean) * s;
            }
            (w, re * re + im * im)
        })
        .collect();
    let mut peaks: Vec<(f64, f64)> = (1..power.len() - 1)
        .filter(|&i| power[i].1 >= power[i - 1].1 && power[i].1 >= power[i + 1].1)
        .map(|i| power[i])
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    peaks.iter().take(2).map(|p| p.0).collect()
}

/// Decay rate from a line fit to the log of the local maxima of `|y − b|`.
fn envelope_rate(t: &[f64], y: &[f64], baseline: f64) -> Option<f64> {
    let dev: Vec<f64> = y.iter().map(|v| (v - baseline).abs()).collect();
    let pts: Vec<(f64, f64)> = (0..dev.len())
        .filter(|&i| {
            let left = i == 0 || dev[i] >= dev[i - 1];
            let right = i + 1 == dev.len() || dev[i] >= dev[i + 1];
            left && right && dev[i] > 1e-12
        })
        .map(|i| (t[i], dev[i].ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    (sxx > 0.0).then(|| (-sxy / sxx).max(0.0))
}

/// Baseline, amplitude and phase by linear least squares at fixed `(α, ω)`.
fn linear_start(t: &[f64], y: &[f64], alpha: f64, omega: f64) -> Option<Params> {
    let mut ata = Matrix3::<f64>::zeros();
    let mut aty = Vector3::<f64>::zeros();
    for (&t, &y) in t.iter().zip(y) {
        let e = (-alpha * t).exp();
        let (s, c) = (omega * t).sin_cos();
        let row = Vector3::new(1.0, e * c, e * s);
        ata += row * row.transpose();
        aty += row * y;
    }
    let x = ata.try_inverse()? * aty;
    let amplitude = x[1].hypot(x[2]);
    let phase = (-x[2]).atan2(x[1]);
    Some(Params::from([x[0], amplitude, alpha, omega, phase]))
}

/// Fits `p1` of `trace` to a damped cosine over a constant baseline.
pub fn fit_damped_oscillation(trace: &PopulationTrace) -> Result<DecayFit> {
    let (t, y) = (&trace.times[..], &trace.p1[..]);
    if t.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidArgument(format!(
            "need >= {MIN_FIT_POINTS} points to fit, got {}",
            t.len()
        )));
    }
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if hi - lo < 1e-9 {
        return Err(Error::FitFailure(
            "trace is constant; decay rate and frequency are unidentifiable".into(),
        ));
    }

    let tail = (t.len() / 5).max(1);
    let baseline0 = y[t.len() - tail..].iter().sum::<f64>() / tail as f64;
    let span = t[t.len() - 1] - t[0];
    let alpha0 = envelope_rate(t, y, baseline0).unwrap_or(1.0 / span.max(1e-12));

    let mut omegas = spectral_peaks(t, y);
    omegas.push(0.0);
    let mut best: Option<(Params, f64, usize)> = None;
    for &omega in &omegas {
        for alpha in [alpha0, 0.3 * alpha0, 3.0 * alpha0 + 0.1] {
            let Some(start) = linear_start(t, y, alpha, omega) else {
                continue;
            };
            let (p, cost, iters) = levenberg_marquardt(start, t, y);
            if cost.is_finite() && best.as_ref().is_none_or(|b| cost < b.1) {
                best = Some((p, cost, iters));
            }
        }
    }
    let (mut p, cost, iterations) =
        best.ok_or_else(|| Error::FitFailure("no starting point converged".into()))?;
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailure(format!("non-finite parameters {p:?}")));
    }
    if p[1] < 0.0 {
        p[1] = -p[1];
        p[4] += PI;
    }
    p[4] = (p[4] + PI).rem_euclid(2.0 * PI) - PI;
    Ok(DecayFit {
        alpha: p[2],
        omega: p[3],
        amplitude: p[1],
        phase: p[4],
        baseline: p[0].clamp(0.0, 1.0),
        rms: (cost / t.len() as f64).sqrt(),
        iterations,
    })
}
