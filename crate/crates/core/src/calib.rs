//! Matching simulated population traces to HEOM parameters, and the linear
//! relation between dissipation density and fitted reorganization energy.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::heom::{heom_population_trace, BathParams, HeomConfig};
use crate::qdyn::SystemParams;
use crate::trace::PopulationTrace;

/// `√(Σ (p1_a − p1_b)² / n)` over identical grids.
pub fn trace_distance_l2(a: &PopulationTrace, b: &PopulationTrace) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("traces are empty".into()));
    }
    for (i, (x, y)) in a.times.iter().zip(&b.times).enumerate() {
        if (x - y).abs() > 1e-9 * x.abs().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "time grids differ at index {i}: {x} vs {y}"
            )));
        }
    }
    let sum: f64 = a.p1.iter().zip(&b.p1).map(|(x, y)| (x - y).powi(2)).sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// Fixed HEOM quantities during a fit: site energy, bath cutoff and
/// temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedHeom {
    pub epsilon: f64,
    pub gamma: f64,
    pub kt: f64,
}

impl Default for FixedHeom {
    fn default() -> Self {
        Self {
            epsilon: 1.5,
            gamma: 11.0,
            kt: 1.0,
        }
    }
}

/// Coarse grid over `(λ_H, J_H)` followed by simplex refinement inside the
/// same box.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrid {
    pub lambda: (f64, f64),
    pub j: (f64, f64),
    pub n_lambda: usize,
    pub n_j: usize,
    /// Simplex iterations after the grid stage; 0 disables refinement.
    pub refine_iterations: usize,
    pub heom: HeomConfig,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            lambda: (0.05, 2.0),
            j: (0.5, 1.5),
            n_lambda: 8,
            n_j: 8,
            refine_iterations: 40,
            heom: HeomConfig {
                depth: 4,
                matsubara: 3,
                ..HeomConfig::default()
            },
        }
    }
}

impl SearchGrid {
    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("lambda", self.lambda), ("j", self.j)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidArgument(format!(
                    "{name} range [{lo}, {hi}] is invalid"
                )));
            }
        }
        if self.lambda.0 < 0.0 {
            return Err(Error::InvalidArgument(
                "lambda range must be nonnegative".into(),
            ));
        }
        if self.n_lambda == 0 || self.n_j == 0 {
            return Err(Error::InvalidArgument("search grid is empty".into()));
        }
        self.heom.validate()
    }

    fn axis(range: (f64, f64), n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![0.5 * (range.0 + range.1)];
        }
        (0..n)
            .map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64)
            .collect()
    }

    /// Grid points in row-major `(λ, J)` order.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let js = Self::axis(self.j, self.n_j);
        Self::axis(self.lambda, self.n_lambda)
            .into_iter()
            .flat_map(|l| js.iter().map(move |&j| (l, j)))
            .collect()
    }

    fn clamp(&self, p: [f64; 2]) -> [f64; 2] {
        [
            p[0].clamp(self.lambda.0, self.lambda.1),
            p[1].clamp(self.j.0, self.j.1),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeomFitResult {
    pub lambda_h: f64,
    pub j_h: f64,
    pub residual: f64,
    /// `(λ, J, residual)` of every grid point; failed runs carry `NaN`.
    pub grid: Vec<(f64, f64, f64)>,
    /// Best residual after the grid stage and after each simplex iteration.
    pub history: Vec<f64>,
}

fn heom_residual(
    qtrace: &PopulationTrace,
    fixed: &FixedHeom,
    cfg: &HeomConfig,
    lambda: f64,
    j: f64,
) -> Result<f64> {
    let params = SystemParams::new(fixed.epsilon, j)?;
    let bath = BathParams::new(lambda, fixed.gamma, fixed.kt)?;
    let h = heom_population_trace(&params, &[bath], cfg, &qtrace.times)?;
    trace_distance_l2(qtrace, &h)
}

/// Finds `(λ_H, J_H)` minimizing [`trace_distance_l2`] between `qtrace` and
/// the HEOM population trace on the same grid.
pub fn fit_heom_params(
    qtrace: &PopulationTrace,
    fixed: &FixedHeom,
    search: &SearchGrid,
) -> Result<HeomFitResult> {
    search.validate()?;
    if qtrace.is_empty() {
        return Err(Error::InvalidArgument("trace is empty".into()));
    }
    let grid: Vec<(f64, f64, f64)> = search
        .points()
        .into_par_iter()
        .map(|(l, j)| {
            let r = heom_residual(qtrace, fixed, &search.heom, l, j).unwrap_or(f64::NAN);
            (l, j, r)
        })
        .collect();
    let &(l0, j0, r0) = grid
        .iter()
        .filter(|g| g.2.is_finite())
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .ok_or_else(|| Error::Calibration("every HEOM run on the search grid failed".into()))?;

    let mut f = |p: [f64; 2]| {
        heom_residual(qtrace, fixed, &search.heom, p[0], p[1]).unwrap_or(f64::INFINITY)
    };
    let step = [
        (search.lambda.1 - search.lambda.0) / search.n_lambda.max(2) as f64,
        (search.j.1 - search.j.0) / search.n_j.max(2) as f64,
    ];
    let (best, residual, history) = nelder_mead(&mut f, [l0, j0], r0, step, search);
    Ok(HeomFitResult {
        lambda_h: best[0],
        j_h: best[1],
        residual,
        grid,
        history,
    })
}

/// Nelder–Mead in two dimensions with vertices projected into the search box.
fn nelder_mead(
    f: &mut impl FnMut([f64; 2]) -> f64,
    start: [f64; 2],
    f_start: f64,
    step: [f64; 2],
    search: &SearchGrid,
) -> ([f64; 2], f64, Vec<f64>) {
    let mut history = vec![f_start];
    if search.refine_iterations == 0 || f_start == 0.0 {
        return (start, f_start, history);
    }
    let mut simplex: Vec<([f64; 2], f64)> = vec![(start, f_start)];
    for d in 0..2 {
        let mut p = start;
        p[d] += step[d];
        if search.clamp(p) == start {
            p[d] = start[d] - step[d];
        }
        let p = search.clamp(p);
        simplex.push((p, f(p)));
    }
    let combine = |a: [f64; 2], b: [f64; 2], t: f64| {
        search.clamp([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])])
    };

    for _ in 0..search.refine_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let size = simplex[1..]
            .iter()
            .map(|v| {
                ((v.0[0] - simplex[0].0[0]) / step[0].max(1e-300))
                    .abs()
                    .max(((v.0[1] - simplex[0].0[1]) / step[1].max(1e-300)).abs())
            })
            .fold(0.0, f64::max);
        if size < 1e-4 {
            break;
        }
        let centroid = [
            0.5 * (simplex[0].0[0] + simplex[1].0[0]),
            0.5 * (simplex[0].0[1] + simplex[1].0[1]),
        ];
        let worst = simplex[2];
        let reflected = combine(centroid, worst.0, -1.0);
        let fr = f(reflected);
        if fr < simplex[0].1 {
            let expanded = combine(centroid, worst.0, -2.0);
            let fe = f(expanded);
            simplex[2] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
        } else if fr < simplex[1].1 {
            simplex[2] = (reflected, fr);
        } else {
            let contracted = if fr < worst.1 {
                combine(centroid, reflected, 0.5)
            } else {
                combine(centroid, worst.0, 0.5)
            };
            let fc = f(contracted);
            if fc < worst.1.min(fr) {
                simplex[2] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    let p = combine(best, v.0, 0.5);
                    *v = (p, f(p));
                }
            }
        }
        let current = simplex.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
        history.push(current.min(*history.last().unwrap()));
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, simplex[0].1, history)
}

/// Ordinary least-squares line `value = slope·δ_Q + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl LinearFit {
    pub fn predict(&self, delta_q: f64) -> f64 {
        self.slope * delta_q + self.intercept
    }
}

pub fn linear_fit(pairs: &[(f64, f64)]) -> Result<LinearFit> {
    if pairs.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::InvalidArgument("pairs must be finite".into()));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = sorted.len() as f64;
    if sorted.len() < 2 || sorted.first().map(|p| p.0) == sorted.last().map(|p| p.0) {
        return Err(Error::RankDeficient);
    }
    let mx = sorted.iter().map(|p| p.0).sum::<f64>() / n;
    let my = sorted.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = sorted.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = sorted.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = sorted.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = sorted
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// `δ_Q` at which `fit` predicts `lambda_target`.
pub fn interpolate_delta(lambda_target: f64, fit: &LinearFit) -> Result<f64> {
    if fit.slope == 0.0 || !fit.slope.is_finite() {
        return Err(Error::NonInvertible);
    }
    let delta = (lambda_target - fit.intercept) / fit.slope;
    if delta < 0.0 {
        return Err(Error::OutOfRange(delta));
    }
    Ok(delta)
}
