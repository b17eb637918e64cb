//! Population-trace corrections: leakage renormalization, zero-time
//! normalization, damped-oscillation fitting, equilibrium correction and
//! coherence inference.

mod fit;

pub use fit::{fit_damped_oscillation, DecayFit, MIN_FIT_POINTS};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qdyn::{build_hamiltonian, eigenbasis, DensityMatrix2, Matrix2c, SystemParams};
use crate::trace::PopulationTrace;

/// Minimum `p1 + p2` accepted by [`leak_renormalize`].
pub const MIN_SUBSPACE_WEIGHT: f64 = 1e-9;
/// Minimum first-point `p1` accepted by [`zero_time_normalize`].
pub const MIN_INITIAL_POPULATION: f64 = 1e-6;
/// Most negative eigenvalue a reconstructed state may have before it is
/// clipped.
pub const POSITIVITY_TOL: f64 = 1e-6;

/// Rescales each point so that `p1 + p2 = 1`.
pub fn leak_renormalize(trace: &PopulationTrace) -> Result<PopulationTrace> {
    let mut p1 = Vec::with_capacity(trace.len());
    for (index, (&a, &b)) in trace.p1.iter().zip(&trace.p2).enumerate() {
        let weight = a + b;
        if !(weight >= MIN_SUBSPACE_WEIGHT) {
            return Err(Error::DegeneratePoint { index, weight });
        }
        p1.push(a / weight);
    }
    Ok(trace.with_p1_complement(p1))
}

/// Output of [`zero_time_normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub trace: PopulationTrace,
    /// Points whose rescaled `p1` left `[0, 1]` and were clipped.
    pub clipped: usize,
}

/// Divides `p1` by its value at the first grid point.
pub fn zero_time_normalize(trace: &PopulationTrace) -> Result<Normalized> {
    let first = *trace
        .p1
        .first()
        .ok_or_else(|| Error::InvalidArgument("trace is empty".into()))?;
    if !(first >= MIN_INITIAL_POPULATION) {
        return Err(Error::Normalization { value: first });
    }
    let mut clipped = 0;
    let p1 = trace
        .p1
        .iter()
        .map(|&p| {
            let v = p / first;
            if !(0.0..=1.0).contains(&v) {
                clipped += 1;
            }
            v.clamp(0.0, 1.0)
        })
        .collect();
    Ok(Normalized {
        trace: trace.with_p1_complement(p1),
        clipped,
    })
}

/// `p1 ← e^{−αt}·p1 + (1 − e^{−αt})·q`.
pub fn equilibrium_correct(trace: &PopulationTrace, alpha: f64, q: f64) -> Result<PopulationTrace> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be >= 0, got {alpha}"
        )));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "q must lie in [0, 1], got {q}"
        )));
    }
    let p1 = trace
        .times
        .iter()
        .zip(&trace.p1)
        .map(|(&t, &p)| {
            let w = (-alpha * t).exp();
            (w * p + (1.0 - w) * q).clamp(0.0, 1.0)
        })
        .collect();
    Ok(trace.with_p1_complement(p1))
}

/// Every stage of the correction chain applied to one raw trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Processed {
    pub leak: PopulationTrace,
    pub normalized: Normalized,
    pub fit: DecayFit,
    pub fixed: PopulationTrace,
}

/// Leak renormalization, zero-time normalization, a damped-cosine fit of the
/// normalized trace, and equilibrium correction towards `q` with the fitted
/// decay rate, unless `alpha` overrides it.
pub fn process(raw: &PopulationTrace, q: f64, alpha: Option<f64>) -> Result<Processed> {
    let leak = leak_renormalize(raw)?;
    let normalized = zero_time_normalize(&leak)?;
    let fit = fit_damped_oscillation(&normalized.trace)?;
    let fixed = equilibrium_correct(&normalized.trace, alpha.unwrap_or(fit.alpha), q)?;
    Ok(Processed {
        leak,
        normalized,
        fit,
        fixed,
    })
}

/// Output of [`reconstruct_offdiagonals`].
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub states: Vec<DensityMatrix2>,
    /// Eigenbasis population of the upper eigenstate at each point.
    pub eigen_population: Vec<f64>,
    /// Points whose state needed an eigenvalue floor.
    pub clipped: Vec<bool>,
    /// Points where no eigenbasis population reproduces the measured `p1`
    /// with the fitted coherence; the closest one is used.
    pub inconsistent: Vec<bool>,
}

/// Infers full density matrices from a normalized population trace.
///
/// The eigenbasis coherence is `√(a(1−a))·e^{−αt}·e^{iωt}` with `a` the
/// eigenbasis population of the upper eigenstate. `a` is chosen so the
/// assembled state reproduces the measured site population `p1`. The diagonal
/// of `U†·diag(p1,p2)·U` seeds the choice between the two solutions at the
/// first point; later points follow the branch closest to the previous one.
pub fn reconstruct_offdiagonals(
    trace: &PopulationTrace,
    fit: &DecayFit,
    params: &SystemParams,
) -> Result<Reconstruction> {
    for (i, (&a, &b)) in trace.p1.iter().zip(&trace.p2).enumerate() {
        if (a + b - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "trace is not normalized at index {i}: p1 + p2 = {}",
                a + b
            )));
        }
    }
    if !(fit.alpha >= 0.0) || !fit.omega.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "fit needs alpha >= 0 and finite omega, got {} and {}",
            fit.alpha, fit.omega
        )));
    }
    let u = eigenbasis(&build_hamiltonian(params));
    let (u00, u01) = (u[(0, 0)], u[(0, 1)]);
    let c2 = u00.norm_sqr();
    let s2 = u01.norm_sqr();
    let w = u01 * u00.conj();

    let n = trace.len();
    let mut out = Reconstruction {
        states: Vec::with_capacity(n),
        eigen_population: Vec::with_capacity(n),
        clipped: Vec::with_capacity(n),
        inconsistent: Vec::with_capacity(n),
    };
    let mut previous: Option<f64> = None;
    for (&t, &p1) in trace.times.iter().zip(&trace.p1) {
        let damping = (-fit.alpha * t).exp();
        let phase = Complex64::from_polar(1.0, fit.omega * t);
        let kappa = (w * phase).re * damping;
        let literal = literal_population(&u, p1);
        let (a, ok) = solve_population(p1, c2, s2, kappa, previous.unwrap_or(literal));
        previous = Some(a);

        let z = phase * ((a * (1.0 - a)).max(0.0).sqrt() * damping);
        let rho_e = Matrix2c::new(Complex64::from(a), z.conj(), z, Complex64::from(1.0 - a));
        let rho_s = u * rho_e * u.adjoint();
        let (state, clipped) = repair_positivity(rho_s);
        out.states.push(state);
        out.eigen_population.push(a);
        out.clipped.push(clipped);
        out.inconsistent.push(!ok);
    }
    Ok(out)
}

/// Upper-eigenstate population of `diag(p1, 1 − p1)` in the eigenbasis.
fn literal_population(u: &Matrix2c, p1: f64) -> f64 {
    let d = Matrix2c::new(
        Complex64::from(p1),
        Complex64::from(0.0),
        Complex64::from(0.0),
        Complex64::from(1.0 - p1),
    );
    (u.adjoint() * d * u)[(0, 0)].re.clamp(0.0, 1.0)
}

/// Solves `p1 = s2 + a(c2 − s2) + 2κ√(a(1−a))` for `a ∈ [0, 1]`, returning
/// the root closest to `hint` among those with the smallest residual, and
/// whether the residual is negligible.
fn solve_population(p1: f64, c2: f64, s2: f64, kappa: f64, hint: f64) -> (f64, bool) {
    let d = c2 - s2;
    let r = p1 - s2;
    let residual = |a: f64| (s2 + a * d + 2.0 * kappa * (a * (1.0 - a)).max(0.0).sqrt() - p1).abs();

    // Squaring gives (d² + 4κ²)a² − (2rd + 4κ²)a + r² = 0.
    let qa = d * d + 4.0 * kappa * kappa;
    if qa < 1e-12 {
        return (hint, residual(hint) < 1e-6);
    }
    let qb = -(2.0 * r * d + 4.0 * kappa * kappa);
    let qc = r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    let mut candidates = Vec::with_capacity(2);
    if disc >= 0.0 {
        let sq = disc.sqrt();
        candidates.push(((-qb + sq) / (2.0 * qa)).clamp(0.0, 1.0));
        candidates.push(((-qb - sq) / (2.0 * qa)).clamp(0.0, 1.0));
    } else {
        candidates.push((-qb / (2.0 * qa)).clamp(0.0, 1.0));
    }
    let best_res = candidates
        .iter()
        .map(|&a| residual(a))
        .fold(f64::INFINITY, f64::min);
    let a = candidates
        .into_iter()
        .filter(|&a| residual(a) <= best_res + 1e-9)
        .min_by(|x, y| (x - hint).abs().total_cmp(&(y - hint).abs()))
        .unwrap_or(hint);
    (a, residual(a) < 1e-6)
}

/// Floors negative eigenvalues at zero and renormalizes the trace.
fn repair_positivity(m: Matrix2c) -> (DensityMatrix2, bool) {
    let m = (m + m.adjoint()).scale(0.5);
    let eig = m.symmetric_eigen();
    if eig.eigenvalues.min() >= -POSITIVITY_TOL {
        let trace = m.trace().re;
        return (
            DensityMatrix2::from_matrix_unchecked(m.scale(1.0 / trace)),
            false,
        );
    }
    let floored = eig.eigenvalues.map(|v| v.max(0.0));
    let total = floored.sum();
    let mut out = Matrix2c::zeros();
    for k in 0..2 {
        let v = eig.eigenvectors.column(k);
        out += (v * v.adjoint()).scale(floored[k] / total);
    }
    (DensityMatrix2::from_matrix_unchecked(out), true)
}
