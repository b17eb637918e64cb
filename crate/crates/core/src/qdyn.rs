//! Exact two-level quantum mechanics for the dimer.
//!
//! The site basis is `{|s1⟩, |s2⟩}` with `|s1⟩` the higher-energy site. The
//! dimer Hamiltonian is `H = ε σ_Z + J σ_X`; everything here is closed form,
//! so these routines double as oracles for the circuit and HEOM layers.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Matrix2c = Matrix2<Complex64>;
pub type Matrix4c = Matrix4<Complex64>;
pub type Vector4c = Vector4<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Pauli matrices in the site basis.
pub mod pauli {
    use super::*;

    pub fn identity() -> Matrix2c {
        Matrix2c::identity()
    }

    pub fn x() -> Matrix2c {
        Matrix2c::new(ZERO, ONE, ONE, ZERO)
    }

    pub fn y() -> Matrix2c {
        Matrix2c::new(ZERO, -I, I, ZERO)
    }

    pub fn z() -> Matrix2c {
        Matrix2c::new(ONE, ZERO, ZERO, -ONE)
    }
}

/// Bias and tunneling of the dimer (ħ = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Half the site-energy gap, ε = (ε1 − ε2)/2.
    pub epsilon: f64,
    /// Inter-site tunneling J.
    pub j_coupling: f64,
}

impl SystemParams {
    /// Validated constructor: `|s1⟩` must be the higher-energy site, so ε ≥ 0.
    pub fn new(epsilon: f64, j_coupling: f64) -> Result<Self> {
        if !epsilon.is_finite() || !j_coupling.is_finite() {
            return Err(Error::InvalidArgument(
                "epsilon and j_coupling must be finite".into(),
            ));
        }
        if epsilon < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be >= 0 (|s1> is the higher-energy site), got {epsilon}"
            )));
        }
        Ok(Self {
            epsilon,
            j_coupling,
        })
    }

    /// The same physical dimer with the site labels swapped (ε → −ε).
    ///
    /// The result deliberately breaks the ε ≥ 0 labelling convention; it is
    /// only meaningful to solvers that accept either sign, such as HEOM.
    pub fn relabeled(&self) -> Self {
        Self {
            epsilon: -self.epsilon,
            j_coupling: self.j_coupling,
        }
    }

    /// Ω = √(ε² + J²), half the eigenvalue splitting.
    pub fn omega(&self) -> f64 {
        self.epsilon.hypot(self.j_coupling)
    }
}

/// Which energies enter the Boltzmann equilibrium population of `|s1⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnergyModel {
    /// Boltzmann weights of the bare site energies ±ε.
    #[default]
    SiteEnergies,
    /// `⟨s1| e^{−H/kT} |s1⟩ / Tr e^{−H/kT}` for the full coupled Hamiltonian.
    GibbsOfH,
}

/// A 2×2 density matrix in the site basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix2(Matrix2c);

impl DensityMatrix2 {
    pub const HERMITIAN_TOL: f64 = 1e-10;
    pub const TRACE_TOL: f64 = 1e-10;
    pub const EIGEN_TOL: f64 = 1e-9;

    /// Validates Hermiticity, unit trace and positivity at the default tolerances.
    pub fn new(m: Matrix2c) -> Result<Self> {
        Self::with_tolerance(m, Self::HERMITIAN_TOL, Self::EIGEN_TOL)
    }

    /// Validates with a caller-chosen tolerance (used for noisy data).
    pub fn with_tolerance(m: Matrix2c, herm_tol: f64, eig_tol: f64) -> Result<Self> {
        let herm = (m - m.adjoint()).camax();
        if herm > herm_tol {
            return Err(Error::Domain(format!(
                "density matrix not Hermitian (deviation {herm:e})"
            )));
        }
        let tr = m.trace();
        if (tr - ONE).norm() > herm_tol.max(Self::TRACE_TOL) {
            return Err(Error::Domain(format!("density matrix trace {tr} != 1")));
        }
        let (lo, _) = hermitian_eigenvalues(&m);
        if lo < -eig_tol {
            return Err(Error::Domain(format!(
                "density matrix has negative eigenvalue {lo:e}"
            )));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix without validation.
    pub fn from_matrix_unchecked(m: Matrix2c) -> Self {
        Self(m)
    }

    /// `|s1⟩⟨s1|`.
    pub fn site1() -> Self {
        Self(Matrix2c::new(ONE, ZERO, ZERO, ZERO))
    }

    /// `|s2⟩⟨s2|`.
    pub fn site2() -> Self {
        Self(Matrix2c::new(ZERO, ZERO, ZERO, ONE))
    }

    /// `(I + x X + y Y + z Z)/2`.
    pub fn from_bloch(x: f64, y: f64, z: f64) -> Self {
        let m =
            (pauli::identity() + pauli::x().scale(x) + pauli::y().scale(y) + pauli::z().scale(z))
                .scale(0.5);
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix2c {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix2c {
        self.0
    }

    /// Site populations `(p1, p2)`.
    pub fn populations(&self) -> (f64, f64) {
        (self.0[(0, 0)].re, self.0[(1, 1)].re)
    }

    /// Bloch vector `(⟨X⟩, ⟨Y⟩, ⟨Z⟩)`.
    pub fn bloch(&self) -> [f64; 3] {
        let m = &self.0;
        [
            2.0 * m[(1, 0)].re,
            2.0 * m[(1, 0)].im,
            (m[(0, 0)] - m[(1, 1)]).re,
        ]
    }
}

/// Eigenvalues `(low, high)` of a Hermitian 2×2 matrix.
pub fn hermitian_eigenvalues(h: &Matrix2c) -> (f64, f64) {
    let a = h[(0, 0)].re;
    let d = h[(1, 1)].re;
    let b = h[(0, 1)];
    let mean = 0.5 * (a + d);
    let r = (0.5 * (a - d)).hypot(b.norm());
    (mean - r, mean + r)
}

/// `H = ε σ_Z + J σ_X`.
pub fn build_hamiltonian(params: &SystemParams) -> Matrix2c {
    let e = Complex64::from(params.epsilon);
    let j = Complex64::from(params.j_coupling);
    Matrix2c::new(e, j, j, -e)
}

/// Closed-form `e^{−iHt}` for a Hermitian 2×2 `H`.
///
/// The traceless part uses `cos(Ωt) I − i sin(Ωt) H₀/Ω`; any trace contributes a
/// global phase. Ω = 0 returns the identity (times that phase).
pub fn propagator(h: &Matrix2c, t: f64) -> Matrix2c {
    let mean = 0.5 * (h[(0, 0)] + h[(1, 1)]).re;
    let h0 = h - Matrix2c::identity().scale(mean);
    let omega = (h0[(0, 0)].re).hypot(h0[(0, 1)].norm());
    let phase = Complex64::from_polar(1.0, -mean * t);
    if omega == 0.0 {
        return Matrix2c::identity() * phase;
    }
    let (s, c) = (omega * t).sin_cos();
    (Matrix2c::identity().scale(c) - h0 * (I * (s / omega))) * phase
}

/// Closed-system population of `|s1⟩` starting from `|s1⟩`:
/// `1 − (J²/Ω²) sin²(Ωt)`.
pub fn rabi_population(params: &SystemParams, t: f64) -> f64 {
    let omega = params.omega();
    if omega == 0.0 {
        return 1.0;
    }
    let s = (omega * t).sin();
    1.0 - (params.j_coupling / omega).powi(2) * s * s
}

/// Unitary `U` whose columns are the eigenvectors of Hermitian `h`, ordered
/// by descending eigenvalue, each with its first nonzero entry real positive.
pub fn eigenbasis(h: &Matrix2c) -> Matrix2c {
    let a = h[(0, 0)].re;
    let d = h[(1, 1)].re;
    let b = h[(0, 1)];
    let (lo, hi) = hermitian_eigenvalues(h);
    let scale = a.abs().max(d.abs()).max(b.norm());
    if b.norm() <= 1e-15 * scale.max(f64::MIN_POSITIVE) || hi - lo == 0.0 {
        // Already diagonal (or degenerate): basis vectors in descending order.
        return if d > a {
            Matrix2c::new(ZERO, ONE, ONE, ZERO)
        } else {
            Matrix2c::identity()
        };
    }
    let column = |lambda: f64| -> [Complex64; 2] {
        // Two algebraically equivalent null vectors of H − λ; take the larger.
        let v1 = [b, Complex64::from(lambda - a)];
        let v2 = [Complex64::from(lambda - d), b.conj()];
        let n1 = v1[0].norm_sqr() + v1[1].norm_sqr();
        let n2 = v2[0].norm_sqr() + v2[1].norm_sqr();
        let (v, n) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
        fix_phase([v[0] / n.sqrt(), v[1] / n.sqrt()])
    };
    let u1 = column(hi);
    let u2 = column(lo);
    Matrix2c::new(u1[0], u2[0], u1[1], u2[1])
}

fn fix_phase(v: [Complex64; 2]) -> [Complex64; 2] {
    let lead = if v[0].norm() > 1e-14 { v[0] } else { v[1] };
    let rot = lead.conj() / lead.norm();
    let mut out = [v[0] * rot, v[1] * rot];
    // Scrub round-off from the entry that is real by construction.
    let idx = if v[0].norm() > 1e-14 { 0 } else { 1 };
    out[idx] = Complex64::from(out[idx].norm());
    out
}

/// Equilibrium population of `|s1⟩` at temperature `kt`.
pub fn gibbs_population(params: &SystemParams, kt: f64, model: EnergyModel) -> Result<f64> {
    if !(kt > 0.0) {
        return Err(Error::Domain(format!("kT must be > 0, got {kt}")));
    }
    match model {
        EnergyModel::SiteEnergies => {
            // Logistic form avoids overflow for large ε/kT.
            let x = 2.0 * params.epsilon / kt;
            Ok(if x >= 0.0 {
                let e = (-x).exp();
                e / (1.0 + e)
            } else {
                1.0 / (1.0 + x.exp())
            })
        }
        EnergyModel::GibbsOfH => {
            let h = build_hamiltonian(params);
            let u = eigenbasis(&h);
            let (lo, hi) = hermitian_eigenvalues(&h);
            // Shift by the ground energy so the weights stay bounded.
            let w_hi = (-(hi - lo) / kt).exp();
            let w_lo = 1.0;
            let num = w_hi * u[(0, 0)].norm_sqr() + w_lo * u[(0, 1)].norm_sqr();
            Ok(num / (w_hi + w_lo))
        }
    }
}

/// Column-stacking vectorization `(ρ00, ρ10, ρ01, ρ11)`.
pub fn vectorize(rho: &Matrix2c) -> Vector4c {
    Vector4c::new(rho[(0, 0)], rho[(1, 0)], rho[(0, 1)], rho[(1, 1)])
}

/// Inverse of [`vectorize`].
pub fn devectorize(v: &[Complex64]) -> Result<Matrix2c> {
    if v.len() != 4 {
        return Err(Error::Shape {
            expected: 4,
            got: v.len(),
        });
    }
    Ok(Matrix2c::new(v[0], v[2], v[1], v[3]))
}

/// Superoperator of `ρ ↦ A ρ B` in the column-stacking convention: `Bᵀ ⊗ A`.
pub fn sandwich_superop(a: &Matrix2c, b: &Matrix2c) -> Matrix4c {
    b.transpose().kronecker(a)
}

/// Superoperator of `ρ ↦ U ρ U†`.
pub fn conjugation_superop(u: &Matrix2c) -> Matrix4c {
    sandwich_superop(u, &u.adjoint())
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::*;

    /// Scaling-and-squaring Taylor exponential, independent of the closed form.
    pub fn expm(a: &Matrix2c) -> Matrix2c {
        let norm = a.iter().map(|z| z.norm()).sum::<f64>();
        let mut squarings = 0;
        let mut scaled = *a;
        let mut n = norm;
        while n > 0.5 {
            scaled /= Complex64::from(2.0);
            n /= 2.0;
            squarings += 1;
        }
        let mut term = Matrix2c::identity();
        let mut sum = Matrix2c::identity();
        for k in 1..30 {
            term = term * scaled / Complex64::from(k as f64);
            sum += term;
        }
        for _ in 0..squarings {
            sum = sum * sum;
        }
        sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn params(e: f64, j: f64) -> SystemParams {
        SystemParams::new(e, j).unwrap()
    }

    fn max_abs(m: &Matrix2c) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn hamiltonian_examples() {
        let h = build_hamiltonian(&params(1.5, 1.0));
        assert_eq!(h, Matrix2c::new(1.5.into(), ONE, ONE, (-1.5).into()));
        assert_eq!(build_hamiltonian(&params(0.0, 0.0)), Matrix2c::zeros());
        assert_eq!(build_hamiltonian(&params(0.0, 1.0)), pauli::x());
        assert_eq!(h.trace(), ZERO);
        assert_eq!(h, h.adjoint());
    }

    #[test]
    fn negative_bias_rejected() {
        assert!(SystemParams::new(-0.1, 1.0).is_err());
        assert!(SystemParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn propagator_examples() {
        let h = build_hamiltonian(&params(1.5, 1.0));
        assert_eq!(propagator(&h, 0.0), Matrix2c::identity());

        let hx = build_hamiltonian(&params(0.0, 1.0));
        let u = propagator(&hx, PI / 2.0);
        assert!(max_abs(&(u - pauli::x() * (-I))) < 1e-15);

        let exact = oracle::expm(&(h * (-I)));
        assert!(max_abs(&(propagator(&h, 1.0) - exact)) < 1e-12);
    }

    #[test]
    fn propagator_zero_hamiltonian_is_identity() {
        assert_eq!(propagator(&Matrix2c::zeros(), 3.7), Matrix2c::identity());
    }

    #[test]
    fn rabi_examples() {
        assert_eq!(rabi_population(&params(1.5, 1.0), 0.0), 1.0);
        assert!(rabi_population(&params(0.0, 1.0), PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rabi_minimum_from_dense_scan() {
        // Dense scan of |⟨s1|U(t)|s1⟩|² using the series exponential.
        let p = params(1.5, 1.0);
        let h = build_hamiltonian(&p);
        let period = PI / p.omega();
        let n = 20_000;
        let mut min = f64::INFINITY;
        for k in 0..=n {
            let t = period * k as f64 / n as f64;
            let u = oracle::expm(&(h * Complex64::new(0.0, -t)));
            min = min.min(u[(0, 0)].norm_sqr());
        }
        assert_relative_eq!(min, 2.25 / 3.25, epsilon = 1e-8);
    }

    #[test]
    fn rabi_matches_propagator_on_grid() {
        let p = params(1.5, 1.0);
        let h = build_hamiltonian(&p);
        for k in 0..1000 {
            let t = 10.0 * k as f64 / 999.0;
            let amp = propagator(&h, t)[(0, 0)].norm_sqr();
            assert!((rabi_population(&p, t) - amp).abs() < 1e-12);
        }
    }

    #[test]
    fn rabi_is_periodic() {
        let p = params(1.5, 1.0);
        let period = PI / p.omega();
        for k in 0..200 {
            let t = 0.037 * k as f64;
            assert!((rabi_population(&p, t) - rabi_population(&p, t + period)).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenbasis_examples() {
        assert_eq!(
            eigenbasis(&build_hamiltonian(&params(1.0, 0.0))),
            Matrix2c::identity()
        );

        let u = eigenbasis(&pauli::x());
        let r = Complex64::from(std::f64::consts::FRAC_1_SQRT_2);
        let expected = Matrix2c::new(r, r, r, -r);
        assert!(max_abs(&(u - expected)) < 1e-15);

        let h = build_hamiltonian(&params(1.5, 1.0));
        let u = eigenbasis(&h);
        let d = u.adjoint() * h * u;
        assert!(d[(0, 1)].norm() < 1e-12 && d[(1, 0)].norm() < 1e-12);
        assert!(d[(0, 0)].re > d[(1, 1)].re);
    }

    #[test]
    fn eigenbasis_diagonal_input_sorted_descending() {
        let h = Matrix2c::new((-2.0).into(), ZERO, ZERO, 3.0.into());
        let u = eigenbasis(&h);
        let d = u.adjoint() * h * u;
        assert_eq!(d[(0, 0)].re, 3.0);
    }

    fn random_hermitian() -> impl Strategy<Value = Matrix2c> {
        (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(|(a, d, br, bi)| {
            let b = Complex64::new(br, bi);
            Matrix2c::new(a.into(), b, b.conj(), d.into())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn eigenbasis_residual_and_phase(h in random_hermitian()) {
            let u = eigenbasis(&h);
            let scale = max_abs(&h).max(1.0);
            let unit = u.adjoint() * u - Matrix2c::identity();
            prop_assert!(max_abs(&unit) < 1e-12);
            let d = u.adjoint() * h * u;
            prop_assert!(d[(0, 1)].norm() < 1e-12 * scale);
            prop_assert!(d[(0, 0)].re >= d[(1, 1)].re - 1e-12 * scale);
            for col in 0..2 {
                let lead = if u[(0, col)].norm() > 1e-14 { u[(0, col)] } else { u[(1, col)] };
                prop_assert!(lead.im == 0.0 && lead.re > 0.0);
            }
        }

        #[test]
        fn propagator_is_unitary(e in 0.0..10.0f64, j in -10.0..10.0f64, t in -20.0..20.0f64) {
            let u = propagator(&build_hamiltonian(&params(e, j)), t);
            prop_assert!(max_abs(&(u.adjoint() * u - Matrix2c::identity())) <= 1e-12);
        }

        #[test]
        fn vectorize_roundtrip_and_linearity(
            h in random_hermitian(), g in random_hermitian(), a in -3.0..3.0f64, b in -3.0..3.0f64
        ) {
            let v = vectorize(&h);
            prop_assert_eq!(devectorize(v.as_slice()).unwrap(), h);
            let lhs = vectorize(&(h.scale(a) + g.scale(b)));
            let rhs = v.scale(a) + vectorize(&g).scale(b);
            prop_assert!((lhs - rhs).camax() < 1e-12);
        }

        #[test]
        fn site_gibbs_decreasing_in_bias(e in 0.0..5.0f64, de in 1e-3..1.0f64, kt in 0.2..5.0f64) {
            let q0 = gibbs_population(&params(e, 1.0), kt, EnergyModel::SiteEnergies).unwrap();
            let q1 = gibbs_population(&params(e + de, 1.0), kt, EnergyModel::SiteEnergies).unwrap();
            prop_assert!(q1 < q0);
        }
    }

    #[test]
    fn gibbs_examples() {
        let site = EnergyModel::SiteEnergies;
        assert_eq!(gibbs_population(&params(0.0, 0.7), 1.0, site).unwrap(), 0.5);
        let q = gibbs_population(&params(1.5, 1.0), 1.0, site).unwrap();
        assert_relative_eq!(q, 1.0 / (1.0 + 3.0f64.exp()), max_relative = 1e-14);
        assert_relative_eq!(q, 0.047426, epsilon = 1e-6);
        assert!(gibbs_population(&params(1.5, 1.0), 0.0, site).is_err());
        assert!(gibbs_population(&params(1.5, 1.0), -1.0, site).is_err());
    }

    #[test]
    fn gibbs_of_h_matches_series_oracle() {
        let p = params(1.5, 1.0);
        let rho = oracle::expm(&(build_hamiltonian(&p) * Complex64::from(-1.0)));
        let expected = rho[(0, 0)].re / rho.trace().re;
        let q = gibbs_population(&p, 1.0, EnergyModel::GibbsOfH).unwrap();
        assert_relative_eq!(q, expected, max_relative = 1e-12);
        let site = gibbs_population(&p, 1.0, EnergyModel::SiteEnergies).unwrap();
        assert!(q > site);
    }

    #[test]
    fn vectorize_examples() {
        let v = vectorize(DensityMatrix2::site1().matrix());
        assert_eq!(v, Vector4c::new(ONE, ZERO, ZERO, ZERO));
        assert_eq!(
            devectorize(&[ONE; 3]),
            Err(Error::Shape {
                expected: 4,
                got: 3
            })
        );
    }

    #[test]
    fn conjugation_superop_matches_direct_product() {
        let u = propagator(&build_hamiltonian(&params(1.5, 1.0)), 0.7);
        let rho = DensityMatrix2::from_bloch(0.3, -0.2, 0.5);
        let direct = u * rho.matrix() * u.adjoint();
        let via = conjugation_superop(&u) * vectorize(rho.matrix());
        assert!((vectorize(&direct) - via).camax() < 1e-14);
    }

    #[test]
    fn density_validation() {
        assert!(DensityMatrix2::new(*DensityMatrix2::site1().matrix()).is_ok());
        let bad = Matrix2c::new(ONE, ONE, ZERO, ZERO);
        assert!(DensityMatrix2::new(bad).is_err());
        let neg = Matrix2c::new(1.5.into(), ZERO, ZERO, (-0.5).into());
        assert!(DensityMatrix2::new(neg).is_err());
    }
}
