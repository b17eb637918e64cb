use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;

use super::{embed, Gate, TwoQubitDensity};
use crate::error::{Error, Result};
use crate::qdyn::{pauli, Matrix4c};

/// Per-gate noise parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseConfig {
    /// Depolarizing probability after each one-qubit gate.
    pub depol_1q: f64,
    /// Depolarizing probability on each qubit after a two-qubit gate.
    pub depol_2q: f64,
    /// Extra X rotation (radians) on every physical X gate.
    pub overrotation_x: f64,
    /// Probability that a measured bit is flipped.
    pub readout_flip: f64,
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn depolarizing(p: f64) -> Self {
        Self {
            depol_1q: p,
            depol_2q: p,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("depol_1q", self.depol_1q),
            ("depol_2q", self.depol_2q),
            ("readout_flip", self.readout_flip),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be in [0, 1], got {p}"
                )));
            }
        }
        if !self.overrotation_x.is_finite() {
            return Err(Error::InvalidArgument(
                "overrotation_x must be finite".into(),
            ));
        }
        Ok(())
    }

    fn depol_for(&self, gate: &Gate) -> f64 {
        if gate.targets().len() == 2 {
            self.depol_2q
        } else {
            self.depol_1q
        }
    }
}

/// Applies one gate: ideal unitary (X gates carry the over-rotation), then
/// `ρ → (1−p)ρ + (p/3)(XρX + YρY + ZρZ)` on each touched qubit.
pub fn apply_channel(rho: &TwoQubitDensity, gate: &Gate, noise: &NoiseConfig) -> TwoQubitDensity {
    let u = gate.unitary(noise.overrotation_x);
    let mut m = u * rho.matrix() * u.adjoint();
    let p = noise.depol_for(gate);
    if p > 0.0 {
        for &q in gate.targets() {
            m = depolarize(&m, q, p);
        }
    }
    TwoQubitDensity::from_matrix_unchecked(m)
}

fn depolarize(m: &Matrix4c, q: usize, p: f64) -> Matrix4c {
    let paulis = [pauli::x(), pauli::y(), pauli::z()].map(|s| embed(q, &s));
    let twirl = paulis
        .iter()
        .fold(Matrix4c::zeros(), |acc, s| acc + s * m * s);
    m.scale(1.0 - p) + twirl.scale(p / 3.0)
}

type Mat16 = SMatrix<Complex64, 16, 16>;

/// Linear map on column-stacked two-qubit density matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Superop(Mat16);

impl Superop {
    pub fn identity() -> Self {
        Self(Mat16::identity())
    }

    /// `ρ ↦ A ρ B` is `Bᵀ ⊗ A` in the column-stacking convention.
    fn sandwich(a: &Matrix4c, b: &Matrix4c) -> Mat16 {
        b.transpose().kronecker(a)
    }

    pub fn unitary(u: &Matrix4c) -> Self {
        Self(Self::sandwich(u, &u.adjoint()))
    }

    pub fn depolarizing(q: usize, p: f64) -> Self {
        let mut m = Mat16::identity().scale(1.0 - p);
        for s in [pauli::x(), pauli::y(), pauli::z()] {
            let s = embed(q, &s);
            m += Self::sandwich(&s, &s).scale(p / 3.0);
        }
        Self(m)
    }

    /// Superoperator of [`apply_channel`] for `gate`.
    pub fn gate(gate: &Gate, noise: &NoiseConfig) -> Self {
        let mut s = Self::unitary(&gate.unitary(noise.overrotation_x));
        let p = noise.depol_for(gate);
        if p > 0.0 {
            for &q in gate.targets() {
                s = Self::depolarizing(q, p).compose_after(&s);
            }
        }
        s
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose_after(&self, first: &Superop) -> Superop {
        Superop(self.0 * first.0)
    }

    /// `self` applied `n` times, by repeated squaring.
    pub fn pow(&self, mut n: usize) -> Superop {
        let mut result = Mat16::identity();
        let mut base = self.0;
        while n > 0 {
            if n & 1 == 1 {
                result = base * result;
            }
            n >>= 1;
            if n > 0 {
                base = base * base;
            }
        }
        Superop(result)
    }

    pub fn apply(&self, rho: &TwoQubitDensity) -> TwoQubitDensity {
        let v = SVector::<Complex64, 16>::from_column_slice(rho.matrix().as_slice());
        let out = self.0 * v;
        TwoQubitDensity::from_matrix_unchecked(Matrix4c::from_column_slice(out.as_slice()))
    }
}
