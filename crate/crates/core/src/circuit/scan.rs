use num_complex::Complex64;

use super::{rx, x1, z1, NoiseConfig};
use crate::qdyn::{pauli, Matrix2c};

/// Identity sequences probed by [`identity_gate_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentitySequence {
    Xx,
    Xzxz,
    /// `(XZXZZ)²`, the dissipation block.
    XzxzzSq,
}

impl IdentitySequence {
    pub fn gates(&self) -> &'static [char] {
        match self {
            IdentitySequence::Xx => &['X', 'X'],
            IdentitySequence::Xzxz => &['X', 'Z', 'X', 'Z'],
            IdentitySequence::XzxzzSq => &super::IDENTITY_BLOCK,
        }
    }
}

impl std::str::FromStr for IdentitySequence {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xx" => Ok(Self::Xx),
            "xzxz" => Ok(Self::Xzxz),
            "xzxzzsq" | "xzxzz2" => Ok(Self::XzxzzSq),
            other => Err(crate::error::Error::InvalidArgument(format!(
                "unknown identity sequence {other:?}"
            ))),
        }
    }
}

fn bloch(rho: &Matrix2c) -> [f64; 3] {
    [
        2.0 * rho[(0, 1)].re,
        -2.0 * rho[(0, 1)].im,
        (rho[(0, 0)] - rho[(1, 1)]).re,
    ]
}

/// Single-qubit run of `kind` repeated `reps` times from the Bloch-sphere
/// point `(theta, phi)`. Returns `reps + 1` Bloch vectors, starting with the
/// initial one.
pub fn identity_gate_scan(
    kind: IdentitySequence,
    reps: usize,
    theta: f64,
    phi: f64,
    noise: &NoiseConfig,
) -> Vec<[f64; 3]> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let half = Complex64::from(0.5);
    let mut rho = pauli::identity() * half
        + (pauli::x() * Complex64::from(st * cp)
            + pauli::y() * Complex64::from(st * sp)
            + pauli::z() * Complex64::from(ct))
            * half;

    let x_gate = rx(noise.overrotation_x) * x1();
    let z_gate = z1();
    let p = noise.depol_1q;
    let depol = |m: Matrix2c| -> Matrix2c {
        if p == 0.0 {
            return m;
        }
        let twirl = [pauli::x(), pauli::y(), pauli::z()]
            .iter()
            .fold(Matrix2c::zeros(), |acc, s| acc + s * m * s);
        m * Complex64::from(1.0 - p) + twirl * Complex64::from(p / 3.0)
    };

    let mut out = Vec::with_capacity(reps + 1);
    out.push(bloch(&rho));
    for _ in 0..reps {
        for &g in kind.gates() {
            let u = if g == 'X' { &x_gate } else { &z_gate };
            rho = depol(u * rho * u.adjoint());
        }
        out.push(bloch(&rho));
    }
    out
}
