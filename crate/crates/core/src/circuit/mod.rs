//! Two-qubit density-matrix simulation of the dimer circuit.
//!
//! Encoding: qubit 0 is the left bit of `|b0 b1⟩`, basis index `2·b0 + b1`.
//! The site states are `|s1⟩ = |10⟩` and `|s2⟩ = |01⟩`. A run prepares the
//! encoded state, applies `N = round(δ_Q t)` noisy identity blocks
//! `(XZXZZ)²` on both qubits, then the first-order Trotter propagator.

mod channel;
mod dynamics;
mod scan;

pub use channel::{apply_channel, NoiseConfig, Superop};
pub use dynamics::{
    extract_subspace_rho, run_dynamics, CircuitModel, SimulationMode, DEFAULT_SHOTS,
    SUBSPACE_THRESHOLD,
};
pub use scan::{identity_gate_scan, IdentitySequence};

use nalgebra::Matrix4;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qdyn::{DensityMatrix2, Matrix2c, Matrix4c, SystemParams};

/// Basis index of `|s1⟩ = |10⟩`.
pub const S1_INDEX: usize = 2;
/// Basis index of `|s2⟩ = |01⟩`.
pub const S2_INDEX: usize = 1;

/// Gate records. Angles are in radians, rotations follow `R(θ) = e^{−iθP/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    X(usize),
    Z(usize),
    Rx(usize, f64),
    Rz(usize, f64),
    /// `e^{−iθ(XX+YY)/4}` on qubits (0, 1).
    XxPlusYy(f64),
}

impl Gate {
    /// Qubits the gate touches.
    pub fn targets(&self) -> &'static [usize] {
        match self {
            Gate::X(0) | Gate::Z(0) | Gate::Rx(0, _) | Gate::Rz(0, _) => &[0],
            Gate::X(_) | Gate::Z(_) | Gate::Rx(_, _) | Gate::Rz(_, _) => &[1],
            Gate::XxPlusYy(_) => &[0, 1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (q, theta) = match *self {
            Gate::X(q) | Gate::Z(q) => (q, 0.0),
            Gate::Rx(q, th) | Gate::Rz(q, th) => (q, th),
            Gate::XxPlusYy(th) => (0, th),
        };
        if q > 1 {
            return Err(Error::InvalidArgument(format!(
                "qubit index {q} out of range"
            )));
        }
        if !theta.is_finite() {
            return Err(Error::InvalidArgument("gate angle must be finite".into()));
        }
        Ok(())
    }

    /// Ideal 4×4 unitary, with `extra_x` radians of additional X rotation
    /// composed onto physical X gates.
    pub fn unitary(&self, extra_x: f64) -> Matrix4c {
        match *self {
            Gate::X(q) => embed(q, &(rx(extra_x) * x1())),
            Gate::Z(q) => embed(q, &z1()),
            Gate::Rx(q, th) => embed(q, &rx(th)),
            Gate::Rz(q, th) => embed(q, &rz(th)),
            Gate::XxPlusYy(th) => xx_plus_yy(th),
        }
    }
}

pub(crate) fn x1() -> Matrix2c {
    crate::qdyn::pauli::x()
}

pub(crate) fn z1() -> Matrix2c {
    crate::qdyn::pauli::z()
}

pub(crate) fn rx(theta: f64) -> Matrix2c {
    let (s, c) = (0.5 * theta).sin_cos();
    let c = Complex64::from(c);
    let ms = Complex64::new(0.0, -s);
    Matrix2c::new(c, ms, ms, c)
}

pub(crate) fn rz(theta: f64) -> Matrix2c {
    Matrix2c::new(
        Complex64::from_polar(1.0, -0.5 * theta),
        Complex64::from(0.0),
        Complex64::from(0.0),
        Complex64::from_polar(1.0, 0.5 * theta),
    )
}

fn xx_plus_yy(theta: f64) -> Matrix4c {
    let (s, c) = (0.5 * theta).sin_cos();
    let mut u = Matrix4c::identity();
    u[(1, 1)] = c.into();
    u[(2, 2)] = c.into();
    u[(1, 2)] = Complex64::new(0.0, -s);
    u[(2, 1)] = Complex64::new(0.0, -s);
    u
}

/// Lifts a single-qubit operator onto qubit `q`.
pub(crate) fn embed(q: usize, g: &Matrix2c) -> Matrix4c {
    if q == 0 {
        g.kronecker(&Matrix2c::identity())
    } else {
        Matrix2c::identity().kronecker(g)
    }
}

/// An ordered list of gates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GateSequence(pub Vec<Gate>);

impl GateSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Gate> {
        self.0.iter()
    }

    /// Gates acting on qubit `q`.
    pub fn count_on(&self, q: usize) -> usize {
        self.0.iter().filter(|g| g.targets().contains(&q)).count()
    }

    /// Product of the ideal gate unitaries in circuit order.
    pub fn unitary(&self, extra_x: f64) -> Matrix4c {
        self.0
            .iter()
            .fold(Matrix4c::identity(), |acc, g| g.unitary(extra_x) * acc)
    }

    /// Applies every gate with its noise channel.
    pub fn apply(&self, rho: &TwoQubitDensity, noise: &NoiseConfig) -> TwoQubitDensity {
        self.0
            .iter()
            .fold(*rho, |acc, g| apply_channel(&acc, g, noise))
    }

    /// Composed superoperator of the noisy sequence.
    pub fn channel(&self, noise: &NoiseConfig) -> Superop {
        self.0.iter().fold(Superop::identity(), |acc, g| {
            Superop::gate(g, noise).compose_after(&acc)
        })
    }
}

/// How the number of Trotter steps depends on the evolution time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrotterSchedule {
    Constant(usize),
    /// `M = ⌈t / dt_target⌉`.
    Linear(f64),
}

impl TrotterSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TrotterSchedule::Constant(0) => Err(Error::InvalidArgument(
                "constant Trotter step count must be >= 1".into(),
            )),
            TrotterSchedule::Linear(dt) if !(dt > 0.0 && dt.is_finite()) => Err(
                Error::InvalidArgument(format!("Trotter dt_target must be > 0, got {dt}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Number of Trotter steps for evolution time `t`; never less than one.
pub fn trotter_steps(schedule: TrotterSchedule, t: f64) -> usize {
    match schedule {
        TrotterSchedule::Constant(m) => m.max(1),
        TrotterSchedule::Linear(dt) => {
            let x = t / dt;
            let nearest = x.round();
            // Grid times like 1.2/0.4 land a hair off an integer.
            let m = if (x - nearest).abs() < 1e-9 {
                nearest
            } else {
                x.ceil()
            };
            (m as usize).max(1)
        }
    }
}

/// One first-order Trotter step: the σ_Z rotation (opposite-sign RZ pair)
/// followed by the σ_X rotation (XX+YY), i.e. `e^{−iJΔtσ_X} e^{−iεΔtσ_Z}`.
pub fn trotter_step(params: &SystemParams, dt: f64) -> GateSequence {
    let phi = params.epsilon * dt;
    GateSequence(vec![
        Gate::Rz(0, -phi),
        Gate::Rz(1, phi),
        Gate::XxPlusYy(2.0 * params.j_coupling * dt),
    ])
}

/// `M` repetitions of [`trotter_step`] with `Δt = t/M`.
pub fn build_trotter_circuit(params: &SystemParams, t: f64, m: usize) -> Result<GateSequence> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "Trotter step count must be >= 1".into(),
        ));
    }
    let step = trotter_step(params, t / m as f64);
    Ok(GateSequence(
        std::iter::repeat_n(step.0, m).flatten().collect(),
    ))
}

/// The per-qubit identity sequence `X Z X Z Z X Z X Z Z`.
pub const IDENTITY_BLOCK: [char; 10] = ['X', 'Z', 'X', 'Z', 'Z', 'X', 'Z', 'X', 'Z', 'Z'];

/// One `(XZXZZ)²` block applied to both qubits, interleaved gate by gate.
pub fn identity_block() -> GateSequence {
    GateSequence(
        IDENTITY_BLOCK
            .iter()
            .flat_map(|&c| (0..2).map(move |q| if c == 'X' { Gate::X(q) } else { Gate::Z(q) }))
            .collect(),
    )
}

/// `round(δ_Q · t)` with ties rounded up.
pub fn dissipation_count(delta_q: f64, t: f64) -> usize {
    (delta_q * t + 0.5 + 1e-9).floor().max(0.0) as usize
}

/// `N = round(δ_Q t)` noisy identity blocks on both qubits.
pub fn dissipation_block(delta_q: f64, t: f64) -> Result<GateSequence> {
    if !(delta_q >= 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidArgument(
            "delta_q and t must be nonnegative".into(),
        ));
    }
    let block = identity_block();
    let n = dissipation_count(delta_q, t);
    Ok(GateSequence(
        std::iter::repeat_n(block.0, n).flatten().collect(),
    ))
}

/// The 2×2 block of a two-qubit operator on `span{|s1⟩, |s2⟩}`.
pub fn subspace_block(m: &Matrix4c) -> Matrix2c {
    Matrix2c::new(
        m[(S1_INDEX, S1_INDEX)],
        m[(S1_INDEX, S2_INDEX)],
        m[(S2_INDEX, S1_INDEX)],
        m[(S2_INDEX, S2_INDEX)],
    )
}

/// A two-qubit density matrix over `{|00⟩, |01⟩, |10⟩, |11⟩}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitDensity(Matrix4c);

impl TwoQubitDensity {
    pub fn new(m: Matrix4c) -> Result<Self> {
        let herm = (m - m.adjoint()).camax();
        if herm > 1e-10 {
            return Err(Error::Domain(format!("state not Hermitian ({herm:e})")));
        }
        if (m.trace() - Complex64::from(1.0)).norm() > 1e-10 {
            return Err(Error::Domain(format!("state trace {} != 1", m.trace())));
        }
        let min = min_eigenvalue(&m);
        if min < -1e-9 {
            return Err(Error::Domain(format!(
                "state has negative eigenvalue {min:e}"
            )));
        }
        Ok(Self(m))
    }

    pub fn from_matrix_unchecked(m: Matrix4c) -> Self {
        Self(m)
    }

    /// Embeds a site-basis state into the single-excitation subspace.
    pub fn encode(rho: &DensityMatrix2) -> Self {
        let r = rho.matrix();
        let mut m = Matrix4c::zeros();
        m[(S1_INDEX, S1_INDEX)] = r[(0, 0)];
        m[(S1_INDEX, S2_INDEX)] = r[(0, 1)];
        m[(S2_INDEX, S1_INDEX)] = r[(1, 0)];
        m[(S2_INDEX, S2_INDEX)] = r[(1, 1)];
        Self(m)
    }

    pub fn maximally_mixed() -> Self {
        Self(Matrix4c::identity().scale(0.25))
    }

    pub fn matrix(&self) -> &Matrix4c {
        &self.0
    }

    /// Computational-basis probabilities indexed by `2·b0 + b1`.
    pub fn probabilities(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|i| self.0[(i, i)].re.max(0.0))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.0)
    }
}

fn min_eigenvalue(m: &Matrix4c) -> f64 {
    let h: Matrix4<Complex64> = (m + m.adjoint()).scale(0.5);
    h.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
