use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    dissipation_count, identity_block, subspace_block, trotter_step, trotter_steps, NoiseConfig,
    Superop, TrotterSchedule, TwoQubitDensity, S1_INDEX, S2_INDEX,
};
use crate::error::{Error, Result};
use crate::qdyn::{DensityMatrix2, SystemParams};
use crate::trace::{check_grid, PopulationTrace};

/// Minimum single-excitation weight for subspace renormalization.
pub const SUBSPACE_THRESHOLD: f64 = 1e-9;

/// Default number of measurement samples per time point.
pub const DEFAULT_SHOTS: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulationMode {
    /// Read populations straight off the density matrix.
    Exact,
    /// Estimate populations from sampled bitstrings.
    Shots { shots: usize, seed: u64 },
}

/// Dissipation-plus-propagator circuit for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitModel {
    pub params: SystemParams,
    /// Noisy identity blocks per unit simulated time.
    pub delta_q: f64,
    pub schedule: TrotterSchedule,
    pub noise: NoiseConfig,
}

impl CircuitModel {
    pub fn new(
        params: SystemParams,
        delta_q: f64,
        schedule: TrotterSchedule,
        noise: NoiseConfig,
    ) -> Result<Self> {
        if !(delta_q >= 0.0 && delta_q.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "delta_q must be finite and >= 0, got {delta_q}"
            )));
        }
        schedule.validate()?;
        noise.validate()?;
        Ok(Self {
            params,
            delta_q,
            schedule,
            noise,
        })
    }

    fn block_channel(&self) -> Superop {
        identity_block().channel(&self.noise)
    }

    fn state_at(&self, block: &Superop, rho0: &TwoQubitDensity, t: f64) -> TwoQubitDensity {
        let n = dissipation_count(self.delta_q, t);
        let m = trotter_steps(self.schedule, t);
        let step = trotter_step(&self.params, t / m as f64).channel(&self.noise);
        let dissipated = block.pow(n).apply(rho0);
        step.pow(m).apply(&dissipated)
    }

    /// Two-qubit state at the end of the circuit for evolution time `t`.
    pub fn final_state(&self, rho0: &DensityMatrix2, t: f64) -> TwoQubitDensity {
        self.state_at(&self.block_channel(), &TwoQubitDensity::encode(rho0), t)
    }

    /// Dynamics starting from `|s1⟩`.
    pub fn run(&self, t_grid: &[f64], mode: SimulationMode) -> Result<PopulationTrace> {
        self.run_from(&DensityMatrix2::site1(), t_grid, mode)
    }

    /// Dynamics starting from an arbitrary encoded site-basis state.
    pub fn run_from(
        &self,
        rho0: &DensityMatrix2,
        t_grid: &[f64],
        mode: SimulationMode,
    ) -> Result<PopulationTrace> {
        check_grid(t_grid)?;
        let block = self.block_channel();
        let start = TwoQubitDensity::encode(rho0);
        let states: Vec<TwoQubitDensity> = t_grid
            .iter()
            .map(|&t| self.state_at(&block, &start, t))
            .collect();

        match mode {
            SimulationMode::Exact => {
                let (p1, p2) = states
                    .iter()
                    .map(|s| {
                        let p = s.probabilities();
                        (p[S1_INDEX], p[S2_INDEX])
                    })
                    .unzip();
                let rho_series = states
                    .iter()
                    .map(extract_subspace_rho)
                    .collect::<Result<Vec<_>>>()?;
                let mut trace = PopulationTrace::new(t_grid.to_vec(), p1, p2)?;
                trace.rho_series = Some(rho_series);
                Ok(trace)
            }
            SimulationMode::Shots { shots, seed } => {
                if shots == 0 {
                    return Err(Error::InvalidArgument("shot count must be >= 1".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (p1, p2) = states
                    .iter()
                    .map(|s| {
                        let probs = with_readout_error(s.probabilities(), self.noise.readout_flip);
                        let counts = sample_counts(&probs, shots, &mut rng);
                        let n = shots as f64;
                        (counts[S1_INDEX] as f64 / n, counts[S2_INDEX] as f64 / n)
                    })
                    .unzip();
                let mut trace = PopulationTrace::new(t_grid.to_vec(), p1, p2)?;
                trace.seed = Some(seed);
                Ok(trace)
            }
        }
    }
}

/// Runs the circuit from `|s1⟩` over `t_grid`.
pub fn run_dynamics(
    params: &SystemParams,
    delta_q: f64,
    schedule: TrotterSchedule,
    noise: &NoiseConfig,
    t_grid: &[f64],
    mode: SimulationMode,
) -> Result<PopulationTrace> {
    CircuitModel::new(*params, delta_q, schedule, *noise)?.run(t_grid, mode)
}

/// Outcome distribution after independent bit flips with probability `f`.
pub(crate) fn with_readout_error(p: [f64; 4], f: f64) -> [f64; 4] {
    if f == 0.0 {
        return p;
    }
    let mut out = [0.0; 4];
    for (from, &pf) in p.iter().enumerate() {
        for (to, slot) in out.iter_mut().enumerate() {
            let flips = (from ^ to).count_ones() as i32;
            *slot += pf * f.powi(flips) * (1.0 - f).powi(2 - flips);
        }
    }
    out
}

fn sample_counts(probs: &[f64; 4], shots: usize, rng: &mut impl Rng) -> [usize; 4] {
    let total: f64 = probs.iter().sum();
    let mut cdf = [0.0; 4];
    let mut acc = 0.0;
    for (c, p) in cdf.iter_mut().zip(probs) {
        acc += p / total;
        *c = acc;
    }
    let mut counts = [0usize; 4];
    for _ in 0..shots {
        let u: f64 = rng.random();
        let k = cdf.iter().position(|&c| u < c).unwrap_or(3);
        counts[k] += 1;
    }
    counts
}

/// Projects onto `span{|s1⟩, |s2⟩}` and renormalizes to unit trace.
pub fn extract_subspace_rho(rho: &TwoQubitDensity) -> Result<DensityMatrix2> {
    let m = rho.matrix();
    let weight = m[(S1_INDEX, S1_INDEX)].re + m[(S2_INDEX, S2_INDEX)].re;
    if !(weight >= SUBSPACE_THRESHOLD) {
        return Err(Error::DegenerateState { weight });
    }
    let sub = subspace_block(m).unscale(weight);
    Ok(DensityMatrix2::from_matrix_unchecked(sub))
}
