use crate::error::{Error, Result};
use crate::qdyn::DensityMatrix2;

/// Site populations sampled on a time grid.
///
/// `p1`/`p2` hold whatever stage of processing produced the trace: raw
/// circuit readout, leak-renormalized, or equilibrium-corrected.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTrace {
    pub times: Vec<f64>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    /// Renormalized subspace states, present for exact-mode runs.
    pub rho_series: Option<Vec<DensityMatrix2>>,
    /// Seed of the sampler for shot-mode runs.
    pub seed: Option<u64>,
}

const PROB_SLACK: f64 = 1e-9;

impl PopulationTrace {
    pub fn new(times: Vec<f64>, p1: Vec<f64>, p2: Vec<f64>) -> Result<Self> {
        if times.len() != p1.len() || times.len() != p2.len() {
            return Err(Error::InvalidArgument(format!(
                "trace length mismatch: {} times, {} p1, {} p2",
                times.len(),
                p1.len(),
                p2.len()
            )));
        }
        check_grid(&times)?;
        let clamp = |v: Vec<f64>, name: &str| -> Result<Vec<f64>> {
            v.into_iter()
                .enumerate()
                .map(|(i, p)| {
                    if p.is_finite() && (-PROB_SLACK..=1.0 + PROB_SLACK).contains(&p) {
                        Ok(p.clamp(0.0, 1.0))
                    } else {
                        Err(Error::Domain(format!(
                            "{name}[{i}] = {p} is not a probability"
                        )))
                    }
                })
                .collect()
        };
        Ok(Self {
            p1: clamp(p1, "p1")?,
            p2: clamp(p2, "p2")?,
            times,
            rho_series: None,
            seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Same grid and metadata with new `p1` values and `p2 = 1 − p1`.
    pub(crate) fn with_p1_complement(&self, p1: Vec<f64>) -> Self {
        let p2 = p1.iter().map(|p| 1.0 - p).collect();
        Self {
            times: self.times.clone(),
            p1,
            p2,
            rho_series: None,
            seed: self.seed,
        }
    }
}

/// Rejects empty, non-finite, negative or non-increasing grids.
pub fn check_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("time grid is empty".into()));
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidArgument(
            "time grid must be finite and nonnegative".into(),
        ));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "time grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// `n` evenly spaced points from `t0` to `t1` inclusive.
pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![t0],
        _ => {
            let dt = (t1 - t0) / (n - 1) as f64;
            (0..n).map(|k| t0 + dt * k as f64).collect()
        }
    }
}
