//! Open-system dynamics of a two-site excitonic dimer: a noisy two-qubit
//! circuit simulator, a hierarchical-equations-of-motion reference solver,
//! transfer tensors, trace post-processing and noise calibration.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod circuit;
pub mod error;
pub mod heom;
pub mod ode;
pub mod postproc;
pub mod qdyn;
pub mod trace;
pub mod ttm;

pub use error::{Error, Result};
pub use qdyn::{DensityMatrix2, EnergyModel, SystemParams};
pub use trace::PopulationTrace;
