use std::path::Path;

use serde::{Deserialize, Serialize};

use dimerlab_core::calib::{FixedHeom, SearchGrid};
use dimerlab_core::circuit::{
    IdentitySequence, NoiseConfig, SimulationMode, TrotterSchedule, DEFAULT_SHOTS,
};
use dimerlab_core::heom::{BathCoupling, BathParams, HeomConfig};
use dimerlab_core::qdyn::{EnergyModel, SystemParams};
use dimerlab_core::trace::uniform_grid;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: System,
    pub bath: Bath,
    pub noise: Noise,
    pub run: Run,
    pub trotter: Trotter,
    pub heom: Heom,
    pub ttm: Ttm,
    pub calib: Calib,
    pub postproc: Postproc,
    pub scan: Scan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct System {
    pub epsilon: f64,
    pub j: f64,
}

impl Default for System {
    fn default() -> Self {
        Self {
            epsilon: 1.5,
            j: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bath {
    pub lambda: f64,
    pub gamma: f64,
    #[serde(rename = "kT", alias = "kt")]
    pub kt: f64,
}

impl Default for Bath {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            gamma: 11.0,
            kt: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Noise {
    pub depol1: f64,
    pub depol2: f64,
    pub overrotation: f64,
    pub readout: f64,
}

impl Default for Noise {
    fn default() -> Self {
        Self {
            depol1: 0.002,
            depol2: 0.002,
            overrotation: 0.0,
            readout: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Shots,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Run {
    pub delta_q: f64,
    pub t_max: f64,
    pub n_points: usize,
    pub shots: usize,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for Run {
    fn default() -> Self {
        Self {
            delta_q: 160.0,
            t_max: 6.0,
            n_points: 61,
            shots: DEFAULT_SHOTS,
            seed: 0,
            mode: Mode::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrotterMode {
    Linear,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Trotter {
    pub mode: TrotterMode,
    pub dt_target: f64,
    pub m_const: usize,
}

impl Default for Trotter {
    fn default() -> Self {
        Self {
            mode: TrotterMode::Linear,
            dt_target: 0.4,
            m_const: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coupling {
    PerSite,
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Heom {
    pub depth: usize,
    pub matsubara: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub terminator: bool,
    pub coupling: Coupling,
}

impl Default for Heom {
    fn default() -> Self {
        let d = HeomConfig::default();
        Self {
            depth: d.depth,
            matsubara: d.matsubara,
            rel_tol: d.rel_tol,
            abs_tol: d.abs_tol,
            terminator: d.terminator,
            coupling: Coupling::PerSite,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ttm {
    pub train_t0: f64,
    pub train_dt: f64,
    pub train_n: usize,
    pub t_extend: f64,
}

impl Default for Ttm {
    fn default() -> Self {
        Self {
            train_t0: 0.1,
            train_dt: 0.05,
            train_n: 69,
            t_extend: 9.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Calib {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub n_lambda: usize,
    pub j_min: f64,
    pub j_max: f64,
    pub n_j: usize,
    pub refine_iterations: usize,
    /// HEOM truncation used while fitting.
    pub depth: usize,
    pub matsubara: usize,
    /// Dissipation densities swept by `calib-line`.
    pub delta_q: Vec<f64>,
    /// Per-gate depolarizing probability for `calib-line` and `fit-heom`;
    /// `noise.depol1`/`noise.depol2` are used when absent.
    pub depol: Option<f64>,
    /// Reorganization energy targeted by the closed-loop check.
    pub lambda_target: f64,
}

impl Default for Calib {
    fn default() -> Self {
        let s = SearchGrid::default();
        Self {
            lambda_min: s.lambda.0,
            lambda_max: s.lambda.1,
            n_lambda: s.n_lambda,
            j_min: s.j.0,
            j_max: s.j.1,
            n_j: s.n_j,
            refine_iterations: s.refine_iterations,
            depth: s.heom.depth,
            matsubara: s.heom.matsubara,
            delta_q: vec![100.0, 200.0, 300.0, 400.0],
            depol: Some(5e-5),
            lambda_target: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyModelName {
    SiteEnergies,
    GibbsOfH,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Postproc {
    pub energy_model: EnergyModelName,
    /// Overrides the fitted decay rate in the equilibrium correction.
    pub alpha: Option<f64>,
}

impl Default for Postproc {
    fn default() -> Self {
        Self {
            energy_model: EnergyModelName::SiteEnergies,
            alpha: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scan {
    pub sequence: String,
    pub reps: usize,
    /// Polar and azimuthal angle of the initial Bloch vector.
    pub theta: f64,
    pub phi: f64,
}

impl Default for Scan {
    fn default() -> Self {
        Self {
            sequence: "xzxzzsq".into(),
            reps: 100,
            theta: std::f64::consts::FRAC_PI_2,
            phi: 0.0,
        }
    }
}

fn invalid(path: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {message}"))
}

fn check(path: &str, ok: bool, message: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(invalid(path, message))
    }
}

impl RunConfig {
    /// Reads a TOML file (or the defaults when `path` is `None`), applies
    /// `key=value` overrides with dotted keys and validates the result.
    pub fn load(
        path: Option<&Path>,
        overrides: &[String],
        seed: Option<u64>,
    ) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let mut cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        if let Some(seed) = seed {
            cfg.run.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        check(
            "system.epsilon",
            finite_nonneg(self.system.epsilon),
            "must be finite and >= 0",
        )?;
        check("system.j", self.system.j.is_finite(), "must be finite")?;
        check(
            "bath.lambda",
            finite_nonneg(self.bath.lambda),
            "must be finite and >= 0",
        )?;
        check(
            "bath.gamma",
            self.bath.gamma.is_finite() && self.bath.gamma > 0.0,
            "must be > 0",
        )?;
        check(
            "bath.kT",
            self.bath.kt.is_finite() && self.bath.kt > 0.0,
            "must be > 0",
        )?;
        check(
            "noise.depol1",
            prob(self.noise.depol1),
            "must lie in [0, 1]",
        )?;
        check(
            "noise.depol2",
            prob(self.noise.depol2),
            "must lie in [0, 1]",
        )?;
        check(
            "noise.overrotation",
            self.noise.overrotation.is_finite(),
            "must be finite",
        )?;
        check(
            "noise.readout",
            prob(self.noise.readout),
            "must lie in [0, 1]",
        )?;
        check(
            "run.delta_q",
            finite_nonneg(self.run.delta_q),
            "must be finite and >= 0",
        )?;
        check(
            "run.t_max",
            self.run.t_max.is_finite() && self.run.t_max > 0.0,
            "must be > 0",
        )?;
        check("run.n_points", self.run.n_points >= 2, "must be >= 2")?;
        check("run.shots", self.run.shots >= 1, "must be >= 1")?;
        check(
            "trotter.dt_target",
            self.trotter.dt_target.is_finite() && self.trotter.dt_target > 0.0,
            "must be > 0",
        )?;
        check("trotter.m_const", self.trotter.m_const >= 1, "must be >= 1")?;
        check("heom.depth", self.heom.depth >= 1, "must be >= 1")?;
        check("heom.rel_tol", self.heom.rel_tol > 0.0, "must be > 0")?;
        check("heom.abs_tol", self.heom.abs_tol > 0.0, "must be > 0")?;
        check(
            "ttm.train_t0",
            finite_nonneg(self.ttm.train_t0),
            "must be finite and >= 0",
        )?;
        check(
            "ttm.train_dt",
            self.ttm.train_dt.is_finite() && self.ttm.train_dt > 0.0,
            "must be > 0",
        )?;
        check("ttm.train_n", self.ttm.train_n >= 2, "must be >= 2")?;
        check(
            "ttm.t_extend",
            self.ttm.t_extend
                >= self.ttm.train_t0 + self.ttm.train_dt * (self.ttm.train_n - 1) as f64 - 1e-9,
            "must not end before the training window",
        )?;
        check(
            "calib.lambda_min",
            finite_nonneg(self.calib.lambda_min) && self.calib.lambda_min <= self.calib.lambda_max,
            "must satisfy 0 <= lambda_min <= lambda_max",
        )?;
        check(
            "calib.lambda_max",
            self.calib.lambda_max.is_finite(),
            "must be finite",
        )?;
        check(
            "calib.j_min",
            self.calib.j_min.is_finite() && self.calib.j_min <= self.calib.j_max,
            "must satisfy j_min <= j_max",
        )?;
        check(
            "calib.j_max",
            self.calib.j_max.is_finite(),
            "must be finite",
        )?;
        check("calib.n_lambda", self.calib.n_lambda >= 1, "must be >= 1")?;
        check("calib.n_j", self.calib.n_j >= 1, "must be >= 1")?;
        check("calib.depth", self.calib.depth >= 1, "must be >= 1")?;
        check(
            "calib.delta_q",
            self.calib.delta_q.iter().all(|&d| finite_nonneg(d)),
            "entries must be finite and >= 0",
        )?;
        if let Some(p) = self.calib.depol {
            check("calib.depol", prob(p), "must lie in [0, 1]")?;
        }
        check(
            "calib.lambda_target",
            finite_nonneg(self.calib.lambda_target),
            "must be finite and >= 0",
        )?;
        if let Some(a) = self.postproc.alpha {
            check(
                "postproc.alpha",
                finite_nonneg(a),
                "must be finite and >= 0",
            )?;
        }
        self.scan_sequence()?;
        Ok(())
    }

    pub fn system(&self) -> Result<SystemParams, CliError> {
        SystemParams::new(self.system.epsilon, self.system.j).map_err(|e| invalid("system", e))
    }

    pub fn bath(&self) -> Result<BathParams, CliError> {
        BathParams::new(self.bath.lambda, self.bath.gamma, self.bath.kt)
            .map_err(|e| invalid("bath", e))
    }

    pub fn noise(&self) -> NoiseConfig {
        NoiseConfig {
            depol_1q: self.noise.depol1,
            depol_2q: self.noise.depol2,
            overrotation_x: self.noise.overrotation,
            readout_flip: self.noise.readout,
        }
    }

    /// Noise for calibration runs: `calib.depol` replaces both depolarizing
    /// rates when set.
    pub fn calib_noise(&self) -> NoiseConfig {
        let mut n = self.noise();
        if let Some(p) = self.calib.depol {
            n.depol_1q = p;
            n.depol_2q = p;
        }
        n
    }

    pub fn schedule(&self) -> TrotterSchedule {
        match self.trotter.mode {
            TrotterMode::Linear => TrotterSchedule::Linear(self.trotter.dt_target),
            TrotterMode::Constant => TrotterSchedule::Constant(self.trotter.m_const),
        }
    }

    pub fn mode(&self) -> SimulationMode {
        match self.run.mode {
            Mode::Exact => SimulationMode::Exact,
            Mode::Shots => SimulationMode::Shots {
                shots: self.run.shots,
                seed: self.run.seed,
            },
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(0.0, self.run.t_max, self.run.n_points)
    }

    pub fn heom(&self) -> HeomConfig {
        HeomConfig {
            depth: self.heom.depth,
            matsubara: self.heom.matsubara,
            rel_tol: self.heom.rel_tol,
            abs_tol: self.heom.abs_tol,
            terminator: self.heom.terminator,
            coupling: match self.heom.coupling {
                Coupling::PerSite => BathCoupling::PerSite,
                Coupling::Shared => BathCoupling::Shared,
            },
        }
    }

    pub fn energy_model(&self) -> EnergyModel {
        match self.postproc.energy_model {
            EnergyModelName::SiteEnergies => EnergyModel::SiteEnergies,
            EnergyModelName::GibbsOfH => EnergyModel::GibbsOfH,
        }
    }

    pub fn fixed_heom(&self) -> FixedHeom {
        FixedHeom {
            epsilon: self.system.epsilon,
            gamma: self.bath.gamma,
            kt: self.bath.kt,
        }
    }

    pub fn search(&self) -> SearchGrid {
        SearchGrid {
            lambda: (self.calib.lambda_min, self.calib.lambda_max),
            j: (self.calib.j_min, self.calib.j_max),
            n_lambda: self.calib.n_lambda,
            n_j: self.calib.n_j,
            refine_iterations: self.calib.refine_iterations,
            heom: HeomConfig {
                depth: self.calib.depth,
                matsubara: self.calib.matsubara,
                ..self.heom()
            },
        }
    }

    pub fn scan_sequence(&self) -> Result<IdentitySequence, CliError> {
        self.scan
            .sequence
            .parse()
            .map_err(|e| invalid("scan.sequence", e))
    }

    /// TTM training grid `t0 + k·dt`, `k = 0..n`.
    pub fn train_grid(&self) -> Vec<f64> {
        (0..self.ttm.train_n)
            .map(|k| self.ttm.train_t0 + self.ttm.train_dt * k as f64)
            .collect()
    }

    /// Index of the last extension point, `round((t_extend − t0)/dt)`.
    pub fn extend_index(&self) -> usize {
        ((self.ttm.t_extend - self.ttm.train_t0) / self.ttm.train_dt).round() as usize
    }
}

/// Sets `a.b.c = value` in `table`, parsing `value` as a TOML value and
/// falling back to a plain string.
fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{item}` is not key=value")))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!(
            "override key `{key}` is malformed"
        )));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| {
            CliError::Config(format!("override `{key}`: `{part}` is not a table"))
        })?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
