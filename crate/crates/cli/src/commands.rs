use std::path::Path;

use serde::Serialize;

use dimerlab_core::calib::{
    fit_heom_params, interpolate_delta, linear_fit, HeomFitResult, LinearFit,
};
use dimerlab_core::circuit::{
    identity_gate_scan, run_dynamics, CircuitModel, NoiseConfig, SimulationMode,
};
use dimerlab_core::heom::{heom_population_trace, BathParams};
use dimerlab_core::postproc::{process, reconstruct_offdiagonals, Processed};
use dimerlab_core::qdyn::{gibbs_population, rabi_population, DensityMatrix2, EnergyModel};
use dimerlab_core::trace::PopulationTrace;
use dimerlab_core::ttm::{
    build_dynamical_maps, canonical_states, extend_dynamics, transfer_tensors, TrajectorySet,
};

use crate::output::{
    create_dir, fmt, write_csv, write_manifest, write_rho, write_text, write_trace,
};
use crate::{CliError, Command, RunConfig};

/// Runs `command` and writes its files plus `manifest.toml` into `out`.
pub fn run_command(command: &Command, cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    create_dir(out)?;
    let name = command.name();
    match command {
        Command::Closed => write_manifest(out, name, cfg, &closed(cfg, out)?),
        Command::Noisy => write_manifest(out, name, cfg, &noisy(cfg, out)?),
        Command::Heom => write_manifest(out, name, cfg, &heom(cfg, out)?),
        Command::FitHeom => write_manifest(out, name, cfg, &fit_heom(cfg, out)?),
        Command::CalibLine => write_manifest(out, name, cfg, &calib_line(cfg, out)?),
        Command::TtmExtend => write_manifest(out, name, cfg, &ttm_extend(cfg, out)?),
        Command::IdentityScan => write_manifest(out, name, cfg, &identity_scan(cfg, out)?),
        Command::Plot { .. } => Err(CliError::Config(
            "plot takes CSV files, not a config".into(),
        )),
    }
}

fn equilibrium_target(cfg: &RunConfig) -> Result<f64, CliError> {
    Ok(gibbs_population(
        &cfg.system()?,
        cfg.bath.kt,
        cfg.energy_model(),
    )?)
}

/// A circuit run at `delta_q` with `noise`, post-processed.
pub fn simulate_processed(
    cfg: &RunConfig,
    noise: &NoiseConfig,
    delta_q: f64,
) -> Result<(PopulationTrace, Processed), CliError> {
    let raw = run_dynamics(
        &cfg.system()?,
        delta_q,
        cfg.schedule(),
        noise,
        &cfg.grid(),
        cfg.mode(),
    )?;
    let processed = process(&raw, equilibrium_target(cfg)?, cfg.postproc.alpha)?;
    Ok((raw, processed))
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosedReport {
    pub max_abs_error: f64,
}

pub fn closed(cfg: &RunConfig, out: &Path) -> Result<ClosedReport, CliError> {
    let params = cfg.system()?;
    let grid = cfg.grid();
    let raw = run_dynamics(
        &params,
        0.0,
        cfg.schedule(),
        &NoiseConfig::noiseless(),
        &grid,
        SimulationMode::Exact,
    )?;
    let processed = process(&raw, equilibrium_target(cfg)?, cfg.postproc.alpha)?;
    write_trace(&out.join("trace.csv"), &raw, Some(&processed))?;
    let mut max_abs_error: f64 = 0.0;
    let rows: Vec<Vec<String>> = grid
        .iter()
        .zip(&raw.p1)
        .map(|(&t, &p)| {
            let exact = rabi_population(&params, t);
            max_abs_error = max_abs_error.max((p - exact).abs());
            vec![fmt(t), fmt(p), fmt(exact), fmt((p - exact).abs())]
        })
        .collect();
    write_csv(
        &out.join("comparison.csv"),
        &["t", "p1_circuit", "p1_rabi", "abs_error"],
        &rows,
    )?;
    Ok(ClosedReport { max_abs_error })
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub alpha: f64,
    pub omega: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub baseline: f64,
    pub rms: f64,
}

impl From<&Processed> for FitReport {
    fn from(p: &Processed) -> Self {
        Self {
            alpha: p.fit.alpha,
            omega: p.fit.omega,
            amplitude: p.fit.amplitude,
            phase: p.fit.phase,
            baseline: p.fit.baseline,
            rms: p.fit.rms,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NoisyReport {
    pub q: f64,
    pub normalization_clipped: usize,
    pub reconstruction_clipped: usize,
    pub reconstruction_inconsistent: usize,
    pub fit: FitReport,
}

pub fn noisy(cfg: &RunConfig, out: &Path) -> Result<NoisyReport, CliError> {
    let (raw, processed) = simulate_processed(cfg, &cfg.noise(), cfg.run.delta_q)?;
    write_trace(&out.join("trace.csv"), &raw, Some(&processed))?;
    if let Some(states) = &raw.rho_series {
        write_rho(&out.join("rho.csv"), &raw.times, states)?;
    }
    let rec =
        reconstruct_offdiagonals(&processed.normalized.trace, &processed.fit, &cfg.system()?)?;
    write_rho(&out.join("rho_reconstructed.csv"), &raw.times, &rec.states)?;
    Ok(NoisyReport {
        q: equilibrium_target(cfg)?,
        normalization_clipped: processed.normalized.clipped,
        reconstruction_clipped: rec.clipped.iter().filter(|&&c| c).count(),
        reconstruction_inconsistent: rec.inconsistent.iter().filter(|&&c| c).count(),
        fit: FitReport::from(&processed),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HeomReport {
    pub p1_final: f64,
    pub p1_gibbs: f64,
}

pub fn heom(cfg: &RunConfig, out: &Path) -> Result<HeomReport, CliError> {
    let params = cfg.system()?;
    let trace = heom_population_trace(&params, &[cfg.bath()?], &cfg.heom(), &cfg.grid())?;
    write_trace(&out.join("trace.csv"), &trace, None)?;
    if let Some(states) = &trace.rho_series {
        write_rho(&out.join("rho.csv"), &trace.times, states)?;
    }
    Ok(HeomReport {
        p1_final: trace.p1[trace.len() - 1],
        p1_gibbs: gibbs_population(&params, cfg.bath.kt, EnergyModel::GibbsOfH)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HeomFitReport {
    pub lambda_h: f64,
    pub j_h: f64,
    pub residual: f64,
    pub history: Vec<f64>,
}

impl From<&HeomFitResult> for HeomFitReport {
    fn from(f: &HeomFitResult) -> Self {
        Self {
            lambda_h: f.lambda_h,
            j_h: f.j_h,
            residual: f.residual,
            history: f.history.clone(),
        }
    }
}

/// HEOM fit of the post-processed circuit trace at `delta_q` with the
/// calibration noise.
pub fn fit_at(
    cfg: &RunConfig,
    delta_q: f64,
) -> Result<(PopulationTrace, Processed, HeomFitResult), CliError> {
    let (raw, processed) = simulate_processed(cfg, &cfg.calib_noise(), delta_q)?;
    let fit = fit_heom_params(&processed.fixed, &cfg.fixed_heom(), &cfg.search())?;
    Ok((raw, processed, fit))
}

pub fn fit_heom(cfg: &RunConfig, out: &Path) -> Result<HeomFitReport, CliError> {
    let (raw, processed, fit) = fit_at(cfg, cfg.run.delta_q)?;
    write_trace(&out.join("trace.csv"), &raw, Some(&processed))?;

    let fixed = cfg.fixed_heom();
    let params = dimerlab_core::qdyn::SystemParams::new(fixed.epsilon, fit.j_h)?;
    let bath = BathParams::new(fit.lambda_h, fixed.gamma, fixed.kt)?;
    let best = heom_population_trace(&params, &[bath], &cfg.search().heom, &raw.times)?;
    let rows: Vec<Vec<String>> = (0..raw.len())
        .map(|i| {
            vec![
                fmt(raw.times[i]),
                fmt(processed.fixed.p1[i]),
                fmt(best.p1[i]),
            ]
        })
        .collect();
    write_csv(
        &out.join("heom_fit.csv"),
        &["t", "p1_target", "p1_heom"],
        &rows,
    )?;
    let grid_rows: Vec<Vec<String>> = fit
        .grid
        .iter()
        .map(|&(l, j, r)| vec![fmt(l), fmt(j), fmt(r)])
        .collect();
    write_csv(
        &out.join("grid.csv"),
        &["lambda_h", "j_h", "residual"],
        &grid_rows,
    )?;
    Ok(HeomFitReport::from(&fit))
}

#[derive(Debug, Clone, Serialize)]
pub struct LineReport {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl From<LinearFit> for LineReport {
    fn from(f: LinearFit) -> Self {
        Self {
            slope: f.slope,
            intercept: f.intercept,
            r_squared: f.r_squared,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibLineReport {
    pub delta_q: Vec<f64>,
    pub lambda_h: Vec<f64>,
    pub j_h: Vec<f64>,
    pub residual: Vec<f64>,
    pub lambda_line: LineReport,
    pub j_line: LineReport,
    pub lambda_target: f64,
    pub delta_interpolated: f64,
    pub lambda_refit: f64,
    pub relative_error: f64,
}

pub fn calib_line(cfg: &RunConfig, out: &Path) -> Result<CalibLineReport, CliError> {
    let mut fits = Vec::with_capacity(cfg.calib.delta_q.len());
    for &dq in &cfg.calib.delta_q {
        fits.push(fit_at(cfg, dq)?.2);
    }
    let dqs = cfg.calib.delta_q.clone();
    let lambda_pairs: Vec<(f64, f64)> = dqs
        .iter()
        .zip(&fits)
        .map(|(&d, f)| (d, f.lambda_h))
        .collect();
    let j_pairs: Vec<(f64, f64)> = dqs.iter().zip(&fits).map(|(&d, f)| (d, f.j_h)).collect();
    let lambda_line = linear_fit(&lambda_pairs)?;
    let j_line = linear_fit(&j_pairs)?;

    let rows: Vec<Vec<String>> = dqs
        .iter()
        .zip(&fits)
        .map(|(&d, f)| vec![fmt(d), fmt(f.lambda_h), fmt(f.j_h), fmt(f.residual)])
        .collect();
    write_csv(
        &out.join("calib.csv"),
        &["delta_q", "lambda_h", "j_h", "residual"],
        &rows,
    )?;

    let target = cfg.calib.lambda_target;
    let delta = interpolate_delta(target, &lambda_line)?;
    let (raw, processed, refit) = fit_at(cfg, delta)?;
    write_trace(&out.join("trace.csv"), &raw, Some(&processed))?;
    let relative_error = if target > 0.0 {
        (refit.lambda_h - target).abs() / target
    } else {
        (refit.lambda_h - target).abs()
    };
    Ok(CalibLineReport {
        delta_q: dqs,
        lambda_h: fits.iter().map(|f| f.lambda_h).collect(),
        j_h: fits.iter().map(|f| f.j_h).collect(),
        residual: fits.iter().map(|f| f.residual).collect(),
        lambda_line: lambda_line.into(),
        j_line: j_line.into(),
        lambda_target: target,
        delta_interpolated: delta,
        lambda_refit: refit.lambda_h,
        relative_error,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TtmReport {
    pub n_k: usize,
    pub n_extended: usize,
    pub max_abs_error: f64,
    pub recursion_residual: f64,
    pub physicality_defect: f64,
}

/// Trains on exact-mode subspace states from the four canonical initial
/// states and extends the `|s1⟩` trajectory.
pub fn ttm_extend(cfg: &RunConfig, out: &Path) -> Result<TtmReport, CliError> {
    let model = CircuitModel::new(cfg.system()?, cfg.run.delta_q, cfg.schedule(), cfg.noise())?;
    let train = cfg.train_grid();
    let mut trajs: Vec<Vec<DensityMatrix2>> = Vec::with_capacity(4);
    for rho0 in canonical_states() {
        let tr = model.run_from(&rho0, &train, SimulationMode::Exact)?;
        trajs.push(tr.rho_series.expect("exact mode records states"));
    }
    let set = TrajectorySet::from_samples(&train, trajs.clone())?;
    let maps = build_dynamical_maps(&set)?;
    let tensors = transfer_tensors(&maps)?;
    let n_target = cfg.extend_index();
    let ext = extend_dynamics(&tensors, &trajs[0], n_target)?;

    let full: Vec<f64> = (0..=n_target)
        .map(|k| cfg.ttm.train_t0 + cfg.ttm.train_dt * k as f64)
        .collect();
    let direct = model.run(&full, SimulationMode::Exact)?;
    let direct_states = direct
        .rho_series
        .as_ref()
        .expect("exact mode records states");
    let mut max_abs_error: f64 = 0.0;
    let rows: Vec<Vec<String>> = full
        .iter()
        .zip(ext.states.iter().zip(direct_states))
        .map(|(&t, (e, d))| {
            let (p1, p2) = e.populations();
            let p1_direct = d.populations().0;
            max_abs_error = max_abs_error.max((p1 - p1_direct).abs());
            vec![
                fmt(t),
                fmt(p1),
                fmt(p2),
                fmt(p1_direct),
                fmt((p1 - p1_direct).abs()),
            ]
        })
        .collect();
    write_csv(
        &out.join("extended.csv"),
        &["t", "p1_ttm", "p2_ttm", "p1_direct", "abs_error"],
        &rows,
    )?;
    write_trace(&out.join("trace.csv"), &direct, None)?;
    write_text(&out.join("tensors.txt"), &tensors.to_text())?;
    let norm_rows: Vec<Vec<String>> = tensors
        .norms()
        .iter()
        .enumerate()
        .map(|(i, &n)| vec![(i + 1).to_string(), fmt(n)])
        .collect();
    write_csv(&out.join("tensor_norms.csv"), &["n", "norm"], &norm_rows)?;
    Ok(TtmReport {
        n_k: tensors.n_k(),
        n_extended: n_target - tensors.n_k(),
        max_abs_error,
        recursion_residual: tensors.recursion_residual(&maps),
        physicality_defect: maps.physicality_defect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub initial_radius: f64,
    pub final_radius: f64,
}

pub fn identity_scan(cfg: &RunConfig, out: &Path) -> Result<ScanReport, CliError> {
    let bloch = identity_gate_scan(
        cfg.scan_sequence()?,
        cfg.scan.reps,
        cfg.scan.theta,
        cfg.scan.phi,
        &cfg.noise(),
    );
    let radius = |v: &[f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let rows: Vec<Vec<String>> = bloch
        .iter()
        .enumerate()
        .map(|(i, v)| {
            vec![
                i.to_string(),
                fmt(v[0]),
                fmt(v[1]),
                fmt(v[2]),
                fmt(radius(v)),
            ]
        })
        .collect();
    write_csv(
        &out.join("bloch.csv"),
        &["rep", "x", "y", "z", "radius"],
        &rows,
    )?;
    Ok(ScanReport {
        initial_radius: radius(&bloch[0]),
        final_radius: radius(&bloch[bloch.len() - 1]),
    })
}
