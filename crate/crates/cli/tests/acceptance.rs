//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit status
//! when any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;

use dimerlab::commands;
use dimerlab::RunConfig;
use dimerlab_core::circuit::{
    identity_block, identity_gate_scan, run_dynamics, IdentitySequence, NoiseConfig,
    SimulationMode, TrotterSchedule, TwoQubitDensity,
};
use dimerlab_core::heom::{heom_propagate, BathParams, HeomConfig};
use dimerlab_core::postproc::{equilibrium_correct, fit_damped_oscillation};
use dimerlab_core::qdyn::{
    build_hamiltonian, gibbs_population, propagator, rabi_population, DensityMatrix2, EnergyModel,
    SystemParams,
};
use dimerlab_core::trace::{uniform_grid, PopulationTrace};
use dimerlab_core::ttm::{
    build_dynamical_maps, canonical_states, extend_dynamics, reconstruct, transfer_tensors,
    TrajectorySet,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(checks: &[(bool, String)]) -> Outcome {
    Outcome {
        pass: checks.iter().all(|c| c.0),
        detail: checks
            .iter()
            .map(|(ok, s)| format!("{}{s}", if *ok { "" } else { "✗ " }))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn dimer() -> SystemParams {
    SystemParams::new(1.5, 1.0).unwrap()
}

fn closed_error(dt: f64, grid: &[f64]) -> f64 {
    let params = dimer();
    let tr = run_dynamics(
        &params,
        0.0,
        TrotterSchedule::Linear(dt),
        &NoiseConfig::noiseless(),
        grid,
        SimulationMode::Exact,
    )
    .unwrap();
    grid.iter()
        .zip(&tr.p1)
        .map(|(&t, p)| (p - rabi_population(&params, t)).abs())
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let grid = uniform_grid(0.0, 6.0, 61);
    let fine = closed_error(0.05, &grid);
    let errs: Vec<f64> = [0.4, 0.2, 0.1, 0.05]
        .iter()
        .map(|&dt| closed_error(dt, &grid))
        .collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let mut checks = vec![(
        fine <= 1e-3,
        format!("max error at dt 0.05 = {fine:.3e} (≤ 1e-3)"),
    )];
    checks.push((
        errs.iter().all(|e| e.is_finite()) && errs.windows(2).all(|w| w[1] < w[0]),
        format!(
            "errors {:.3e}, {:.3e}, {:.3e}, {:.3e} decreasing",
            errs[0], errs[1], errs[2], errs[3]
        ),
    ));
    checks.push((
        ratios.iter().all(|r| (1.5..=3.0).contains(r)),
        format!(
            "halving ratios {:.2}, {:.2}, {:.2} (in [1.5, 3])",
            ratios[0], ratios[1], ratios[2]
        ),
    ));
    outcome(&checks)
}

fn mixed_two_qubit(seed: f64) -> TwoQubitDensity {
    let a = Matrix4::<Complex64>::from_fn(|r, c| {
        let x = seed + 1.7 * r as f64 + 0.61 * c as f64;
        Complex64::new(x.sin(), (1.3 * x).cos())
    });
    let m = a * a.adjoint();
    let tr = m.trace();
    TwoQubitDensity::from_matrix_unchecked(m / tr)
}

fn criterion_2() -> Outcome {
    let block = identity_block();
    let noiseless = NoiseConfig::noiseless();
    let mut states: Vec<TwoQubitDensity> = canonical_states()
        .iter()
        .map(TwoQubitDensity::encode)
        .collect();
    states.push(TwoQubitDensity::maximally_mixed());
    states.extend((0..4).map(|k| mixed_two_qubit(0.3 + k as f64)));
    let two_qubit = states
        .iter()
        .map(|s| {
            let mut r = *s;
            for _ in 0..100 {
                r = block.apply(&r, &noiseless);
            }
            (r.matrix() - s.matrix()).camax()
        })
        .fold(0.0, f64::max);

    let mut one_qubit: f64 = 0.0;
    for (theta, phi) in [
        (0.0, 0.0),
        (1.0, 0.4),
        (std::f64::consts::FRAC_PI_2, 2.0),
        (2.5, -1.0),
    ] {
        let b = identity_gate_scan(IdentitySequence::XzxzzSq, 100, theta, phi, &noiseless);
        for v in &b {
            for k in 0..3 {
                one_qubit = one_qubit.max((v[k] - b[0][k]).abs());
            }
        }
    }

    let p = 0.002;
    let b = identity_gate_scan(
        IdentitySequence::XzxzzSq,
        100,
        std::f64::consts::FRAC_PI_2,
        0.0,
        &NoiseConfig::depolarizing(p),
    );
    let radius = |v: &[f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let expected = radius(&b[0]) * (1.0 - 4.0 * p / 3.0).powi(1000);
    let got = radius(&b[100]);
    outcome(&[
        (
            two_qubit <= 1e-12,
            format!("two-qubit block deviation {two_qubit:.1e}"),
        ),
        (
            one_qubit <= 1e-12,
            format!("single-qubit scan deviation {one_qubit:.1e}"),
        ),
        (
            (got - expected).abs() <= 1e-9,
            format!("radius after 100 reps {got:.12} vs {expected:.12}"),
        ),
    ])
}

fn max_p1_diff(a: &[DensityMatrix2], b: &[DensityMatrix2]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.populations().0 - y.populations().0).abs())
        .fold(0.0, f64::max)
}

fn trace_defect(states: &[DensityMatrix2]) -> f64 {
    states
        .iter()
        .map(|s| (s.matrix().trace().re - 1.0).abs())
        .fold(0.0, f64::max)
}

fn criterion_3() -> Outcome {
    let params = dimer();
    let grid = uniform_grid(0.0, 10.0, 200);
    let rho0 = DensityMatrix2::site1();
    let h = build_hamiltonian(&params);

    let free = BathParams::new(0.0, 11.0, 1.0).unwrap();
    let cfg = HeomConfig::default();
    let free_run = heom_propagate(&params, &[free], &cfg, &rho0, &grid).unwrap();
    let unitary = grid
        .iter()
        .zip(&free_run)
        .map(|(&t, s)| {
            let u = propagator(&h, t);
            (s.matrix() - u * rho0.matrix() * u.adjoint()).camax()
        })
        .fold(0.0, f64::max);

    let bath = BathParams::new(0.5, 11.0, 1.0).unwrap();
    let run = |depth: usize, matsubara: usize| {
        let cfg = HeomConfig {
            depth,
            matsubara,
            ..HeomConfig::default()
        };
        heom_propagate(&params, &[bath], &cfg, &rho0, &grid).unwrap()
    };
    let l4 = run(4, 5);
    let l6 = run(6, 5);
    let k7 = run(4, 7);
    let depth = max_p1_diff(&l4, &l6);
    let matsubara = max_p1_diff(&l4, &k7);
    let defect = [&free_run, &l4, &l6, &k7]
        .iter()
        .map(|r| trace_defect(r))
        .fold(0.0, f64::max);
    outcome(&[
        (unitary <= 1e-6, format!("λ=0 vs unitary {unitary:.1e}")),
        (depth < 1e-4, format!("L 4→6 max |Δp1| {depth:.1e}")),
        (matsubara < 1e-3, format!("K 5→7 max |Δp1| {matsubara:.1e}")),
        (defect <= 1e-8, format!("trace defect {defect:.1e}")),
    ])
}

fn apply_kraus(ops: &[Matrix2<Complex64>], rho: &Matrix2<Complex64>) -> Matrix2<Complex64> {
    ops.iter().map(|k| k * rho * k.adjoint()).sum()
}

fn criterion_4() -> Outcome {
    // A fixed CPTP step: rotation followed by amplitude damping.
    let h = build_hamiltonian(&dimer());
    let u = propagator(&h, 0.1);
    let g: f64 = 0.07;
    let zero = Complex64::new(0.0, 0.0);
    let k0 = Matrix2::new(
        Complex64::from(1.0),
        zero,
        zero,
        Complex64::from((1.0 - g).sqrt()),
    );
    let k1 = Matrix2::new(zero, Complex64::from(g.sqrt()), zero, zero);
    let kraus = [k0 * u, k1 * u];
    let n = 40;
    let trajs: Vec<Vec<DensityMatrix2>> = canonical_states()
        .iter()
        .map(|s| {
            let mut out = vec![*s];
            for _ in 0..n {
                let next = apply_kraus(&kraus, out.last().unwrap().matrix());
                out.push(DensityMatrix2::from_matrix_unchecked(next));
            }
            out
        })
        .collect();
    let train = 10;
    let short: Vec<Vec<DensityMatrix2>> = trajs.iter().map(|t| t[..=train].to_vec()).collect();
    let set = TrajectorySet::new(0.1, 0.0, short.clone()).unwrap();
    let tensors = transfer_tensors(&build_dynamical_maps(&set).unwrap()).unwrap();
    let tail = tensors.norms()[1..].iter().cloned().fold(0.0, f64::max);
    let ext = extend_dynamics(&tensors, &short[0], n).unwrap();
    let ext_err = ext
        .states
        .iter()
        .zip(&trajs[0])
        .map(|(a, b)| (a.matrix() - b.matrix()).camax())
        .fold(0.0, f64::max);

    // Non-semigroup data: Trotterized noisy circuit on a grid offset from 0.
    let params = dimer();
    let model = dimerlab_core::circuit::CircuitModel::new(
        params,
        120.0,
        TrotterSchedule::Linear(0.4),
        NoiseConfig::depolarizing(0.001),
    )
    .unwrap();
    let grid: Vec<f64> = (0..=20).map(|k| 0.1 + 0.05 * k as f64).collect();
    let circuit: Vec<Vec<DensityMatrix2>> = canonical_states()
        .iter()
        .map(|s| {
            model
                .run_from(s, &grid, SimulationMode::Exact)
                .unwrap()
                .rho_series
                .unwrap()
        })
        .collect();
    let set = TrajectorySet::from_samples(&grid, circuit.clone()).unwrap();
    let tensors = transfer_tensors(&build_dynamical_maps(&set).unwrap()).unwrap();
    let mut recon: f64 = 0.0;
    for traj in &circuit {
        // The maps act on the state at the first grid point.
        for k in 1..=tensors.n_k() {
            let r = reconstruct(&tensors, &traj[0], k).unwrap();
            recon = recon.max((r.matrix() - traj[k].matrix()).camax());
        }
    }
    outcome(&[
        (
            tail <= 1e-12,
            format!("semigroup max ‖T_n‖ (n ≥ 2) {tail:.1e}"),
        ),
        (
            ext_err <= 1e-10,
            format!("semigroup extension error {ext_err:.1e}"),
        ),
        (
            recon <= 1e-9,
            format!("reconstruction of training maps {recon:.1e}"),
        ),
    ])
}

fn tempdir(name: &str) -> std::path::PathBuf {
    let dir =
        std::env::temp_dir().join(format!("dimerlab-acceptance-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn criterion_5() -> Outcome {
    let cfg = RunConfig::load(
        None,
        &[
            "run.delta_q=200".into(),
            "noise.depol1=0.002".into(),
            "noise.depol2=0.002".into(),
        ],
        None,
    )
    .unwrap();
    let dir = tempdir("ttm");
    let report = commands::ttm_extend(&cfg, &dir).unwrap();
    let rows = std::fs::read_to_string(dir.join("extended.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    let _ = std::fs::remove_dir_all(&dir);
    outcome(&[
        (
            report.n_k == 68 && rows == 179,
            format!("{} training steps, {rows} rows to t = 9", report.n_k),
        ),
        (
            report.max_abs_error <= 0.05,
            format!(
                "max |Δp1| vs direct simulation {:.2e}",
                report.max_abs_error
            ),
        ),
    ])
}

fn criterion_6() -> Outcome {
    let params = dimer();
    let q = gibbs_population(&params, 1.0, EnergyModel::SiteEnergies).unwrap();
    let q_exact = 1.0 / (1.0 + 3f64.exp());

    let tr = PopulationTrace::new(
        vec![0.0, 1.0, 1e3],
        vec![0.83, 0.4, 0.6],
        vec![0.17, 0.6, 0.4],
    )
    .unwrap();
    let fixed = equilibrium_correct(&tr, 0.7, q).unwrap();

    let grid = uniform_grid(0.0, 6.0, 121);
    let (alpha, omega, baseline) = (0.5, 3.6, 0.3);
    let p1: Vec<f64> = grid
        .iter()
        .map(|&t| baseline + 0.25 * (-alpha * t).exp() * (omega * t).cos())
        .collect();
    let p2: Vec<f64> = p1.iter().map(|v| 1.0 - v).collect();
    let fit = fit_damped_oscillation(&PopulationTrace::new(grid, p1, p2).unwrap()).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    outcome(&[
        ((q - q_exact).abs() < 1e-12, format!("Q = {q:.6}")),
        (fixed.p1[0] == 0.83, "t = 0 unchanged".to_string()),
        ((fixed.p1[2] - q).abs() < 1e-12, "t → ∞ gives Q".to_string()),
        (
            rel(fit.alpha, alpha) < 0.01
                && rel(fit.omega, omega) < 0.01
                && rel(fit.baseline, baseline) < 0.01,
            format!(
                "fit α {:.4} ω {:.4} baseline {:.4}",
                fit.alpha, fit.omega, fit.baseline
            ),
        ),
    ])
}

fn criterion_7() -> Outcome {
    let cfg = RunConfig::default();
    let dir = tempdir("calib");
    let report = commands::calib_line(&cfg, &dir).unwrap();
    let _ = std::fs::remove_dir_all(&dir);
    let increasing = report.lambda_h.windows(2).all(|w| w[1] > w[0]);
    let lambdas: Vec<String> = report.lambda_h.iter().map(|l| format!("{l:.3}")).collect();
    outcome(&[
        (
            increasing,
            format!("λ_H over δ_Q {:?}: {}", report.delta_q, lambdas.join(", ")),
        ),
        (
            report.lambda_line.r_squared >= 0.9,
            format!("r² {:.4}", report.lambda_line.r_squared),
        ),
        (
            report.relative_error <= 0.15,
            format!(
                "closed loop λ {:.3} at δ_Q {:.1} → refit {:.3} ({:.1}%)",
                report.lambda_target,
                report.delta_interpolated,
                report.lambda_refit,
                100.0 * report.relative_error
            ),
        ),
    ])
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "svg"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn criterion_8() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_dimerlab");
    let root = tempdir("determinism");
    let small = [
        "run.n_points=21",
        "run.t_max=4",
        "calib.n_lambda=3",
        "calib.n_j=3",
        "calib.refine_iterations=4",
        "calib.depth=3",
        "calib.matsubara=2",
        "calib.delta_q=[150.0, 300.0]",
        "heom.depth=3",
        "heom.matsubara=3",
        "run.mode=shots",
    ];
    let mut checks = Vec::new();
    let commands = [
        "closed",
        "noisy",
        "heom",
        "fit-heom",
        "calib-line",
        "ttm-extend",
        "identity-scan",
    ];
    for cmd in commands {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = root.join(format!("{cmd}-{rep}"));
            let mut c = Command::new(bin);
            c.arg(cmd).arg("--out").arg(&out).arg("--seed").arg("42");
            for o in small {
                c.arg("--override").arg(o);
            }
            let status = c.output().unwrap();
            if !status.status.success() {
                checks.push((
                    false,
                    format!(
                        "{cmd} failed: {}",
                        String::from_utf8_lossy(&status.stderr).trim()
                    ),
                ));
                break;
            }
            outputs.push(csv_files(&out));
        }
        if outputs.len() == 2 {
            let same = outputs[0] == outputs[1] && !outputs[0].is_empty();
            checks.push((same, format!("{cmd} ({} files)", outputs[0].len())));
        }
    }
    let trace = root.join("noisy-0").join("trace.csv");
    let mut svgs = Vec::new();
    for rep in 0..2 {
        let out = root.join(format!("plot-{rep}.svg"));
        let ok = Command::new(bin)
            .args([
                "plot",
                trace.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap()
            .success();
        svgs.push(if ok { std::fs::read(&out).ok() } else { None });
    }
    checks.push((svgs[0].is_some() && svgs[0] == svgs[1], "plot".to_string()));
    let _ = std::fs::remove_dir_all(&root);
    let pass = checks.iter().all(|c| c.0);
    let mut o = outcome(&checks);
    if pass {
        o.detail = format!("byte-identical reruns: {}", o.detail);
    }
    o
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        (
            "closed-system correctness",
            Duration::from_secs(10),
            criterion_1,
        ),
        ("identity-gate algebra", Duration::from_secs(5), criterion_2),
        ("HEOM oracle", Duration::from_secs(60), criterion_3),
        ("TTM exactness", Duration::from_secs(1), criterion_4),
        ("TTM extension", Duration::from_secs(120), criterion_5),
        ("post-processing", Duration::from_secs(5), criterion_6),
        (
            "calibration pipeline",
            Duration::from_secs(600),
            criterion_7,
        ),
        ("determinism", Duration::from_secs(600), criterion_8),
    ];
    let mut failures = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut result = check();
        let elapsed = start.elapsed();
        if elapsed > *budget {
            result.pass = false;
            result
                .detail
                .push_str(&format!("; ✗ runtime over {:.0?} budget", budget));
        }
        if !result.pass {
            failures += 1;
        }
        println!(
            "{} [{}] {name}: {} ({:.2}s)",
            if result.pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
