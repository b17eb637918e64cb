use std::path::Path;
use std::process::{Command, Output};

fn dimerlab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dimerlab"));
    cmd.args(args).env_remove("DIMERLAB_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn run_ok(args: &[&str]) {
    let out = dimerlab(args, &[]);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn closed_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("closed");
    run_ok(&[
        "closed",
        "--out",
        out.to_str().unwrap(),
        "--override",
        "run.t_max=6",
        "--override",
        "run.n_points=61",
    ]);
    let trace = read(&out.join("trace.csv"));
    assert_eq!(trace.lines().count(), 62);
    assert!(out.join("manifest.toml").exists());
    assert_eq!(read(&out.join("comparison.csv")).lines().count(), 62);
}

#[test]
fn noisy_populates_every_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("noisy");
    run_ok(&[
        "noisy",
        "--out",
        out.to_str().unwrap(),
        "--override",
        "run.delta_q=160",
    ]);
    let trace = read(&out.join("trace.csv"));
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,p1_raw,p2_raw,p1_leak,p1_norm,p1_fixed"
    );
    for line in lines {
        let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields.len(), 6);
        assert!(fields[1..].iter().all(|v| (0.0..=1.0).contains(v)));
    }
    let rho = read(&out.join("rho.csv"));
    assert!(rho.starts_with("t,re00,im00,re01,im01,re10,im10,re11,im11\n"));
    let manifest: toml::Table = read(&out.join("manifest.toml")).parse().unwrap();
    assert_eq!(manifest["meta"]["command"].as_str(), Some("noisy"));
    assert_eq!(manifest["config"]["run"]["delta_q"].as_float(), Some(160.0));
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    run_ok(&[
        "noisy",
        "--out",
        first.to_str().unwrap(),
        "--override",
        "run.mode=shots",
        "--seed",
        "11",
    ]);
    let manifest: toml::Table = read(&first.join("manifest.toml")).parse().unwrap();
    let config = dir.path().join("again.toml");
    std::fs::write(&config, toml::to_string(&manifest["config"]).unwrap()).unwrap();
    let second = dir.path().join("b");
    run_ok(&[
        "noisy",
        "--out",
        second.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(
        read(&first.join("trace.csv")),
        read(&second.join("trace.csv"))
    );

    let third = dir.path().join("c");
    run_ok(&[
        "noisy",
        "--out",
        third.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "12",
    ]);
    assert_ne!(
        read(&first.join("trace.csv")),
        read(&third.join("trace.csv"))
    );
}

#[test]
fn ttm_extend_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ttm");
    run_ok(&["ttm-extend", "--out", out.to_str().unwrap()]);
    let ext = read(&out.join("extended.csv"));
    assert_eq!(ext.lines().count(), 180);
    let first: f64 = ext
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    let last: f64 = ext
        .lines()
        .last()
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((first - 0.1).abs() < 1e-12 && (last - 9.0).abs() < 1e-9);
}

#[test]
fn heom_and_scan_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let heom = dir.path().join("heom");
    run_ok(&[
        "heom",
        "--out",
        heom.to_str().unwrap(),
        "--override",
        "heom.depth=3",
        "--override",
        "heom.matsubara=2",
        "--override",
        "run.n_points=11",
    ]);
    assert_eq!(read(&heom.join("trace.csv")).lines().count(), 12);
    let scan = dir.path().join("scan");
    run_ok(&[
        "identity-scan",
        "--out",
        scan.to_str().unwrap(),
        "--override",
        "scan.reps=10",
    ]);
    let bloch = read(&scan.join("bloch.csv"));
    assert!(bloch.starts_with("rep,x,y,z,radius\n"));
    assert_eq!(bloch.lines().count(), 12);
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "[run]\nn_points = 9\nt_max = 1.0\n").unwrap();
    let out = dir.path().join("o");
    run_ok(&[
        "closed",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(read(&out.join("trace.csv")).lines().count(), 10);
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = dimerlab(
        &[
            "closed",
            "--out",
            out.to_str().unwrap(),
            "--override",
            "run.n_points=1",
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.n_points"));
    assert_eq!(dimerlab(&["nonsense"], &[]).status.code(), Some(1));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[system]\nepsilon = \"high\"\n").unwrap();
    let o = dimerlab(&["closed", "--config", bad.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
    let o = dimerlab(
        &["closed", "--out", out.to_str().unwrap()],
        &[("DIMERLAB_THREADS", "0")],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // p1 vanishes at the first grid point, so zero-time normalization fails.
    let out = dir.path().join("x");
    let o = dimerlab(
        &[
            "noisy",
            "--out",
            out.to_str().unwrap(),
            "--override",
            "noise.readout=1.0",
            "--override",
            "run.mode=shots",
        ],
        &[],
    );
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn plot_overlays_and_rejects_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim.csv");
    let heom = dir.path().join("heom.csv");
    std::fs::write(&sim, "t,p1_raw\n0,1\n1,0.5\n").unwrap();
    std::fs::write(&heom, "t,p1_raw\n0,1\n1,0.6\n").unwrap();
    let svg = dir.path().join("fig.svg");
    run_ok(&[
        "plot",
        sim.to_str().unwrap(),
        heom.to_str().unwrap(),
        "--out",
        svg.to_str().unwrap(),
    ]);
    let text = read(&svg);
    assert_eq!(text.matches("<polyline").count(), 2);
    assert!(text.contains(">sim</text>") && text.contains(">heom</text>"));
    run_ok(&[
        "plot",
        sim.to_str().unwrap(),
        heom.to_str().unwrap(),
        "--out",
        dir.path().join("again.svg").to_str().unwrap(),
    ]);
    assert_eq!(text, read(&dir.path().join("again.svg")));

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let target = dir.path().join("none.svg");
    let o = dimerlab(
        &[
            "plot",
            empty.to_str().unwrap(),
            "--out",
            target.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!target.exists());

    let broken = dir.path().join("broken.csv");
    std::fs::write(&broken, "t,p1_raw\n0,1\n1,abc\n").unwrap();
    let o = dimerlab(
        &[
            "plot",
            broken.to_str().unwrap(),
            "--out",
            target.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":3:"));
}
