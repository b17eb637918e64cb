use std::path::Path;

use serde::Serialize;

use dimerlab_core::postproc::Processed;
use dimerlab_core::qdyn::DensityMatrix2;
use dimerlab_core::trace::PopulationTrace;

use crate::{CliError, RunConfig};

/// 17 significant digits, enough for a lossless round trip.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

pub const TRACE_HEADER: [&str; 6] = ["t", "p1_raw", "p2_raw", "p1_leak", "p1_norm", "p1_fixed"];

/// `trace.csv`; without `processed` the corrected columns repeat `p1_raw`.
pub fn write_trace(
    path: &Path,
    raw: &PopulationTrace,
    processed: Option<&Processed>,
) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = (0..raw.len())
        .map(|i| {
            let (leak, norm, fixed) = match processed {
                Some(p) => (p.leak.p1[i], p.normalized.trace.p1[i], p.fixed.p1[i]),
                None => (raw.p1[i], raw.p1[i], raw.p1[i]),
            };
            vec![
                fmt(raw.times[i]),
                fmt(raw.p1[i]),
                fmt(raw.p2[i]),
                fmt(leak),
                fmt(norm),
                fmt(fixed),
            ]
        })
        .collect();
    write_csv(path, &TRACE_HEADER, &rows)
}

pub const RHO_HEADER: [&str; 9] = [
    "t", "re00", "im00", "re01", "im01", "re10", "im10", "re11", "im11",
];

/// Density matrices, row-major real/imaginary parts.
pub fn write_rho(path: &Path, times: &[f64], states: &[DensityMatrix2]) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = times
        .iter()
        .zip(states)
        .map(|(&t, s)| {
            let m = s.matrix();
            let mut row = vec![fmt(t)];
            for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                row.push(fmt(m[(r, c)].re));
                row.push(fmt(m[(r, c)].im));
            }
            row
        })
        .collect();
    write_csv(path, &RHO_HEADER, &rows)
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
}

#[derive(Serialize)]
struct Manifest<'a, R: Serialize> {
    meta: Meta<'a>,
    config: &'a RunConfig,
    results: &'a R,
}

/// `manifest.toml`: command, version, seed, the effective configuration and
/// the command's scalar results.
pub fn write_manifest<R: Serialize>(
    dir: &Path,
    command: &str,
    cfg: &RunConfig,
    results: &R,
) -> Result<(), CliError> {
    let manifest = Manifest {
        meta: Meta {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.run.seed,
        },
        config: cfg,
        results,
    };
    let text =
        toml::to_string(&manifest).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
    write_text(&dir.join("manifest.toml"), &text)
}
