//! Transfer tensors: dynamical maps learned from four (or more) reference
//! trajectories, their memory-kernel decomposition, and propagation beyond
//! the training window.

use std::fmt::Write as _;

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qdyn::{vectorize, DensityMatrix2, Matrix2c, Matrix4c, Vector4c};

/// Tolerance on the state invariants of trajectory data.
pub const DATA_TOL: f64 = 1e-6;
/// Largest accepted condition number of the initial-state matrix.
pub const MAX_CONDITION: f64 = 1e8;
/// Smallest trace an extension step may produce before renormalization.
pub const MIN_TRACE: f64 = 1e-6;

/// `(I+Z)/2, (I−Z)/2, (I+X)/2, (I+Y)/2`.
pub fn canonical_states() -> [DensityMatrix2; 4] {
    [
        DensityMatrix2::from_bloch(0.0, 0.0, 1.0),
        DensityMatrix2::from_bloch(0.0, 0.0, -1.0),
        DensityMatrix2::from_bloch(1.0, 0.0, 0.0),
        DensityMatrix2::from_bloch(0.0, 1.0, 0.0),
    ]
}

/// Density-matrix series on a uniform grid `t0 + k·dt`, one per initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub dt: f64,
    pub t0: f64,
    pub trajectories: Vec<Vec<DensityMatrix2>>,
    /// Set when the input grid was non-uniform and got interpolated.
    pub resampled: bool,
}

impl TrajectorySet {
    pub fn new(dt: f64, t0: f64, trajectories: Vec<Vec<DensityMatrix2>>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        if trajectories.len() < 4 {
            return Err(Error::InvalidArgument(format!(
                "need at least four trajectories, got {}",
                trajectories.len()
            )));
        }
        let len = trajectories[0].len();
        if len < 2 {
            return Err(Error::InvalidArgument(
                "trajectories need >= 2 points".into(),
            ));
        }
        for (i, traj) in trajectories.iter().enumerate() {
            if traj.len() != len {
                return Err(Error::Shape {
                    expected: len,
                    got: traj.len(),
                });
            }
            for (k, rho) in traj.iter().enumerate() {
                DensityMatrix2::with_tolerance(*rho.matrix(), DATA_TOL, DATA_TOL)
                    .map_err(|e| Error::Domain(format!("trajectory {i}, point {k}: {e}")))?;
            }
        }
        Ok(Self {
            dt,
            t0,
            trajectories,
            resampled: false,
        })
    }

    /// Builds a set from samples at `times`, interpolating linearly onto a
    /// uniform grid with the same endpoints and point count when `times`
    /// is not uniform.
    pub fn from_samples(times: &[f64], trajectories: Vec<Vec<DensityMatrix2>>) -> Result<Self> {
        crate::trace::check_grid(times)?;
        if times.len() < 2 {
            return Err(Error::InvalidArgument(
                "trajectories need >= 2 points".into(),
            ));
        }
        if let Some(t) = trajectories.iter().find(|t| t.len() != times.len()) {
            return Err(Error::Shape {
                expected: times.len(),
                got: t.len(),
            });
        }
        let n = times.len();
        let (t0, t1) = (times[0], times[n - 1]);
        let dt = (t1 - t0) / (n - 1) as f64;
        let uniform = times
            .iter()
            .enumerate()
            .all(|(k, t)| (t - (t0 + dt * k as f64)).abs() <= 1e-9 * dt.max(t.abs()));
        if uniform {
            return Self::new(dt, t0, trajectories);
        }
        let resampled = trajectories
            .iter()
            .map(|traj| {
                (0..n)
                    .map(|k| {
                        let t = t0 + dt * k as f64;
                        let j = times.partition_point(|&s| s <= t).clamp(1, n - 1);
                        let w = ((t - times[j - 1]) / (times[j] - times[j - 1])).clamp(0.0, 1.0);
                        let m = traj[j - 1].matrix() * Complex64::from(1.0 - w)
                            + traj[j].matrix() * Complex64::from(w);
                        DensityMatrix2::from_matrix_unchecked(m)
                    })
                    .collect()
            })
            .collect();
        let mut set = Self::new(dt, t0, resampled)?;
        set.resampled = true;
        Ok(set)
    }

    /// Number of grid points per trajectory.
    pub fn len(&self) -> usize {
        self.trajectories[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn stacked(&self, k: usize) -> DMatrix<Complex64> {
        let cols: Vec<Vector4c> = self
            .trajectories
            .iter()
            .map(|t| vectorize(t[k].matrix()))
            .collect();
        DMatrix::from_fn(4, cols.len(), |r, c| cols[c][r])
    }
}

/// Maps `E_k` sending the state at `t0` to the state at `t0 + k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicalMapSet {
    pub dt: f64,
    /// `E_1 … E_{n_k}`; `E_0 = I` is implicit.
    pub maps: Vec<Matrix4c>,
}

impl DynamicalMapSet {
    pub fn n_k(&self) -> usize {
        self.maps.len()
    }

    /// `E_k`, with `E_0 = I`.
    pub fn get(&self, k: usize) -> Matrix4c {
        if k == 0 {
            Matrix4c::identity()
        } else {
            self.maps[k - 1]
        }
    }

    /// Largest deviation from Hermiticity and trace preservation over the
    /// Pauli basis, across all maps.
    pub fn physicality_defect(&self) -> f64 {
        let basis = [
            crate::qdyn::pauli::identity(),
            crate::qdyn::pauli::x(),
            crate::qdyn::pauli::y(),
            crate::qdyn::pauli::z(),
        ];
        let mut worst: f64 = 0.0;
        for e in &self.maps {
            for p in &basis {
                let out = apply(e, p);
                worst = worst.max((out - out.adjoint()).camax());
                worst = worst.max((out.trace() - p.trace()).norm());
            }
        }
        worst
    }

    pub fn to_text(&self) -> String {
        write_blocks("maps", self.dt, &self.maps)
    }

    pub fn from_text(s: &str) -> Result<Self> {
        let (dt, maps) = read_blocks("maps", s)?;
        Ok(Self { dt, maps })
    }
}

/// Memory-kernel tensors `T_1 … T_{n_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferTensorSet {
    pub dt: f64,
    pub tensors: Vec<Matrix4c>,
}

impl TransferTensorSet {
    pub fn n_k(&self) -> usize {
        self.tensors.len()
    }

    /// `T_n` for `n ≥ 1`.
    pub fn get(&self, n: usize) -> &Matrix4c {
        &self.tensors[n - 1]
    }

    /// Largest `‖Σ_{m=1}^{n} T_m E_{n−m} − E_n‖` over `n`.
    pub fn recursion_residual(&self, maps: &DynamicalMapSet) -> f64 {
        (1..=self.n_k().min(maps.n_k()))
            .map(|n| {
                let sum = (1..=n).fold(Matrix4c::zeros(), |acc, m| {
                    acc + self.get(m) * maps.get(n - m)
                });
                (sum - maps.get(n)).camax()
            })
            .fold(0.0, f64::max)
    }

    /// Frobenius norm of each tensor.
    pub fn norms(&self) -> Vec<f64> {
        self.tensors.iter().map(|t| t.norm()).collect()
    }

    pub fn to_text(&self) -> String {
        write_blocks("tensors", self.dt, &self.tensors)
    }

    pub fn from_text(s: &str) -> Result<Self> {
        let (dt, tensors) = read_blocks("tensors", s)?;
        Ok(Self { dt, tensors })
    }
}

fn apply(e: &Matrix4c, rho: &Matrix2c) -> Matrix2c {
    let v = e * vectorize(rho);
    Matrix2c::new(v[0], v[2], v[1], v[3])
}

fn condition_number(m: &DMatrix<Complex64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `E_k = R(t_k) R(t_0)^{-1}`, with `R(t)` holding the vectorized states of
/// every trajectory as columns. More than four trajectories are fitted in
/// the least-squares sense.
pub fn build_dynamical_maps(trajs: &TrajectorySet) -> Result<DynamicalMapSet> {
    let r0 = trajs.stacked(0);
    let condition = condition_number(&r0);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let right_inverse: DMatrix<Complex64> = if r0.ncols() == 4 {
        r0.clone().try_inverse().ok_or(Error::NonInvertible)?
    } else {
        let gram = &r0 * r0.adjoint();
        r0.adjoint() * gram.try_inverse().ok_or(Error::RankDeficient)?
    };
    let maps = (1..trajs.len())
        .map(|k| {
            let e = trajs.stacked(k) * &right_inverse;
            Matrix4::from_fn(|r, c| e[(r, c)])
        })
        .collect();
    Ok(DynamicalMapSet { dt: trajs.dt, maps })
}

/// `T_1 = E_1`, `T_n = E_n − Σ_{m=1}^{n−1} T_{n−m} E_m`.
pub fn transfer_tensors(maps: &DynamicalMapSet) -> Result<TransferTensorSet> {
    if maps.maps.is_empty() {
        return Err(Error::InvalidArgument("no dynamical maps".into()));
    }
    let mut tensors: Vec<Matrix4c> = Vec::with_capacity(maps.n_k());
    for n in 1..=maps.n_k() {
        let mut t = maps.get(n);
        for m in 1..n {
            t -= tensors[n - m - 1] * maps.get(m);
        }
        tensors.push(t);
    }
    Ok(TransferTensorSet {
        dt: maps.dt,
        tensors,
    })
}

/// `ρ(t_n) = Σ_{k=0}^{n−1} T_{n−k} ρ(t_k)` built up from `ρ(t_0) = rho0`.
pub fn reconstruct(
    tensors: &TransferTensorSet,
    rho0: &DensityMatrix2,
    n: usize,
) -> Result<DensityMatrix2> {
    if n == 0 || n > tensors.n_k() {
        return Err(Error::IndexOutOfRange {
            index: n,
            max: tensors.n_k(),
        });
    }
    let mut history = vec![vectorize(rho0.matrix())];
    for j in 1..=n {
        let v = (0..j).fold(Vector4c::zeros(), |acc, k| {
            acc + tensors.get(j - k) * history[k]
        });
        history.push(v);
    }
    let v = history[n];
    Ok(DensityMatrix2::from_matrix_unchecked(Matrix2c::new(
        v[0], v[2], v[1], v[3],
    )))
}

/// Dynamics extended past the training window.
#[derive(Debug, Clone, PartialEq)]
pub struct Extension {
    /// History followed by the corrected extension, indices `0..=n_target`.
    pub states: Vec<DensityMatrix2>,
    /// Extension outputs before re-Hermitization and trace renormalization.
    pub raw: Vec<Matrix2c>,
}

/// Continues `history` (indices `0..=n_k`) up to `n_target` with
/// `ρ(t_n) = Σ_{k=1}^{n_k} T_k ρ(t_{n−k})`.
pub fn extend_dynamics(
    tensors: &TransferTensorSet,
    history: &[DensityMatrix2],
    n_target: usize,
) -> Result<Extension> {
    let n_k = tensors.n_k();
    if history.len() != n_k + 1 {
        return Err(Error::Shape {
            expected: n_k + 1,
            got: history.len(),
        });
    }
    if n_target < n_k {
        return Err(Error::IndexOutOfRange {
            index: n_target,
            max: n_k,
        });
    }
    let mut vecs: Vec<Vector4c> = history.iter().map(|r| vectorize(r.matrix())).collect();
    let mut states = history.to_vec();
    let mut raw = Vec::with_capacity(n_target - n_k);
    for n in n_k + 1..=n_target {
        let v = (1..=n_k).fold(Vector4c::zeros(), |acc, k| {
            acc + tensors.get(k) * vecs[n - k]
        });
        let m = Matrix2c::new(v[0], v[2], v[1], v[3]);
        raw.push(m);
        let herm = (m + m.adjoint()) * Complex64::from(0.5);
        let trace = herm.trace().re;
        if !(trace >= MIN_TRACE) {
            return Err(Error::Divergence { step: n, trace });
        }
        let fixed = herm / Complex64::from(trace);
        vecs.push(vectorize(&fixed));
        states.push(DensityMatrix2::from_matrix_unchecked(fixed));
    }
    Ok(Extension { states, raw })
}

fn write_blocks(kind: &str, dt: f64, mats: &[Matrix4c]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dt={dt:.16e} n_k={} kind={kind}", mats.len());
    for (k, m) in mats.iter().enumerate() {
        let _ = writeln!(s, "k={}", k + 1);
        for r in 0..4 {
            let row: Vec<String> = (0..4)
                .map(|c| format!("{:.16e},{:.16e}", m[(r, c)].re, m[(r, c)].im))
                .collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
    }
    s
}

fn read_blocks(kind: &str, s: &str) -> Result<(f64, Vec<Matrix4c>)> {
    let perr = |line: usize, message: String| Error::Parse { line, message };
    let mut lines = s.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or_else(|| perr(1, "empty input".into()))?;
    let mut dt = None;
    let mut n_k = None;
    for field in header.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| perr(hl + 1, format!("malformed header field {field:?}")))?;
        match key {
            "dt" => {
                dt = Some(
                    value
                        .parse::<f64>()
                        .map_err(|e| perr(hl + 1, e.to_string()))?,
                )
            }
            "n_k" => {
                n_k = Some(
                    value
                        .parse::<usize>()
                        .map_err(|e| perr(hl + 1, e.to_string()))?,
                )
            }
            "kind" if value != kind => {
                return Err(perr(hl + 1, format!("expected kind={kind}, found {value}")))
            }
            _ => {}
        }
    }
    let dt = dt.ok_or_else(|| perr(hl + 1, "missing dt".into()))?;
    let n_k = n_k.ok_or_else(|| perr(hl + 1, "missing n_k".into()))?;

    let mut mats = Vec::with_capacity(n_k);
    for k in 1..=n_k {
        let (ln, label) = lines
            .next()
            .ok_or_else(|| perr(0, format!("missing block k={k}")))?;
        if label.trim() != format!("k={k}") {
            return Err(perr(ln + 1, format!("expected k={k}, found {label:?}")));
        }
        let mut m = Matrix4c::zeros();
        for r in 0..4 {
            let (ln, row) = lines
                .next()
                .ok_or_else(|| perr(0, format!("block k={k} is truncated")))?;
            let entries: Vec<&str> = row.split_whitespace().collect();
            if entries.len() != 4 {
                return Err(perr(
                    ln + 1,
                    format!("expected 4 entries, found {}", entries.len()),
                ));
            }
            for (c, e) in entries.iter().enumerate() {
                let (re, im) = e
                    .split_once(',')
                    .ok_or_else(|| perr(ln + 1, format!("malformed entry {e:?}")))?;
                let re = re
                    .parse::<f64>()
                    .map_err(|err| perr(ln + 1, err.to_string()))?;
                let im = im
                    .parse::<f64>()
                    .map_err(|err| perr(ln + 1, err.to_string()))?;
                m[(r, c)] = Complex64::new(re, im);
            }
        }
        mats.push(m);
    }
    if let Some((ln, extra)) = lines.next() {
        return Err(perr(
            ln + 1,
            format!("unexpected trailing content {extra:?}"),
        ));
    }
    Ok((dt, mats))
}
