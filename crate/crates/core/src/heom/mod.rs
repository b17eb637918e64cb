//! Hierarchical equations of motion for the dimer coupled to Drude–Lorentz
//! baths, in the scaled auxiliary-operator form.
//!
//! For coupling operators `V_j` and correlation functions
//! `C_j(t) = Σ_k c_jk e^{−ν_jk t}` each auxiliary matrix `ρ_n` obeys
//!
//! ```text
//! dρ_n/dt = −i[H, ρ_n] − Σ n_jk ν_jk ρ_n
//!           − i Σ √((n_jk+1)|c_jk|) [V_j, ρ_{n+e_jk}]
//!           − i Σ √(n_jk/|c_jk|) (c_jk V_j ρ_{n−e_jk} − c*_jk ρ_{n−e_jk} V_j)
//!           − Σ Δ_j [V_j, [V_j, ρ_n]]
//! ```
//!
//! with the last line present only when the Matsubara tail closure is on.

mod bath;

pub use bath::{
    bath_exponents, matsubara_residual, spectral_density, BathExponents, BathParams, Exponent,
};

use std::collections::HashMap;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ode::{self, Tolerances};
use crate::qdyn::{build_hamiltonian, DensityMatrix2, Matrix2c, SystemParams};
use crate::trace::{check_grid, PopulationTrace};

/// How the baths attach to the dimer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BathCoupling {
    /// One independent bath per site through `|s_i⟩⟨s_i|`.
    #[default]
    PerSite,
    /// A single bath coupled through `σ_Z`.
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeomConfig {
    /// Hierarchy truncation tier `L`.
    pub depth: usize,
    /// Matsubara terms kept per bath.
    pub matsubara: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// White-noise closure of the dropped Matsubara terms.
    pub terminator: bool,
    pub coupling: BathCoupling,
}

impl Default for HeomConfig {
    fn default() -> Self {
        Self {
            depth: 6,
            matsubara: 5,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            terminator: true,
            coupling: BathCoupling::PerSite,
        }
    }
}

impl HeomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidArgument(
                "hierarchy depth must be >= 1".into(),
            ));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "integrator tolerances must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Mode {
    amplitude: Complex64,
    rate: f64,
    /// Elementwise factors of `−i[V, ·]` in column-major order.
    raise: [Complex64; 4],
    /// Elementwise factors of `−i(cV· − c*·V)`.
    lower: [Complex64; 4],
}

const NONE: usize = usize::MAX;
const PARALLEL_THRESHOLD: usize = 256;

/// Index bookkeeping and coefficients of a truncated hierarchy.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    hamiltonian: Matrix2c,
    /// Elementwise damping of `Σ Δ_j [V_j, [V_j, ·]]`.
    closure: [f64; 4],
    modes: Vec<Mode>,
    indices: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
    /// `[ado * n_modes + mode]` neighbor one tier up, or `NONE`.
    up: Vec<usize>,
    down: Vec<usize>,
    up_coef: Vec<f64>,
    down_coef: Vec<f64>,
    damping: Vec<f64>,
}

impl Hierarchy {
    pub fn new(params: &SystemParams, baths: &[BathParams], cfg: &HeomConfig) -> Result<Self> {
        cfg.validate()?;
        let (ops, bath_for_op): (Vec<[f64; 2]>, Vec<BathParams>) = match (cfg.coupling, baths) {
            (BathCoupling::PerSite, [b]) => (SITE_PROJECTORS.to_vec(), vec![*b, *b]),
            (BathCoupling::PerSite, [b1, b2]) => (SITE_PROJECTORS.to_vec(), vec![*b1, *b2]),
            (BathCoupling::Shared, [b]) => (vec![[1.0, -1.0]], vec![*b]),
            (coupling, _) => {
                return Err(Error::InvalidArgument(format!(
                    "{coupling:?} coupling does not take {} bath(s)",
                    baths.len()
                )))
            }
        };

        let minus_i = Complex64::new(0.0, -1.0);
        let mut modes = Vec::new();
        let mut closure = [0.0; 4];
        for (v, b) in ops.iter().zip(&bath_for_op) {
            let ex = bath_exponents(b, cfg.matsubara)?;
            modes.extend(
                ex.terms
                    .iter()
                    .filter(|e| e.amplitude.norm() > 0.0)
                    .map(|e| {
                        let c = e.amplitude;
                        Mode {
                            amplitude: c,
                            rate: e.rate,
                            raise: std::array::from_fn(|k| minus_i * (v[k % 2] - v[k / 2])),
                            lower: std::array::from_fn(|k| {
                                minus_i * (c * v[k % 2] - c.conj() * v[k / 2])
                            }),
                        }
                    }),
            );
            if cfg.terminator {
                let delta = matsubara_residual(b, cfg.matsubara)?;
                for (k, slot) in closure.iter_mut().enumerate() {
                    *slot += delta * (v[k % 2] - v[k / 2]).powi(2);
                }
            }
        }

        let indices = enumerate_indices(modes.len(), cfg.depth);
        let lookup: HashMap<Vec<u8>, usize> = indices
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();

        let nm = modes.len();
        let mut up = vec![NONE; indices.len() * nm];
        let mut down = vec![NONE; indices.len() * nm];
        let mut up_coef = vec![0.0; indices.len() * nm];
        let mut down_coef = vec![0.0; indices.len() * nm];
        let mut damping = vec![0.0; indices.len()];
        let mut key = vec![0u8; nm];
        for (i, n) in indices.iter().enumerate() {
            damping[i] = n.iter().zip(&modes).map(|(&k, m)| k as f64 * m.rate).sum();
            for (m, mode) in modes.iter().enumerate() {
                let c = mode.amplitude.norm();
                let nk = n[m] as f64;
                key.copy_from_slice(n);
                key[m] += 1;
                if let Some(&j) = lookup.get(&key) {
                    up[i * nm + m] = j;
                    up_coef[i * nm + m] = ((nk + 1.0) * c).sqrt();
                }
                if n[m] > 0 {
                    key[m] -= 2;
                    down[i * nm + m] = lookup[&key];
                    down_coef[i * nm + m] = (nk / c).sqrt();
                }
            }
        }

        Ok(Self {
            hamiltonian: build_hamiltonian(params),
            closure,
            modes,
            indices,
            lookup,
            up,
            down,
            up_coef,
            down_coef,
            damping,
        })
    }

    /// Number of auxiliary matrices, including the physical one.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn multi_index(&self, i: usize) -> &[u8] {
        &self.indices[i]
    }

    pub fn position(&self, n: &[u8]) -> Option<usize> {
        self.lookup.get(n).copied()
    }

    #[allow(clippy::needless_range_loop)]
    fn ado_rhs(&self, i: usize, y: &[Complex64], out: &mut [Complex64]) {
        let nm = self.modes.len();
        let rho = ado(y, i);
        let h = &self.hamiltonian;
        let minus_i = Complex64::new(0.0, -1.0);
        let d = (h * rho - rho * h) * minus_i;
        for k in 0..4 {
            out[k] = d.as_slice()[k] - rho.as_slice()[k] * (self.damping[i] + self.closure[k]);
        }
        for (m, mode) in self.modes.iter().enumerate() {
            let j = self.up[i * nm + m];
            if j != NONE {
                let a = self.up_coef[i * nm + m];
                let r = &y[4 * j..4 * j + 4];
                for k in 0..4 {
                    out[k] += mode.raise[k] * r[k] * a;
                }
            }
            let j = self.down[i * nm + m];
            if j != NONE {
                let a = self.down_coef[i * nm + m];
                let r = &y[4 * j..4 * j + 4];
                for k in 0..4 {
                    out[k] += mode.lower[k] * r[k] * a;
                }
            }
        }
    }

    fn rhs(&self, y: &[Complex64], dy: &mut [Complex64]) {
        if self.len() >= PARALLEL_THRESHOLD {
            dy.par_chunks_mut(4)
                .enumerate()
                .for_each(|(i, out)| self.ado_rhs(i, y, out));
        } else {
            dy.chunks_mut(4)
                .enumerate()
                .for_each(|(i, out)| self.ado_rhs(i, y, out));
        }
    }

    /// Hierarchy state with `rho0` in the physical slot and zero elsewhere.
    pub fn initial_state(&self, rho0: &DensityMatrix2) -> HeomState {
        let mut data = vec![Complex64::new(0.0, 0.0); 4 * self.len()];
        data[..4].copy_from_slice(rho0.matrix().as_slice());
        HeomState { data }
    }

    /// Integrates from `t_grid[0]` and returns the hierarchy state at each
    /// grid time.
    pub fn propagate(
        &self,
        start: &HeomState,
        t_grid: &[f64],
        tol: Tolerances,
    ) -> Result<Vec<HeomState>> {
        if start.data.len() != 4 * self.len() {
            return Err(Error::Shape {
                expected: 4 * self.len(),
                got: start.data.len(),
            });
        }
        let (ys, _) = ode::integrate(|_, y, dy| self.rhs(y, dy), &start.data, t_grid, tol)?;
        Ok(ys.into_iter().map(|data| HeomState { data }).collect())
    }
}

/// Diagonals of `|s1⟩⟨s1|` and `|s2⟩⟨s2|`.
const SITE_PROJECTORS: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

fn ado(y: &[Complex64], i: usize) -> Matrix2c {
    Matrix2c::from_column_slice(&y[4 * i..4 * i + 4])
}

/// All multi-indices over `n_modes` modes with `Σn ≤ depth`, tier by tier.
fn enumerate_indices(n_modes: usize, depth: usize) -> Vec<Vec<u8>> {
    let mut all = vec![vec![0u8; n_modes]];
    let mut seen: std::collections::HashSet<Vec<u8>> = all.iter().cloned().collect();
    let mut frontier = all.clone();
    for _ in 0..depth {
        let mut next = Vec::new();
        for n in &frontier {
            for m in 0..n_modes {
                let mut k = n.clone();
                k[m] += 1;
                if seen.insert(k.clone()) {
                    next.push(k);
                }
            }
        }
        all.extend(next.iter().cloned());
        frontier = next;
    }
    all
}

/// Flattened auxiliary matrices; slot 0 is the reduced density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HeomState {
    data: Vec<Complex64>,
}

impl HeomState {
    pub fn physical(&self) -> Matrix2c {
        ado(&self.data, 0)
    }

    pub fn ado(&self, i: usize) -> Matrix2c {
        ado(&self.data, i)
    }

    pub fn len(&self) -> usize {
        self.data.len() / 4
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

fn with_origin(t_grid: &[f64]) -> Result<(Vec<f64>, usize)> {
    check_grid(t_grid)?;
    if t_grid[0] == 0.0 {
        Ok((t_grid.to_vec(), 0))
    } else {
        let mut g = Vec::with_capacity(t_grid.len() + 1);
        g.push(0.0);
        g.extend_from_slice(t_grid);
        Ok((g, 1))
    }
}

/// Reduced density matrix at each grid time, starting from `rho0` at `t = 0`.
///
/// `baths` holds one entry (shared by both sites, or the single shared
/// bath) or one per site.
pub fn heom_propagate(
    params: &SystemParams,
    baths: &[BathParams],
    cfg: &HeomConfig,
    rho0: &DensityMatrix2,
    t_grid: &[f64],
) -> Result<Vec<DensityMatrix2>> {
    let hierarchy = Hierarchy::new(params, baths, cfg)?;
    let (grid, skip) = with_origin(t_grid)?;
    let tol = Tolerances {
        rel: cfg.rel_tol,
        abs: cfg.abs_tol,
    };
    let states = hierarchy.propagate(&hierarchy.initial_state(rho0), &grid, tol)?;
    Ok(states
        .iter()
        .skip(skip)
        .map(|s| DensityMatrix2::from_matrix_unchecked(s.physical()))
        .collect())
}

/// Site populations from `|s1⟩`.
pub fn heom_population_trace(
    params: &SystemParams,
    baths: &[BathParams],
    cfg: &HeomConfig,
    t_grid: &[f64],
) -> Result<PopulationTrace> {
    let rhos = heom_propagate(params, baths, cfg, &DensityMatrix2::site1(), t_grid)?;
    let (p1, p2) = rhos.iter().map(|r| r.populations()).unzip();
    let mut trace = PopulationTrace::new(t_grid.to_vec(), p1, p2)?;
    trace.rho_series = Some(rhos);
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qdyn::{propagator, rabi_population};
    use crate::trace::uniform_grid;

    fn dimer() -> SystemParams {
        SystemParams::new(1.5, 1.0).unwrap()
    }

    fn light() -> HeomConfig {
        HeomConfig {
            depth: 4,
            matsubara: 2,
            ..HeomConfig::default()
        }
    }

    #[test]
    fn index_enumeration_counts() {
        // C(modes + L, L) multi-indices.
        assert_eq!(enumerate_indices(8, 3).len(), 165);
        assert_eq!(enumerate_indices(2, 4).len(), 15);
        let idx = enumerate_indices(3, 2);
        assert_eq!(idx[0], vec![0, 0, 0]);
        assert!(idx.windows(2).all(|w| {
            w[0].iter().map(|&x| x as u32).sum::<u32>()
                <= w[1].iter().map(|&x| x as u32).sum::<u32>()
        }));
    }

    #[test]
    fn neighbor_tables_are_consistent() {
        let b = BathParams::new(0.5, 11.0, 1.0).unwrap();
        let h = Hierarchy::new(&dimer(), &[b], &light()).unwrap();
        let nm = h.n_modes();
        assert_eq!(nm, 6);
        for i in 0..h.len() {
            for m in 0..nm {
                let j = h.up[i * nm + m];
                if j != NONE {
                    assert_eq!(h.down[j * nm + m], i);
                }
            }
        }
        assert_eq!(h.position(&[0; 6]), Some(0));
    }

    #[test]
    fn zero_coupling_is_unitary() {
        let b = BathParams::new(0.0, 11.0, 1.0).unwrap();
        let grid = uniform_grid(0.0, 5.0, 51);
        let rho0 = DensityMatrix2::from_bloch(0.3, 0.1, 0.5);
        let out = heom_propagate(&dimer(), &[b], &HeomConfig::default(), &rho0, &grid).unwrap();
        let h = build_hamiltonian(&dimer());
        for (t, r) in grid.iter().zip(&out) {
            let u = propagator(&h, *t);
            let exact = u * rho0.matrix() * u.adjoint();
            assert!((r.matrix() - exact).camax() < 1e-6);
        }
        let trace = heom_population_trace(&dimer(), &[b], &light(), &grid).unwrap();
        for (t, p) in grid.iter().zip(&trace.p1) {
            assert!((p - rabi_population(&dimer(), *t)).abs() < 1e-6);
        }
    }

    #[test]
    fn trace_and_hermiticity_preserved() {
        let b = BathParams::new(0.5, 11.0, 1.0).unwrap();
        let grid = uniform_grid(0.0, 4.0, 41);
        let out =
            heom_propagate(&dimer(), &[b], &light(), &DensityMatrix2::site1(), &grid).unwrap();
        for r in &out {
            let m = r.matrix();
            assert!((m.trace() - Complex64::from(1.0)).norm() < 1e-8);
            assert!((m - m.adjoint()).camax() < 1e-8);
        }
    }

    #[test]
    fn relabeling_swaps_populations() {
        let b = BathParams::new(0.4, 11.0, 1.0).unwrap();
        let grid = uniform_grid(0.0, 3.0, 31);
        let p = SystemParams::new(0.7, 1.0).unwrap();
        let a = heom_propagate(&p, &[b], &light(), &DensityMatrix2::site1(), &grid).unwrap();
        let flipped = heom_propagate(
            &p.relabeled(),
            &[b],
            &light(),
            &DensityMatrix2::site2(),
            &grid,
        )
        .unwrap();
        for (x, y) in a.iter().zip(&flipped) {
            assert!((x.populations().0 - y.populations().1).abs() < 1e-12);
        }
    }

    #[test]
    fn underdamped_trace_oscillates() {
        let b = BathParams::new(0.05, 11.0, 1.0).unwrap();
        let grid = uniform_grid(0.0, 6.0, 301);
        let tr = heom_population_trace(&dimer(), &[b], &light(), &grid).unwrap();
        let extrema: Vec<usize> = (1..grid.len() - 1)
            .filter(|&i| (tr.p1[i] - tr.p1[i - 1]) * (tr.p1[i + 1] - tr.p1[i]) < 0.0)
            .collect();
        assert!(extrema.len() >= 2);
        // Both extrema occur while the oscillation amplitude is above half.
        let amp0 = 1.0 - tr.p1[extrema[0]];
        let amp1 = (tr.p1[extrema[1]] - tr.p1[extrema[0]]).abs();
        assert!(amp1 > 0.5 * amp0);
    }

    #[test]
    fn strong_coupling_relaxes_toward_gibbs() {
        use crate::qdyn::{gibbs_population, EnergyModel};
        let b = BathParams::new(2.0, 11.0, 1.0).unwrap();
        let grid = uniform_grid(0.0, 20.0, 201);
        let tr = heom_population_trace(&dimer(), &[b], &light(), &grid).unwrap();
        let first = (1..grid.len() - 1)
            .find(|&i| (tr.p1[i] - tr.p1[i - 1]) * (tr.p1[i + 1] - tr.p1[i]) <= 0.0)
            .unwrap_or(0);
        let after = &tr.p1[first..];
        let rising = after.windows(2).all(|w| w[1] >= w[0] - 1e-9);
        let falling = after.windows(2).all(|w| w[1] <= w[0] + 1e-9);
        assert!(rising || falling, "not monotone after t = {}", grid[first]);
        let q = gibbs_population(&dimer(), 1.0, EnergyModel::GibbsOfH).unwrap();
        assert!((tr.p1.last().unwrap() - q).abs() < 0.05);
    }

    #[test]
    fn tail_closure_reduces_matsubara_sensitivity() {
        let b = BathParams::new(0.5, 11.0, 1.0).unwrap();
        let grid = uniform_grid(0.0, 4.0, 41);
        let run = |k: usize, terminator: bool| {
            let cfg = HeomConfig {
                depth: 4,
                matsubara: k,
                terminator,
                ..HeomConfig::default()
            };
            heom_propagate(&dimer(), &[b], &cfg, &DensityMatrix2::site1(), &grid)
                .unwrap()
                .iter()
                .map(|r| r.populations().0)
                .collect::<Vec<_>>()
        };
        let diff = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        let with = diff(&run(3, true), &run(5, true));
        let without = diff(&run(3, false), &run(5, false));
        assert!(with < 0.1 * without, "with {with} without {without}");
    }

    #[test]
    fn shared_bath_configuration() {
        let b = BathParams::new(0.3, 11.0, 1.0).unwrap();
        let cfg = HeomConfig {
            coupling: BathCoupling::Shared,
            ..light()
        };
        let h = Hierarchy::new(&dimer(), &[b], &cfg).unwrap();
        assert_eq!(h.n_modes(), 3);
        assert!(Hierarchy::new(&dimer(), &[b, b], &cfg).is_err());
        let grid = uniform_grid(0.0, 2.0, 11);
        let tr = heom_population_trace(&dimer(), &[b], &cfg, &grid).unwrap();
        assert!(tr
            .p1
            .iter()
            .zip(&tr.p2)
            .all(|(a, b)| (a + b - 1.0).abs() < 1e-8));
    }

    #[test]
    fn rejects_bad_config() {
        let b = BathParams::new(0.3, 11.0, 1.0).unwrap();
        let cfg = HeomConfig {
            depth: 0,
            ..HeomConfig::default()
        };
        assert!(
            heom_propagate(&dimer(), &[b], &cfg, &DensityMatrix2::site1(), &[0.0, 1.0]).is_err()
        );
        assert!(heom_propagate(
            &dimer(),
            &[],
            &light(),
            &DensityMatrix2::site1(),
            &[0.0, 1.0]
        )
        .is_err());
    }
}
