use dimerlab_core::heom::{heom_propagate, BathParams, HeomConfig};
use dimerlab_core::qdyn::{DensityMatrix2, SystemParams};
use dimerlab_core::ttm::{
    build_dynamical_maps, canonical_states, reconstruct, transfer_tensors, TrajectorySet,
};

fn heom_tensors(
    n: usize,
    dt: f64,
) -> (
    Vec<Vec<DensityMatrix2>>,
    dimerlab_core::ttm::TransferTensorSet,
) {
    let params = SystemParams::new(1.5, 1.0).unwrap();
    let bath = BathParams::new(0.5, 11.0, 1.0).unwrap();
    let cfg = HeomConfig {
        depth: 4,
        matsubara: 3,
        ..HeomConfig::default()
    };
    let grid: Vec<f64> = (0..=n).map(|k| dt * k as f64).collect();
    let trajs: Vec<Vec<DensityMatrix2>> = canonical_states()
        .iter()
        .map(|rho0| heom_propagate(&params, &[bath], &cfg, rho0, &grid).unwrap())
        .collect();
    let set = TrajectorySet::new(dt, 0.0, trajs.clone()).unwrap();
    let tensors = transfer_tensors(&build_dynamical_maps(&set).unwrap()).unwrap();
    (trajs, tensors)
}

#[test]
fn heom_memory_decays() {
    let (_, tensors) = heom_tensors(60, 0.1);
    let norms = tensors.norms();
    let early = norms[1..4].iter().cloned().fold(0.0, f64::max);
    let late = norms[40..].iter().cloned().fold(0.0, f64::max);
    assert!(late < 0.05 * early, "early {early}, late {late}");
}

#[test]
fn tensors_reproduce_training_states() {
    let (trajs, tensors) = heom_tensors(30, 0.1);
    for (traj, rho0) in trajs.iter().zip(canonical_states()) {
        for (n, want) in traj.iter().enumerate().skip(1) {
            let r = reconstruct(&tensors, &rho0, n).unwrap();
            assert!((r.matrix() - want.matrix()).camax() < 1e-8, "n = {n}");
        }
    }
}
