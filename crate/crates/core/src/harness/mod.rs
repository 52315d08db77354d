//! Seeded ensembles, Monte Carlo experiments and result emission.

mod config;
mod experiments;
mod table;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::ampdist::AmplitudeDistribution;
use crate::error::{Error, Result};
use crate::recovery::{l1_recover, SparseSignal};

pub use config::{Algorithm, AngleTable, ExperimentConfig, ExperimentKind, OutputFormat};
pub use experiments::{
    run_angles, run_concentration, run_experiment, run_grassmann_xcheck, run_phase_diagram,
    run_reweighted_compare, run_stability_sweep, run_support_overlap, ExperimentOutput, PhaseGrid,
    StabilitySweep, STABILITY_SLACK,
};
pub use table::{emit, parse_table, read_table, render, Meta, Table, Value};

/// One round of the splitmix64 generator.
pub fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for trial `trial` of cell `cell`; independent of execution order.
pub fn trial_seed(master: u64, cell: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ cell) ^ trial)
}

/// `m x n` matrix of i.i.d. standard normal entries.
pub fn gaussian_matrix(m: usize, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if m == 0 || m > n {
        return Err(Error::domain(format!(
            "need 1 <= m <= n, got m = {m}, n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal)))
}

/// `k`-sparse signal with a uniformly random support, fair random signs and
/// magnitudes drawn from `dist`.
pub fn random_sparse_signal(
    n: usize,
    k: usize,
    dist: &AmplitudeDistribution,
    seed: u64,
) -> Result<SparseSignal> {
    if k > n {
        return Err(Error::domain(format!("k = {k} exceeds n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut support = index::sample(&mut rng, n, k).into_vec();
    support.sort_unstable();
    let values = (0..k)
        .map(|_| {
            let mag = dist.sample_with(&mut rng);
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect();
    SparseSignal::new(n, support, values)
}

/// A measurement matrix, a sparse signal and its measurements.
#[derive(Debug, Clone)]
pub struct Instance {
    pub a: DMatrix<f64>,
    pub x: SparseSignal,
    pub y: Vec<f64>,
}

/// Rebuilds the instance of a trial from its seed.
pub fn random_instance(
    n: usize,
    m: usize,
    k: usize,
    dist: &AmplitudeDistribution,
    seed: u64,
) -> Result<Instance> {
    let a = gaussian_matrix(m, n, splitmix64(seed ^ 1))?;
    let x = random_sparse_signal(n, k, dist, splitmix64(seed ^ 2))?;
    let y = measure(&a, &x.to_dense());
    Ok(Instance { a, x, y })
}

pub(crate) fn measure(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(x))
        .iter()
        .copied()
        .collect()
}

/// `||x_hat - x||_inf <= 1e-6 (1 + ||x||_inf)`.
pub fn is_exact_recovery(x_hat: &[f64], x: &[f64]) -> bool {
    let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let err = x_hat
        .iter()
        .zip(x)
        .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    err <= 1e-6 * (1.0 + scale)
}

/// Fraction of `trials` seeded instances that plain l1 recovers exactly.
/// Solver failures count as failed recoveries.
pub fn plain_success_rate(
    n: usize,
    m: usize,
    k: usize,
    trials: usize,
    seed: u64,
    dist: &AmplitudeDistribution,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::domain("need at least one trial"));
    }
    let hits = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<bool> {
            let inst = random_instance(n, m, k, dist, trial_seed(seed, k as u64, t as u64))?;
            Ok(match l1_recover(&inst.a, &inst.y) {
                Ok(r) => is_exact_recovery(&r.z, &inst.x.to_dense()),
                Err(e) => {
                    log::warn!("trial {t} at k = {k}: {e}");
                    false
                }
            })
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / trials as f64)
}
