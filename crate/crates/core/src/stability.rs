//! Robustness constants and the quantities chained from them.
//!
//! The null-space condition
//! `||x_K + w_K||_1 + ||w_{K^c}||_1 / C >= ||x_K||_1` for all `w` in
//! `null(A)` is equivalent to the tail-error bound
//! `||(x - x_hat)_{K^c}||_1 <= 2C/(C-1) ||x_{K^c}||_1`. With the sparsity
//! backed off to `(1 - varpi)` times the weak threshold, the condition holds
//! with `C = 1/sqrt(1 - varpi)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ampdist::AmplitudeDistribution;
use crate::error::{Error, Result};
use crate::harness;
use crate::linalg::{self, null_space_basis};
use crate::lp::{solve_standard_form, LpOutcome};
use crate::recovery::SparseSignal;
use crate::solver::{self, WeightedL1Problem};

/// Margins above this value count as "condition holds".
pub const MARGIN_TOL: f64 = -1e-7;
/// Largest index set `kappa_exact` will enumerate.
pub const KAPPA_EXACT_MAX: usize = 14;
pub const ZETA_EPS1_MIN: f64 = 1e-4;
pub const ZETA_EPS1_MAX: f64 = 0.9;
const ZETA_GRID: usize = 64;
/// Default number of random directions behind the kappa* estimate.
pub const KAPPA_STAR_SAMPLES: usize = 2000;
/// Inflation applied to the sampled kappa to stand in for an upper bound.
pub const KAPPA_STAR_INFLATION: f64 = 1.5;

/// Parameters threaded through the stability chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityParams {
    pub varpi: f64,
    pub c: f64,
    pub mu_w: f64,
    pub kappa_star: f64,
    pub epsilon0: f64,
}

impl StabilityParams {
    pub fn new(varpi: f64, mu_w: f64, kappa_star: f64, epsilon0: f64) -> Result<Self> {
        let c = scaling_constant(varpi)?;
        if !(mu_w > 0.0 && mu_w < 1.0) {
            return Err(Error::domain(format!("mu_w = {mu_w} outside (0, 1)")));
        }
        if !(kappa_star >= 0.0) {
            return Err(Error::domain("kappa* must be nonnegative"));
        }
        if !(epsilon0 > 0.0) {
            return Err(Error::domain("epsilon0 must be positive"));
        }
        Ok(Self {
            varpi,
            c,
            mu_w,
            kappa_star,
            epsilon0,
        })
    }
}

/// One stability trial: tail of the signal, tail of the error, and the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub tail_norm: f64,
    pub error_tail: f64,
    pub bound: f64,
    pub satisfied: bool,
}

impl StabilityRecord {
    /// Checks `error_tail <= bound + slack`; `c = 1` gives an infinite bound.
    pub fn new(tail_norm: f64, error_tail: f64, c: f64, slack: f64) -> Self {
        let bound = if c > 1.0 {
            2.0 * c / (c - 1.0) * tail_norm
        } else {
            f64::INFINITY
        };
        Self {
            tail_norm,
            error_tail,
            bound,
            satisfied: error_tail <= bound + slack,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub varpi: f64,
    pub c: f64,
    pub records: Vec<StabilityRecord>,
}

impl StabilityReport {
    pub fn fraction_satisfied(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.satisfied).count() as f64 / self.records.len() as f64
    }
}

/// `C = 1/sqrt(1 - varpi)`.
pub fn scaling_constant(varpi: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&varpi) {
        return Err(Error::domain(format!("varpi = {varpi} outside [0, 1)")));
    }
    Ok(1.0 / (1.0 - varpi).sqrt())
}

/// `2C / (C - 1)`.
pub fn stability_factor(c: f64) -> Result<f64> {
    if !(c > 1.0) || !c.is_finite() {
        return Err(Error::domain(format!("C = {c} must exceed 1")));
    }
    Ok(2.0 * c / (c - 1.0))
}

/// Minimum over `w` in `null(A)` of
/// `||x_K + w_K||_1 + ||w_{K^c}||_1 / C - ||x_K||_1`; never positive.
pub fn condition_margin(a: &DMatrix<f64>, x: &SparseSignal, c: f64) -> Result<f64> {
    if !(c >= 1.0) {
        return Err(Error::domain(format!("C = {c} must be at least 1")));
    }
    condition_margin_weighted(a, x, &vec![c; a.ncols()])
}

/// As [`condition_margin`] with a per-coordinate robustness weight `c[i]`
/// for the coordinates off the support (entries on the support are ignored).
///
/// Substituting `z = x_K + w` turns the minimization into the weighted l1
/// program `min sum_i v_i |z_i|, A z = A x_K` with `v = 1` on `K` and
/// `v = 1/c` elsewhere.
pub fn condition_margin_weighted(a: &DMatrix<f64>, x: &SparseSignal, c: &[f64]) -> Result<f64> {
    let n = a.ncols();
    if x.n() != n || c.len() != n {
        return Err(Error::Dimension(
            "signal, weights and matrix disagree".into(),
        ));
    }
    if x.k() >= n {
        return Err(Error::domain(
            "support must leave at least one free coordinate",
        ));
    }
    if c.iter().any(|&ci| !(ci >= 1.0) || ci > solver::W_INF) {
        return Err(Error::domain("robustness weights must lie in [1, W_INF]"));
    }
    if linalg::rank(a, linalg::RANK_TOL) == n {
        // only w = 0 is available
        return Ok(0.0);
    }
    let xd = x.to_dense();
    let y: Vec<f64> = (a * DVector::from_column_slice(&xd))
        .iter()
        .copied()
        .collect();
    let weights: Vec<f64> = (0..n)
        .map(|i| if xd[i] != 0.0 { 1.0 } else { 1.0 / c[i] })
        .collect();
    let problem = WeightedL1Problem::new(a.clone(), y, weights)?;
    let res = solver::solve(&problem)?;
    if !res.is_converged() {
        return Err(Error::Numerical(format!(
            "condition margin solve ended with {:?}",
            res.status
        )));
    }
    Ok((res.objective - x.norm1()).min(0.0))
}

fn complement(n: usize, s: &[usize]) -> Result<Vec<usize>> {
    let mut mark = vec![false; n];
    for &i in s {
        if i >= n {
            return Err(Error::domain(format!("index {i} out of range")));
        }
        mark[i] = true;
    }
    Ok((0..n).filter(|&i| !mark[i]).collect())
}

/// `max ||w_S||_1 / ||w_{S^c}||_1` over nonzero `w` in `null(A)`, by
/// enumerating sign patterns on `S` and solving one linear program each.
pub fn kappa_exact(a: &DMatrix<f64>, s: &[usize]) -> Result<f64> {
    let (m, n) = a.shape();
    if s.len() > KAPPA_EXACT_MAX {
        return Err(Error::TooLarge(format!(
            "|S| = {} exceeds {KAPPA_EXACT_MAX}; use kappa_sample",
            s.len()
        )));
    }
    let t = complement(n, s)?;
    linalg::ensure_full_row_rank(a)?;
    if m == n || s.is_empty() {
        return Ok(0.0);
    }
    // columns: w_S = p_S - q_S, w_T = p_T - q_T, slack
    let ns = s.len();
    let nt = t.len();
    let cols = 2 * ns + 2 * nt + 1;
    let mut lp = DMatrix::zeros(m + 1, cols);
    for r in 0..m {
        for (j, &i) in s.iter().enumerate() {
            lp[(r, j)] = a[(r, i)];
            lp[(r, ns + j)] = -a[(r, i)];
        }
        for (j, &i) in t.iter().enumerate() {
            lp[(r, 2 * ns + j)] = a[(r, i)];
            lp[(r, 2 * ns + nt + j)] = -a[(r, i)];
        }
    }
    for j in 0..2 * nt {
        lp[(m, 2 * ns + j)] = 1.0;
    }
    lp[(m, cols - 1)] = 1.0;
    let mut rhs = vec![0.0; m + 1];
    rhs[m] = 1.0;

    let mut best: f64 = 0.0;
    // sigma and -sigma give the same optimum, so fix the first sign
    for pattern in 0..(1u32 << (ns - 1)) {
        let mut cost = vec![0.0; cols];
        for j in 0..ns {
            let sign = if j > 0 && pattern & (1 << (j - 1)) != 0 {
                -1.0
            } else {
                1.0
            };
            cost[j] = -sign;
            cost[ns + j] = sign;
        }
        match solve_standard_form(&lp, &rhs, &cost)? {
            LpOutcome::Optimal { objective, .. } => best = best.max(-objective),
            LpOutcome::Unbounded => return Err(Error::KappaInfinite),
            LpOutcome::Infeasible => {
                return Err(Error::Numerical("kappa program infeasible".into()))
            }
        }
    }
    Ok(best)
}

/// Lower estimate of kappa from `samples` random null-space directions.
pub fn kappa_sample(a: &DMatrix<f64>, s: &[usize], samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::domain("need at least one sample"));
    }
    let n = a.ncols();
    let t = complement(n, s)?;
    let basis = null_space_basis(a)?;
    if basis.ncols() == 0 || s.is_empty() {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = basis.ncols();
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = &basis * g;
        let num: f64 = s.iter().map(|&i| w[i].abs()).sum();
        let den: f64 = t.iter().map(|&i| w[i].abs()).sum();
        if den == 0.0 {
            return Ok(f64::INFINITY);
        }
        best = best.max(num / den);
    }
    Ok(best)
}

/// `2C(1 + kappa)/(C - 1) * ||x_{K1^c}||_1`.
pub fn error_bound_l1(x: &[f64], k1: &[usize], c: f64, kappa: f64) -> Result<f64> {
    let f = stability_factor(c)?;
    if !(kappa >= 0.0) {
        return Err(Error::domain("kappa must be nonnegative"));
    }
    let tail: f64 = complement(x.len(), k1)?.iter().map(|&i| x[i].abs()).sum();
    Ok(f * (1.0 + kappa) * tail)
}

/// The error-budget infimum and the `epsilon1` attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zeta {
    pub value: f64,
    pub epsilon1: f64,
}

fn zeta_objective(eps0: f64, eps1: f64, dist: &AmplitudeDistribution, kappa: f64) -> Result<f64> {
    let c = scaling_constant(eps1)?;
    let level = (eps0 + eps1) / (1.0 + eps0);
    let y = dist.quantile(level.min(1.0))?;
    Ok(stability_factor(c)? * (1.0 + kappa) * dist.partial_first_moment(y)?)
}

/// `inf_{eps1} 2C(1+kappa*)/(C-1) * int_0^{F^-1((eps0+eps1)/(1+eps0))} x f(x) dx`
/// with `C = 1/sqrt(1 - eps1)`.
///
/// The infimum is taken over `eps1` in `[1e-4, 0.9]`: a 64-point geometric
/// grid followed by golden-section refinement around the best grid point.
/// `mu_w` only fixes the scale `k1 = (1 - eps1) mu_w n` and cancels from the
/// expression; it is validated but otherwise unused.
pub fn zeta(
    epsilon0: f64,
    dist: &AmplitudeDistribution,
    mu_w: f64,
    kappa_star: f64,
) -> Result<Zeta> {
    if !(epsilon0 > 0.0) || !epsilon0.is_finite() {
        return Err(Error::domain(format!(
            "epsilon0 = {epsilon0} must be positive"
        )));
    }
    if !(mu_w > 0.0 && mu_w <= 1.0) {
        return Err(Error::domain(format!("mu_w = {mu_w} outside (0, 1]")));
    }
    if !(kappa_star >= 0.0) {
        return Err(Error::domain("kappa* must be nonnegative"));
    }
    // (eps0 + eps1)/(1 + eps0) < 1  <=>  eps1 < 1
    let hi = ZETA_EPS1_MAX.min(1.0 - 1e-9);
    let lo = ZETA_EPS1_MIN;
    if lo >= hi {
        return Err(Error::domain("empty epsilon1 search interval"));
    }
    let f = |e: f64| zeta_objective(epsilon0, e, dist, kappa_star);
    let ratio = (hi / lo).powf(1.0 / (ZETA_GRID - 1) as f64);
    let grid: Vec<f64> = (0..ZETA_GRID).map(|i| lo * ratio.powi(i as i32)).collect();
    let vals = grid.iter().map(|&e| f(e)).collect::<Result<Vec<f64>>>()?;
    let (ib, _) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is nonempty");
    let mut best = Zeta {
        value: vals[ib],
        epsilon1: grid[ib],
    };
    let mut a = grid[ib.saturating_sub(1)];
    let mut b = grid[(ib + 1).min(ZETA_GRID - 1)];
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..200 {
        if (b - a) <= 1e-12 * b {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    for (e, v) in [(c, fc), (d, fd)] {
        if v < best.value {
            best = Zeta {
                value: v,
                epsilon1: e,
            };
        }
    }
    Ok(best)
}

/// Predicted lower bound `1 - F(y*)` on the support overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapPrediction {
    pub value: f64,
    pub y_star: f64,
    pub zeta: f64,
    /// Set when `zeta >= 1`: the bound says nothing and `value` is 0.
    pub vacuous: bool,
}

/// Solves `int_0^y x f(x) dx = zeta` for `y` by bisection and returns
/// `1 - F(y)`.
pub fn overlap_from_zeta(dist: &AmplitudeDistribution, zeta: f64) -> Result<OverlapPrediction> {
    if !(zeta >= 0.0) {
        return Err(Error::domain("zeta must be nonnegative"));
    }
    if zeta >= 1.0 {
        return Ok(OverlapPrediction {
            value: 0.0,
            y_star: f64::INFINITY,
            zeta,
            vacuous: true,
        });
    }
    if zeta == 0.0 {
        return Ok(OverlapPrediction {
            value: 1.0 - dist.cdf_at(0.0)?,
            y_star: 0.0,
            zeta,
            vacuous: false,
        });
    }
    let mut hi = dist.support_end().min(1.0);
    while dist.partial_first_moment(hi)? < zeta {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-10 * hi.min(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if dist.partial_first_moment(mid)? < zeta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let y = 0.5 * (lo + hi);
    Ok(OverlapPrediction {
        value: 1.0 - dist.cdf_at(y)?,
        y_star: y,
        zeta,
        vacuous: false,
    })
}

pub fn support_overlap_prediction(
    epsilon0: f64,
    dist: &AmplitudeDistribution,
    mu_w: f64,
    kappa_star: f64,
) -> Result<OverlapPrediction> {
    let z = zeta(epsilon0, dist, mu_w, kappa_star)?;
    overlap_from_zeta(dist, z.value)
}

/// Empirical weak threshold (as `k/n`) of plain l1 at `delta = m/n`.
///
/// Bisects over integer `k` on the success rate of `trials` seeded trials
/// (±1 amplitudes: plain l1 success depends only on support and signs) and
/// interpolates linearly between the bracketing `k` values.
pub fn estimate_weak_threshold(
    delta: f64,
    n: usize,
    trials: usize,
    seed: u64,
    success_level: f64,
) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::domain(format!("delta = {delta} outside (0, 1]")));
    }
    if trials == 0 || !(success_level > 0.0 && success_level < 1.0) {
        return Err(Error::domain(
            "need trials >= 1 and success level in (0, 1)",
        ));
    }
    let m = (delta * n as f64).round() as usize;
    if m < 1 || (n as f64) * delta < 1.0 {
        return Err(Error::domain("n * delta must be at least 1"));
    }
    let dist = AmplitudeDistribution::point_mass();
    let mut cache: BTreeMap<usize, f64> = BTreeMap::new();
    let mut rate = |k: usize| -> Result<f64> {
        if let Some(&r) = cache.get(&k) {
            return Ok(r);
        }
        let r = harness::plain_success_rate(n, m, k, trials, seed, &dist)?;
        cache.insert(k, r);
        Ok(r)
    };
    if rate(m)? >= success_level {
        return Ok(m as f64 / n as f64);
    }
    let (mut lo, mut hi) = (0usize, m);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if rate(mid)? >= success_level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (slo, shi) = (rate(lo)?, rate(hi)?);
    let frac = if slo > shi {
        (slo - success_level) / (slo - shi)
    } else {
        0.5
    };
    Ok((lo as f64 + frac) / n as f64)
}
