//! Plain l1 recovery, the two-step reweighted algorithm, and support-set
//! utilities.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{self, RecoveryResult, WeightedL1Problem};

/// Default penalty applied outside the estimated support.
pub const DEFAULT_OMEGA: f64 = 3.0;

/// A vector stored by its nonzero entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSignal {
    n: usize,
    support: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSignal {
    pub fn new(n: usize, support: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if support.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} indices but {} values",
                support.len(),
                values.len()
            )));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("support indices must be strictly increasing"));
        }
        if support.last().is_some_and(|&i| i >= n) {
            return Err(Error::domain("support index out of range"));
        }
        if values.iter().any(|&v| v == 0.0 || !v.is_finite()) {
            return Err(Error::domain("support values must be finite and nonzero"));
        }
        Ok(Self { n, support, values })
    }

    /// Sparse view of a dense vector (exact zeros are dropped).
    pub fn from_dense(x: &[f64]) -> Result<Self> {
        let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
        let values = support.iter().map(|&i| x[i]).collect();
        Self::new(x.len(), support, values)
    }

    pub fn zero(n: usize) -> Self {
        Self {
            n,
            support: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (&i, &v) in self.support.iter().zip(&self.values) {
            x[i] = v;
        }
        x
    }

    pub fn norm1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }
}

/// A sorted index set produced by support estimation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportEstimate {
    indices: Vec<usize>,
}

impl SupportEstimate {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// Output of the two-step algorithm.
#[derive(Debug, Clone)]
pub struct ReweightedOutcome {
    /// Solution of the weighted (second) program.
    pub x_star: Vec<f64>,
    pub support: SupportEstimate,
    /// Solution of the plain l1 (first) program.
    pub x_hat: Vec<f64>,
    pub first: RecoveryResult,
    pub second: RecoveryResult,
}

/// `min ||z||_1  s.t.  A z = y`.
pub fn l1_recover(a: &DMatrix<f64>, y: &[f64]) -> Result<RecoveryResult> {
    let problem = WeightedL1Problem::unweighted(a.clone(), y.to_vec())?;
    solver::solve(&problem)
}

/// Indices of the `k` largest-magnitude entries; equal magnitudes go to the
/// smaller index.
pub fn k_support(x: &[f64], k: usize) -> Result<SupportEstimate> {
    if k > x.len() {
        return Err(Error::domain(format!("k = {k} exceeds length {}", x.len())));
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()).then(i.cmp(&j)));
    idx.truncate(k);
    idx.sort_unstable();
    Ok(SupportEstimate { indices: idx })
}

/// Two-step recovery: plain l1, keep the `k` largest entries as `L`, then
/// minimize `||z_L||_1 + omega ||z_{L^c}||_1` over the same affine set.
pub fn reweighted_recover(
    a: &DMatrix<f64>,
    y: &[f64],
    k: usize,
    omega: f64,
) -> Result<ReweightedOutcome> {
    if !(omega > 1.0) {
        return Err(Error::domain(format!("omega = {omega} must exceed 1")));
    }
    reweighted_recover_unchecked(a, y, k, omega)
}

/// As [`reweighted_recover`] but accepts any positive `omega`, including 1.
pub fn reweighted_recover_unchecked(
    a: &DMatrix<f64>,
    y: &[f64],
    k: usize,
    omega: f64,
) -> Result<ReweightedOutcome> {
    let n = a.ncols();
    if k > n {
        return Err(Error::domain(format!("k = {k} exceeds n = {n}")));
    }
    if !(omega > 0.0) || omega > solver::W_INF {
        return Err(Error::domain(format!("omega = {omega} outside (0, W_INF]")));
    }
    let first = l1_recover(a, y).map_err(|e| e.at_stage("plain l1 step"))?;
    let support = k_support(&first.z, k)?;
    let weights: Vec<f64> = (0..n)
        .map(|i| if support.contains(i) { 1.0 } else { omega })
        .collect();
    let problem = WeightedL1Problem::new(a.clone(), y.to_vec(), weights)
        .map_err(|e| e.at_stage("weighted l1 step"))?;
    let second = solver::solve(&problem).map_err(|e| e.at_stage("weighted l1 step"))?;
    Ok(ReweightedOutcome {
        x_star: second.z.clone(),
        x_hat: first.z.clone(),
        support,
        first,
        second,
    })
}

/// `|K ∩ L| / |K|`.
pub fn support_overlap(k_set: &[usize], l_set: &[usize]) -> Result<f64> {
    if k_set.is_empty() {
        return Err(Error::domain("reference support is empty"));
    }
    let hits = k_set.iter().filter(|i| l_set.contains(i)).count();
    Ok(hits as f64 / k_set.len() as f64)
}

/// Size of the largest subset of nonzero entries whose l1 norm is at most
/// `lambda`; the smallest magnitudes are taken greedily.
pub fn w_lambda(x: &SparseSignal, lambda: f64) -> usize {
    let mut mags: Vec<f64> = x.values().iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    let mut count = 0;
    for m in mags {
        acc += m;
        if acc > lambda {
            break;
        }
        count += 1;
    }
    count
}

/// Checks `|K ∩ L| >= k - W(x, ||x - x_hat||_1)` where `L` is the
/// `k`-support of `x_hat`. Returns `(lhs, rhs)`.
pub fn overlap_bound(x: &SparseSignal, x_hat: &[f64]) -> Result<(usize, usize)> {
    let k = x.k();
    let dense = x.to_dense();
    let err: f64 = dense.iter().zip(x_hat).map(|(a, b)| (a - b).abs()).sum();
    let l = k_support(x_hat, k)?;
    let hits = x.support().iter().filter(|&&i| l.contains(i)).count();
    Ok((hits, k - w_lambda(x, err)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn k_support_examples() {
        assert_eq!(k_support(&[0.1, -5.0, 2.0], 2).unwrap().indices(), &[1, 2]);
        assert!(k_support(&[0.1, -5.0, 2.0], 0)
            .unwrap()
            .indices()
            .is_empty());
        assert_eq!(k_support(&[3.0, -3.0, 1.0], 1).unwrap().indices(), &[0]);
        assert!(k_support(&[1.0], 2).is_err());
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(support_overlap(&[1, 2], &[1, 2]).unwrap(), 1.0);
        assert_eq!(support_overlap(&[1, 2], &[3, 4]).unwrap(), 0.0);
        assert_eq!(support_overlap(&[1, 2, 3, 4], &[2, 3, 4, 5]).unwrap(), 0.75);
        assert!(support_overlap(&[], &[1]).is_err());
    }

    #[test]
    fn w_lambda_examples() {
        let x = SparseSignal::new(5, vec![0, 2, 4], vec![3.0, -2.0, 1.0]).unwrap();
        assert_eq!(w_lambda(&x, 3.0), 2);
        assert_eq!(w_lambda(&x, 0.0), 0);
        assert_eq!(w_lambda(&x, 6.0), 3);
        assert_eq!(w_lambda(&x, 100.0), 3);
    }

    #[test]
    fn signal_validation() {
        assert!(SparseSignal::new(3, vec![0, 1], vec![1.0]).is_err());
        assert!(SparseSignal::new(3, vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(SparseSignal::new(3, vec![0, 3], vec![1.0, 1.0]).is_err());
        assert!(SparseSignal::new(3, vec![0], vec![0.0]).is_err());
        let s = SparseSignal::from_dense(&[0.0, 2.0, 0.0, -1.0]).unwrap();
        assert_eq!(s.support(), &[1, 3]);
        assert_eq!(s.to_dense(), vec![0.0, 2.0, 0.0, -1.0]);
    }

    #[test]
    fn zero_signal_recovers_zero() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, -1.0, 0.3, 2.0, 1.0]);
        let r = l1_recover(&a, &[0.0, 0.0]).unwrap();
        assert_eq!(r.z, vec![0.0; 3]);
    }

    #[test]
    fn square_system_inverts() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let r = l1_recover(&a, &[3.0, 5.0]).unwrap();
        let inv = a.clone().try_inverse().unwrap() * nalgebra::DVector::from_vec(vec![3.0, 5.0]);
        assert!((r.z[0] - inv[0]).abs() < 1e-9 && (r.z[1] - inv[1]).abs() < 1e-9);
    }

    #[test]
    fn omega_must_exceed_one() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(reweighted_recover(&a, &[1.0], 1, 1.0).is_err());
        assert!(reweighted_recover_unchecked(&a, &[1.0], 1, 1.0).is_ok());
    }

    proptest! {
        #[test]
        fn w_lambda_nondecreasing(
            vals in prop::collection::vec(0.01f64..10.0, 1..20),
            l1 in 0.0f64..50.0,
            dl in 0.0f64..10.0,
        ) {
            let n = vals.len();
            let x = SparseSignal::new(n, (0..n).collect(), vals).unwrap();
            prop_assert!(w_lambda(&x, l1) <= w_lambda(&x, l1 + dl));
        }

        #[test]
        fn overlap_bound_holds_for_any_estimate(
            vals in prop::collection::vec(prop_oneof![-5.0f64..-0.01, 0.01f64..5.0], 1..10),
            noise in prop::collection::vec(-3.0f64..3.0, 16),
        ) {
            let n = 16;
            let k = vals.len();
            let support: Vec<usize> = (0..k).map(|i| i * 16 / k).collect();
            let x = SparseSignal::new(n, support, vals).unwrap();
            let x_hat: Vec<f64> = x.to_dense().iter().zip(&noise).map(|(a, b)| a + b).collect();
            let (lhs, rhs) = overlap_bound(&x, &x_hat).unwrap();
            prop_assert!(lhs >= rhs);
        }
    }
}
