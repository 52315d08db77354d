use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{gaussian_matrix, trial_seed};
use crate::recovery::SparseSignal;
use crate::stability::{condition_margin_weighted, MARGIN_TOL};

use super::angles::{internal_angle_polytope, internal_angle_weighted};
use super::cones::{build_face_normal_cone, external_angle_mc, WeightedCrossPolytopeSpec};

/// Largest ambient dimension for the face enumeration.
pub const MAX_SUM_DIM: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrassmannEstimate {
    pub value: f64,
    /// Standard error inherited from the external-angle Monte Carlo.
    pub stderr: f64,
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `2 * sum_{s >= 0} sum_G beta(F, G) gamma(G, P)` over the faces `G`
/// containing `F` (the face with vertices `e_i`, `i` in `K`) of dimension
/// `m + 1 + 2s`. Proper faces have `l = m + 2 + 2s <= n` vertices. The
/// polytope itself also counts (with `gamma = 1`) when `n - m - 1` is even.
///
/// Faces related by a sign flip or by a permutation inside a weight class
/// share both angles, so one representative per class is evaluated and
/// multiplied by its count. `samples` is the Monte Carlo budget per
/// external angle.
pub fn grassmann_sum(
    spec: &WeightedCrossPolytopeSpec,
    m: usize,
    samples: usize,
    seed: u64,
) -> Result<GrassmannEstimate> {
    let n = spec.n();
    if n > MAX_SUM_DIM {
        return Err(Error::TooLarge(format!("n = {n} exceeds {MAX_SUM_DIM}")));
    }
    if m > n {
        return Err(Error::domain("m exceeds n"));
    }
    let k = spec.k().len();
    if k == 0 {
        return Ok(GrassmannEstimate {
            value: 0.0,
            stderr: 0.0,
        });
    }
    let (n1, n2) = (spec.kbar1().len(), spec.kbar2().len());
    let mut terms = Vec::new();
    let mut l = m + 2;
    while l <= n {
        if l >= k {
            for a in 0..=n1.min(l - k) {
                let b = l - k - a;
                if b <= n2 {
                    terms.push((l, a, b));
                }
            }
        }
        l += 2;
    }
    let parts = terms
        .par_iter()
        .enumerate()
        .map(|(t, &(l, a, b))| -> Result<(f64, f64)> {
            let count = binomial(n1, a) * binomial(n2, b) * 2f64.powi((l - k) as i32);
            let kf = k as f64;
            let mut thetas = vec![spec.c_inf() * spec.c_inf() * kf; a];
            thetas.extend(vec![spec.c() * spec.c() * kf; b]);
            let beta = internal_angle_weighted(&thetas)?;
            let mut face: Vec<usize> = spec.k().to_vec();
            face.extend_from_slice(&spec.kbar1()[..a]);
            face.extend_from_slice(&spec.kbar2()[..b]);
            let cone = build_face_normal_cone(spec, &face)?;
            let gamma = external_angle_mc(&cone, samples, trial_seed(seed, 1, t as u64))?;
            Ok((count * beta * gamma.estimate, count * beta * gamma.stderr))
        })
        .collect::<Result<Vec<_>>>()?;
    let whole = if n > m && (n - m - 1).is_multiple_of(2) {
        let kf = k as f64;
        let mut thetas = vec![spec.c_inf() * spec.c_inf() * kf; n1];
        thetas.extend(vec![spec.c() * spec.c() * kf; n2]);
        internal_angle_polytope(&thetas)?
    } else {
        0.0
    };
    let value = 2.0 * parts.iter().fold(whole, |acc, p| acc + p.0);
    let var = parts.iter().fold(0.0, |acc, p| acc + (2.0 * p.1).powi(2));
    Ok(GrassmannEstimate {
        value,
        stderr: var.sqrt(),
    })
}

/// Frequency with which the weighted null-space condition fails at the
/// centre of the face `F` for Gaussian `m x n` matrices.
pub fn grassmann_direct(
    spec: &WeightedCrossPolytopeSpec,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let n = spec.n();
    if trials == 0 {
        return Err(Error::domain("need at least one trial"));
    }
    if m > n {
        return Err(Error::domain("m exceeds n"));
    }
    let k = spec.k().len();
    if m == n || k == 0 {
        return Ok(0.0);
    }
    let x = SparseSignal::new(n, spec.k().to_vec(), vec![1.0 / k as f64; k])?;
    let c: Vec<f64> = (0..n).map(|p| spec.weight(p)).collect();
    let failures = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<usize> {
            let a = gaussian_matrix(m, n, trial_seed(seed, 2, t as u64))?;
            let margin = condition_margin_weighted(&a, &x, &c)?;
            Ok(usize::from(margin < MARGIN_TOL))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(failures as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::internal_angle;

    #[test]
    fn trivial_cases() {
        let spec = WeightedCrossPolytopeSpec::sp(6, 2, 1.0).unwrap();
        assert_eq!(grassmann_sum(&spec, 6, 100, 0).unwrap().value, 0.0);
        // m = n - 1: only the polytope itself contributes
        let whole = 2.0 * internal_angle_polytope(&[2.0; 4]).unwrap();
        assert_eq!(grassmann_sum(&spec, 5, 100, 0).unwrap().value, whole);
        assert!(whole > 0.0);
        assert_eq!(grassmann_direct(&spec, 6, 10, 0).unwrap(), 0.0);
        let empty = WeightedCrossPolytopeSpec::sp(6, 0, 1.0).unwrap();
        assert_eq!(grassmann_sum(&empty, 2, 100, 0).unwrap().value, 0.0);
        assert_eq!(grassmann_direct(&empty, 3, 10, 0).unwrap(), 0.0);
        let big = WeightedCrossPolytopeSpec::sp(11, 1, 1.0).unwrap();
        assert!(grassmann_sum(&big, 5, 10, 0).is_err());
    }

    #[test]
    fn facets_only_closed_form() {
        // l = n: facets, external angle 1/2 each
        let spec = WeightedCrossPolytopeSpec::sp(8, 1, 1.0).unwrap();
        let p = grassmann_sum(&spec, 6, 1000, 0).unwrap();
        let expect = 128.0 * internal_angle(0.5, 7).unwrap();
        assert!((p.value - expect).abs() < 1e-12);
        assert_eq!(p.stderr, 0.0);
    }

    #[test]
    fn sum_matches_direct_small() {
        let spec = WeightedCrossPolytopeSpec::sp(6, 1, 1.0).unwrap();
        let s = grassmann_sum(&spec, 3, 20_000, 5).unwrap();
        let d = grassmann_direct(&spec, 3, 3000, 6).unwrap();
        let sd = (d * (1.0 - d) / 3000.0).sqrt();
        assert!(
            (s.value - d).abs() <= 4.0 * (s.stderr + sd) + 0.01,
            "{s:?} vs {d}"
        );
    }

    #[test]
    fn whole_polytope_term_matches_direct() {
        // n - m - 1 = 0: the sum is the polytope term alone
        let spec = WeightedCrossPolytopeSpec::sp(5, 1, 1.0).unwrap();
        let s = grassmann_sum(&spec, 4, 100, 0).unwrap();
        let trials = 20_000;
        let d = grassmann_direct(&spec, 4, trials, 8).unwrap();
        let sd = (d * (1.0 - d) / trials as f64).sqrt();
        assert!(s.value > 0.0);
        assert!((s.value - d).abs() <= 4.0 * sd, "{} vs {d}", s.value);
    }
}
