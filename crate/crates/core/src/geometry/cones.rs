use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::trial_seed;
use crate::linalg::{self, RANK_TOL};
use crate::solver::W_INF;

/// Largest number of coordinates outside a face before the `2^(n-l)`
/// generator list is refused.
pub const MAX_FREE_COORDS: usize = 20;
const MEMBER_TOL: f64 = 1e-9;
const CHUNK: usize = 2048;

/// A polyhedral cone given by generators of its positive hull.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSpec {
    generators: DMatrix<f64>,
}

impl ConeSpec {
    /// Generators are the columns of `generators`.
    pub fn new(generators: DMatrix<f64>) -> Result<Self> {
        if generators.ncols() == 0 || generators.nrows() == 0 {
            return Err(Error::domain("cone needs at least one generator"));
        }
        linalg::check_finite_matrix(&generators, "cone generators")?;
        Ok(Self { generators })
    }

    pub fn from_vectors(vs: &[Vec<f64>]) -> Result<Self> {
        let d = vs.first().map_or(0, |v| v.len());
        if vs.iter().any(|v| v.len() != d) {
            return Err(Error::Dimension("generators differ in length".into()));
        }
        Self::new(DMatrix::from_fn(d, vs.len(), |r, c| vs[c][r]))
    }

    pub fn dim(&self) -> usize {
        self.generators.nrows()
    }

    pub fn count(&self) -> usize {
        self.generators.ncols()
    }

    pub fn generators(&self) -> &DMatrix<f64> {
        &self.generators
    }
}

/// Monte Carlo estimate of an external angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalAngle {
    pub estimate: f64,
    /// Binomial standard error; zero when the estimate is exact.
    pub stderr: f64,
    /// Dimension of the generators' linear span.
    pub span_dim: usize,
}

/// Lawson-Hanson nonnegative least squares; returns the residual norm.
fn nnls_residual(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let g = a.ncols();
    let tol = 10.0 * f64::EPSILON * a.norm() * (a.nrows().max(g) as f64);
    let mut x = DVector::<f64>::zeros(g);
    let mut passive = vec![false; g];
    let mut resid = b - a * &x;
    for _ in 0..3 * g + 10 {
        let w = a.transpose() * &resid;
        let next = (0..g)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        match next {
            Some(j) if w[j] > tol => passive[j] = true,
            _ => break,
        }
        loop {
            let idx: Vec<usize> = (0..g).filter(|&j| passive[j]).collect();
            let sub = a.select_columns(&idx);
            let s_sub = sub
                .svd(true, true)
                .solve(b, 1e-14)
                .unwrap_or_else(|_| DVector::zeros(idx.len()));
            if s_sub.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (t, &j) in idx.iter().enumerate() {
                    x[j] = s_sub[t];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (t, &j) in idx.iter().enumerate() {
                if s_sub[t] <= 0.0 {
                    alpha = alpha.min(x[j] / (x[j] - s_sub[t]));
                }
            }
            for (t, &j) in idx.iter().enumerate() {
                x[j] += alpha * (s_sub[t] - x[j]);
                if x[j] <= tol {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
        resid = b - a * &x;
    }
    resid.norm()
}

/// Fraction of the unit sphere, inside the generators' linear span, covered
/// by the cone.
///
/// A span of dimension 1 is decided exactly by testing both unit
/// directions. Otherwise directions are Gaussian in span coordinates and
/// membership is a nonnegative least-squares fit with residual at most 1e-9.
pub fn external_angle_mc(cone: &ConeSpec, samples: usize, seed: u64) -> Result<ExternalAngle> {
    if samples == 0 {
        return Err(Error::domain("need at least one sample"));
    }
    let basis = linalg::span_basis(cone.generators(), RANK_TOL);
    let d = basis.ncols();
    if d == 0 {
        return Err(Error::domain("cone generators are all zero"));
    }
    let gen = basis.transpose() * cone.generators();
    let norms: Vec<f64> = gen.column_iter().map(|c| c.norm()).collect();
    let gen = DMatrix::from_fn(d, gen.ncols(), |r, c| {
        if norms[c] > 0.0 {
            gen[(r, c)] / norms[c]
        } else {
            0.0
        }
    });
    let member = |q: &DVector<f64>| nnls_residual(&gen, q) <= MEMBER_TOL;
    if d == 1 {
        let hits = [1.0, -1.0]
            .iter()
            .filter(|&&s| member(&DVector::from_element(1, s)))
            .count();
        return Ok(ExternalAngle {
            estimate: hits as f64 / 2.0,
            stderr: 0.0,
            span_dim: 1,
        });
    }
    let chunks = samples.div_ceil(CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, 0, ci as u64));
            let count = CHUNK.min(samples - ci * CHUNK);
            (0..count)
                .filter(|_| {
                    let mut q = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let nq = q.norm();
                    q /= nq;
                    member(&q)
                })
                .count()
        })
        .sum();
    let p = hits as f64 / samples as f64;
    Ok(ExternalAngle {
        estimate: p,
        stderr: (p * (1.0 - p) / samples as f64).sqrt(),
        span_dim: d,
    })
}

/// `{y : ||y_K||_1 + ||y_{Kbar1}||_1 / C_inf + ||y_{Kbar2}||_1 / C <= 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCrossPolytopeSpec {
    n: usize,
    k: Vec<usize>,
    kbar1: Vec<usize>,
    kbar2: Vec<usize>,
    c: f64,
    c_inf: f64,
}

impl WeightedCrossPolytopeSpec {
    pub fn new(
        n: usize,
        mut k: Vec<usize>,
        mut kbar1: Vec<usize>,
        mut kbar2: Vec<usize>,
        c: f64,
    ) -> Result<Self> {
        if !(c >= 1.0) || !c.is_finite() {
            return Err(Error::domain(format!("C = {c} must be finite and >= 1")));
        }
        k.sort_unstable();
        kbar1.sort_unstable();
        kbar2.sort_unstable();
        let mut seen = vec![false; n];
        for &i in k.iter().chain(&kbar1).chain(&kbar2) {
            if i >= n || seen[i] {
                return Err(Error::domain("index sets must partition 0..n"));
            }
            seen[i] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::domain("index sets must partition 0..n"));
        }
        Ok(Self {
            n,
            k,
            kbar1,
            kbar2,
            c,
            c_inf: W_INF,
        })
    }

    /// The unweighted-heavy-class case: `K = {0..k}`, every other index
    /// weighted by `C`.
    pub fn sp(n: usize, k: usize, c: f64) -> Result<Self> {
        if k > n {
            return Err(Error::domain("k exceeds n"));
        }
        Self::new(n, (0..k).collect(), vec![], (k..n).collect(), c)
    }

    /// `K = {0..k}`, `Kbar1 = {k..k1}` (weight `C_inf`), the rest weight `C`.
    pub fn wsp(n: usize, k: usize, k1: usize, c: f64) -> Result<Self> {
        if k > k1 || k1 > n {
            return Err(Error::domain("need k <= k1 <= n"));
        }
        Self::new(n, (0..k).collect(), (k..k1).collect(), (k1..n).collect(), c)
    }

    /// Replaces the `W_INF` stand-in for the heavy class.
    pub fn with_c_inf(mut self, c_inf: f64) -> Result<Self> {
        if !(c_inf >= 1.0) || c_inf > W_INF {
            return Err(Error::domain("C_inf must lie in [1, W_INF]"));
        }
        self.c_inf = c_inf;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn k(&self) -> &[usize] {
        &self.k
    }
    pub fn kbar1(&self) -> &[usize] {
        &self.kbar1
    }
    pub fn kbar2(&self) -> &[usize] {
        &self.kbar2
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn c_inf(&self) -> f64 {
        self.c_inf
    }

    /// Coordinate weight `C_p` (1 on `K`).
    pub fn weight(&self, p: usize) -> f64 {
        if self.k.binary_search(&p).is_ok() {
            1.0
        } else if self.kbar1.binary_search(&p).is_ok() {
            self.c_inf
        } else {
            self.c
        }
    }
}

/// Outward normals of the facets through the face with vertex support `L`
/// (positive signs): `sum_{p in L} e_p / C_p + sum_{p not in L} j_p e_p / C_p`
/// for every sign choice `j`.
pub fn build_face_normal_cone(
    spec: &WeightedCrossPolytopeSpec,
    l_set: &[usize],
) -> Result<ConeSpec> {
    let n = spec.n();
    let mut in_l = vec![false; n];
    for &p in l_set {
        if p >= n || in_l[p] {
            return Err(Error::domain("face indices must be distinct and below n"));
        }
        in_l[p] = true;
    }
    if spec.k().iter().any(|&p| !in_l[p]) {
        return Err(Error::domain("face must contain K"));
    }
    let free: Vec<usize> = (0..n).filter(|&p| !in_l[p]).collect();
    if free.len() > MAX_FREE_COORDS {
        return Err(Error::TooLarge(format!(
            "{} free coordinates give too many generators",
            free.len()
        )));
    }
    let count = 1usize << free.len();
    let gens = DMatrix::from_fn(n, count, |p, j| {
        let w = 1.0 / spec.weight(p);
        if in_l[p] {
            w
        } else {
            let bit = free.iter().position(|&q| q == p).expect("free coordinate");
            if j & (1 << bit) != 0 {
                -w
            } else {
                w
            }
        }
    });
    ConeSpec::new(gens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_line_is_exactly_half() {
        let cone = ConeSpec::from_vectors(&[vec![1.0, 2.0, 0.0]]).unwrap();
        let e = external_angle_mc(&cone, 1, 0).unwrap();
        assert_eq!((e.estimate, e.stderr, e.span_dim), (0.5, 0.0, 1));
        let line = ConeSpec::from_vectors(&[vec![1.0, 0.0], vec![-3.0, 0.0]]).unwrap();
        assert_eq!(external_angle_mc(&line, 1, 0).unwrap().estimate, 1.0);
    }

    #[test]
    fn quarter_plane() {
        let cone = ConeSpec::from_vectors(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let e = external_angle_mc(&cone, 100_000, 11).unwrap();
        assert!((e.estimate - 0.25).abs() <= 3.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn octant_and_invariances() {
        let base = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let e = external_angle_mc(&ConeSpec::from_vectors(&base).unwrap(), 40_000, 2).unwrap();
        assert!((e.estimate - 0.125).abs() <= 3.0 * e.stderr);
        // permuted and rescaled generators give the same cone
        let other = vec![
            vec![0.0, 0.0, 5.0],
            vec![0.2, 0.0, 0.0],
            vec![0.0, 3.0, 0.0],
        ];
        let f = external_angle_mc(&ConeSpec::from_vectors(&other).unwrap(), 40_000, 2).unwrap();
        assert!((e.estimate - f.estimate).abs() <= 3.0 * (e.stderr + f.stderr));
    }

    #[test]
    fn nnls_recovers_known_combination() {
        let a = DMatrix::from_row_slice(
            3,
            4,
            &[1.0, 0.0, 1.0, 2.0, 0.0, 1.0, 1.0, -1.0, 1.0, 1.0, 0.0, 0.5],
        );
        let b = &a * DVector::from_row_slice(&[0.5, 0.0, 1.5, 0.2]);
        assert!(nnls_residual(&a, &b) < 1e-10);
        let outside = DVector::from_row_slice(&[-1.0, -1.0, -1.0]);
        assert!(nnls_residual(&a, &outside) > 0.1);
    }

    #[test]
    fn empty_cone_rejected() {
        assert!(ConeSpec::new(DMatrix::zeros(3, 0)).is_err());
        let zero = ConeSpec::from_vectors(&[vec![0.0, 0.0]]).unwrap();
        assert!(external_angle_mc(&zero, 10, 0).is_err());
    }

    #[test]
    fn face_cone_generators() {
        let spec = WeightedCrossPolytopeSpec::sp(4, 1, 2.0).unwrap();
        let full = build_face_normal_cone(&spec, &[0, 1, 2, 3]).unwrap();
        assert_eq!(full.count(), 1);
        assert_eq!(
            full.generators().column(0).as_slice(),
            &[1.0, 0.5, 0.5, 0.5]
        );
        assert_eq!(
            build_face_normal_cone(&spec, &[0, 1, 2]).unwrap().count(),
            2
        );
        assert!(build_face_normal_cone(&spec, &[1, 2]).is_err());
    }

    #[test]
    fn face_cone_hand_pattern() {
        let spec = WeightedCrossPolytopeSpec::sp(6, 2, 1.0).unwrap();
        let cone = build_face_normal_cone(&spec, &[0, 1, 2, 3]).unwrap();
        let mut cols: Vec<Vec<f64>> = cone
            .generators()
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect();
        cols.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expect = vec![
            vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0, 1.0, -1.0, 1.0],
            vec![1.0, 1.0, 1.0, 1.0, 1.0, -1.0],
            vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0],
        ];
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(cols, expect);
    }

    #[test]
    fn spec_partition_checked() {
        assert!(WeightedCrossPolytopeSpec::new(3, vec![0], vec![1], vec![1, 2], 1.0).is_err());
        assert!(WeightedCrossPolytopeSpec::new(3, vec![0], vec![1], vec![], 1.0).is_err());
        assert!(WeightedCrossPolytopeSpec::new(3, vec![0], vec![1], vec![2], 0.5).is_err());
        let s = WeightedCrossPolytopeSpec::wsp(5, 1, 3, 2.0).unwrap();
        assert_eq!(
            (0..5).map(|p| s.weight(p)).collect::<Vec<_>>(),
            vec![1.0, W_INF, W_INF, 2.0, 2.0]
        );
    }

    #[test]
    fn too_many_free_coordinates() {
        let spec = WeightedCrossPolytopeSpec::sp(22, 1, 1.0).unwrap();
        assert!(matches!(
            build_face_normal_cone(&spec, &[0]),
            Err(Error::TooLarge(_))
        ));
    }
}
