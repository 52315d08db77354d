//! Weighted l1 minimization over an affine set,
//!
//! ```text
//! minimize  sum_i w_i |z_i|   subject to  A z = y,
//! ```
//!
//! solved by ADMM with a soft-threshold step on the weighted norm and an
//! exact projection onto `{A z = y}` through a cached Cholesky factor of
//! `A A^T`. Every few iterations the sparse iterate is polished (least
//! squares on its support) and the scaled ADMM dual is turned into a
//! dual-feasible point, so convergence is declared on a certified duality
//! gap rather than on iterate movement alone.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, norm_inf, refined_least_squares};
use crate::lp::{solve_standard_form, LpOutcome};

/// Finite stand-in for an infinite weight.
pub const W_INF: f64 = 1e6;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITERS: usize = 50_000;
/// Largest dimension the simplex oracle accepts.
pub const ORACLE_MAX_N: usize = 16;

/// Feasibility bound a converged result always meets.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct WeightedL1Problem {
    a: DMatrix<f64>,
    y: DVector<f64>,
    weights: Vec<f64>,
}

impl WeightedL1Problem {
    pub fn new(a: DMatrix<f64>, y: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let (m, n) = a.shape();
        if y.len() != m {
            return Err(Error::Dimension(format!(
                "y has {} entries, A has {m} rows",
                y.len()
            )));
        }
        if weights.len() != n {
            return Err(Error::Dimension(format!(
                "{} weights for {n} columns",
                weights.len()
            )));
        }
        if m > n {
            return Err(Error::Dimension(format!("{m} rows exceed {n} columns")));
        }
        linalg::check_finite_matrix(&a, "A")?;
        linalg::check_finite(&y, "y")?;
        linalg::check_finite(&weights, "weights")?;
        if let Some(w) = weights.iter().find(|&&w| !(w > 0.0 && w <= W_INF)) {
            return Err(Error::domain(format!("weight {w} outside (0, W_INF]")));
        }
        Ok(Self {
            a,
            y: DVector::from_vec(y),
            weights,
        })
    }

    pub fn unweighted(a: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        let n = a.ncols();
        Self::new(a, y, vec![1.0; n])
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn y(&self) -> &[f64] {
        self.y.as_slice()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        z.iter().zip(&self.weights).map(|(v, w)| w * v.abs()).sum()
    }

    /// `||A z - y||_inf / (1 + ||y||_inf)`.
    pub fn feasibility_residual(&self, z: &[f64]) -> f64 {
        let r = &self.a * DVector::from_column_slice(z) - &self.y;
        norm_inf(r.as_slice()) / (1.0 + norm_inf(self.y.as_slice()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub z: Vec<f64>,
    pub objective: f64,
    pub feasibility_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Best certified lower bound on the optimal value (dual objective).
    pub lower_bound: f64,
}

impl RecoveryResult {
    pub fn is_converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

struct Projector<'p> {
    a: &'p DMatrix<f64>,
    y: &'p DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl<'p> Projector<'p> {
    fn new(problem: &'p WeightedL1Problem) -> Result<Self> {
        let a = &problem.a;
        let gram = a * a.transpose();
        let chol = gram.clone().cholesky();
        let ok = chol.as_ref().is_some_and(|c| {
            let l = c.l_dirty();
            let d: Vec<f64> = (0..l.nrows()).map(|i| l[(i, i)].abs()).collect();
            let dmax = d.iter().cloned().fold(0.0, f64::max);
            d.iter().all(|&v| v > 1e-10 * dmax)
        });
        match chol {
            Some(chol) if ok => Ok(Self {
                a,
                y: &problem.y,
                chol,
            }),
            _ => {
                linalg::ensure_full_row_rank(a)?;
                // full rank by SVD but too ill-conditioned for the normal equations
                Err(Error::RankDeficient {
                    rank: linalg::rank(a, 1e-8),
                    rows: a.nrows(),
                })
            }
        }
    }

    /// Euclidean projection onto `{A z = y}`.
    fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let r = self.a * v - self.y;
        let s = self.chol.solve(&r);
        v - self.a.tr_mul(&s)
    }

    /// Coefficients of the least-squares fit `A^T nu ~ lambda`.
    fn dual_fit(&self, lambda: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(&(self.a * lambda))
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Dual objective of `nu` after scaling it into `|A^T nu|_i <= w_i`.
fn dual_bound(problem: &WeightedL1Problem, nu: &DVector<f64>) -> f64 {
    let at_nu = problem.a.tr_mul(nu);
    let ratio = at_nu
        .iter()
        .zip(&problem.weights)
        .map(|(v, w)| v.abs() / w)
        .fold(0.0, f64::max);
    let val = problem.y.dot(nu);
    if ratio > 1.0 {
        val / ratio
    } else {
        val
    }
}

struct Polished {
    z: DVector<f64>,
    nu: Option<DVector<f64>>,
}

/// Least-squares fit on the (at most m) largest entries of `z`, plus the
/// dual point closest to `nu0` that is tight on the fitted support.
fn polish(problem: &WeightedL1Problem, support: &[usize], nu0: &DVector<f64>) -> Option<Polished> {
    let (m, n) = problem.a.shape();
    if support.is_empty() || support.len() > m {
        return None;
    }
    let a_s = problem.a.select_columns(support.iter());
    let coef = refined_least_squares(&a_s, &problem.y)?;
    let mut z = DVector::zeros(n);
    for (j, &i) in support.iter().enumerate() {
        z[i] = coef[j];
    }
    let resid = norm_inf((&problem.a * &z - &problem.y).as_slice())
        / (1.0 + norm_inf(problem.y.as_slice()));
    if resid > 1e-11 {
        return None;
    }
    let cmax = norm_inf(coef.as_slice());
    let active: Vec<usize> = support
        .iter()
        .copied()
        .filter(|&i| z[i].abs() > 1e-13 * cmax.max(1e-300))
        .collect();
    let nu = if active.is_empty() {
        None
    } else {
        // nu = nu0 + A_S q  with  A_S^T nu = w_S sign(z_S)
        let a_act = problem.a.select_columns(active.iter());
        let target = DVector::from_iterator(
            active.len(),
            active.iter().map(|&i| problem.weights[i] * z[i].signum()),
        );
        let rhs = target - a_act.tr_mul(nu0);
        let gram = a_act.tr_mul(&a_act);
        gram.cholesky().map(|c| nu0 + &a_act * c.solve(&rhs))
    };
    Some(Polished { z, nu })
}

/// Indices of the nonzeros of `z`, truncated to the `cap` largest
/// magnitudes (ties to the smaller index).
fn support_of(z: &DVector<f64>, cap: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..z.len()).filter(|&i| z[i] != 0.0).collect();
    if idx.len() > cap {
        idx.sort_by(|&i, &j| z[j].abs().total_cmp(&z[i].abs()).then(i.cmp(&j)));
        idx.truncate(cap);
    }
    idx.sort_unstable();
    idx
}

/// Minimizes the weighted l1 norm over `{A z = y}`.
///
/// `tol` is the relative duality-gap (and ADMM residual) target. The
/// minimizer need not be unique; any optimal point may be returned.
pub fn solve_weighted_l1(
    problem: &WeightedL1Problem,
    tol: f64,
    max_iters: usize,
) -> Result<RecoveryResult> {
    if !(tol > 0.0) {
        return Err(Error::domain("tolerance must be positive"));
    }
    let (m, n) = problem.a.shape();
    let w = &problem.weights;

    if m == 0 || norm_inf(problem.y.as_slice()) == 0.0 {
        if m > 0 {
            Projector::new(problem)?;
        }
        return Ok(RecoveryResult {
            z: vec![0.0; n],
            objective: 0.0,
            feasibility_residual: 0.0,
            iterations: 0,
            status: SolveStatus::Converged,
            lower_bound: 0.0,
        });
    }

    let proj = Projector::new(problem)?;
    let x0 = proj.project(&DVector::zeros(n));
    let scale = norm_inf(x0.as_slice()).max(1e-300);
    let mut wsorted = w.clone();
    wsorted.sort_by(f64::total_cmp);
    let w_med = wsorted[n / 2];

    let mut rho = w_med / scale;
    let alpha = 1.6;
    let mut z = x0.clone();
    let mut u = DVector::<f64>::zeros(n);

    let mut best_z = x0.clone();
    let mut best_obj = problem.objective(x0.as_slice());
    let mut lower = f64::NEG_INFINITY;
    let mut last_support: Vec<usize> = Vec::new();

    let done = |ub: f64, lb: f64| ub - lb <= tol * ub.abs().max(1.0);
    let eps_abs = tol * (n as f64).sqrt() * scale;

    let mut iters = 0;
    let mut status = SolveStatus::MaxIters;
    while iters < max_iters {
        iters += 1;
        let x = proj.project(&(&z - &u));
        let xh = &x * alpha + &z * (1.0 - alpha);
        let z_old = z.clone();
        let v = &xh + &u;
        z = DVector::from_iterator(
            n,
            v.iter()
                .zip(w)
                .map(|(vi, wi)| soft_threshold(*vi, wi / rho)),
        );
        u += &xh - &z;

        if iters % 25 != 0 {
            continue;
        }
        let r_norm = (&x - &z).norm();
        let s_norm = rho * (&z - &z_old).norm();

        let ox = problem.objective(x.as_slice());
        if ox < best_obj {
            best_obj = ox;
            best_z = x.clone();
        }
        let nu0 = proj.dual_fit(&(&u * rho));
        lower = lower.max(dual_bound(problem, &nu0));

        let support = support_of(&z, m);
        if support != last_support {
            if let Some(p) = polish(problem, &support, &nu0) {
                let op = problem.objective(p.z.as_slice());
                if op < best_obj {
                    best_obj = op;
                    best_z = p.z;
                }
                if let Some(nu) = p.nu {
                    lower = lower.max(dual_bound(problem, &nu));
                }
            }
            last_support = support;
        }
        if done(best_obj, lower) {
            status = SolveStatus::Converged;
            break;
        }
        let eps_pri = eps_abs + tol * x.norm().max(z.norm());
        let eps_dual = eps_abs * w_med + tol * rho * u.norm();
        if r_norm <= eps_pri && s_norm <= eps_dual {
            status = SolveStatus::Converged;
            break;
        }
        if iters % 50 == 0 {
            if r_norm > 10.0 * s_norm {
                rho *= 2.0;
                u /= 2.0;
            } else if s_norm > 10.0 * r_norm {
                rho /= 2.0;
                u *= 2.0;
            }
        }
    }

    let best: Vec<f64> = best_z.iter().copied().collect();
    let (_, zv) = refine_vertex(problem, best, best_obj);
    let feas = problem.feasibility_residual(&zv);
    if feas > FEASIBILITY_TOL {
        status = SolveStatus::MaxIters;
    }
    Ok(RecoveryResult {
        objective: problem.objective(&zv),
        z: zv,
        feasibility_residual: feas,
        iterations: iters,
        status,
        lower_bound: lower,
    })
}

/// Same as [`solve_weighted_l1`] with the default tolerance and budget.
pub fn solve(problem: &WeightedL1Problem) -> Result<RecoveryResult> {
    solve_weighted_l1(problem, DEFAULT_TOL, DEFAULT_MAX_ITERS)
}

/// Exact optimum by the simplex method on the split `z = u - v`,
/// `u, v >= 0`. Shares no code with [`solve_weighted_l1`].
pub fn lp_oracle_weighted_l1(problem: &WeightedL1Problem) -> Result<(f64, Vec<f64>)> {
    let (m, n) = problem.a.shape();
    if n > ORACLE_MAX_N {
        return Err(Error::TooLarge(format!(
            "oracle limited to n <= {ORACLE_MAX_N}, got {n}"
        )));
    }
    let mut split = DMatrix::zeros(m, 2 * n);
    for r in 0..m {
        for c in 0..n {
            split[(r, c)] = problem.a[(r, c)];
            split[(r, n + c)] = -problem.a[(r, c)];
        }
    }
    let cost: Vec<f64> = problem
        .weights
        .iter()
        .chain(&problem.weights)
        .copied()
        .collect();
    match solve_standard_form(&split, problem.y.as_slice(), &cost)? {
        LpOutcome::Optimal { x, objective } => {
            let z: Vec<f64> = (0..n).map(|i| x[i] - x[n + i]).collect();
            Ok(refine_vertex(problem, z, objective))
        }
        LpOutcome::Infeasible => Err(Error::Infeasible),
        LpOutcome::Unbounded => Err(Error::Numerical("weighted l1 program unbounded".into())),
    }
}

/// Re-solves the basic system of an LP vertex with iterative refinement so
/// the reported objective is accurate to a few ulps even when huge weights
/// amplify rounding in the simplex tableau.
fn refine_vertex(problem: &WeightedL1Problem, z: Vec<f64>, objective: f64) -> (f64, Vec<f64>) {
    let m = problem.a.nrows();
    let support: Vec<usize> = (0..z.len()).filter(|&i| z[i] != 0.0).collect();
    if support.is_empty() || support.len() > m {
        return (objective, z);
    }
    let a_s = problem.a.select_columns(support.iter());
    let Some(coef) = refined_least_squares(&a_s, &problem.y) else {
        return (objective, z);
    };
    let mut out = vec![0.0; z.len()];
    for (j, &i) in support.iter().enumerate() {
        if coef[j].signum() != z[i].signum() {
            return (objective, z);
        }
        out[i] = coef[j];
    }
    if problem.feasibility_residual(&out) > FEASIBILITY_TOL {
        return (objective, z);
    }
    (problem.objective(&out), out)
}

pub use crate::linalg::null_space_basis;
