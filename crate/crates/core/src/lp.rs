//! Dense two-phase tableau simplex for small standard-form programs
//!
//! ```text
//! minimize c^T x  subject to  A x = b,  x >= 0
//! ```
//!
//! Bland's rule is used throughout so the method terminates on degenerate
//! vertices. Intended for desk-scale oracles (tens of variables), not speed.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: usize,
    cols: usize,
    // rows x (cols + 1); last column is the right-hand side
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.t[pr * w + pc];
        for c in 0..w {
            self.t[pr * w + c] /= p;
        }
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f != 0.0 {
                for c in 0..w {
                    self.t[r * w + c] -= f * self.t[pr * w + c];
                }
            }
        }
        self.basis[pr] = pc;
    }

    /// Reduced costs of `cost` restricted to columns `< active`.
    fn reduced_costs(&self, cost: &[f64], active: usize) -> Vec<f64> {
        let mut d: Vec<f64> = cost[..active].to_vec();
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for (c, dc) in d.iter_mut().enumerate() {
                    *dc -= cb * self.at(r, c);
                }
            }
        }
        d
    }

    /// Runs Bland pivots for `cost` over the first `active` columns.
    fn optimize(&mut self, cost: &[f64], active: usize) -> Result<bool> {
        let scale = cost[..active].iter().fold(1.0_f64, |m, c| m.max(c.abs()));
        for _ in 0..MAX_PIVOTS {
            let d = self.reduced_costs(cost, active);
            let entering = (0..active).find(|&c| d[c] < -1e-10 * scale);
            let Some(pc) = entering else {
                return Ok(true);
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(r) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            if ratio < bv - 1e-14
                                || (ratio <= bv + 1e-14 && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            match best {
                None => return Ok(false),
                Some((pr, _)) => self.pivot(pr, pc),
            }
        }
        Err(Error::Numerical("simplex pivot limit reached".into()))
    }
}

/// Solves `min c^T x, A x = b, x >= 0`.
pub fn solve_standard_form(a: &DMatrix<f64>, b: &[f64], c: &[f64]) -> Result<LpOutcome> {
    let (m, n) = a.shape();
    if b.len() != m || c.len() != n {
        return Err(Error::Dimension("lp shapes disagree".into()));
    }
    if a.iter().chain(b).chain(c).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lp data"));
    }
    let cols = n + m;
    let w = cols + 1;
    let mut t = vec![0.0; m * w];
    for r in 0..m {
        let sgn = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[r * w + j] = sgn * a[(r, j)];
        }
        t[r * w + n + r] = 1.0;
        t[r * w + cols] = sgn * b[r];
    }
    let mut tab = Tableau {
        rows: m,
        cols,
        t,
        basis: (n..n + m).collect(),
    };

    // phase I: minimize the sum of artificials
    let mut phase1 = vec![0.0; cols];
    phase1[n..].iter_mut().for_each(|v| *v = 1.0);
    tab.optimize(&phase1, cols)?;
    let infeas: f64 = (0..m)
        .filter(|&r| tab.basis[r] >= n)
        .map(|r| tab.rhs(r))
        .sum();
    let bscale = b.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
    if infeas > 1e-9 * bscale {
        return Ok(LpOutcome::Infeasible);
    }
    // drive remaining artificials out; rows that cannot pivot are redundant
    let mut r = 0;
    while r < tab.rows {
        if tab.basis[r] >= n {
            match (0..n).find(|&j| tab.at(r, j).abs() > 1e-9) {
                Some(j) => {
                    tab.pivot(r, j);
                    r += 1;
                }
                None => {
                    let w = tab.cols + 1;
                    tab.t.drain(r * w..(r + 1) * w);
                    tab.basis.remove(r);
                    tab.rows -= 1;
                }
            }
        } else {
            r += 1;
        }
    }

    // phase II over the original columns only
    let mut cost = c.to_vec();
    cost.extend(std::iter::repeat_n(0.0, m));
    if !tab.optimize(&cost, n)? {
        return Ok(LpOutcome::Unbounded);
    }
    let mut x = vec![0.0; n];
    for r in 0..tab.rows {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.rhs(r).max(0.0);
        }
    }
    let objective = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
    Ok(LpOutcome::Optimal { x, objective })
}
