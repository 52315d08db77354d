use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ampdist::{sample_amplitudes, AmplitudeDistribution};
use crate::error::{Error, Result};
use crate::geometry::{
    grassmann_direct, grassmann_sum, internal_angle_detailed, j_integral,
    WeightedCrossPolytopeSpec, MAX_SUM_DIM,
};
use crate::recovery::{k_support, l1_recover, overlap_bound, reweighted_recover, support_overlap};
use crate::stability::{
    estimate_weak_threshold, kappa_sample, overlap_from_zeta, scaling_constant, zeta,
    StabilityRecord, StabilityReport, KAPPA_STAR_INFLATION, KAPPA_STAR_SAMPLES,
};

use super::config::{Algorithm, AngleTable, ExperimentConfig, ExperimentKind};
use super::table::{Meta, Table, Value};
use super::{
    gaussian_matrix, is_exact_recovery, measure, random_instance, random_sparse_signal, splitmix64,
    trial_seed,
};

/// Additive slack on the stability bound check.
pub const STABILITY_SLACK: f64 = 1e-6;
const THRESHOLD_LEVEL: f64 = 0.5;

fn measurements(delta: f64, n: usize) -> usize {
    ((delta * n as f64).round() as usize).clamp(1, n)
}

fn sparsity(frac: f64, n: usize) -> Result<usize> {
    let k = (frac * n as f64).round();
    if !(k >= 0.0) || k > n as f64 {
        return Err(Error::Config(format!("sparsity {k} outside [0, {n}]")));
    }
    Ok(k as usize)
}

/// Success counts over a `delta x rho` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub n: usize,
    pub algorithm: Algorithm,
    pub deltas: Vec<f64>,
    pub rhos: Vec<f64>,
    pub trials: usize,
    /// Row-major over `(delta, rho)`.
    pub successes: Vec<usize>,
    /// Instance seed of the lowest failing trial of each cell; feeding it to
    /// [`random_instance`] rebuilds that instance.
    pub first_failure_seed: Vec<Option<u64>>,
    /// Trials breaking `|K ∩ L| >= k - W(x, ||x - x_hat||_1)`.
    pub overlap_violations: usize,
}

impl PhaseGrid {
    pub fn cell(&self, i: usize, j: usize) -> usize {
        i * self.rhos.len() + j
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.successes[self.cell(i, j)] as f64 / self.trials as f64
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&[
            "delta",
            "rho",
            "m",
            "k",
            "trials",
            "successes",
            "rate",
            "first_failure_seed",
        ]);
        for (i, &d) in self.deltas.iter().enumerate() {
            for (j, &r) in self.rhos.iter().enumerate() {
                let c = self.cell(i, j);
                t.push(vec![
                    d.into(),
                    r.into(),
                    measurements(d, self.n).into(),
                    ((r * self.n as f64).round() as usize).into(),
                    self.trials.into(),
                    self.successes[c].into(),
                    self.rate(i, j).into(),
                    self.first_failure_seed[c].into(),
                ]);
            }
        }
        t
    }

    /// Inverse of [`PhaseGrid::to_table`] given the run's `n`, algorithm
    /// and violation count, which the table does not carry.
    pub fn from_table(t: &Table, n: usize, algorithm: Algorithm) -> Result<Self> {
        let bad = || Error::Config("table is not a phase grid".into());
        let mut deltas: Vec<f64> = Vec::new();
        let mut rhos: Vec<f64> = Vec::new();
        let mut successes = Vec::new();
        let mut seeds = Vec::new();
        let mut trials = 0;
        for r in 0..t.rows.len() {
            let d = t.f64_at(r, "delta").ok_or_else(bad)?;
            let rho = t.f64_at(r, "rho").ok_or_else(bad)?;
            if deltas.last() != Some(&d) {
                deltas.push(d);
            }
            if deltas.len() == 1 {
                rhos.push(rho);
            }
            trials = t.get(r, "trials").and_then(Value::as_u64).ok_or_else(bad)? as usize;
            successes.push(
                t.get(r, "successes")
                    .and_then(Value::as_u64)
                    .ok_or_else(bad)? as usize,
            );
            seeds.push(match t.get(r, "first_failure_seed").ok_or_else(bad)? {
                Value::Uint(s) => Some(*s),
                Value::Missing => None,
                _ => return Err(bad()),
            });
        }
        if deltas.len() * rhos.len() != successes.len() {
            return Err(bad());
        }
        Ok(Self {
            n,
            algorithm,
            deltas,
            rhos,
            trials,
            successes,
            first_failure_seed: seeds,
            overlap_violations: 0,
        })
    }
}

fn overlap_ok(x: &crate::recovery::SparseSignal, x_hat: &[f64]) -> Result<bool> {
    if x.k() == 0 {
        return Ok(true);
    }
    let (hits, rhs) = overlap_bound(x, x_hat)?;
    Ok(hits >= rhs)
}

pub fn run_phase_diagram(cfg: &ExperimentConfig) -> Result<PhaseGrid> {
    cfg.validate()?;
    let n = cfg.n;
    let cells: Vec<(usize, usize)> = (0..cfg.delta.len())
        .flat_map(|i| (0..cfg.rho.len()).map(move |j| (i, j)))
        .collect();
    for &r in &cfg.rho {
        sparsity(r, n)?;
    }
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let outcomes = tasks
        .par_iter()
        .map(|&(c, t)| -> Result<(bool, bool, u64)> {
            let (i, j) = cells[c];
            let m = measurements(cfg.delta[i], n);
            let k = sparsity(cfg.rho[j], n)?;
            let seed = trial_seed(cfg.seed, c as u64, t as u64);
            let inst = random_instance(n, m, k, &cfg.dist, seed)?;
            let x = inst.x.to_dense();
            let solved = match cfg.algorithm {
                Algorithm::Plain => l1_recover(&inst.a, &inst.y).map(|r| (r.z.clone(), r.z)),
                Algorithm::Reweighted => {
                    reweighted_recover(&inst.a, &inst.y, k, cfg.omega).map(|o| (o.x_star, o.x_hat))
                }
            };
            match solved {
                Ok((z, x_hat)) => Ok((
                    is_exact_recovery(&z, &x),
                    overlap_ok(&inst.x, &x_hat)?,
                    seed,
                )),
                Err(e) => {
                    log::warn!("cell {c} trial {t}: {e}");
                    Ok((false, true, seed))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut successes = vec![0; cells.len()];
    let mut first = vec![None; cells.len()];
    let mut violations = 0;
    for (&(c, _), &(ok, bound_ok, seed)) in tasks.iter().zip(&outcomes) {
        if ok {
            successes[c] += 1;
        } else if first[c].is_none() {
            first[c] = Some(seed);
        }
        violations += usize::from(!bound_ok);
    }
    Ok(PhaseGrid {
        n,
        algorithm: cfg.algorithm,
        deltas: cfg.delta.clone(),
        rhos: cfg.rho.clone(),
        trials: cfg.trials,
        successes,
        first_failure_seed: first,
        overlap_violations: violations,
    })
}

/// Stability reports for each back-off, with the threshold they share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySweep {
    pub delta: f64,
    pub n: usize,
    pub mu_w: f64,
    pub reports: Vec<StabilityReport>,
}

impl StabilitySweep {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&[
            "varpi",
            "c",
            "k",
            "trials",
            "satisfied",
            "fraction",
            "max_ratio",
        ]);
        for (r, rep) in self.reports.iter().enumerate() {
            let ratio = rep
                .records
                .iter()
                .map(|x| {
                    if x.bound > 0.0 {
                        x.error_tail / x.bound
                    } else {
                        0.0
                    }
                })
                .fold(0.0f64, f64::max);
            t.push(vec![
                rep.varpi.into(),
                rep.c.into(),
                self.k_for(r).into(),
                rep.records.len().into(),
                rep.records.iter().filter(|x| x.satisfied).count().into(),
                rep.fraction_satisfied().into(),
                ratio.into(),
            ]);
        }
        t
    }

    fn k_for(&self, r: usize) -> usize {
        ((1.0 - self.reports[r].varpi) * self.mu_w * self.n as f64).round() as usize
    }
}

/// `k` dominant entries plus a dense tail with `||tail||_1 = ratio ||dominant||_1`.
fn compressible_signal(
    n: usize,
    k: usize,
    dist: &AmplitudeDistribution,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<usize>, f64)> {
    let dom = random_sparse_signal(n, k, dist, splitmix64(seed ^ 2))?;
    let mut x = dom.to_dense();
    let target = ratio * dom.norm1();
    if target > 0.0 && k < n {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 3));
        let off: Vec<usize> = (0..n)
            .filter(|i| dom.support().binary_search(i).is_err())
            .collect();
        let mags: Vec<f64> = off.iter().map(|_| dist.sample_with(&mut rng)).collect();
        let total: f64 = mags.iter().sum();
        for (&i, &mg) in off.iter().zip(&mags) {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            x[i] = sign * mg * target / total;
        }
    }
    let tail: f64 = (0..n)
        .filter(|i| dom.support().binary_search(i).is_err())
        .map(|i| x[i].abs())
        .sum();
    Ok((x, dom.support().to_vec(), tail))
}

pub fn run_stability_sweep(cfg: &ExperimentConfig) -> Result<StabilitySweep> {
    cfg.validate()?;
    let n = cfg.n;
    let delta = cfg.delta[0];
    let m = measurements(delta, n);
    let mu_w = estimate_weak_threshold(delta, n, cfg.threshold_trials, cfg.seed, THRESHOLD_LEVEL)?;
    let mut reports = Vec::new();
    for (vi, &varpi) in cfg.varpi.iter().enumerate() {
        let c = scaling_constant(varpi)?;
        let k = ((1.0 - varpi) * mu_w * n as f64).round() as usize;
        let records = (0..cfg.trials)
            .into_par_iter()
            .map(|t| -> Result<StabilityRecord> {
                let seed = trial_seed(cfg.seed, 1000 + vi as u64, t as u64);
                let a = gaussian_matrix(m, n, splitmix64(seed ^ 1))?;
                let (x, support, tail) =
                    compressible_signal(n, k, &cfg.dist, cfg.tail_ratio, seed)?;
                let y = measure(&a, &x);
                let err_tail = match l1_recover(&a, &y) {
                    Ok(r) => (0..n)
                        .filter(|i| support.binary_search(i).is_err())
                        .map(|i| (x[i] - r.z[i]).abs())
                        .sum(),
                    Err(e) => {
                        log::warn!("varpi {varpi} trial {t}: {e}");
                        f64::NAN
                    }
                };
                Ok(StabilityRecord::new(tail, err_tail, c, STABILITY_SLACK))
            })
            .collect::<Result<Vec<_>>>()?;
        reports.push(StabilityReport { varpi, c, records });
    }
    Ok(StabilitySweep {
        delta,
        n,
        mu_w,
        reports,
    })
}

/// Support-overlap study: columns `epsilon0, k, zeta, predicted,
/// vacuous_fraction, overlap_mean, overlap_sd, kappa_star_mean,
/// overlap_violations`.
pub fn run_support_overlap(cfg: &ExperimentConfig) -> Result<Table> {
    cfg.validate()?;
    let n = cfg.n;
    let delta = cfg.delta[0];
    let m = measurements(delta, n);
    let mu_w = estimate_weak_threshold(delta, n, cfg.threshold_trials, cfg.seed, THRESHOLD_LEVEL)?;
    // the minimizing epsilon1 does not depend on kappa*
    let mut t = Table::new(&[
        "epsilon0",
        "k",
        "mu_w",
        "zeta",
        "predicted",
        "vacuous_fraction",
        "overlap_mean",
        "overlap_sd",
        "kappa_star_mean",
        "overlap_violations",
    ]);
    for (ei, &e0) in cfg.epsilon0.iter().enumerate() {
        let base = zeta(e0, &cfg.dist, mu_w, 0.0)?;
        let k = (((1.0 + e0) * mu_w * n as f64).round() as usize).min(n);
        let k1 = (((1.0 - base.epsilon1) * mu_w * n as f64).round() as usize).min(k);
        let rows = (0..cfg.trials)
            .into_par_iter()
            .map(|tr| -> Result<(f64, f64, bool, f64, bool)> {
                let seed = trial_seed(cfg.seed, 2000 + ei as u64, tr as u64);
                let inst = random_instance(n, m, k, &cfg.dist, seed)?;
                let k1_set = k_support(&inst.x.to_dense(), k1)?;
                let kappa = KAPPA_STAR_INFLATION
                    * kappa_sample(
                        &inst.a,
                        k1_set.indices(),
                        KAPPA_STAR_SAMPLES,
                        splitmix64(seed ^ 4),
                    )?;
                let z = base.value * (1.0 + kappa);
                let pred = overlap_from_zeta(&cfg.dist, z)?;
                let x_hat = match l1_recover(&inst.a, &inst.y) {
                    Ok(r) => r.z,
                    Err(e) => return Err(e.at_stage("support overlap trial")),
                };
                let l = k_support(&x_hat, k)?;
                let ov = if k > 0 {
                    support_overlap(inst.x.support(), l.indices())?
                } else {
                    1.0
                };
                Ok((
                    ov,
                    pred.value,
                    pred.vacuous,
                    kappa,
                    overlap_ok(&inst.x, &x_hat)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let nt = rows.len() as f64;
        let mean = rows.iter().map(|r| r.0).sum::<f64>() / nt;
        let var = rows.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (nt - 1.0).max(1.0);
        let kappa_mean = rows.iter().map(|r| r.3).sum::<f64>() / nt;
        t.push(vec![
            e0.into(),
            k.into(),
            mu_w.into(),
            (base.value * (1.0 + kappa_mean)).into(),
            (rows.iter().map(|r| r.1).sum::<f64>() / nt).into(),
            (rows.iter().filter(|r| r.2).count() as f64 / nt).into(),
            mean.into(),
            var.sqrt().into(),
            kappa_mean.into(),
            rows.iter().filter(|r| !r.4).count().into(),
        ]);
    }
    Ok(t)
}

/// Plain l1 against the two-step algorithm on paired instances at multiples
/// of the estimated weak threshold.
pub fn run_reweighted_compare(cfg: &ExperimentConfig) -> Result<Table> {
    cfg.validate()?;
    let n = cfg.n;
    let delta = cfg.delta[0];
    let m = measurements(delta, n);
    let mu_w = estimate_weak_threshold(delta, n, cfg.threshold_trials, cfg.seed, THRESHOLD_LEVEL)?;
    let mut t = Table::new(&[
        "delta",
        "n",
        "mu_w",
        "factor",
        "k",
        "trials",
        "plain_rate",
        "reweighted_rate",
        "lift",
        "overlap_violations",
    ]);
    for (fi, &f) in cfg.threshold_factor.iter().enumerate() {
        let k = ((f * mu_w * n as f64).round() as usize).min(n);
        let res = (0..cfg.trials)
            .into_par_iter()
            .map(|tr| -> Result<(bool, bool, usize)> {
                let seed = trial_seed(cfg.seed, 3000 + fi as u64, tr as u64);
                let inst = random_instance(n, m, k, &cfg.dist, seed)?;
                let x = inst.x.to_dense();
                match reweighted_recover(&inst.a, &inst.y, k, cfg.omega) {
                    Ok(o) => {
                        let bad = usize::from(!overlap_ok(&inst.x, &o.x_hat)?)
                            + usize::from(!overlap_ok(&inst.x, &o.x_star)?);
                        Ok((
                            is_exact_recovery(&o.x_hat, &x),
                            is_exact_recovery(&o.x_star, &x),
                            bad,
                        ))
                    }
                    Err(e) => {
                        log::warn!("factor {f} trial {tr}: {e}");
                        Ok((false, false, 0))
                    }
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let nt = res.len() as f64;
        let plain = res.iter().filter(|r| r.0).count() as f64 / nt;
        let rew = res.iter().filter(|r| r.1).count() as f64 / nt;
        t.push(vec![
            delta.into(),
            n.into(),
            mu_w.into(),
            f.into(),
            k.into(),
            cfg.trials.into(),
            plain.into(),
            rew.into(),
            (rew - plain).into(),
            res.iter().map(|r| r.2).sum::<usize>().into(),
        ]);
    }
    Ok(t)
}

/// Order-statistic concentration: `S_M / S_N` against
/// `int_0^{F^-1(M/N)} x f(x) dx / E|X|`, and `S_N / N` against `E|X|`.
pub fn run_concentration(cfg: &ExperimentConfig) -> Result<Table> {
    cfg.validate()?;
    let dist = &cfg.dist;
    let mean = dist.partial_first_moment(f64::INFINITY)?;
    let mut t = Table::new(&[
        "n_samples",
        "m_smallest",
        "reps",
        "ratio_mean",
        "analytic",
        "abs_dev_mean",
        "mean_abs",
        "mean_dev",
    ]);
    for &big_n in &cfg.sizes {
        let small_m = ((cfg.m_fraction * big_n as f64).round() as usize).clamp(1, big_n);
        let analytic =
            dist.partial_first_moment(dist.quantile(small_m as f64 / big_n as f64)?)? / mean;
        let reps: Vec<(f64, f64)> = (0..cfg.trials)
            .into_par_iter()
            .map(|r| {
                let mut v =
                    sample_amplitudes(dist, big_n, trial_seed(cfg.seed, big_n as u64, r as u64));
                let s_n: f64 = v.iter().sum();
                let s_m: f64 = if small_m == big_n {
                    s_n
                } else {
                    v.select_nth_unstable_by(small_m, f64::total_cmp);
                    v[..small_m].iter().sum()
                };
                (s_m / s_n, s_n / big_n as f64)
            })
            .collect();
        let nr = reps.len() as f64;
        t.push(vec![
            big_n.into(),
            small_m.into(),
            cfg.trials.into(),
            (reps.iter().map(|r| r.0).sum::<f64>() / nr).into(),
            analytic.into(),
            (reps.iter().map(|r| (r.0 - analytic).abs()).sum::<f64>() / nr).into(),
            (reps.iter().map(|r| r.1).sum::<f64>() / nr).into(),
            (reps.iter().map(|r| (r.1 - mean).abs()).sum::<f64>() / nr).into(),
        ]);
    }
    Ok(t)
}

/// `J(m', theta)` or `B(alpha', m')` on a grid; columns `m_prime, param,
/// value, imag_residual`.
pub fn run_angles(cfg: &ExperimentConfig) -> Result<Table> {
    cfg.validate()?;
    let params = cfg.params.clone().unwrap_or_else(|| match cfg.table {
        AngleTable::J => vec![0.5, 1.0, 2.0, 3.0],
        AngleTable::B => (1..10).map(|i| i as f64 / 10.0).collect(),
    });
    let mut t = Table::new(&["m_prime", "param", "value", "imag_residual"]);
    for mp in 1..=cfg.m_prime_max {
        for &p in &params {
            let (v, im) = match cfg.table {
                AngleTable::J => {
                    let j = j_integral(mp, p).map_err(config_if_domain)?;
                    (j.re, j.im)
                }
                AngleTable::B => {
                    let b = internal_angle_detailed(p, mp).map_err(config_if_domain)?;
                    (b.value, b.imag_residual)
                }
            };
            t.push(vec![mp.into(), p.into(), v.into(), im.into()]);
        }
    }
    Ok(t)
}

fn config_if_domain(e: Error) -> Error {
    match e {
        Error::Domain(msg) => Error::Config(msg),
        other => other,
    }
}

/// Face-sum estimate against direct sampling of the null-space condition.
pub fn run_grassmann_xcheck(cfg: &ExperimentConfig) -> Result<Table> {
    cfg.validate()?;
    if cfg.n > MAX_SUM_DIM {
        return Err(Error::Config(format!(
            "grassmann cross-check needs n <= {MAX_SUM_DIM}"
        )));
    }
    if cfg.k > cfg.n {
        return Err(Error::Config("k exceeds n".into()));
    }
    let spec = WeightedCrossPolytopeSpec::sp(cfg.n, cfg.k, cfg.c)?;
    let mut t = Table::new(&[
        "n",
        "m",
        "k",
        "c",
        "sum",
        "sum_stderr",
        "direct",
        "direct_stderr",
        "abs_diff",
    ]);
    for &d in &cfg.delta {
        let m = measurements(d, cfg.n);
        let s = grassmann_sum(&spec, m, cfg.samples, cfg.seed)?;
        let p = grassmann_direct(&spec, m, cfg.trials, cfg.seed)?;
        let sd = (p * (1.0 - p) / cfg.trials as f64).sqrt();
        t.push(vec![
            cfg.n.into(),
            m.into(),
            cfg.k.into(),
            cfg.c.into(),
            s.value.into(),
            s.stderr.into(),
            p.into(),
            sd.into(),
            (s.value - p).abs().into(),
        ]);
    }
    Ok(t)
}

/// A finished run: its table, provenance, and the overlap-bound violation count
/// (which must be zero).
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub meta: Meta,
    pub table: Table,
    pub overlap_violations: usize,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (table, overlap_violations) = match cfg.kind {
        ExperimentKind::PhaseDiagram => {
            let g = run_phase_diagram(cfg)?;
            (g.to_table(), g.overlap_violations)
        }
        kind => {
            let t = match kind {
                ExperimentKind::StabilitySweep => run_stability_sweep(cfg)?.to_table(),
                ExperimentKind::SupportOverlap => run_support_overlap(cfg)?,
                ExperimentKind::ReweightedCompare => run_reweighted_compare(cfg)?,
                ExperimentKind::Concentration => run_concentration(cfg)?,
                ExperimentKind::Angles => run_angles(cfg)?,
                _ => run_grassmann_xcheck(cfg)?,
            };
            let v = t.column("overlap_violations").map_or(0, |c| {
                t.rows.iter().filter_map(|r| r[c].as_u64()).sum::<u64>() as usize
            });
            (t, v)
        }
    };
    Ok(ExperimentOutput {
        meta: Meta {
            version: crate::VERSION.to_string(),
            experiment: cfg.kind.to_string(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
        },
        table,
        overlap_violations,
    })
}
