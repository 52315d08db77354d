use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use l1stab::harness::{
    self, render, Algorithm, AngleTable, ExperimentConfig, ExperimentKind, Meta, OutputFormat,
    Table,
};
use l1stab::{solver, AmplitudeDistribution, Error, Result, WeightedL1Problem};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "l1stab",
    version,
    about = "Weighted l1 recovery, stability scaling and Grassmann-angle experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by every experiment.
#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long)]
    n: Option<usize>,
    /// Measurement ratios m/n (comma separated).
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    /// Sparsity ratios k/n (comma separated).
    #[arg(long, value_delimiter = ',')]
    rho: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    omega: Option<f64>,
    /// half_normal, uniform, power:T or point_mass.
    #[arg(long)]
    dist: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one weighted l1 instance read from CSV files.
    Solve {
        /// Row-major matrix A, one row per line, no header.
        #[arg(long)]
        matrix: PathBuf,
        /// Measurements y.
        #[arg(long)]
        y: PathBuf,
        /// Weights (default all ones).
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = solver::DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = solver::DEFAULT_MAX_ITERS)]
        max_iters: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        format: Option<String>,
    },
    /// Success-rate grid over (delta, rho).
    PhaseDiagram {
        #[command(flatten)]
        common: Common,
        /// plain or reweighted.
        #[arg(long)]
        algorithm: Option<String>,
    },
    /// Tail-error bound check across back-offs varpi.
    StabilitySweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        varpi: Option<Vec<f64>>,
        #[arg(long)]
        tail_ratio: Option<f64>,
    },
    /// Empirical support overlap against the predicted lower bound.
    SupportOverlap {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        epsilon0: Option<Vec<f64>>,
    },
    /// Plain l1 against the two-step reweighted algorithm.
    ReweightedCompare {
        #[command(flatten)]
        common: Common,
        /// Multiples of the estimated weak threshold.
        #[arg(long, value_delimiter = ',')]
        factor: Option<Vec<f64>>,
    },
    /// Order-statistic concentration of amplitude sums.
    Concentration {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        m_fraction: Option<f64>,
    },
    /// Tables of J(m', theta) or B(alpha', m').
    Angles {
        #[command(flatten)]
        common: Common,
        /// j or b.
        #[arg(long)]
        table: Option<String>,
        #[arg(long)]
        m_prime_max: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        params: Option<Vec<f64>>,
    },
    /// Grassmann face sum against direct null-space sampling.
    GrassmannXcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

fn parse_format(s: Option<&str>) -> Result<Option<OutputFormat>> {
    s.map(OutputFormat::from_str).transpose()
}

fn base_config(kind: ExperimentKind, common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let cfg = ExperimentConfig::from_json_file(path)?;
            if cfg.kind != kind {
                return Err(Error::Config(format!(
                    "config is for {} but the subcommand runs {kind}",
                    cfg.kind
                )));
            }
            cfg
        }
        None => ExperimentConfig::defaults(kind),
    };
    let c = common.clone();
    if let Some(v) = c.n {
        cfg.n = v;
    }
    if let Some(v) = c.delta {
        cfg.delta = v;
    }
    if let Some(v) = c.rho {
        cfg.rho = v;
    }
    if let Some(v) = c.trials {
        cfg.trials = v;
    }
    if let Some(v) = c.omega {
        cfg.omega = v;
    }
    if let Some(v) = c.dist {
        cfg.dist = AmplitudeDistribution::from_str(&v).map_err(config_err)?;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.out {
        cfg.out = Some(v);
    }
    if let Some(v) = parse_format(c.format.as_deref())? {
        cfg.format = v;
    }
    Ok(cfg)
}

fn build_config(cmd: Cmd) -> Result<ExperimentConfig> {
    let cfg = match cmd {
        Cmd::Solve { .. } => unreachable!("solve has no experiment config"),
        Cmd::PhaseDiagram { common, algorithm } => {
            let mut cfg = base_config(ExperimentKind::PhaseDiagram, &common)?;
            if let Some(a) = algorithm {
                cfg.algorithm = match a.as_str() {
                    "plain" => Algorithm::Plain,
                    "reweighted" => Algorithm::Reweighted,
                    _ => return Err(Error::Config(format!("unknown algorithm {a:?}"))),
                };
            }
            cfg
        }
        Cmd::StabilitySweep {
            common,
            varpi,
            tail_ratio,
        } => {
            let mut cfg = base_config(ExperimentKind::StabilitySweep, &common)?;
            if let Some(v) = varpi {
                cfg.varpi = v;
            }
            if let Some(v) = tail_ratio {
                cfg.tail_ratio = v;
            }
            cfg
        }
        Cmd::SupportOverlap { common, epsilon0 } => {
            let mut cfg = base_config(ExperimentKind::SupportOverlap, &common)?;
            if let Some(v) = epsilon0 {
                cfg.epsilon0 = v;
            }
            cfg
        }
        Cmd::ReweightedCompare { common, factor } => {
            let mut cfg = base_config(ExperimentKind::ReweightedCompare, &common)?;
            if let Some(v) = factor {
                cfg.threshold_factor = v;
            }
            cfg
        }
        Cmd::Concentration {
            common,
            sizes,
            m_fraction,
        } => {
            let mut cfg = base_config(ExperimentKind::Concentration, &common)?;
            if let Some(v) = sizes {
                cfg.sizes = v;
            }
            if let Some(v) = m_fraction {
                cfg.m_fraction = v;
            }
            cfg
        }
        Cmd::Angles {
            common,
            table,
            m_prime_max,
            params,
        } => {
            let mut cfg = base_config(ExperimentKind::Angles, &common)?;
            if let Some(t) = table {
                cfg.table = match t.as_str() {
                    "j" | "J" => AngleTable::J,
                    "b" | "B" => AngleTable::B,
                    _ => return Err(Error::Config(format!("unknown angle table {t:?}"))),
                };
            }
            if let Some(v) = m_prime_max {
                cfg.m_prime_max = v;
            }
            if params.is_some() {
                cfg.params = params;
            }
            cfg
        }
        Cmd::GrassmannXcheck {
            common,
            k,
            c,
            samples,
        } => {
            let mut cfg = base_config(ExperimentKind::GrassmannXcheck, &common)?;
            if let Some(v) = k {
                cfg.k = v;
            }
            if let Some(v) = c {
                cfg.c = v;
            }
            if let Some(v) = samples {
                cfg.samples = v;
            }
            cfg
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_output(
    table: &Table,
    meta: &Meta,
    out: Option<&Path>,
    format: OutputFormat,
) -> Result<()> {
    match out {
        Some(path) => harness::emit(table, meta, path, format),
        None => {
            print!("{}", render(table, meta, format)?);
            Ok(())
        }
    }
}

fn read_csv_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|c| {
                    c.trim().parse::<f64>().map_err(|_| {
                        Error::Config(format!(
                            "{}: line {}: bad number {c:?}",
                            path.display(),
                            i + 1
                        ))
                    })
                })
                .collect()
        })
        .collect()
}

fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let rows = read_csv_rows(path)?;
    if rows.len() == 1 || rows.iter().all(|r| r.len() == 1) {
        Ok(rows.into_iter().flatten().collect())
    } else {
        Err(Error::Config(format!(
            "{}: expected one row or one column",
            path.display()
        )))
    }
}

fn solve_command(
    matrix: &Path,
    y: &Path,
    weights: Option<&Path>,
    tol: f64,
    max_iters: usize,
    out: Option<&Path>,
    format: OutputFormat,
) -> Result<bool> {
    let rows = read_csv_rows(matrix)?;
    let m = rows.len();
    let n = rows.first().map_or(0, |r| r.len());
    if m == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!(
            "{}: ragged or empty matrix",
            matrix.display()
        )));
    }
    let a = DMatrix::from_fn(m, n, |r, c| rows[r][c]);
    let yv = read_vector(y)?;
    let w = match weights {
        Some(p) => read_vector(p)?,
        None => vec![1.0; n],
    };
    let mut hasher = Sha256::new();
    for p in [Some(matrix), Some(y), weights].into_iter().flatten() {
        hasher.update(std::fs::read(p).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        })?);
    }
    let digest = hasher.finalize();
    let problem = WeightedL1Problem::new(a, yv, w)?;
    let res = solver::solve_weighted_l1(&problem, tol, max_iters)?;
    eprintln!(
        "status {:?}, objective {:.12e}, lower bound {:.12e}, residual {:.3e}, iterations {}",
        res.status, res.objective, res.lower_bound, res.feasibility_residual, res.iterations
    );
    let mut table = Table::new(&["index", "value"]);
    for (i, v) in res.z.iter().enumerate() {
        table.push(vec![i.into(), (*v).into()]);
    }
    let meta = Meta {
        version: l1stab::VERSION.to_string(),
        experiment: "solve".into(),
        config_hash: digest[..8].iter().map(|b| format!("{b:02x}")).collect(),
        seed: 0,
    };
    write_output(&table, &meta, out, format)?;
    Ok(res.is_converged())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Solve {
            matrix,
            y,
            weights,
            tol,
            max_iters,
            out,
            format,
        } => {
            let format = parse_format(format.as_deref())?.unwrap_or(OutputFormat::Csv);
            solve_command(
                &matrix,
                &y,
                weights.as_deref(),
                tol,
                max_iters,
                out.as_deref(),
                format,
            )
        }
        cmd => {
            let cfg = build_config(cmd)?;
            let output = harness::run_experiment(&cfg)?;
            write_output(&output.table, &output.meta, cfg.out.as_deref(), cfg.format)?;
            if output.overlap_violations > 0 {
                eprintln!(
                    "error: {} overlap-bound violations",
                    output.overlap_violations
                );
                return Ok(false);
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NUMERICAL),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() || matches!(e, Error::Io { .. }) {
                EXIT_CONFIG
            } else {
                EXIT_NUMERICAL
            })
        }
    }
}
