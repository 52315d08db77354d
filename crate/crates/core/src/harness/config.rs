use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ampdist::AmplitudeDistribution;
use crate::error::{Error, Result};
use crate::recovery::DEFAULT_OMEGA;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PhaseDiagram,
    StabilitySweep,
    SupportOverlap,
    ReweightedCompare,
    Concentration,
    Angles,
    GrassmannXcheck,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::PhaseDiagram => "phase_diagram",
            ExperimentKind::StabilitySweep => "stability_sweep",
            ExperimentKind::SupportOverlap => "support_overlap",
            ExperimentKind::ReweightedCompare => "reweighted_compare",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::Angles => "angles",
            ExperimentKind::GrassmannXcheck => "grassmann_xcheck",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Plain,
    Reweighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::Config(format!("unknown format {s:?}"))),
        }
    }
}

/// Which angle formula the `angles` experiment tabulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleTable {
    /// `J(m', theta)`.
    J,
    /// `B(alpha', m')`.
    B,
}

/// Everything an experiment run depends on. Fields irrelevant to a kind are
/// ignored by it but still enter the hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n: usize,
    pub delta: Vec<f64>,
    pub rho: Vec<f64>,
    pub trials: usize,
    pub omega: f64,
    pub dist: AmplitudeDistribution,
    pub algorithm: Algorithm,
    pub varpi: Vec<f64>,
    pub epsilon0: Vec<f64>,
    /// Multiples of the estimated weak threshold (reweighted comparison).
    pub threshold_factor: Vec<f64>,
    /// Trials per bisection step of the weak-threshold estimate.
    pub threshold_trials: usize,
    /// `||tail||_1 / ||dominant||_1` in stability sweeps.
    pub tail_ratio: f64,
    /// Sample sizes `N` for the concentration study.
    pub sizes: Vec<usize>,
    /// `M / N` for the concentration study.
    pub m_fraction: f64,
    pub table: AngleTable,
    pub m_prime_max: usize,
    /// Angle parameters; `None` picks a default grid for the table.
    pub params: Option<Vec<f64>>,
    /// Support size for the Grassmann cross-check.
    pub k: usize,
    /// Robustness weight for the Grassmann cross-check.
    pub c: f64,
    /// Monte Carlo samples per external angle.
    pub samples: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl ExperimentConfig {
    /// Desk-scale defaults for an experiment kind.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let mut c = Self {
            kind,
            n: 200,
            delta: vec![0.5],
            rho: (1..=8).map(|i| i as f64 * 0.05).collect(),
            trials: 100,
            omega: DEFAULT_OMEGA,
            dist: AmplitudeDistribution::half_normal(),
            algorithm: Algorithm::Plain,
            varpi: vec![0.25, 0.5, 0.75],
            epsilon0: vec![0.02, 0.05, 0.1, 0.2],
            threshold_factor: vec![1.05],
            threshold_trials: 100,
            tail_ratio: 0.1,
            sizes: vec![1_000, 10_000, 100_000],
            m_fraction: 0.5,
            table: AngleTable::J,
            m_prime_max: 6,
            params: None,
            k: 1,
            c: 1.0,
            samples: 100_000,
            seed: 0,
            out: None,
            format: OutputFormat::Csv,
        };
        match kind {
            ExperimentKind::SupportOverlap => {
                c.n = 400;
                c.trials = 50;
            }
            ExperimentKind::ReweightedCompare => c.trials = 200,
            ExperimentKind::Concentration => {
                c.dist = AmplitudeDistribution::uniform();
                c.trials = 20;
            }
            ExperimentKind::GrassmannXcheck => {
                c.n = 8;
                c.delta = vec![0.75];
                c.trials = 20_000;
            }
            _ => {}
        }
        c
    }

    /// Reads a JSON config; absent fields take the defaults of its `kind`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let obj = raw
            .as_object()
            .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        let kind: ExperimentKind = serde_json::from_value(
            obj.get("kind")
                .cloned()
                .ok_or_else(|| Error::Config("config lacks \"kind\"".into()))?,
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        let mut merged =
            serde_json::to_value(Self::defaults(kind)).map_err(|e| Error::Config(e.to_string()))?;
        let target = merged
            .as_object_mut()
            .expect("config serializes to an object");
        for (k, v) in obj {
            target.insert(k.clone(), v.clone());
        }
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.trials == 0 || self.threshold_trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.delta.is_empty() || self.delta.iter().any(|&d| !(d > 0.0 && d <= 1.0)) {
            return bad("delta grid must be nonempty and inside (0, 1]".into());
        }
        if self
            .delta
            .iter()
            .any(|&d| (d * self.n as f64).round() < 1.0)
        {
            return bad("delta * n must round to at least 1".into());
        }
        if self.rho.is_empty() || self.rho.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
            return bad("rho grid must be nonempty and inside [0, 1]".into());
        }
        if !(self.omega > 1.0) || !self.omega.is_finite() {
            return bad(format!("omega = {} must exceed 1", self.omega));
        }
        if self.varpi.is_empty() || self.varpi.iter().any(|&v| !(0.0..1.0).contains(&v)) {
            return bad("varpi grid must be nonempty and inside [0, 1)".into());
        }
        if self.epsilon0.is_empty() || self.epsilon0.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return bad("epsilon0 grid must be nonempty and positive".into());
        }
        if self.threshold_factor.is_empty() || self.threshold_factor.iter().any(|&f| !(f > 0.0)) {
            return bad("threshold factors must be positive".into());
        }
        if !(self.tail_ratio >= 0.0) || !self.tail_ratio.is_finite() {
            return bad("tail_ratio must be nonnegative".into());
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return bad("sizes must be nonempty and positive".into());
        }
        if !(self.m_fraction > 0.0 && self.m_fraction <= 1.0) {
            return bad("m_fraction must lie in (0, 1]".into());
        }
        if self.m_prime_max == 0 {
            return bad("m_prime_max must be at least 1".into());
        }
        if let Some(p) = &self.params {
            if p.is_empty() {
                return bad("params grid must be nonempty".into());
            }
        }
        if !(self.c >= 1.0) || !self.c.is_finite() {
            return bad("c must be finite and at least 1".into());
        }
        if self.samples == 0 {
            return bad("samples must be at least 1".into());
        }
        Ok(())
    }

    /// Hex digest of every field that affects results (output location and
    /// format excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        c.format = OutputFormat::Csv;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_merges_defaults() {
        let c =
            ExperimentConfig::from_json_str(r#"{"kind":"phase_diagram","n":50,"dist":"uniform"}"#)
                .unwrap();
        assert_eq!(c.n, 50);
        assert_eq!(c.dist, AmplitudeDistribution::uniform());
        assert_eq!(c.trials, 100);
    }

    #[test]
    fn json_errors_are_config_errors() {
        for text in [
            "[1]",
            r#"{"n": 3}"#,
            r#"{"kind":"angles","bogus":1}"#,
            r#"{"kind":"phase_diagram","delta":[1.5]}"#,
            r#"{"kind":"phase_diagram","omega":1.0}"#,
            "not json",
        ] {
            let e = ExperimentConfig::from_json_str(text).unwrap_err();
            assert!(e.is_config(), "{text}: {e}");
        }
    }

    #[test]
    fn hash_tracks_results_not_paths() {
        let a = ExperimentConfig::defaults(ExperimentKind::PhaseDiagram);
        let mut b = a.clone();
        b.omega = 4.0;
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.out = Some("x.csv".into());
        c.format = OutputFormat::Json;
        assert_eq!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn defaults_validate() {
        for kind in [
            ExperimentKind::PhaseDiagram,
            ExperimentKind::StabilitySweep,
            ExperimentKind::SupportOverlap,
            ExperimentKind::ReweightedCompare,
            ExperimentKind::Concentration,
            ExperimentKind::Angles,
            ExperimentKind::GrassmannXcheck,
        ] {
            ExperimentConfig::defaults(kind).validate().unwrap();
        }
    }
}
