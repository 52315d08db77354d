//! Sparse recovery by (weighted) l1 minimization and the numerics around
//! its stability guarantees.
//!
//! * [`solver`]: exact-feasibility weighted l1 minimization plus an
//!   independent simplex oracle.
//! * [`recovery`]: plain l1, the two-step reweighted algorithm and
//!   support utilities.
//! * [`stability`]: the robustness constant `C = 1/sqrt(1 - varpi)`,
//!   null-space condition margins, kappa, the error budget zeta and the
//!   support-overlap prediction.
//! * [`geometry`]: internal angles through the B/J integrals, Monte Carlo
//!   external angles and the Grassmann face sums.
//! * [`ampdist`]: unit-mean amplitude laws for nonzero entries.
//! * [`harness`]: seeded ensembles, experiments and CSV/JSON output.

// Negated float comparisons are deliberate: they reject NaN alongside
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ampdist;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod lp;
pub mod quad;
pub mod recovery;
pub mod solver;
pub mod stability;

pub use ampdist::AmplitudeDistribution;
pub use error::{Error, Result};

pub use recovery::{SparseSignal, SupportEstimate};
pub use solver::{RecoveryResult, SolveStatus, WeightedL1Problem, W_INF};

/// Crate version, stamped into emitted result files.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
