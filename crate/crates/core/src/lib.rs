//! Power-system vulnerability assessment against unobservable
//! load-redistribution attacks on DC state estimation.
//!
//! The crate is organized around a pipeline:
//!
//! * [`case_io`] parses grid case files into a validated [`case_io::GridCase`],
//! * [`network`] builds the DC sensitivity structures (susceptance, PTDF),
//! * [`state_estimation`] simulates telemetry and runs WLS estimation with
//!   residual-based bad-data detection,
//! * [`attack_model`] represents state-perturbation attack vectors and the
//!   subgraph of measurements an attacker must control,
//! * [`solver`] is a self-contained LP/MILP engine (revised simplex with dual
//!   extraction plus branch-and-bound) with an external-backend seam,
//! * [`dcopf`] builds and solves the PTDF-form DC optimal power flow,
//! * [`attack_opt`] assembles the single-level KKT/big-M attack MILP and runs
//!   the exact and bounding algorithms,
//! * [`report`] collects per-instance results into CSV/JSON reports.

pub mod attack_model;
pub mod attack_opt;
pub mod case_io;
pub mod dcopf;
pub mod network;
pub mod report;
pub mod solver;
pub mod state_estimation;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unsupported feature: {0}")]
    Unsupported(String),

    #[error("network is disconnected: islands {0:?}")]
    Disconnected(Vec<Vec<usize>>),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("power imbalance {imbalance:.3e} exceeds tolerance {tol:.1e}")]
    Imbalance { imbalance: f64, tol: f64 },

    #[error("measurement set is rank deficient (unobservable)")]
    RankDeficient,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("attack vector is empty (no center bus above threshold)")]
    EmptyAttack,

    #[error("reduction state has an empty {0} set")]
    EmptyReduction(&'static str),

    #[error("big-M policy missing a value for {0}")]
    MissingBigM(String),

    #[error("LP/MILP did not reach optimality: status {0:?}")]
    NotOptimal(solver::SolveStatus),

    #[error("post-attack redispatch infeasible: {0}")]
    InfeasibleRedispatch(String),

    #[error("external backend '{name}' violated the solver contract: {msg}")]
    Backend { name: String, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
