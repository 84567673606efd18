//! Solver-neutral linear and mixed-integer linear programming.
//!
//! The native engine is a bounded-variable revised simplex with dual
//! extraction ([`simplex`]) and a best-first branch-and-bound over binary
//! variables ([`branch_bound`]). An external backend implementing
//! [`ExternalBackend`] can be registered to take over both solve paths; the
//! native engine remains the default.
//!
//! Dual convention: the dual value of a row is the derivative of the optimal
//! objective with respect to that row's right-hand side, in the problem's own
//! sense. For `max x s.t. x <= 3` the binding row has dual `+1`.

mod branch_bound;
pub mod lp_text;
mod simplex;

use std::collections::BTreeSet;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    /// `<=`
    Le,
    /// `=`
    Eq,
    /// `>=`
    Ge,
}

#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    /// Objective coefficient.
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A linear program over bounded continuous variables.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub sense: Sense,
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        LinearProgram {
            sense,
            columns: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn add_column(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> usize {
        self.columns.push(Column {
            name: name.into(),
            lower,
            upper,
            cost,
        });
        self.columns.len() - 1
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        relation: Relation,
        rhs: f64,
        coeffs: &[(usize, f64)],
    ) -> usize {
        self.rows.push(Row {
            name: name.into(),
            coeffs: coeffs.to_vec(),
            relation,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Structural well-formedness: finite rhs, ordered bounds, valid column
    /// references, finite coefficients.
    pub fn validate(&self) -> Result<()> {
        for (j, col) in self.columns.iter().enumerate() {
            if col.lower > col.upper {
                return Err(Error::Validation(format!(
                    "column {} ('{}') has lower bound {} above upper bound {}",
                    j, col.name, col.lower, col.upper
                )));
            }
            if !col.cost.is_finite() {
                return Err(Error::Validation(format!(
                    "column {} ('{}') has non-finite objective coefficient",
                    j, col.name
                )));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::Validation(format!(
                    "row {} ('{}') has non-finite rhs",
                    i, row.name
                )));
            }
            for &(j, v) in &row.coeffs {
                if j >= self.columns.len() {
                    return Err(Error::Validation(format!(
                        "row {} ('{}') references column {} of {}",
                        i,
                        row.name,
                        j,
                        self.columns.len()
                    )));
                }
                if !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "row {} ('{}') has a non-finite coefficient on column {}",
                        i, row.name, j
                    )));
                }
            }
        }
        Ok(())
    }

    /// Objective value of a candidate point.
    pub fn objective_of(&self, x: &[f64]) -> f64 {
        self.columns
            .iter()
            .zip(x)
            .map(|(col, xi)| col.cost * xi)
            .sum()
    }

    /// Largest primal feasibility violation of a candidate point (rows and
    /// bounds).
    pub fn feasibility_residual(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (col, &xi) in self.columns.iter().zip(x) {
            worst = worst.max(col.lower - xi).max(xi - col.upper);
        }
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().map(|&(j, v)| v * x[j]).sum();
            let viol = match row.relation {
                Relation::Le => lhs - row.rhs,
                Relation::Ge => row.rhs - lhs,
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }
}

/// A linear program plus a set of binary columns.
#[derive(Debug, Clone)]
pub struct MilpProgram {
    pub base: LinearProgram,
    pub binary_vars: BTreeSet<usize>,
}

impl MilpProgram {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        for &j in &self.binary_vars {
            if j >= self.base.columns.len() {
                return Err(Error::Validation(format!(
                    "binary set references column {j} out of range"
                )));
            }
            let col = &self.base.columns[j];
            if col.lower < -1e-9 || col.upper > 1.0 + 1e-9 {
                return Err(Error::Validation(format!(
                    "binary column {} ('{}') has bounds [{}, {}] outside [0, 1]",
                    j, col.name, col.lower, col.upper
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration, node, or time limit reached; the result carries the best
    /// incumbent and bound seen.
    IterationLimit,
}

/// Primal/dual solution of an LP, or incumbent/bound pair of a MILP.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: f64,
    /// Structural variable values (empty unless an incumbent exists).
    pub primal: Vec<f64>,
    /// Row duals: derivative of the optimal objective w.r.t. each rhs.
    /// Populated for LP solves only.
    pub duals: Vec<f64>,
    /// Reduced costs of structural variables, same sign convention as the
    /// duals. Populated for LP solves only.
    pub reduced_costs: Vec<f64>,
    pub iterations: u64,
    /// Branch-and-bound nodes evaluated (0 for plain LP solves).
    pub node_count: u64,
    /// Best proven bound on the objective (equals `objective` at optimality).
    pub bound: f64,
}

impl SolveResult {
    pub fn gap(&self) -> f64 {
        (self.bound - self.objective).abs()
    }
}

/// Branch-and-bound configuration.
#[derive(Debug, Clone)]
pub struct MilpConfig {
    /// Absolute objective gap at which a node tree is declared optimal.
    pub gap_tolerance: f64,
    pub node_limit: u64,
    pub time_limit: Option<Duration>,
    /// Optional feasible starting point (structural values); used as the
    /// initial incumbent after validation.
    pub initial_solution: Option<Vec<f64>>,
}

impl Default for MilpConfig {
    fn default() -> Self {
        MilpConfig {
            gap_tolerance: 1e-6,
            node_limit: 2_000_000,
            time_limit: None,
            initial_solution: None,
        }
    }
}

/// External solver adapter contract: identical result semantics to the
/// native engine.
pub trait ExternalBackend: Send + Sync {
    fn name(&self) -> &str;
    fn solve_lp(&self, lp: &LinearProgram) -> Result<SolveResult>;
    fn solve_milp(&self, milp: &MilpProgram, config: &MilpConfig) -> Result<SolveResult>;
}

static BACKEND: RwLock<Option<Arc<dyn ExternalBackend>>> = RwLock::new(None);

/// Route subsequent [`solve_lp`]/[`solve_milp`] calls through an external
/// adapter. The native engine remains available via the `*_native` entry
/// points and is restored by [`clear_external_backend`].
pub fn register_external_backend(adapter: Arc<dyn ExternalBackend>) {
    *BACKEND.write().unwrap() = Some(adapter);
}

pub fn clear_external_backend() {
    *BACKEND.write().unwrap() = None;
}

pub fn external_backend_name() -> Option<String> {
    BACKEND
        .read()
        .unwrap()
        .as_ref()
        .map(|b| b.name().to_string())
}

/// Solve an LP with the active engine (registered adapter, else native).
pub fn solve_lp(lp: &LinearProgram) -> Result<SolveResult> {
    let backend = BACKEND.read().unwrap().clone();
    match backend {
        Some(adapter) => {
            let res = adapter
                .solve_lp(lp)
                .map_err(|e| backend_error(adapter.name(), e))?;
            check_contract(adapter.name(), lp, &res)?;
            Ok(res)
        }
        None => solve_lp_native(lp),
    }
}

/// Solve a MILP with the active engine (registered adapter, else native).
pub fn solve_milp(milp: &MilpProgram, config: &MilpConfig) -> Result<SolveResult> {
    let backend = BACKEND.read().unwrap().clone();
    match backend {
        Some(adapter) => {
            let res = adapter
                .solve_milp(milp, config)
                .map_err(|e| backend_error(adapter.name(), e))?;
            check_contract(adapter.name(), &milp.base, &res)?;
            Ok(res)
        }
        None => solve_milp_native(milp, config),
    }
}

/// Native simplex engine, bypassing any registered adapter.
pub fn solve_lp_native(lp: &LinearProgram) -> Result<SolveResult> {
    lp.validate()?;
    Ok(simplex::solve(lp, &[], None, simplex::DEFAULT_ITER_LIMIT).into_result())
}

/// Native branch-and-bound engine, bypassing any registered adapter.
pub fn solve_milp_native(milp: &MilpProgram, config: &MilpConfig) -> Result<SolveResult> {
    milp.validate()?;
    branch_bound::solve(milp, config)
}

fn backend_error(name: &str, e: Error) -> Error {
    Error::Backend {
        name: name.to_string(),
        msg: e.to_string(),
    }
}

/// Sanity checks on adapter results so a misbehaving backend cannot poison
/// downstream analysis silently.
fn check_contract(name: &str, lp: &LinearProgram, res: &SolveResult) -> Result<()> {
    if res.status == SolveStatus::Optimal {
        if res.primal.len() != lp.n_columns() {
            return Err(Error::Backend {
                name: name.into(),
                msg: format!(
                    "primal has {} entries for {} columns",
                    res.primal.len(),
                    lp.n_columns()
                ),
            });
        }
        let resid = lp.feasibility_residual(&res.primal);
        if resid > 1e-6 {
            return Err(Error::Backend {
                name: name.into(),
                msg: format!("optimal result violates primal feasibility by {resid:.3e}"),
            });
        }
        let obj = lp.objective_of(&res.primal);
        let scale = 1.0 + obj.abs().max(res.objective.abs());
        if (obj - res.objective).abs() / scale > 1e-6 {
            return Err(Error::Backend {
                name: name.into(),
                msg: format!(
                    "reported objective {} disagrees with recomputed {}",
                    res.objective, obj
                ),
            });
        }
    }
    Ok(())
}
