//! Best-first branch-and-bound over binary variables.
//!
//! Nodes are ordered by their parent relaxation bound (ties by node id, lower
//! first) and re-solved with warm-started simplex. Branching picks the most
//! fractional binary, ties broken by the lowest column id. The search is
//! single-threaded and fully deterministic unless a wall-clock time limit
//! cuts it off.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::simplex::{self, RawStatus, StandardForm};
use super::{MilpConfig, MilpProgram, SolveResult, SolveStatus, Sense};
use crate::{Error, Result};

const INT_TOL: f64 = 1e-6;

struct Node {
    id: u64,
    /// Parent relaxation objective in key space (larger is more promising).
    key: f64,
    /// (column, fixed value) pairs accumulated along the branching path.
    fixings: Vec<(u32, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key && self.id == other.id
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // higher key first; equal keys: lower id first
        self.key
            .partial_cmp(&other.key)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.id.cmp(&self.id))
    }
}

pub(super) fn solve(milp: &MilpProgram, config: &MilpConfig) -> Result<SolveResult> {
    let lp = &milp.base;
    let fac = match lp.sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    let binaries: Vec<u32> = milp.binary_vars.iter().map(|&j| j as u32).collect();

    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    if let Some(start) = &config.initial_solution {
        incumbent = Some(validate_start(milp, start)?);
    }

    let sf = StandardForm::build(lp);
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        id: 0,
        key: f64::INFINITY,
        fixings: Vec::new(),
    });
    let mut next_id = 1u64;
    let mut node_count = 0u64;
    let mut iterations = 0u64;
    let mut warm: Option<simplex::BasisSnapshot> = None;
    let started = Instant::now();
    let mut root_unbounded = false;
    let mut limit_hit = false;

    while let Some(node) = heap.pop() {
        let inc_key = incumbent.as_ref().map(|(_, obj)| fac * obj);
        if let Some(ik) = inc_key {
            if node.key <= ik + config.gap_tolerance {
                continue; // cannot improve on the incumbent
            }
        }
        if node_count >= config.node_limit
            || config.time_limit.is_some_and(|tl| started.elapsed() >= tl)
        {
            heap.push(node); // keep it for the bound report
            limit_hit = true;
            break;
        }
        node_count += 1;

        let overrides: Vec<(usize, f64, f64)> = node
            .fixings
            .iter()
            .map(|&(j, v)| (j as usize, v, v))
            .collect();
        let mut out =
            simplex::solve_standard(&sf, &overrides, warm.as_ref(), simplex::DEFAULT_ITER_LIMIT);
        if warm.is_some() && matches!(out.status, RawStatus::Stalled | RawStatus::Infeasible) {
            // never trust a negative answer from a warm basis: a stale
            // snapshot can wedge phase 1; confirm from a cold start
            out = simplex::solve_standard(&sf, &overrides, None, simplex::DEFAULT_ITER_LIMIT);
        }
        iterations += out.iterations;
        match out.status {
            RawStatus::Infeasible => continue,
            RawStatus::Unbounded => {
                if node.fixings.is_empty() {
                    root_unbounded = true;
                    break;
                }
                // a bounded MILP cannot have an unbounded node unless the
                // root is; treat conservatively as unbounded
                root_unbounded = true;
                break;
            }
            RawStatus::IterLimit | RawStatus::Stalled => {
                if std::env::var("GRIDVULN_BB_DEBUG").is_ok() {
                    eprintln!(
                        "node {} unresolved: {:?} after {} simplex iterations, {} fixings",
                        node.id,
                        out.status,
                        out.iterations,
                        node.fixings.len()
                    );
                }
                limit_hit = true;
                break;
            }
            RawStatus::Optimal => {}
        }
        warm = Some(out.basis.clone());
        let key = fac * out.objective;
        if let Some(ik) = inc_key {
            if key <= ik + config.gap_tolerance {
                continue;
            }
        }

        // most fractional binary, ties by lowest column id
        let mut branch: Option<(u32, f64)> = None; // (col, fractionality)
        for &j in &binaries {
            let v = out.x[j as usize];
            let frac = (v - v.round()).abs();
            if frac > INT_TOL {
                let score = 0.5 - (v - v.floor() - 0.5).abs();
                if branch.map_or(true, |(_, s)| score > s + 1e-12) {
                    branch = Some((j, score));
                }
            }
        }

        match branch {
            None => {
                // integer feasible; snap binaries exactly
                let mut x = out.x.clone();
                for &j in &binaries {
                    x[j as usize] = x[j as usize].round();
                }
                let obj = lp.objective_of(&x);
                let better = incumbent
                    .as_ref()
                    .map_or(true, |(_, cur)| fac * obj > fac * cur);
                if better {
                    incumbent = Some((x, obj));
                }
            }
            Some((j, _)) => {
                for v in [0.0, 1.0] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((j, v));
                    heap.push(Node {
                        id: next_id,
                        key,
                        fixings,
                    });
                    next_id += 1;
                }
            }
        }
    }

    if root_unbounded {
        return Ok(SolveResult {
            status: SolveStatus::Unbounded,
            objective: f64::NAN,
            primal: Vec::new(),
            duals: Vec::new(),
            reduced_costs: Vec::new(),
            iterations,
            node_count,
            bound: f64::NAN,
        });
    }

    // proven bound: the most promising unexplored node, else the incumbent
    let open_key = heap.iter().map(|n| n.key).fold(f64::NEG_INFINITY, f64::max);
    let (status, objective, primal, bound) = match incumbent {
        Some((x, obj)) => {
            let bound_key = if limit_hit {
                open_key.max(fac * obj)
            } else {
                // heap exhausted or only prunable nodes left
                fac * obj
            };
            let status = if limit_hit && bound_key - fac * obj > config.gap_tolerance {
                SolveStatus::IterationLimit
            } else {
                SolveStatus::Optimal
            };
            (status, obj, x, fac * bound_key)
        }
        None => {
            if limit_hit {
                (
                    SolveStatus::IterationLimit,
                    f64::NAN,
                    Vec::new(),
                    fac * open_key,
                )
            } else {
                (SolveStatus::Infeasible, f64::NAN, Vec::new(), f64::NAN)
            }
        }
    };

    Ok(SolveResult {
        status,
        objective,
        primal,
        duals: Vec::new(),
        reduced_costs: Vec::new(),
        iterations,
        node_count,
        bound,
    })
}

fn validate_start(milp: &MilpProgram, start: &[f64]) -> Result<(Vec<f64>, f64)> {
    let lp = &milp.base;
    if start.len() != lp.n_columns() {
        return Err(Error::Validation(format!(
            "initial solution has {} entries for {} columns",
            start.len(),
            lp.n_columns()
        )));
    }
    for &j in &milp.binary_vars {
        let v = start[j];
        if (v - v.round()).abs() > INT_TOL {
            return Err(Error::Validation(format!(
                "initial solution has fractional binary {} = {}",
                lp.columns[j].name, v
            )));
        }
    }
    let resid = lp.feasibility_residual(start);
    if resid > 1e-6 {
        return Err(Error::Validation(format!(
            "initial solution violates feasibility by {resid:.3e}"
        )));
    }
    let mut x = start.to_vec();
    for &j in &milp.binary_vars {
        x[j] = x[j].round();
    }
    let obj = lp.objective_of(&x);
    Ok((x, obj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{LinearProgram, Relation};

    /// 0/1 knapsack-style MILP against hand enumeration.
    #[test]
    fn small_knapsack_matrix() {
        // max 4a + 3b + 5c s.t. 2a + 3b + 4c <= 6, binary
        let mut lp = LinearProgram::new(Sense::Maximize);
        let a = lp.add_column("a", 0.0, 1.0, 4.0);
        let b = lp.add_column("b", 0.0, 1.0, 3.0);
        let c = lp.add_column("c", 0.0, 1.0, 5.0);
        lp.add_row("w", Relation::Le, 6.0, &[(a, 2.0), (b, 3.0), (c, 4.0)]);
        let milp = MilpProgram {
            base: lp,
            binary_vars: [a, b, c].into_iter().collect(),
        };
        let res = solve(&milp, &MilpConfig::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!((res.objective - 9.0).abs() < 1e-9); // a + c
        assert!((res.bound - res.objective).abs() <= 1e-6);
    }

    #[test]
    fn infeasible_milp() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let a = lp.add_column("a", 0.0, 1.0, 1.0);
        let b = lp.add_column("b", 0.0, 1.0, 1.0);
        lp.add_row("need", Relation::Ge, 3.0, &[(a, 1.0), (b, 1.0)]);
        let milp = MilpProgram {
            base: lp,
            binary_vars: [a, b].into_iter().collect(),
        };
        let res = solve(&milp, &MilpConfig::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Infeasible);
    }

    #[test]
    fn initial_incumbent_accepted_and_beaten() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let a = lp.add_column("a", 0.0, 1.0, 2.0);
        let x = lp.add_column("x", 0.0, 4.0, 1.0);
        lp.add_row("mix", Relation::Le, 4.0, &[(a, 1.0), (x, 1.0)]);
        let milp = MilpProgram {
            base: lp,
            binary_vars: [a].into_iter().collect(),
        };
        let config = MilpConfig {
            initial_solution: Some(vec![0.0, 1.0]), // objective 1
            ..Default::default()
        };
        let res = solve(&milp, &config).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!((res.objective - 5.0).abs() < 1e-9); // a=1, x=3
    }

    #[test]
    fn node_limit_reports_bound_and_incumbent() {
        // a MILP the solver cannot finish in one node
        let mut lp = LinearProgram::new(Sense::Maximize);
        let mut cols = Vec::new();
        for i in 0..10 {
            cols.push(lp.add_column(format!("b{i}"), 0.0, 1.0, 1.0 + 0.1 * i as f64));
        }
        let coeffs: Vec<(usize, f64)> = cols.iter().map(|&j| (j, 2.0 + j as f64)).collect();
        lp.add_row("w", Relation::Le, 11.0, &coeffs);
        let milp = MilpProgram {
            base: lp,
            binary_vars: cols.iter().copied().collect(),
        };
        let config = MilpConfig {
            node_limit: 2,
            ..Default::default()
        };
        let res = solve(&milp, &config).unwrap();
        assert_eq!(res.status, SolveStatus::IterationLimit);
        // bound must sit on the optimistic side of any incumbent
        if !res.primal.is_empty() {
            assert!(res.bound >= res.objective - 1e-9);
        }
    }

    #[test]
    fn deterministic_node_count() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let mut cols = Vec::new();
        for i in 0..8 {
            cols.push(lp.add_column(format!("b{i}"), 0.0, 1.0, -(1.0 + 0.3 * i as f64)));
        }
        let coeffs: Vec<(usize, f64)> = cols.iter().map(|&j| (j, 1.0 + (j % 3) as f64)).collect();
        lp.add_row("w", Relation::Le, 5.5, &coeffs);
        let milp = MilpProgram {
            base: lp,
            binary_vars: cols.iter().copied().collect(),
        };
        let r1 = solve(&milp, &MilpConfig::default()).unwrap();
        let r2 = solve(&milp, &MilpConfig::default()).unwrap();
        assert_eq!(r1.node_count, r2.node_count);
        assert_eq!(r1.objective, r2.objective);
        assert_eq!(r1.primal, r2.primal);
    }
}
