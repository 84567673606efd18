//! PTDF-form DC optimal power flow: minimum-cost dispatch subject to the
//! power balance, thermal limits on rated lines, and generator capacity,
//! with full primal and dual extraction.
//!
//! Row layout of the built LP: row 0 is the balance equality, followed by an
//! (upper, lower) pair of thermal rows for each branch with a finite rating,
//! in branch order. Generator bounds are variable bounds; their duals are
//! recovered from reduced costs.

use crate::case_io::GridCase;
use crate::network::{injections_of, InjectionModel};
use crate::solver::{self, LinearProgram, Relation, Sense, SolveStatus};
use crate::{Error, Result};

/// Optimal dispatch with the dual variables of every constraint class.
#[derive(Debug, Clone)]
pub struct DispatchSolution {
    /// Generator outputs, per-unit.
    pub dispatch: Vec<f64>,
    /// Objective value (linear cost terms only, constants excluded).
    pub cost: f64,
    /// Dual of the balance constraint: marginal cost of one more unit of
    /// system load.
    pub lambda: f64,
    /// Duals of the upper/lower thermal limits, nonnegative, one per branch
    /// (zero for unrated branches).
    pub f_plus: Vec<f64>,
    pub f_minus: Vec<f64>,
    /// Duals of the generator capacity bounds, nonnegative.
    pub alpha_plus: Vec<f64>,
    pub alpha_minus: Vec<f64>,
    /// Branch flows as the LP sees them, i.e. computed from the load vector
    /// that was dispatched against (the cyber flows under an attack).
    pub flows: Vec<f64>,
}

/// Branch indices that contribute thermal rows (finite rating), in order.
pub fn rated_branches(case: &GridCase) -> Vec<usize> {
    case.branches
        .iter()
        .enumerate()
        .filter(|(_, b)| b.limit.is_finite())
        .map(|(k, _)| k)
        .collect()
}

/// Build the dispatch LP for a given load vector.
pub fn build_dcopf(case: &GridCase, model: &InjectionModel, loads: &[f64]) -> LinearProgram {
    let mut lp = LinearProgram::new(Sense::Minimize);
    for (g, gen) in case.generators.iter().enumerate() {
        lp.add_column(format!("Pg{g}"), gen.p_min, gen.p_max, gen.cost_slope);
    }
    let total: f64 = loads.iter().sum();
    let all: Vec<(usize, f64)> = (0..case.n_generators()).map(|g| (g, 1.0)).collect();
    lp.add_row("balance", Relation::Eq, total, &all);

    for k in rated_branches(case) {
        let row = model.ptdf_row(k);
        let base: f64 = row.iter().zip(loads).map(|(p, l)| p * l).sum();
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        for (g, gen) in case.generators.iter().enumerate() {
            let v = row[case.bus_position(gen.bus).expect("validated")];
            if v != 0.0 {
                coeffs.push((g, v));
            }
        }
        let limit = case.branches[k].limit;
        lp.add_row(format!("thermal_up{k}"), Relation::Le, limit + base, &coeffs);
        let neg: Vec<(usize, f64)> = coeffs.iter().map(|&(g, v)| (g, -v)).collect();
        lp.add_row(format!("thermal_lo{k}"), Relation::Le, limit - base, &neg);
    }
    lp
}

/// Solve the dispatch problem for an explicit load vector.
pub fn solve_dispatch(
    case: &GridCase,
    model: &InjectionModel,
    loads: &[f64],
) -> Result<DispatchSolution> {
    if loads.len() != case.n_buses() {
        return Err(Error::Dimension(format!(
            "loads has {} entries for {} buses",
            loads.len(),
            case.n_buses()
        )));
    }
    let lp = build_dcopf(case, model, loads);
    let res = solver::solve_lp(&lp)?;
    if res.status != SolveStatus::Optimal {
        return Err(Error::NotOptimal(res.status));
    }
    let n_br = case.n_branches();
    let mut f_plus = vec![0.0; n_br];
    let mut f_minus = vec![0.0; n_br];
    for (pair, k) in rated_branches(case).into_iter().enumerate() {
        // minimization: relaxing a <= row can only lower the cost, so the
        // paper's nonnegative duals are the negated rhs-derivatives
        f_plus[k] = (-res.duals[1 + 2 * pair]).max(0.0);
        f_minus[k] = (-res.duals[2 + 2 * pair]).max(0.0);
    }
    let mut alpha_plus = vec![0.0; case.n_generators()];
    let mut alpha_minus = vec![0.0; case.n_generators()];
    for g in 0..case.n_generators() {
        let d = res.reduced_costs[g];
        if d > 0.0 {
            alpha_minus[g] = d;
        } else {
            alpha_plus[g] = -d;
        }
    }
    let injections = injections_of(model, &res.primal, loads);
    let flows = model.ptdf_times(&injections);
    Ok(DispatchSolution {
        dispatch: res.primal,
        cost: res.objective,
        lambda: res.duals[0],
        f_plus,
        f_minus,
        alpha_plus,
        alpha_minus,
        flows,
    })
}

/// Baseline dispatch: solve against the case's own loads.
pub fn baseline_dcopf(case: &GridCase, model: &InjectionModel) -> Result<DispatchSolution> {
    solve_dispatch(case, model, &case.loads())
}

/// Dispatch against the falsified loads `P_D - H c` that the operator
/// observes under attack vector `c`.
pub fn post_attack_dcopf(
    case: &GridCase,
    model: &InjectionModel,
    c: &[f64],
) -> Result<DispatchSolution> {
    if c.len() != case.n_buses() {
        return Err(Error::Dimension(format!(
            "attack vector has {} entries for {} buses",
            c.len(),
            case.n_buses()
        )));
    }
    let hc = model.h_apply(c);
    let loads: Vec<f64> = case
        .loads()
        .iter()
        .zip(&hc)
        .map(|(l, h)| l - h)
        .collect();
    solve_dispatch(case, model, &loads).map_err(|e| match e {
        Error::NotOptimal(SolveStatus::Infeasible) => {
            Error::InfeasibleRedispatch("operator dispatch has no feasible solution".into())
        }
        other => other,
    })
}

impl DispatchSolution {
    /// Largest violation of the first-order optimality system when the
    /// solution is reassembled from its duals: stationarity per generator,
    /// dual sign feasibility, and complementary slackness. This checks the
    /// exact conditions the attack MILP encodes.
    pub fn kkt_residual(&self, case: &GridCase, model: &InjectionModel) -> f64 {
        let mut worst = 0.0f64;
        for (g, gen) in case.generators.iter().enumerate() {
            let bus = case.bus_position(gen.bus).expect("validated");
            let mut congestion = 0.0;
            for k in rated_branches(case) {
                let row = model.ptdf_row(k);
                congestion += row[bus] * (self.f_plus[k] - self.f_minus[k]);
            }
            let stationarity =
                gen.cost_slope - self.lambda + congestion + self.alpha_plus[g] - self.alpha_minus[g];
            worst = worst.max(stationarity.abs());
            worst = worst.max(-self.alpha_plus[g]).max(-self.alpha_minus[g]);
            // complementary slackness on generator bounds
            worst = worst.max(self.alpha_plus[g] * (gen.p_max - self.dispatch[g]).abs());
            worst = worst.max(self.alpha_minus[g] * (self.dispatch[g] - gen.p_min).abs());
        }
        for (k, br) in case.branches.iter().enumerate() {
            if !br.limit.is_finite() {
                continue;
            }
            worst = worst.max(-self.f_plus[k]).max(-self.f_minus[k]);
            worst = worst.max(self.f_plus[k] * (br.limit - self.flows[k]).abs());
            worst = worst.max(self.f_minus[k] * (self.flows[k] + br.limit).abs());
        }
        worst
    }

    /// Branch loading ratios |flow| / limit (0 for unrated branches).
    pub fn loading(&self, case: &GridCase) -> Vec<f64> {
        self.flows
            .iter()
            .zip(&case.branches)
            .map(|(f, br)| {
                if br.limit.is_finite() {
                    f.abs() / br.limit
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::parse_case;
    use crate::network::build_injection_model;

    const TWO_BUS_TWO_GEN: &str = "\
function mpc = toy
mpc.baseMVA = 100;
mpc.bus = [
    1 3   0 0 0 0 1 1 0 230 1 1.1 0.9;
    2 1 100 0 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [
    1 0 0 0 0 1 100 1 150 0;
    2 0 0 0 0 1 100 1 150 0;
];
mpc.branch = [
    1 2 0 0.1 0 200 0 0 0 0 1;
];
mpc.gencost = [
    2 0 0 2 10 0;
    2 0 0 2 30 0;
];
";

    #[test]
    fn cheap_generator_takes_the_load() {
        let case = parse_case(TWO_BUS_TWO_GEN).unwrap();
        let model = build_injection_model(&case).unwrap();
        let sol = baseline_dcopf(&case, &model).unwrap();
        assert!((sol.dispatch[0] - 1.0).abs() < 1e-9);
        assert!(sol.dispatch[1].abs() < 1e-9);
        // 10 $/MWh on a 100 MVA base -> 1000 per pu-MW
        assert!((sol.lambda - 1000.0).abs() < 1e-9);
        assert!((sol.cost - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn congestion_splits_dispatch() {
        // shrink the line limit so the cheap remote unit is capped
        let text = TWO_BUS_TWO_GEN.replace("1 2 0 0.1 0 200", "1 2 0 0.1 0 60");
        let case = parse_case(&text).unwrap();
        let model = build_injection_model(&case).unwrap();
        let sol = baseline_dcopf(&case, &model).unwrap();
        assert!((sol.dispatch[0] - 0.6).abs() < 1e-9);
        assert!((sol.dispatch[1] - 0.4).abs() < 1e-9);
        // the slack-bus unit stays marginal, so lambda is its cost; the
        // price split with the remote unit lands on the congestion dual
        assert!((sol.lambda - 1000.0).abs() < 1e-9);
        assert!((sol.f_plus[0] - 2000.0).abs() < 1e-6);
        assert!(sol.kkt_residual(&case, &model) < 1e-6);
    }

    #[test]
    fn infeasible_loads_are_reported() {
        let case = parse_case(TWO_BUS_TWO_GEN).unwrap();
        let model = build_injection_model(&case).unwrap();
        let loads = vec![0.0, 4.0]; // beyond total capacity
        match solve_dispatch(&case, &model, &loads) {
            Err(Error::NotOptimal(SolveStatus::Infeasible)) => {}
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn zero_attack_matches_baseline() {
        let case = parse_case(crate::case_io::tests::FIVE_BUS).unwrap();
        let model = build_injection_model(&case).unwrap();
        let base = baseline_dcopf(&case, &model).unwrap();
        let post = post_attack_dcopf(&case, &model, &vec![0.0; 5]).unwrap();
        for (a, b) in base.dispatch.iter().zip(&post.dispatch) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(base.kkt_residual(&case, &model) < 1e-6);
    }

    #[test]
    fn extreme_attack_is_infeasible_redispatch() {
        let case = parse_case(crate::case_io::tests::FIVE_BUS).unwrap();
        let model = build_injection_model(&case).unwrap();
        // a state perturbation large enough to push observed loads beyond
        // total capacity at some bus signs
        let mut c = vec![0.0; 5];
        c[1] = 50.0;
        match post_attack_dcopf(&case, &model, &c) {
            Err(Error::InfeasibleRedispatch(_)) => {}
            other => panic!("expected infeasible redispatch, got {other:?}"),
        }
    }
}
