//! Worst-case line-overflow attack optimization.
//!
//! The bi-level problem (attacker maximizes post-redispatch physical flow on
//! a target line; operator re-dispatches by DCOPF against falsified loads)
//! is collapsed to a single-level MILP by replacing the dispatch problem
//! with its first-order optimality conditions and encoding complementary
//! slackness through big-M binaries. Three solution strategies are provided:
//!
//! * [`solve_original`]: the full MILP over every rated line and generator.
//! * [`algorithm1`]: thermal rows restricted to critical lines, repaired by
//!   re-adding any line whose cyber flow overflows; exact on convergence.
//! * [`algorithm2`]: additionally restricts generator freedom to marginal
//!   units, repaired by comparing against the true redispatch; yields a
//!   feasible attack, hence a lower bound.
//! * [`algorithm3`]: a dispatch-free LP maximizing the cyber/physical flow
//!   divergence on the target, giving an upper bound and (via one
//!   post-attack dispatch) a lower bound.

use std::collections::BTreeSet;

use crate::attack_model::{check_attack, AttackCheckReport, AttackVector};
use crate::case_io::GridCase;
use crate::dcopf::{self, DispatchSolution};
use crate::network::{injections_of, InjectionModel};
use crate::solver::{
    self, LinearProgram, MilpConfig, MilpProgram, Relation, Sense, SolveStatus,
};
use crate::{Error, Result};

/// Tolerance for "cyber overflow" when deciding whether to re-add a line.
const OVERFLOW_TOL: f64 = 1e-6;
/// Per-generator dispatch comparison tolerance in Algorithm 2.
const DISPATCH_TOL: f64 = 1e-5;
/// Objective-value fallback tolerance under degenerate alternate optima.
const COST_TIE_TOL: f64 = 1e-8;
/// Marginal-generator detection margin.
const MARGINAL_TOL: f64 = 1e-6;

/// Problem definition for one (target line, budget) instance.
#[derive(Debug, Clone)]
pub struct AttackProblemSpec {
    /// Branch index of the target line; must carry a finite rating.
    pub target_line: usize,
    /// l1 budget on the attack vector.
    pub n1: f64,
    /// Load-shift fraction (0, 1).
    pub load_shift: f64,
    /// Weight of the l1 term in the objective; reported objectives always
    /// strip it.
    pub sigma: f64,
    /// Loading ratio above which a line counts as critical.
    pub critical_threshold: f64,
    /// Flow orientation override; by default the sign of the baseline flow
    /// on the target (positive when the baseline flow is negligible).
    pub flow_sign: Option<f64>,
    /// Cap on the constraint-repair loops.
    pub iteration_cap: usize,
    /// Multiplier applied to every big-M value (grows during audits).
    pub big_m_scale: f64,
    /// Branch-and-bound settings for the native engine.
    pub milp: MilpConfig,
}

impl AttackProblemSpec {
    pub fn new(target_line: usize, n1: f64, load_shift: f64) -> Self {
        AttackProblemSpec {
            target_line,
            n1,
            load_shift,
            sigma: 1e-4,
            critical_threshold: 0.9,
            flow_sign: None,
            iteration_cap: 20,
            big_m_scale: 1.0,
            milp: MilpConfig::default(),
        }
    }

    pub fn validate(&self, case: &GridCase) -> Result<()> {
        if self.target_line >= case.n_branches() {
            return Err(Error::Validation(format!(
                "target line {} out of range ({} branches)",
                self.target_line,
                case.n_branches()
            )));
        }
        if !case.branches[self.target_line].limit.is_finite() {
            return Err(Error::Validation(format!(
                "target line {} has no thermal rating",
                self.target_line
            )));
        }
        if self.n1 < 0.0 {
            return Err(Error::Validation("N1 budget must be nonnegative".into()));
        }
        if !(self.load_shift > 0.0 && self.load_shift < 1.0) {
            return Err(Error::Validation(
                "load shift fraction must lie strictly inside (0, 1)".into(),
            ));
        }
        if self.sigma <= 0.0 {
            return Err(Error::Validation("sigma must be positive".into()));
        }
        Ok(())
    }
}

/// Retained constraint sets of the reduced MILP plus the baseline dispatch
/// that pins the generators outside `r_gens`.
#[derive(Debug, Clone)]
pub struct ReductionState {
    /// Retained thermal rows (critical lines).
    pub q_lines: BTreeSet<usize>,
    /// Retained free generators (marginal units).
    pub r_gens: BTreeSet<usize>,
    pub baseline: DispatchSolution,
    /// Repair-loop iterations that grew `q_lines` / `r_gens`.
    pub q_iterations: usize,
    pub r_iterations: usize,
}

impl ReductionState {
    pub fn binary_count(&self) -> usize {
        2 * self.q_lines.len() + 2 * self.r_gens.len()
    }
}

/// Lines loaded above the critical threshold at a given dispatch.
pub fn critical_lines(case: &GridCase, solution: &DispatchSolution, threshold: f64) -> Vec<usize> {
    solution
        .loading(case)
        .iter()
        .enumerate()
        .filter(|&(_, r)| *r > threshold)
        .map(|(k, _)| k)
        .collect()
}

/// Generators dispatched strictly inside their limits.
pub fn marginal_generators(case: &GridCase, solution: &DispatchSolution) -> Vec<usize> {
    case.generators
        .iter()
        .enumerate()
        .filter(|(g, gen)| {
            let p = solution.dispatch[*g];
            p > gen.p_min + MARGINAL_TOL && p < gen.p_max - MARGINAL_TOL
        })
        .map(|(g, _)| g)
        .collect()
}

/// How one instance finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeStatus {
    Converged,
    /// Repair loop hit its iteration cap; values are not optimality claims.
    IterationCap,
    /// The MILP engine stopped on a node/time limit.
    SolverLimit,
    /// The reduced MILP was infeasible.
    InfeasibleMilp,
    /// The post-attack dispatch had no feasible solution.
    RedispatchInfeasible,
}

impl OutcomeStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            OutcomeStatus::Converged => "converged",
            OutcomeStatus::IterationCap => "iteration-cap",
            OutcomeStatus::SolverLimit => "solver-limit",
            OutcomeStatus::InfeasibleMilp => "infeasible-milp",
            OutcomeStatus::RedispatchInfeasible => "redispatch-infeasible",
        }
    }
}

/// Result of a MILP-based strategy (original, Algorithm 1, Algorithm 2).
#[derive(Debug, Clone)]
pub struct MilpAttackOutcome {
    /// Oriented physical flow on the target line (the sigma term stripped);
    /// absent when the instance did not produce a usable solution.
    pub objective: Option<f64>,
    pub attack: Option<AttackVector>,
    /// Full dispatch vector of the MILP solution (fixed units filled in).
    pub dispatch: Option<Vec<f64>>,
    pub state: ReductionState,
    pub binaries_initial: usize,
    pub binaries_final: usize,
    /// Repair-loop iterations executed (1 = converged on the first MILP).
    pub iterations: usize,
    pub nodes: u64,
    pub status: OutcomeStatus,
    /// Flow orientation used (+1 / -1).
    pub sign: f64,
}

/// Result of the dispatch-free bounding LP (Algorithm 3).
#[derive(Debug, Clone)]
pub struct BoundingOutcome {
    /// Upper bound on the oriented physical target flow.
    pub upper: f64,
    /// Lower bound (oriented physical flow under the true redispatch);
    /// absent when the post-attack dispatch is infeasible.
    pub lower: Option<f64>,
    pub attack: AttackVector,
    pub redispatch: Option<DispatchSolution>,
    pub sign: f64,
}

/// Column bookkeeping of one assembled attack MILP.
#[derive(Debug, Clone)]
struct VarMap {
    /// (internal bus index, column) of every c variable.
    c_cols: Vec<(usize, usize)>,
    s_cols: Vec<usize>,
    /// (generator index, column) of every free dispatch variable.
    pg_cols: Vec<(usize, usize)>,
    lambda_col: usize,
    fp_cols: Vec<(usize, usize)>,
    fm_cols: Vec<(usize, usize)>,
    ap_cols: Vec<(usize, usize)>,
    am_cols: Vec<(usize, usize)>,
    pl_col: usize,
    dfp_cols: Vec<usize>,
    dfm_cols: Vec<usize>,
    dap_cols: Vec<usize>,
    dam_cols: Vec<usize>,
}

/// An assembled single-level attack MILP with its variable map.
pub struct AttackMilp {
    pub milp: MilpProgram,
    pub sign: f64,
    map: VarMap,
    m_dual: f64,
    /// Per-generator coefficient of the target's physical flow.
    t_gen_coef: Vec<f64>,
    /// Load contribution to the target's physical flow.
    t_load_term: f64,
}

impl AttackMilp {
    /// Recover the attack vector and full dispatch from a primal point.
    pub fn extract(
        &self,
        case: &GridCase,
        spec: &AttackProblemSpec,
        state: &ReductionState,
        primal: &[f64],
    ) -> (AttackVector, Vec<f64>, f64) {
        let mut c = vec![0.0; case.n_buses()];
        for &(bus, col) in &self.map.c_cols {
            c[bus] = primal[col];
        }
        let mut dispatch = state.baseline.dispatch.clone();
        for &(g, col) in &self.map.pg_cols {
            dispatch[g] = primal[col];
        }
        let oriented = self.sign * primal[self.map.pl_col];
        (
            AttackVector {
                c,
                n1: spec.n1,
                load_shift_limit: spec.load_shift,
            },
            dispatch,
            oriented,
        )
    }

    /// True when some dual variable sits within 1% of its cap, indicating
    /// the constant may be clipping the true multipliers. The slack-side
    /// thermal constants are provably valid bounds on any reachable flow, so
    /// only the dual caps need auditing.
    fn m_audit_failed(&self, primal: &[f64]) -> bool {
        let near = |v: f64| v > 0.99 * self.m_dual;
        for cols in [
            &self.map.fp_cols,
            &self.map.fm_cols,
            &self.map.ap_cols,
            &self.map.am_cols,
        ] {
            if cols.iter().any(|&(_, col)| near(primal[col])) {
                return true;
            }
        }
        false
    }

    /// A feasible MILP point assembled from an attack vector and the KKT
    /// data of the dispatch that answers it. Returns `None` when the point
    /// does not satisfy the reduced formulation (e.g. an active constraint
    /// fell outside the retained sets).
    fn feasible_start(
        &self,
        case: &GridCase,
        state: &ReductionState,
        c: &[f64],
        sol: &DispatchSolution,
    ) -> Option<Vec<f64>> {
        let n = self.milp.base.n_columns();
        let mut x = vec![0.0; n];
        for &(bus, col) in &self.map.c_cols {
            x[col] = c[bus];
        }
        for (&s_col, &(bus, _)) in self.map.s_cols.iter().zip(&self.map.c_cols) {
            x[s_col] = c[bus].abs();
        }
        for &(g, col) in &self.map.pg_cols {
            x[col] = sol.dispatch[g];
        }
        x[self.map.lambda_col] = sol.lambda;
        let q_list: Vec<usize> = state.q_lines.iter().copied().collect();
        for (i, &q) in q_list.iter().enumerate() {
            let (fp_col, fm_col) = (self.map.fp_cols[i].1, self.map.fm_cols[i].1);
            x[fp_col] = sol.f_plus[q];
            x[fm_col] = sol.f_minus[q];
            let limit = case.branches[q].limit;
            let tight_up = (sol.flows[q] - limit).abs() < 1e-7;
            let tight_lo = (sol.flows[q] + limit).abs() < 1e-7;
            x[self.map.dfp_cols[i]] = if sol.f_plus[q] > 1e-9 || tight_up { 1.0 } else { 0.0 };
            x[self.map.dfm_cols[i]] = if sol.f_minus[q] > 1e-9 || tight_lo { 1.0 } else { 0.0 };
        }
        let r_list: Vec<usize> = state.r_gens.iter().copied().collect();
        for (i, &g) in r_list.iter().enumerate() {
            x[self.map.ap_cols[i].1] = sol.alpha_plus[g];
            x[self.map.am_cols[i].1] = sol.alpha_minus[g];
            let gen = &case.generators[g];
            let at_max = (sol.dispatch[g] - gen.p_max).abs() < 1e-7;
            let at_min = (sol.dispatch[g] - gen.p_min).abs() < 1e-7;
            x[self.map.dap_cols[i]] = if sol.alpha_plus[g] > 1e-9 || at_max { 1.0 } else { 0.0 };
            x[self.map.dam_cols[i]] = if sol.alpha_minus[g] > 1e-9 || at_min { 1.0 } else { 0.0 };
        }
        // physical target flow under this dispatch
        let mut dispatch = state.baseline.dispatch.clone();
        for &(g, col) in &self.map.pg_cols {
            dispatch[g] = x[col];
        }
        x[self.map.pl_col] = self
            .t_gen_coef
            .iter()
            .zip(&dispatch)
            .map(|(t, p)| t * p)
            .sum::<f64>()
            - self.t_load_term;
        if self.milp.base.feasibility_residual(&x) <= 1e-7 {
            Some(x)
        } else {
            None
        }
    }
}

// The physical-flow helper needs model data; easier as a free function used
// by both the builder and the repair loops.
fn oriented_target_flow(
    model: &InjectionModel,
    case: &GridCase,
    target: usize,
    dispatch: &[f64],
) -> f64 {
    let inj = injections_of(model, dispatch, &case.loads());
    let row = model.ptdf_row(target);
    row.iter().zip(&inj).map(|(p, v)| p * v).sum()
}

/// Assemble the single-level KKT/big-M MILP for the retained sets in
/// `state`. Binary count is `2 |Q| + 2 |R|`.
pub fn build_attack_milp(
    case: &GridCase,
    model: &InjectionModel,
    spec: &AttackProblemSpec,
    state: &ReductionState,
) -> Result<AttackMilp> {
    spec.validate(case)?;
    if state.q_lines.is_empty() {
        return Err(Error::EmptyReduction("critical-line (Q)"));
    }
    if state.r_gens.is_empty() {
        return Err(Error::EmptyReduction("marginal-generator (R)"));
    }
    for &q in &state.q_lines {
        if !case.branches[q].limit.is_finite() {
            return Err(Error::MissingBigM(format!(
                "thermal row for unrated line {q}"
            )));
        }
    }

    let slack = case.slack_position();
    let load_buses: Vec<usize> = (0..case.n_buses())
        .filter(|&i| case.is_load_bus(i) && i != slack)
        .collect();
    let q_list: Vec<usize> = state.q_lines.iter().copied().collect();
    let r_list: Vec<usize> = state.r_gens.iter().copied().collect();
    let fixed: Vec<usize> = (0..case.n_generators())
        .filter(|g| !state.r_gens.contains(g))
        .collect();

    let sign = spec.flow_sign.unwrap_or_else(|| {
        let f = state.baseline.flows[spec.target_line];
        if f >= 0.0 {
            1.0
        } else {
            -1.0
        }
    });

    // big-M policy: thermal rows get twice the limit plus a bound on any
    // achievable flow; generator rows twice the operating span; dual caps a
    // large multiple of the steepest cost
    let total_load = case.total_load();
    let max_cost = case
        .generators
        .iter()
        .map(|g| g.cost_slope.abs())
        .fold(1.0, f64::max);
    let m_dual = 1e3 * max_cost * spec.big_m_scale;

    let loads = case.loads();
    // constant part of every injection: fixed generation minus loads
    let mut inj_fixed = vec![0.0; case.n_buses()];
    for &g in &fixed {
        let bus = case.bus_position(case.generators[g].bus).expect("validated");
        inj_fixed[bus] += state.baseline.dispatch[g];
    }
    for (v, l) in inj_fixed.iter_mut().zip(&loads) {
        *v -= l;
    }

    let mut lp = LinearProgram::new(Sense::Maximize);
    let mut map = VarMap {
        c_cols: Vec::new(),
        s_cols: Vec::new(),
        pg_cols: Vec::new(),
        lambda_col: 0,
        fp_cols: Vec::new(),
        fm_cols: Vec::new(),
        ap_cols: Vec::new(),
        am_cols: Vec::new(),
        pl_col: 0,
        dfp_cols: Vec::new(),
        dfm_cols: Vec::new(),
        dap_cols: Vec::new(),
        dam_cols: Vec::new(),
    };

    for &i in &load_buses {
        let col = lp.add_column(format!("c{}", case.buses[i].id), f64::NEG_INFINITY, f64::INFINITY, 0.0);
        map.c_cols.push((i, col));
    }
    for &i in &load_buses {
        let col = lp.add_column(format!("s{}", case.buses[i].id), 0.0, spec.n1, -spec.sigma);
        map.s_cols.push(col);
    }
    for &g in &r_list {
        let gen = &case.generators[g];
        let col = lp.add_column(format!("Pg{g}"), gen.p_min, gen.p_max, 0.0);
        map.pg_cols.push((g, col));
    }
    map.lambda_col = lp.add_column("lambda", f64::NEG_INFINITY, f64::INFINITY, 0.0);
    for &q in &q_list {
        let col = lp.add_column(format!("Fp{q}"), 0.0, m_dual, 0.0);
        map.fp_cols.push((q, col));
    }
    for &q in &q_list {
        let col = lp.add_column(format!("Fm{q}"), 0.0, m_dual, 0.0);
        map.fm_cols.push((q, col));
    }
    for &g in &r_list {
        let col = lp.add_column(format!("ap{g}"), 0.0, m_dual, 0.0);
        map.ap_cols.push((g, col));
    }
    for &g in &r_list {
        let col = lp.add_column(format!("am{g}"), 0.0, m_dual, 0.0);
        map.am_cols.push((g, col));
    }
    map.pl_col = lp.add_column("Pl", f64::NEG_INFINITY, f64::INFINITY, sign);
    let mut binaries = BTreeSet::new();
    for &q in &q_list {
        let col = lp.add_column(format!("dFp{q}"), 0.0, 1.0, 0.0);
        map.dfp_cols.push(col);
        binaries.insert(col);
    }
    for &q in &q_list {
        let col = lp.add_column(format!("dFm{q}"), 0.0, 1.0, 0.0);
        map.dfm_cols.push(col);
        binaries.insert(col);
    }
    for &g in &r_list {
        let col = lp.add_column(format!("dap{g}"), 0.0, 1.0, 0.0);
        map.dap_cols.push(col);
        binaries.insert(col);
    }
    for &g in &r_list {
        let col = lp.add_column(format!("dam{g}"), 0.0, 1.0, 0.0);
        map.dam_cols.push(col);
        binaries.insert(col);
    }

    // target-line physical flow definition
    let t_row = model.ptdf_row(spec.target_line);
    let mut coeffs = vec![(map.pl_col, 1.0)];
    for &(g, col) in &map.pg_cols {
        let bus = case.bus_position(case.generators[g].bus).expect("validated");
        if t_row[bus] != 0.0 {
            coeffs.push((col, -t_row[bus]));
        }
    }
    let const_l: f64 = t_row.iter().zip(&inj_fixed).map(|(p, v)| p * v).sum();
    lp.add_row("pl_def", Relation::Eq, const_l, &coeffs);

    // load-shift box on H c, elementwise; zero-load buses pin (Hc)_i = 0
    let b_bus = model.b_bus();
    for i in 0..case.n_buses() {
        let mut coeffs = Vec::new();
        for &(j, col) in &map.c_cols {
            let v = b_bus[(i, j)];
            if v != 0.0 {
                coeffs.push((col, v));
            }
        }
        if coeffs.is_empty() {
            continue;
        }
        let bound = spec.load_shift * loads[i].max(0.0);
        if bound > 0.0 {
            lp.add_row(format!("shift_up{i}"), Relation::Le, bound, &coeffs);
            let neg: Vec<(usize, f64)> = coeffs.iter().map(|&(c, v)| (c, -v)).collect();
            lp.add_row(format!("shift_lo{i}"), Relation::Le, bound, &neg);
        } else {
            lp.add_row(format!("shift_zero{i}"), Relation::Eq, 0.0, &coeffs);
        }
    }

    // l1 linearization and budget
    for (k, (&(_, c_col), &s_col)) in map.c_cols.iter().zip(&map.s_cols).enumerate() {
        lp.add_row(format!("abs_p{k}"), Relation::Le, 0.0, &[(c_col, 1.0), (s_col, -1.0)]);
        lp.add_row(format!("abs_n{k}"), Relation::Le, 0.0, &[(c_col, -1.0), (s_col, -1.0)]);
    }
    let budget: Vec<(usize, f64)> = map.s_cols.iter().map(|&c| (c, 1.0)).collect();
    lp.add_row("l1_budget", Relation::Le, spec.n1, &budget);

    // power balance over the free generators
    let fixed_total: f64 = fixed.iter().map(|&g| state.baseline.dispatch[g]).sum();
    let bal: Vec<(usize, f64)> = map.pg_cols.iter().map(|&(_, c)| (c, 1.0)).collect();
    lp.add_row("balance", Relation::Eq, total_load - fixed_total, &bal);

    // retained thermal rows and their complementarity encoding
    for (i, &q) in q_list.iter().enumerate() {
        let row = model.ptdf_row(q);
        let limit = case.branches[q].limit;
        // cyber flow = sum_g K Pg + sum_j (PTDF B)_j c_j + const
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        for &(g, col) in &map.pg_cols {
            let bus = case.bus_position(case.generators[g].bus).expect("validated");
            if row[bus] != 0.0 {
                coeffs.push((col, row[bus]));
            }
        }
        // (PTDF_q B_bus) restricted to c columns
        for &(j, col) in &map.c_cols {
            let mut v = 0.0;
            for t in 0..case.n_buses() {
                let b = b_bus[(t, j)];
                if b != 0.0 {
                    v += row[t] * b;
                }
            }
            if v != 0.0 {
                coeffs.push((col, v));
            }
        }
        let konst: f64 = row.iter().zip(&inj_fixed).map(|(p, v)| p * v).sum();
        lp.add_row(format!("th_up{q}"), Relation::Le, limit - konst, &coeffs);
        let neg: Vec<(usize, f64)> = coeffs.iter().map(|&(c, v)| (c, -v)).collect();
        lp.add_row(format!("th_lo{q}"), Relation::Le, limit + konst, &neg);

        let max_abs = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let m_row = (2.0 * limit + max_abs * (2.0 + spec.load_shift) * total_load) * spec.big_m_scale;

        // F <= M delta
        lp.add_row(
            format!("capFp{q}"),
            Relation::Le,
            0.0,
            &[(map.fp_cols[i].1, 1.0), (map.dfp_cols[i], -m_dual)],
        );
        lp.add_row(
            format!("capFm{q}"),
            Relation::Le,
            0.0,
            &[(map.fm_cols[i].1, 1.0), (map.dfm_cols[i], -m_dual)],
        );
        // limit - flow <= M (1 - dFp): -flow + M dFp <= M - limit + konst
        let mut up: Vec<(usize, f64)> = coeffs.iter().map(|&(c, v)| (c, -v)).collect();
        up.push((map.dfp_cols[i], m_row));
        lp.add_row(
            format!("slFp{q}"),
            Relation::Le,
            m_row - limit + konst,
            &up,
        );
        // limit + flow <= M (1 - dFm): flow + M dFm <= M - limit - konst
        let mut lo: Vec<(usize, f64)> = coeffs.clone();
        lo.push((map.dfm_cols[i], m_row));
        lp.add_row(
            format!("slFm{q}"),
            Relation::Le,
            m_row - limit - konst,
            &lo,
        );
    }

    // stationarity of the reduced dispatch problem
    for (i, &g) in r_list.iter().enumerate() {
        let gen = &case.generators[g];
        let bus = case.bus_position(gen.bus).expect("validated");
        let mut coeffs = vec![
            (map.lambda_col, -1.0),
            (map.ap_cols[i].1, 1.0),
            (map.am_cols[i].1, -1.0),
        ];
        for (k, &q) in q_list.iter().enumerate() {
            let v = model.ptdf_row(q)[bus];
            if v != 0.0 {
                coeffs.push((map.fp_cols[k].1, v));
                coeffs.push((map.fm_cols[k].1, -v));
            }
        }
        lp.add_row(format!("stat{g}"), Relation::Eq, -gen.cost_slope, &coeffs);

        // generator-bound complementarity
        let span = 2.0 * (gen.p_max - gen.p_min).max(1e-6) * spec.big_m_scale;
        lp.add_row(
            format!("capAp{g}"),
            Relation::Le,
            0.0,
            &[(map.ap_cols[i].1, 1.0), (map.dap_cols[i], -m_dual)],
        );
        lp.add_row(
            format!("slAp{g}"),
            Relation::Le,
            span - gen.p_max,
            &[(map.pg_cols[i].1, -1.0), (map.dap_cols[i], span)],
        );
        lp.add_row(
            format!("capAm{g}"),
            Relation::Le,
            0.0,
            &[(map.am_cols[i].1, 1.0), (map.dam_cols[i], -m_dual)],
        );
        lp.add_row(
            format!("slAm{g}"),
            Relation::Le,
            span + gen.p_min,
            &[(map.pg_cols[i].1, 1.0), (map.dam_cols[i], span)],
        );
    }

    let t_gen_coef: Vec<f64> = case
        .generators
        .iter()
        .map(|gen| t_row[case.bus_position(gen.bus).expect("validated")])
        .collect();
    let t_load_term: f64 = t_row.iter().zip(&loads).map(|(p, l)| p * l).sum();

    Ok(AttackMilp {
        milp: MilpProgram {
            base: lp,
            binary_vars: binaries,
        },
        sign,
        map,
        m_dual,
        t_gen_coef,
        t_load_term,
    })
}

/// Solve an assembled attack MILP, escalating the big-M constants when the
/// audit finds a dual value crowding its cap.
fn solve_with_audit(
    case: &GridCase,
    model: &InjectionModel,
    spec: &AttackProblemSpec,
    state: &ReductionState,
) -> Result<(AttackMilp, solver::SolveResult)> {
    let mut spec = spec.clone();
    for _ in 0..3 {
        let am = build_attack_milp(case, model, &spec, state)?;
        let mut config = spec.milp.clone();
        config.initial_solution = warm_incumbent(&am, case, model, &spec, state);
        let res = solver::solve_milp(&am.milp, &config)?;
        if res.status == SolveStatus::Optimal && am.m_audit_failed(&res.primal) {
            spec.big_m_scale *= 10.0;
            continue;
        }
        return Ok((am, res));
    }
    let am = build_attack_milp(case, model, &spec, state)?;
    let mut config = spec.milp.clone();
    config.initial_solution = warm_incumbent(&am, case, model, &spec, state);
    let res = solver::solve_milp(&am.milp, &config)?;
    Ok((am, res))
}

/// Build a feasible starting point for the branch-and-bound: prefer the
/// bounding LP's attack answered by the true redispatch, fall back to the
/// no-attack baseline KKT point.
fn warm_incumbent(
    am: &AttackMilp,
    case: &GridCase,
    model: &InjectionModel,
    spec: &AttackProblemSpec,
    state: &ReductionState,
) -> Option<Vec<f64>> {
    if let Ok(bounding) = bounding_lp(case, model, spec, &state.baseline) {
        if let Ok(post) = dcopf::post_attack_dcopf(case, model, &bounding.attack.c) {
            if let Some(x) = am.feasible_start(case, state, &bounding.attack.c, &post) {
                return Some(x);
            }
        }
    }
    let zero = vec![0.0; case.n_buses()];
    am.feasible_start(case, state, &zero, &state.baseline)
}

fn empty_outcome(state: ReductionState, status: OutcomeStatus, sign: f64, iterations: usize) -> MilpAttackOutcome {
    let bin = state.binary_count();
    MilpAttackOutcome {
        objective: None,
        attack: None,
        dispatch: None,
        state,
        binaries_initial: bin,
        binaries_final: bin,
        iterations,
        nodes: 0,
        status,
        sign,
    }
}

/// Cyber flows (every line) for a dispatch/attack pair.
pub fn all_cyber_flows(
    case: &GridCase,
    model: &InjectionModel,
    dispatch: &[f64],
    c: &[f64],
) -> Vec<f64> {
    let hc = model.h_apply(c);
    let loads = case.loads();
    let mut inj = injections_of(model, dispatch, &loads);
    for (v, h) in inj.iter_mut().zip(&hc) {
        *v += h;
    }
    model.ptdf_times(&inj)
}

fn cyber_overflows(
    case: &GridCase,
    flows: &[f64],
    exclude: &BTreeSet<usize>,
) -> Vec<usize> {
    flows
        .iter()
        .enumerate()
        .filter(|&(k, f)| {
            case.branches[k].limit.is_finite()
                && f.abs() > case.branches[k].limit + OVERFLOW_TOL
                && !exclude.contains(&k)
        })
        .map(|(k, _)| k)
        .collect()
}

fn initial_q(case: &GridCase, spec: &AttackProblemSpec, baseline: &DispatchSolution) -> BTreeSet<usize> {
    let mut q: BTreeSet<usize> =
        critical_lines(case, baseline, spec.critical_threshold).into_iter().collect();
    if q.is_empty() {
        // nothing critical at baseline: seed with the target so the reduced
        // problem has at least one thermal row
        q.insert(spec.target_line);
    }
    q
}

/// Solve the original single-level MILP over every rated line and every
/// generator.
pub fn solve_original(
    case: &GridCase,
    model: &InjectionModel,
    spec: &AttackProblemSpec,
) -> Result<MilpAttackOutcome> {
    let baseline = dcopf::baseline_dcopf(case, model)?;
    let state = ReductionState {
        q_lines: dcopf::rated_branches(case).into_iter().collect(),
        r_gens: (0..case.n_generators()).collect(),
        baseline,
        q_iterations: 0,
        r_iterations: 0,
    };
    let (am, res) = solve_with_audit(case, model, spec, &state)?;
    let bin = state.binary_count();
    match res.status {
        SolveStatus::Optimal => {
            let (attack, dispatch, oriented) = am.extract(case, spec, &state, &res.primal);
            Ok(MilpAttackOutcome {
                objective: Some(oriented),
                attack: Some(attack),
                dispatch: Some(dispatch),
                state,
                binaries_initial: bin,
                binaries_final: bin,
                iterations: 1,
                nodes: res.node_count,
                status: OutcomeStatus::Converged,
                sign: am.sign,
            })
        }
        SolveStatus::Infeasible => Ok(empty_outcome(state, OutcomeStatus::InfeasibleMilp, am.sign, 1)),
        _ => {
            // keep the incumbent if one exists, flagged as a solver limit
            let mut out = empty_outcome(state, OutcomeStatus::SolverLimit, am.sign, 1);
            out.nodes = res.node_count;
            if !res.primal.is_empty() {
                let (attack, dispatch, oriented) = am.extract(case, spec, &out.state, &res.primal);
                out.objective = Some(oriented);
                out.attack = Some(attack);
                out.dispatch = Some(dispatch);
            }
            Ok(out)
        }
    }
}

/// Algorithm 1: thermal rows reduced to the critical lines, with a
/// cyber-overflow repair loop. Exact on convergence.
pub fn algorithm1(
    case: &GridCase,
    model: &InjectionModel,
    spec: &AttackProblemSpec,
) -> Result<MilpAttackOutcome> {
    let baseline = dcopf::baseline_dcopf(case, model)?;
    let mut state = ReductionState {
        q_lines: initial_q(case, spec, &baseline),
        r_gens: (0..case.n_generators()).collect(),
        baseline,
        q_iterations: 0,
        r_iterations: 0,
    };
    let binaries_initial = state.binary_count();
    let mut nodes = 0;
    for iteration in 1..=spec.iteration_cap {
        let (am, res) = solve_with_audit(case, model, spec, &state)?;
        nodes += res.node_count;
        match res.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                let mut out = empty_outcome(state, OutcomeStatus::InfeasibleMilp, am.sign, iteration);
                out.binaries_initial = binaries_initial;
                out.nodes = nodes;
                return Ok(out);
            }
            _ => {
                let mut out = empty_outcome(state, OutcomeStatus::SolverLimit, am.sign, iteration);
                out.binaries_initial = binaries_initial;
                out.nodes = nodes;
                return Ok(out);
            }
        }
        let (attack, dispatch, oriented) = am.extract(case, spec, &state, &res.primal);
        let flows = all_cyber_flows(case, model, &dispatch, &attack.c);
        let viol = cyber_overflows(case, &flows, &state.q_lines);
        if viol.is_empty() {
            return Ok(MilpAttackOutcome {
                objective: Some(oriented),
                attack: Some(attack),
                dispatch: Some(dispatch),
                binaries_initial,
                binaries_final: state.binary_count(),
                state,
                iterations: iteration,
                nodes,
                status: OutcomeStatus::Converged,
                sign: am.sign,
            });
        }
        state.q_lines.extend(viol);
        state.q_iterations += 1;
    }
    let sign = spec.flow_sign.unwrap_or(1.0);
    let mut out = empty_outcome(state, OutcomeStatus::IterationCap, sign, spec.iteration_cap);
    out.binaries_initial = binaries_initial;
    out.nodes = nodes;
    Ok(out)
}

/// Algorithm 2: thermal and generator reductions with both repair loops.
/// Returns a feasible attack (a lower bound on the exact objective).
pub fn algorithm2(
    case: &GridCase,
    model: &InjectionModel,
    spec: &AttackProblemSpec,
) -> Result<MilpAttackOutcome> {
    let baseline = dcopf::baseline_dcopf(case, model)?;
    let marginal: BTreeSet<usize> = marginal_generators(case, &baseline).into_iter().collect();
    let mut state = ReductionState {
        q_lines: initial_q(case, spec, &baseline),
        r_gens: if marginal.is_empty() {
            // dispatch landed exactly on generator corners; free the first
            // adjustable unit so the balance row has a variable
            let g = (0..case.n_generators())
                .find(|&g| case.generators[g].p_max > case.generators[g].p_min)
                .unwrap_or(0);
            [g].into_iter().collect()
        } else {
            marginal
        },
        baseline,
        q_iterations: 0,
        r_iterations: 0,
    };
    let binaries_initial = state.binary_count();
    let mut nodes = 0;
    for iteration in 1..=spec.iteration_cap {
        let (am, res) = solve_with_audit(case, model, spec, &state)?;
        nodes += res.node_count;
        match res.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                let mut out = empty_outcome(state, OutcomeStatus::InfeasibleMilp, am.sign, iteration);
                out.binaries_initial = binaries_initial;
                out.nodes = nodes;
                return Ok(out);
            }
            _ => {
                let mut out = empty_outcome(state, OutcomeStatus::SolverLimit, am.sign, iteration);
                out.binaries_initial = binaries_initial;
                out.nodes = nodes;
                return Ok(out);
            }
        }
        let (attack, dispatch, oriented) = am.extract(case, spec, &state, &res.primal);

        // the operator's true answer to this attack
        let post = match dcopf::post_attack_dcopf(case, model, &attack.c) {
            Ok(p) => p,
            Err(Error::InfeasibleRedispatch(_)) => {
                let mut out =
                    empty_outcome(state, OutcomeStatus::RedispatchInfeasible, am.sign, iteration);
                out.binaries_initial = binaries_initial;
                out.nodes = nodes;
                return Ok(out);
            }
            Err(e) => return Err(e),
        };
        let differing: Vec<usize> = (0..case.n_generators())
            .filter(|&g| (dispatch[g] - post.dispatch[g]).abs() > DISPATCH_TOL)
            .collect();
        if !differing.is_empty() {
            let milp_cost: f64 = case
                .generators
                .iter()
                .zip(&dispatch)
                .map(|(gen, p)| gen.cost_slope * p)
                .sum();
            if (milp_cost - post.cost).abs() > COST_TIE_TOL {
                // genuine mismatch: the fixed units constrained the operator
                state.r_gens.extend(differing);
                state.r_iterations += 1;
                continue;
            }
            // alternate optimum: same cost, different corner; accept
        }
        let flows = all_cyber_flows(case, model, &dispatch, &attack.c);
        let viol = cyber_overflows(case, &flows, &state.q_lines);
        if !viol.is_empty() {
            state.q_lines.extend(viol);
            state.q_iterations += 1;
            continue;
        }
        return Ok(MilpAttackOutcome {
            objective: Some(oriented),
            attack: Some(attack),
            dispatch: Some(dispatch),
            binaries_initial,
            binaries_final: state.binary_count(),
            state,
            iterations: iteration,
            nodes,
            status: OutcomeStatus::Converged,
            sign: am.sign,
        });
    }
    let sign = spec.flow_sign.unwrap_or(1.0);
    let mut out = empty_outcome(state, OutcomeStatus::IterationCap, sign, spec.iteration_cap);
    out.binaries_initial = binaries_initial;
    out.nodes = nodes;
    Ok(out)
}

/// The dispatch-free bounding LP: maximize the oriented divergence between
/// the target's cyber and physical flows subject to the attack constraints.
fn bounding_lp(
    case: &GridCase,
    model: &InjectionModel,
    spec: &AttackProblemSpec,
    baseline: &DispatchSolution,
) -> Result<BoundingOutcome> {
    spec.validate(case)?;
    let slack = case.slack_position();
    let load_buses: Vec<usize> = (0..case.n_buses())
        .filter(|&i| case.is_load_bus(i) && i != slack)
        .collect();
    let sign = spec.flow_sign.unwrap_or_else(|| {
        if baseline.flows[spec.target_line] >= 0.0 {
            1.0
        } else {
            -1.0
        }
    });

    let b_bus = model.b_bus();
    let t_row = model.ptdf_row(spec.target_line);
    // objective: maximize -sign * (PTDF_l B) c
    let mut lp = LinearProgram::new(Sense::Maximize);
    let mut c_cols = Vec::new();
    for &j in &load_buses {
        let mut v = 0.0;
        for t in 0..case.n_buses() {
            let b = b_bus[(t, j)];
            if b != 0.0 {
                v += t_row[t] * b;
            }
        }
        let col = lp.add_column(format!("c{}", case.buses[j].id), f64::NEG_INFINITY, f64::INFINITY, -sign * v);
        c_cols.push((j, col));
    }
    let mut s_cols = Vec::new();
    for &j in &load_buses {
        let col = lp.add_column(format!("s{}", case.buses[j].id), 0.0, spec.n1, 0.0);
        s_cols.push(col);
    }
    let loads = case.loads();
    for i in 0..case.n_buses() {
        let mut coeffs = Vec::new();
        for &(j, col) in &c_cols {
            let v = b_bus[(i, j)];
            if v != 0.0 {
                coeffs.push((col, v));
            }
        }
        if coeffs.is_empty() {
            continue;
        }
        let bound = spec.load_shift * loads[i].max(0.0);
        if bound > 0.0 {
            lp.add_row(format!("shift_up{i}"), Relation::Le, bound, &coeffs);
            let neg: Vec<(usize, f64)> = coeffs.iter().map(|&(c, v)| (c, -v)).collect();
            lp.add_row(format!("shift_lo{i}"), Relation::Le, bound, &neg);
        } else {
            lp.add_row(format!("shift_zero{i}"), Relation::Eq, 0.0, &coeffs);
        }
    }
    for (k, (&(_, c_col), &s_col)) in c_cols.iter().zip(&s_cols).enumerate() {
        lp.add_row(format!("abs_p{k}"), Relation::Le, 0.0, &[(c_col, 1.0), (s_col, -1.0)]);
        lp.add_row(format!("abs_n{k}"), Relation::Le, 0.0, &[(c_col, -1.0), (s_col, -1.0)]);
    }
    let budget: Vec<(usize, f64)> = s_cols.iter().map(|&c| (c, 1.0)).collect();
    lp.add_row("l1_budget", Relation::Le, spec.n1, &budget);

    let res = solver::solve_lp(&lp)?;
    if res.status != SolveStatus::Optimal {
        return Err(Error::NotOptimal(res.status));
    }
    let mut c = vec![0.0; case.n_buses()];
    for &(j, col) in &c_cols {
        c[j] = res.primal[col];
    }
    let attack = AttackVector {
        c,
        n1: spec.n1,
        load_shift_limit: spec.load_shift,
    };
    let upper = case.branches[spec.target_line].limit + res.objective;
    Ok(BoundingOutcome {
        upper,
        lower: None,
        attack,
        redispatch: None,
        sign,
    })
}

/// Algorithm 3: upper bound from the bounding LP, lower bound from one
/// post-attack dispatch of its attack vector.
pub fn algorithm3(
    case: &GridCase,
    model: &InjectionModel,
    spec: &AttackProblemSpec,
) -> Result<BoundingOutcome> {
    let baseline = dcopf::baseline_dcopf(case, model)?;
    let mut out = bounding_lp(case, model, spec, &baseline)?;
    match dcopf::post_attack_dcopf(case, model, &out.attack.c) {
        Ok(post) => {
            let oriented =
                out.sign * oriented_target_flow(model, case, spec.target_line, &post.dispatch);
            out.lower = Some(oriented);
            out.redispatch = Some(post);
        }
        Err(Error::InfeasibleRedispatch(_)) => {}
        Err(e) => return Err(e),
    }
    Ok(out)
}

/// Everything `verify_attack` reports about one attack vector.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub checks: AttackCheckReport,
    pub dispatch: DispatchSolution,
    pub physical_flows: Vec<f64>,
    pub cyber_flows: Vec<f64>,
    /// Oriented physical flow on the target.
    pub target_flow: f64,
    /// |physical flow| / rating on the target line.
    pub overflow_ratio: f64,
}

/// Validate an attack end to end: constraint checks, the true redispatch it
/// provokes, and the resulting physical flows.
pub fn verify_attack(
    case: &GridCase,
    model: &InjectionModel,
    spec: &AttackProblemSpec,
    attack: &AttackVector,
) -> Result<VerifyReport> {
    spec.validate(case)?;
    let checks = check_attack(attack, case, model);
    let post = dcopf::post_attack_dcopf(case, model, &attack.c)?;
    let physical = crate::network::physical_flows(model, &post.dispatch, &case.loads())?;
    let cyber = post.flows.clone();
    let baseline_sign = spec.flow_sign.unwrap_or_else(|| {
        let base = dcopf::baseline_dcopf(case, model)
            .map(|b| b.flows[spec.target_line])
            .unwrap_or(1.0);
        if base >= 0.0 {
            1.0
        } else {
            -1.0
        }
    });
    let target_flow = baseline_sign * physical[spec.target_line];
    let overflow_ratio = physical[spec.target_line].abs() / case.branches[spec.target_line].limit;
    Ok(VerifyReport {
        checks,
        dispatch: post,
        physical_flows: physical,
        cyber_flows: cyber,
        target_flow,
        overflow_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::parse_case;
    use crate::network::build_injection_model;

    fn five_bus() -> (GridCase, InjectionModel) {
        let case = parse_case(crate::case_io::tests::FIVE_BUS).unwrap();
        let model = build_injection_model(&case).unwrap();
        (case, model)
    }

    #[test]
    fn binary_count_matches_reduction() {
        let (case, model) = five_bus();
        let baseline = dcopf::baseline_dcopf(&case, &model).unwrap();
        let state = ReductionState {
            q_lines: [0, 2].into_iter().collect(),
            r_gens: [0, 1].into_iter().collect(),
            baseline,
            q_iterations: 0,
            r_iterations: 0,
        };
        let spec = AttackProblemSpec::new(0, 0.5, 0.1);
        let am = build_attack_milp(&case, &model, &spec, &state).unwrap();
        assert_eq!(am.milp.binary_vars.len(), 2 * 2 + 2 * 2);
        assert_eq!(state.binary_count(), 8);
    }

    #[test]
    fn empty_reduction_is_rejected() {
        let (case, model) = five_bus();
        let baseline = dcopf::baseline_dcopf(&case, &model).unwrap();
        let state = ReductionState {
            q_lines: BTreeSet::new(),
            r_gens: [0].into_iter().collect(),
            baseline,
            q_iterations: 0,
            r_iterations: 0,
        };
        let spec = AttackProblemSpec::new(0, 0.5, 0.1);
        assert!(matches!(
            build_attack_milp(&case, &model, &spec, &state),
            Err(Error::EmptyReduction(_))
        ));
    }

    #[test]
    fn zero_budget_reproduces_baseline_flow() {
        let (case, model) = five_bus();
        let baseline = dcopf::baseline_dcopf(&case, &model).unwrap();
        let spec = AttackProblemSpec::new(0, 0.0, 0.1);
        let out = solve_original(&case, &model, &spec).unwrap();
        assert_eq!(out.status, OutcomeStatus::Converged);
        let objective = out.objective.unwrap();
        let expected = out.sign * baseline.flows[0];
        assert!(
            (objective - expected).abs() < 1e-6,
            "objective {objective} vs baseline {expected}"
        );
        let attack = out.attack.unwrap();
        assert!(attack.l1_usage(&case) < 1e-7);
    }

    #[test]
    fn algorithms_agree_on_the_small_fixture() {
        let (case, model) = five_bus();
        for target in [0usize, 2] {
            let spec = AttackProblemSpec::new(target, 0.5, 0.1);
            let exact = solve_original(&case, &model, &spec).unwrap();
            let a1 = algorithm1(&case, &model, &spec).unwrap();
            let a2 = algorithm2(&case, &model, &spec).unwrap();
            let a3 = algorithm3(&case, &model, &spec).unwrap();
            let pl = exact.objective.unwrap();
            assert_eq!(a1.status, OutcomeStatus::Converged);
            assert!((a1.objective.unwrap() - pl).abs() < 1e-6);
            assert!(a2.objective.unwrap() <= pl + 1e-6);
            assert!(a3.lower.unwrap() <= pl + 1e-6);
            assert!(pl <= a3.upper + 2e-6);
        }
    }

    #[test]
    fn verify_attack_reports_consistent_flow() {
        let (case, model) = five_bus();
        let spec = AttackProblemSpec::new(0, 0.5, 0.1);
        let a3 = algorithm3(&case, &model, &spec).unwrap();
        let report = verify_attack(&case, &model, &spec, &a3.attack).unwrap();
        assert!(report.checks.ok(), "{}", report.checks.summary());
        // the lower bound is by definition the verified physical flow
        assert!((report.target_flow - a3.lower.unwrap()).abs() < 1e-8);
    }

    #[test]
    fn milp_solution_is_consistent_with_redispatch() {
        let (case, model) = five_bus();
        let spec = AttackProblemSpec::new(2, 0.5, 0.1);
        let out = solve_original(&case, &model, &spec).unwrap();
        let attack = out.attack.unwrap();
        attack.validate(&case, &model).unwrap();
        let post = dcopf::post_attack_dcopf(&case, &model, &attack.c).unwrap();
        let oriented =
            out.sign * oriented_target_flow(&model, &case, spec.target_line, &post.dispatch);
        assert!(
            (oriented - out.objective.unwrap()).abs() < 1e-6,
            "redispatch gives {oriented}, MILP claimed {:?}",
            out.objective
        );
    }
}
