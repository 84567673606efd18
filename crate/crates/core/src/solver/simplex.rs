//! Bounded-variable revised primal simplex with dual extraction.
//!
//! The implementation keeps a dense LU factorization of the basis plus a
//! product-form eta file, refactorizing periodically. Phase 1 is the
//! composite method: basic variables outside their bounds get a +/-1 cost and
//! the ordinary pivoting machinery drives the total infeasibility to zero.
//! Pricing is Dantzig's rule, switching to Bland's rule after a run of
//! degenerate pivots to break cycles.

use super::{LinearProgram, Relation, Sense, SolveResult, SolveStatus};

const FEAS_TOL: f64 = 1e-9;
const PRICE_TOL: f64 = 1e-9;
const RATIO_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-8;
const DEGEN_STEP: f64 = 1e-10;
const REFACTOR_EVERY: usize = 60;

pub(crate) const DEFAULT_ITER_LIMIT: u64 = 500_000;

/// Internal (minimization) standard form: `A x + s = rhs` with bounds on
/// every column, slacks appended after the structural columns.
pub(crate) struct StandardForm {
    pub m: usize,
    pub n_struct: usize,
    /// All columns, structural first, then one slack per row.
    cols: Vec<Vec<(u32, f64)>>,
    /// Minimization costs (negated for maximization problems).
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    rhs: Vec<f64>,
    /// Row scale factors applied during build; duals are unscaled on exit.
    row_scale: Vec<f64>,
    /// +1 for Minimize, -1 for Maximize; converts internal values back.
    fac: f64,
}

impl StandardForm {
    pub fn build(lp: &LinearProgram) -> StandardForm {
        let m = lp.rows.len();
        let ns = lp.columns.len();
        let fac = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut cols: Vec<Vec<(u32, f64)>> = vec![Vec::new(); ns + m];
        let mut cost = vec![0.0; ns + m];
        let mut lo = vec![0.0; ns + m];
        let mut hi = vec![0.0; ns + m];
        let mut rhs = vec![0.0; m];
        let mut row_scale = vec![1.0; m];
        for (j, c) in lp.columns.iter().enumerate() {
            cost[j] = fac * c.cost;
            lo[j] = c.lower;
            hi[j] = c.upper;
        }
        for (i, row) in lp.rows.iter().enumerate() {
            // equilibrate: big-M rows otherwise dominate the error budget
            let max_abs = row
                .coeffs
                .iter()
                .map(|&(_, v)| v.abs())
                .fold(0.0f64, f64::max);
            let scale = if max_abs > 0.0 { 1.0 / max_abs } else { 1.0 };
            row_scale[i] = scale;
            for &(j, v) in &row.coeffs {
                if v != 0.0 {
                    cols[j].push((i as u32, v * scale));
                }
            }
            let s = ns + i;
            cols[s].push((i as u32, 1.0));
            rhs[i] = row.rhs * scale;
            (lo[s], hi[s]) = match row.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Eq => (0.0, 0.0),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
            };
        }
        StandardForm {
            m,
            n_struct: ns,
            cols,
            cost,
            lo,
            hi,
            rhs,
            row_scale,
            fac,
        }
    }

    fn n(&self) -> usize {
        self.n_struct + self.m
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
    Free,
}

/// Variable-status snapshot; enough to reconstruct a basis for warm starts.
#[derive(Clone)]
pub(crate) struct BasisSnapshot {
    state: Vec<VarState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RawStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
    /// Numerical stall: no improving step could be taken.
    Stalled,
}

pub(crate) struct Outcome {
    pub status: RawStatus,
    /// Structural variable values.
    pub x: Vec<f64>,
    /// Row duals in the problem's original sense.
    pub duals: Vec<f64>,
    /// Structural reduced costs in the original sense.
    pub reduced: Vec<f64>,
    /// Objective in the original sense.
    pub objective: f64,
    pub iterations: u64,
    pub basis: BasisSnapshot,
}

impl Outcome {
    pub fn into_result(self) -> SolveResult {
        let status = match self.status {
            RawStatus::Optimal => SolveStatus::Optimal,
            RawStatus::Infeasible => SolveStatus::Infeasible,
            RawStatus::Unbounded => SolveStatus::Unbounded,
            RawStatus::IterLimit | RawStatus::Stalled => SolveStatus::IterationLimit,
        };
        SolveResult {
            status,
            objective: self.objective,
            primal: self.x,
            duals: self.duals,
            reduced_costs: self.reduced,
            iterations: self.iterations,
            node_count: 0,
            bound: self.objective,
        }
    }
}

/// Solve `lp` with optional per-column bound overrides and a warm-start
/// basis. Overrides replace the column's bounds entirely.
pub(crate) fn solve(
    lp: &LinearProgram,
    overrides: &[(usize, f64, f64)],
    warm: Option<&BasisSnapshot>,
    iter_limit: u64,
) -> Outcome {
    let sf = StandardForm::build(lp);
    solve_standard(&sf, overrides, warm, iter_limit)
}

pub(crate) fn solve_standard(
    sf: &StandardForm,
    overrides: &[(usize, f64, f64)],
    warm: Option<&BasisSnapshot>,
    iter_limit: u64,
) -> Outcome {
    Worker::new(sf, overrides, warm).run(iter_limit)
}

struct Eta {
    pos: usize,
    col: Vec<f64>,
}

struct DenseLu {
    m: usize,
    /// Combined L (unit lower) and U, row-major.
    a: Vec<f64>,
    /// Row permutation: position i holds original row perm[i].
    perm: Vec<usize>,
    singular: bool,
}

impl DenseLu {
    fn factor(m: usize, fill: impl Fn(&mut [f64])) -> DenseLu {
        let mut a = vec![0.0; m * m];
        fill(&mut a);
        let mut perm: Vec<usize> = (0..m).collect();
        let mut singular = false;
        for k in 0..m {
            // partial pivot
            let mut best = k;
            let mut best_abs = a[k * m + k].abs();
            for r in k + 1..m {
                let v = a[r * m + k].abs();
                if v > best_abs {
                    best = r;
                    best_abs = v;
                }
            }
            if best_abs < 1e-13 {
                singular = true;
                a[k * m + k] = if a[k * m + k] >= 0.0 { 1e-13 } else { -1e-13 };
            } else if best != k {
                perm.swap(k, best);
                for c in 0..m {
                    a.swap(k * m + c, best * m + c);
                }
            }
            let pv = a[k * m + k];
            for r in k + 1..m {
                let f = a[r * m + k] / pv;
                if f != 0.0 {
                    a[r * m + k] = f;
                    let (head, tail) = a.split_at_mut(r * m);
                    let urow = &head[k * m + k + 1..k * m + m];
                    let lrow = &mut tail[k + 1..m];
                    for (lv, uv) in lrow.iter_mut().zip(urow) {
                        *lv -= f * *uv;
                    }
                } else {
                    a[r * m + k] = 0.0;
                }
            }
        }
        DenseLu {
            m,
            a,
            perm,
            singular,
        }
    }

    /// Solve `B z = b`.
    fn ftran(&self, b: &[f64], out: &mut [f64]) {
        let m = self.m;
        for i in 0..m {
            out[i] = b[self.perm[i]];
        }
        for i in 1..m {
            let mut acc = out[i];
            let row = &self.a[i * m..i * m + i];
            for (k, &l) in row.iter().enumerate() {
                acc -= l * out[k];
            }
            out[i] = acc;
        }
        for i in (0..m).rev() {
            let mut acc = out[i];
            let row = &self.a[i * m + i + 1..i * m + m];
            for (k, &u) in row.iter().enumerate() {
                acc -= u * out[i + 1 + k];
            }
            out[i] = acc / self.a[i * m + i];
        }
    }

    /// Solve `B' y = c`.
    fn btran(&self, c: &[f64], out: &mut [f64]) {
        let m = self.m;
        let mut w = vec![0.0; m];
        // U' w = c (U' is lower triangular)
        for i in 0..m {
            let mut acc = c[i];
            for k in 0..i {
                acc -= self.a[k * m + i] * w[k];
            }
            w[i] = acc / self.a[i * m + i];
        }
        // L' v = w (L' is unit upper triangular)
        for i in (0..m).rev() {
            let mut acc = w[i];
            for k in i + 1..m {
                acc -= self.a[k * m + i] * w[k];
            }
            w[i] = acc;
        }
        for i in 0..m {
            out[self.perm[i]] = w[i];
        }
    }
}

struct Worker<'a> {
    sf: &'a StandardForm,
    lo: Vec<f64>,
    hi: Vec<f64>,
    state: Vec<VarState>,
    /// Basis position -> column.
    basic: Vec<u32>,
    x: Vec<f64>,
    lu: DenseLu,
    etas: Vec<Eta>,
    iterations: u64,
    degen_streak: u64,
    bland: bool,
}

enum StepOutcome {
    Pivoted,
    Flipped,
    Unbounded,
    Stalled,
}

impl<'a> Worker<'a> {
    fn new(sf: &'a StandardForm, overrides: &[(usize, f64, f64)], warm: Option<&BasisSnapshot>) -> Worker<'a> {
        let n = sf.n();
        let mut lo = sf.lo.clone();
        let mut hi = sf.hi.clone();
        for &(j, l, h) in overrides {
            lo[j] = l;
            hi[j] = h;
        }
        let state: Vec<VarState> = match warm {
            Some(snap) if snap.state.len() == n => snap.state.clone(),
            _ => {
                // cold start: slack basis, structurals at their nearest
                // finite bound (0 for free columns)
                let mut st = vec![VarState::AtLower; n];
                for (j, stj) in st.iter_mut().enumerate().take(sf.n_struct) {
                    *stj = initial_state(lo[j], hi[j]);
                }
                for stj in st.iter_mut().skip(sf.n_struct) {
                    *stj = VarState::Basic;
                }
                st
            }
        };
        let mut w = Worker {
            sf,
            lo,
            hi,
            state,
            basic: Vec::with_capacity(sf.m),
            x: vec![0.0; n],
            lu: DenseLu {
                m: 0,
                a: Vec::new(),
                perm: Vec::new(),
                singular: false,
            },
            etas: Vec::new(),
            iterations: 0,
            degen_streak: 0,
            bland: false,
        };
        w.install_basis();
        w
    }

    /// Rebuild `basic`, the factorization, and all variable values from the
    /// state vector.
    fn install_basis(&mut self) {
        let sf = self.sf;
        self.basic.clear();
        for j in 0..sf.n() {
            match self.state[j] {
                VarState::Basic => self.basic.push(j as u32),
                VarState::AtLower => {
                    let v = if self.lo[j].is_finite() { self.lo[j] } else { 0.0 };
                    self.x[j] = v;
                }
                VarState::AtUpper => {
                    let v = if self.hi[j].is_finite() { self.hi[j] } else { 0.0 };
                    self.x[j] = v;
                }
                VarState::Free => self.x[j] = 0.0,
            }
        }
        // a warm snapshot always carries exactly m basic columns because the
        // constraint matrix never changes between solves
        debug_assert_eq!(self.basic.len(), sf.m);
        self.refactor();
        if self.lu.singular {
            // corrupt warm basis: fall back to the slack basis
            for j in 0..sf.n_struct {
                self.state[j] = initial_state(self.lo[j], self.hi[j]);
                self.x[j] = match self.state[j] {
                    VarState::AtLower => self.lo[j],
                    VarState::AtUpper => self.hi[j],
                    _ => 0.0,
                };
            }
            for j in sf.n_struct..sf.n() {
                self.state[j] = VarState::Basic;
            }
            self.basic = (sf.n_struct as u32..sf.n() as u32).collect();
            self.refactor();
        }
        self.recompute_basics();
    }

    fn refactor(&mut self) {
        let m = self.sf.m;
        let basic = &self.basic;
        let cols = &self.sf.cols;
        self.lu = DenseLu::factor(m, |a| {
            for (p, &j) in basic.iter().enumerate() {
                for &(i, v) in &cols[j as usize] {
                    a[i as usize * m + p] = v;
                }
            }
        });
        self.etas.clear();
    }

    fn recompute_basics(&mut self) {
        let sf = self.sf;
        let mut rhs = sf.rhs.clone();
        for j in 0..sf.n() {
            if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                for &(i, v) in &sf.cols[j] {
                    rhs[i as usize] -= v * self.x[j];
                }
            }
        }
        let mut xb = vec![0.0; sf.m];
        self.ftran(&rhs, &mut xb);
        for (p, &j) in self.basic.iter().enumerate() {
            self.x[j as usize] = xb[p];
        }
    }

    fn ftran(&self, b: &[f64], out: &mut [f64]) {
        self.lu.ftran(b, out);
        for eta in &self.etas {
            let zr = out[eta.pos] / eta.col[eta.pos];
            for (i, o) in out.iter_mut().enumerate() {
                if i != eta.pos {
                    *o -= eta.col[i] * zr;
                }
            }
            out[eta.pos] = zr;
        }
    }

    fn btran(&self, c: &[f64], out: &mut [f64]) {
        let mut work = c.to_vec();
        for eta in self.etas.iter().rev() {
            let mut acc = work[eta.pos];
            for (i, &v) in eta.col.iter().enumerate() {
                if i != eta.pos {
                    acc -= v * work[i];
                }
            }
            work[eta.pos] = acc / eta.col[eta.pos];
        }
        self.lu.btran(&work, out);
    }

    fn column_ftran(&self, j: usize, out: &mut [f64]) {
        let mut b = vec![0.0; self.sf.m];
        for &(i, v) in &self.sf.cols[j] {
            b[i as usize] = v;
        }
        self.ftran(&b, out);
    }

    fn infeasibility(&self) -> f64 {
        let mut total = 0.0;
        for &j in &self.basic {
            let j = j as usize;
            if self.x[j] < self.lo[j] {
                total += self.lo[j] - self.x[j];
            } else if self.x[j] > self.hi[j] {
                total += self.x[j] - self.hi[j];
            }
        }
        total
    }

    /// Dual vector for the current phase: phase 1 prices the infeasibility
    /// cost of basic variables, phase 2 the true cost.
    fn duals_for_phase(&mut self, phase1: bool) -> Vec<f64> {
        let m = self.sf.m;
        let mut cb = vec![0.0; m];
        for (p, &j) in self.basic.iter().enumerate() {
            let j = j as usize;
            cb[p] = if phase1 {
                if self.x[j] < self.lo[j] - FEAS_TOL {
                    -1.0
                } else if self.x[j] > self.hi[j] + FEAS_TOL {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.sf.cost[j]
            };
        }
        let mut y = vec![0.0; m];
        self.btran(&cb, &mut y);
        y
    }

    /// Reduced cost plus the magnitude of the terms that formed it, used to
    /// size a roundoff-aware pricing tolerance.
    fn reduced_cost(&self, j: usize, y: &[f64], phase1: bool) -> (f64, f64) {
        let cj = if phase1 { 0.0 } else { self.sf.cost[j] };
        let mut d = cj;
        let mut mag = cj.abs();
        for &(i, v) in &self.sf.cols[j] {
            let t = y[i as usize] * v;
            d -= t;
            mag += t.abs();
        }
        (d, mag)
    }

    /// Pick the entering column, returning (column, direction).
    fn price(&self, y: &[f64], phase1: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None; // (col, dir, score)
        for j in 0..self.sf.n() {
            let st = self.state[j];
            if st == VarState::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let (d, mag) = self.reduced_cost(j, y, phase1);
            let tol = PRICE_TOL * (1.0 + mag);
            let (eligible, dir) = match st {
                VarState::AtLower => (d < -tol, 1.0),
                VarState::AtUpper => (d > tol, -1.0),
                VarState::Free => (d.abs() > tol, if d > 0.0 { -1.0 } else { 1.0 }),
                VarState::Basic => unreachable!(),
            };
            if !eligible {
                continue;
            }
            if self.bland {
                return Some((j, dir));
            }
            let score = d.abs();
            if best.map_or(true, |(_, _, s)| score > s) {
                best = Some((j, dir, score));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// Ratio test and pivot. `phase1` relaxes the breakpoints of infeasible
    /// basic variables to the bound they are approaching.
    fn step(&mut self, entering: usize, dir: f64, phase1: bool) -> StepOutcome {
        let m = self.sf.m;
        let mut w = vec![0.0; m];
        self.column_ftran(entering, &mut w);

        // pass 1: collect blocking candidates and the strict minimum ratio;
        // entries at the noise floor of the FTRAN column are not blockers
        let w_inf = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let block_tol = 1e-9 * (1.0 + w_inf);
        let mut candidates: Vec<(usize, f64, f64)> = Vec::new(); // (pos, ratio, |w|)
        let mut limit = f64::INFINITY;
        for p in 0..m {
            let delta = dir * w[p];
            if delta.abs() < block_tol {
                continue;
            }
            let j = self.basic[p] as usize;
            let xj = self.x[j];
            let (lo, hi) = (self.lo[j], self.hi[j]);
            let bound = if phase1 {
                if xj < lo - FEAS_TOL {
                    // below range: only a move up toward lo is limited
                    if delta < 0.0 {
                        Some(lo)
                    } else {
                        None
                    }
                } else if xj > hi + FEAS_TOL {
                    if delta > 0.0 {
                        Some(hi)
                    } else {
                        None
                    }
                } else if delta > 0.0 {
                    if lo.is_finite() {
                        Some(lo)
                    } else {
                        None
                    }
                } else if hi.is_finite() {
                    Some(hi)
                } else {
                    None
                }
            } else if delta > 0.0 {
                if lo.is_finite() {
                    Some(lo)
                } else {
                    None
                }
            } else if hi.is_finite() {
                Some(hi)
            } else {
                None
            };
            let Some(bound) = bound else { continue };
            let ratio = ((xj - bound) / delta).max(0.0);
            candidates.push((p, ratio, w[p].abs()));
            limit = limit.min(ratio);
        }
        // pass 2: among candidates inside a small window above the minimum,
        // prefer the stablest pivot (largest |w|); Bland mode takes the
        // lowest column id instead
        let window = RATIO_TOL.max(1e-8 * (1.0 + limit.abs()));
        let mut leaving: Option<(usize, f64, f64)> = None; // (pos, |w|, ratio)
        if limit.is_finite() {
            for &(p, ratio, wabs) in &candidates {
                if ratio > limit + window {
                    continue;
                }
                let take = match leaving {
                    None => true,
                    Some((cur_p, cur_w, _)) => {
                        if self.bland {
                            self.basic[p] < self.basic[cur_p]
                        } else {
                            wabs > cur_w
                        }
                    }
                };
                if take {
                    leaving = Some((p, wabs, ratio));
                }
            }
            // step to the chosen pivot's own breakpoint; others may overshoot
            // by at most the window, which the drift guards absorb
            if let Some((_, _, ratio)) = leaving {
                limit = ratio;
            }
        }

        // the entering variable's own opposite bound
        let span = self.hi[entering] - self.lo[entering];
        let flip_limit = if span.is_finite() { span } else { f64::INFINITY };

        let t = limit.min(flip_limit);
        if t.is_infinite() {
            return if phase1 {
                StepOutcome::Stalled
            } else {
                StepOutcome::Unbounded
            };
        }

        let flip_wins = flip_limit < limit - RATIO_TOL || leaving.is_none();
        if !flip_wins {
            // check pivot stability before touching any state
            let (_, wr_abs, _) = leaving.unwrap();
            if wr_abs < PIVOT_TOL {
                // unstable pivot: refactorize and report a stall so the
                // caller can retry pricing from clean factors
                self.refactor();
                self.recompute_basics();
                return StepOutcome::Stalled;
            }
        }

        if t <= DEGEN_STEP {
            self.degen_streak += 1;
        } else {
            self.degen_streak = 0;
            self.bland = false;
        }

        // apply the move
        if t > 0.0 {
            for p in 0..m {
                if w[p] != 0.0 {
                    let j = self.basic[p] as usize;
                    self.x[j] -= t * dir * w[p];
                }
            }
            self.x[entering] += t * dir;
        }

        if flip_wins {
            // bound flip, basis unchanged
            self.state[entering] = if dir > 0.0 {
                self.x[entering] = self.hi[entering];
                VarState::AtUpper
            } else {
                self.x[entering] = self.lo[entering];
                VarState::AtLower
            };
            return StepOutcome::Flipped;
        }

        let (p, _, _) = leaving.unwrap();
        let out_col = self.basic[p] as usize;
        // snap the leaving variable exactly onto its bound
        let leave_lo = (self.x[out_col] - self.lo[out_col]).abs();
        let leave_hi = (self.x[out_col] - self.hi[out_col]).abs();
        self.state[out_col] = if leave_lo <= leave_hi {
            self.x[out_col] = self.lo[out_col];
            VarState::AtLower
        } else {
            self.x[out_col] = self.hi[out_col];
            VarState::AtUpper
        };
        self.state[entering] = VarState::Basic;
        self.basic[p] = entering as u32;
        self.etas.push(Eta { pos: p, col: w });
        if self.etas.len() >= REFACTOR_EVERY {
            self.refactor();
            self.recompute_basics();
        }
        StepOutcome::Pivoted
    }

    fn run(mut self, iter_limit: u64) -> Outcome {
        let status = self.run_phases(iter_limit);
        // exact objective and duals in the original sense
        let fac = self.sf.fac;
        let objective = if matches!(status, RawStatus::Optimal | RawStatus::IterLimit) {
            fac * (0..self.sf.n())
                .map(|j| self.sf.cost[j] * self.x[j])
                .sum::<f64>()
        } else {
            f64::NAN
        };
        let (duals, reduced) = if status == RawStatus::Optimal {
            let y = self.duals_for_phase(false);
            let mut reduced = vec![0.0; self.sf.n_struct];
            for (j, r) in reduced.iter_mut().enumerate() {
                if self.state[j] != VarState::Basic {
                    *r = fac * self.reduced_cost(j, &y, false).0;
                }
            }
            (
                y.iter()
                    .zip(&self.sf.row_scale)
                    .map(|(v, s)| fac * v * s)
                    .collect(),
                reduced,
            )
        } else {
            (Vec::new(), Vec::new())
        };
        Outcome {
            status,
            x: self.x[..self.sf.n_struct].to_vec(),
            duals,
            reduced,
            objective,
            iterations: self.iterations,
            basis: BasisSnapshot {
                state: self.state,
            },
        }
    }

    fn run_phases(&mut self, iter_limit: u64) -> RawStatus {
        let bland_trigger = 2 * (self.sf.m as u64 + self.sf.n() as u64);
        let mut stalls = 0;
        let mut repairs = 0;
        'phases: loop {
            // phase 1: drive infeasibility to zero
            while self.infeasibility() > FEAS_TOL {
                if self.iterations >= iter_limit {
                    return RawStatus::IterLimit;
                }
                self.iterations += 1;
                if self.degen_streak > bland_trigger {
                    self.bland = true;
                }
                let y = self.duals_for_phase(true);
                let Some((entering, dir)) = self.price(&y, true) else {
                    return RawStatus::Infeasible;
                };
                match self.step(entering, dir, true) {
                    StepOutcome::Stalled | StepOutcome::Unbounded => {
                        stalls += 1;
                        // a different entering choice usually escapes the
                        // unstable corner
                        self.bland = true;
                        if stalls > 8 {
                            return RawStatus::Stalled;
                        }
                    }
                    _ => stalls = 0,
                }
            }
            // phase 2
            loop {
                if self.iterations >= iter_limit {
                    return RawStatus::IterLimit;
                }
                self.iterations += 1;
                if self.degen_streak > bland_trigger {
                    self.bland = true;
                }
                let y = self.duals_for_phase(false);
                let Some((entering, dir)) = self.price(&y, false) else {
                    // polish: refactor and re-verify before declaring optimal
                    if !self.etas.is_empty() {
                        self.refactor();
                        self.recompute_basics();
                    }
                    if self.infeasibility() > FEAS_TOL {
                        // numerical drift pushed a basic out of bounds
                        repairs += 1;
                        if repairs > 2 {
                            return RawStatus::Stalled;
                        }
                        continue 'phases;
                    }
                    return RawStatus::Optimal;
                };
                match self.step(entering, dir, false) {
                    StepOutcome::Unbounded => return RawStatus::Unbounded,
                    StepOutcome::Stalled => {
                        stalls += 1;
                        self.bland = true;
                        if stalls > 8 {
                            return RawStatus::Stalled;
                        }
                    }
                    _ => {
                        stalls = 0;
                        if self.iterations % 512 == 0 && self.infeasibility() > FEAS_TOL {
                            self.refactor();
                            self.recompute_basics();
                            continue 'phases;
                        }
                    }
                }
            }
        }
    }
}

fn initial_state(lo: f64, hi: f64) -> VarState {
    match (lo.is_finite(), hi.is_finite()) {
        (true, _) => VarState::AtLower,
        (false, true) => VarState::AtUpper,
        (false, false) => VarState::Free,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{LinearProgram, Relation, Sense};

    fn lp_2d() -> LinearProgram {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_column("x", 0.0, f64::INFINITY, 3.0);
        let y = lp.add_column("y", 0.0, f64::INFINITY, 5.0);
        lp.add_row("r1", Relation::Le, 4.0, &[(x, 1.0)]);
        lp.add_row("r2", Relation::Le, 12.0, &[(y, 2.0)]);
        lp.add_row("r3", Relation::Le, 18.0, &[(x, 3.0), (y, 2.0)]);
        lp
    }

    #[test]
    fn classic_textbook_lp() {
        let out = solve(&lp_2d(), &[], None, 10_000);
        assert_eq!(out.status, RawStatus::Optimal);
        assert!((out.objective - 36.0).abs() < 1e-9);
        assert!((out.x[0] - 2.0).abs() < 1e-9);
        assert!((out.x[1] - 6.0).abs() < 1e-9);
        // duals: y2 = 3/2, y3 = 1, y1 = 0
        assert!(out.duals[0].abs() < 1e-9);
        assert!((out.duals[1] - 1.5).abs() < 1e-9);
        assert!((out.duals[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min 2a + 3b s.t. a + b = 10, a >= 4  ->  a=10? no: b >= 0
        // optimum a=10, b=0 has cost 20; a=4,b=6 costs 26
        let mut lp = LinearProgram::new(Sense::Minimize);
        let a = lp.add_column("a", 0.0, f64::INFINITY, 2.0);
        let b = lp.add_column("b", 0.0, f64::INFINITY, 3.0);
        lp.add_row("sum", Relation::Eq, 10.0, &[(a, 1.0), (b, 1.0)]);
        lp.add_row("amin", Relation::Ge, 4.0, &[(a, 1.0)]);
        let out = solve(&lp, &[], None, 10_000);
        assert_eq!(out.status, RawStatus::Optimal);
        assert!((out.objective - 20.0).abs() < 1e-9);
        assert!((out.x[0] - 10.0).abs() < 1e-9);
        // balance dual = marginal cost of one more unit = 2
        assert!((out.duals[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn free_variable() {
        // min |shape|: free variable pushed negative by the objective,
        // bounded by a row
        let mut lp = LinearProgram::new(Sense::Minimize);
        let t = lp.add_column("t", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        lp.add_row("floor", Relation::Ge, -7.5, &[(t, 1.0)]);
        let out = solve(&lp, &[], None, 10_000);
        assert_eq!(out.status, RawStatus::Optimal);
        assert!((out.objective + 7.5).abs() < 1e-9);
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_column("x", 0.0, f64::INFINITY, 1.0);
        lp.add_row("useless", Relation::Ge, 0.0, &[(x, 1.0)]);
        let out = solve(&lp, &[], None, 10_000);
        assert_eq!(out.status, RawStatus::Unbounded);
    }

    #[test]
    fn bound_overrides_and_warm_start() {
        let lp = lp_2d();
        let sf = StandardForm::build(&lp);
        let first = solve_standard(&sf, &[], None, 10_000);
        assert_eq!(first.status, RawStatus::Optimal);
        // now force x <= 1 and warm start from the previous basis
        let second = solve_standard(&sf, &[(0, 0.0, 1.0)], Some(&first.basis), 10_000);
        assert_eq!(second.status, RawStatus::Optimal);
        assert!((second.x[0] - 1.0).abs() < 1e-9);
        assert!((second.objective - 33.0).abs() < 1e-9);
        assert!(second.iterations <= first.iterations + 4);
    }

    #[test]
    fn duals_certify_objective() {
        // strong duality check on a mixed-relation LP
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_column("x", 0.0, 4.0, 1.0);
        let y = lp.add_column("y", -2.0, 5.0, -2.0);
        let z = lp.add_column("z", 0.0, f64::INFINITY, 0.5);
        lp.add_row("r1", Relation::Le, 6.0, &[(x, 1.0), (y, 2.0)]);
        lp.add_row("r2", Relation::Ge, 1.0, &[(y, 1.0), (z, -1.0)]);
        lp.add_row("r3", Relation::Eq, 3.0, &[(x, 1.0), (z, 1.0)]);
        let out = solve(&lp, &[], None, 10_000);
        assert_eq!(out.status, RawStatus::Optimal);
        // dual objective: y'b + sum over nonbasic bounds of reduced-cost * bound
        let mut dual_obj: f64 = out.duals.iter().zip([6.0, 1.0, 3.0]).map(|(d, b)| d * b).sum();
        for (j, d) in out.reduced.iter().enumerate() {
            if d.abs() > 1e-12 {
                dual_obj += d * out.x[j];
            }
        }
        assert!(
            (dual_obj - out.objective).abs() < 1e-8,
            "duality gap: {} vs {}",
            dual_obj,
            out.objective
        );
    }
}
