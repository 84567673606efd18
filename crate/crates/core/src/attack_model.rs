//! Attack vectors over load-bus states, the measurement subgraph an attacker
//! must control, and the falsified load view they induce.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::case_io::GridCase;
use crate::network::InjectionModel;
use crate::{Error, Result};

/// Entries of `c` at or below this magnitude are numerical dust, not center
/// buses. Used consistently for sparsity reporting.
pub const CENTER_THRESHOLD: f64 = 1e-9;

/// Slack allowed on the l1 budget check, matching solver integrality noise.
const L1_SLACK: f64 = 1e-9;

/// A state-perturbation attack vector with its resource limits.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackVector {
    /// Full-length state perturbation, radians; nonzero only at load buses,
    /// zero at the slack.
    pub c: Vec<f64>,
    /// l1 budget on the perturbation over load buses.
    pub n1: f64,
    /// Maximum fractional change of any bus load.
    pub load_shift_limit: f64,
}

impl AttackVector {
    pub fn zero(case: &GridCase, n1: f64, load_shift_limit: f64) -> Self {
        AttackVector {
            c: vec![0.0; case.n_buses()],
            n1,
            load_shift_limit,
        }
    }

    /// Internal indices of center buses: load buses with |c| above the
    /// threshold.
    pub fn center_buses(&self, case: &GridCase) -> Vec<usize> {
        self.c
            .iter()
            .enumerate()
            .filter(|&(i, v)| case.is_load_bus(i) && v.abs() > CENTER_THRESHOLD)
            .map(|(i, _)| i)
            .collect()
    }

    /// l1 mass of the perturbation over load buses.
    pub fn l1_usage(&self, case: &GridCase) -> f64 {
        self.c
            .iter()
            .enumerate()
            .filter(|&(i, _)| case.is_load_bus(i))
            .map(|(_, v)| v.abs())
            .sum()
    }

    /// Hard validation of the type invariants.
    pub fn validate(&self, case: &GridCase, model: &InjectionModel) -> Result<()> {
        let report = check_attack(self, case, model);
        if report.ok() {
            Ok(())
        } else {
            Err(Error::Validation(report.summary()))
        }
    }
}

/// The subgraph of buses and branches whose measurements the attacker must
/// control to keep the attack unobservable.
#[derive(Debug, Clone)]
pub struct AttackSubgraph {
    pub buses: BTreeSet<usize>,
    pub branches: BTreeSet<usize>,
    pub center_buses: BTreeSet<usize>,
    /// Set when expansion swallowed the entire network.
    pub spans_network: bool,
}

/// Construct the attack subgraph by seeded expansion: start from the center
/// buses, pull in all adjacent branches and buses, then keep expanding around
/// any non-load boundary bus until every boundary bus carries load.
pub fn build_subgraph(
    attack: &AttackVector,
    case: &GridCase,
    _model: &InjectionModel,
) -> Result<AttackSubgraph> {
    let centers: BTreeSet<usize> = attack.center_buses(case).into_iter().collect();
    if centers.is_empty() {
        return Err(Error::EmptyAttack);
    }
    // bus -> incident branch indices
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); case.n_buses()];
    for (k, br) in case.branches.iter().enumerate() {
        incident[case.bus_position(br.from_bus).expect("validated")].push(k);
        incident[case.bus_position(br.to_bus).expect("validated")].push(k);
    }
    let endpoints = |k: usize| {
        let br = &case.branches[k];
        (
            case.bus_position(br.from_bus).expect("validated"),
            case.bus_position(br.to_bus).expect("validated"),
        )
    };

    let mut buses = centers.clone();
    let mut branches: BTreeSet<usize> = BTreeSet::new();
    // step 2: everything adjacent to a center bus
    let mut frontier: Vec<usize> = centers.iter().copied().collect();
    for &b in &frontier {
        for &k in &incident[b] {
            branches.insert(k);
            let (f, t) = endpoints(k);
            buses.insert(f);
            buses.insert(t);
        }
    }
    // steps 3-4: expand around non-load boundary buses until none remain
    loop {
        frontier.clear();
        for &b in &buses {
            if case.is_load_bus(b) {
                continue;
            }
            if incident[b].iter().any(|k| !branches.contains(k)) {
                frontier.push(b);
            }
        }
        if frontier.is_empty() {
            break;
        }
        for &b in &frontier {
            for &k in &incident[b] {
                branches.insert(k);
                let (f, t) = endpoints(k);
                buses.insert(f);
                buses.insert(t);
            }
        }
    }
    let spans_network = buses.len() == case.n_buses();
    Ok(AttackSubgraph {
        buses,
        branches,
        center_buses: centers,
        spans_network,
    })
}

/// The loads the operator observes under the attack: `P_D - H c`.
pub fn cyber_loads(attack: &AttackVector, case: &GridCase, model: &InjectionModel) -> Vec<f64> {
    let hc = model.h_apply(&attack.c);
    case.loads()
        .iter()
        .zip(&hc)
        .map(|(l, h)| l - h)
        .collect()
}

/// Validation report for an attack vector; violations are data, not errors.
#[derive(Debug, Clone)]
pub struct AttackCheckReport {
    pub l1_usage: f64,
    pub l1_budget: f64,
    /// Count of nonzero entries over load buses (sparsity, informational).
    pub l0_count: usize,
    pub center_count: usize,
    pub slack_entry: f64,
    /// Buses where c is nonzero although the bus carries no load or is the
    /// slack.
    pub forbidden_support: Vec<usize>,
    /// (bus, |H c| excess beyond the allowed load shift), per violating bus.
    pub load_shift_violations: Vec<(usize, f64)>,
    /// Per-bus slack remaining in the load-shift box, `L_S P_D - |Hc|`.
    pub load_shift_slack: Vec<f64>,
    pub subgraph_buses: usize,
    pub subgraph_branches: usize,
}

impl AttackCheckReport {
    pub fn ok(&self) -> bool {
        self.l1_usage <= self.l1_budget + L1_SLACK
            && self.slack_entry.abs() <= CENTER_THRESHOLD
            && self.forbidden_support.is_empty()
            && self.load_shift_violations.is_empty()
    }

    pub fn summary(&self) -> String {
        if self.ok() {
            format!(
                "attack ok: l1 {:.6}/{:.6}, {} center buses, subgraph {} buses / {} branches",
                self.l1_usage,
                self.l1_budget,
                self.center_count,
                self.subgraph_buses,
                self.subgraph_branches
            )
        } else {
            let mut parts = Vec::new();
            if self.l1_usage > self.l1_budget + L1_SLACK {
                parts.push(format!(
                    "l1 usage {:.6} exceeds budget {:.6}",
                    self.l1_usage, self.l1_budget
                ));
            }
            if self.slack_entry.abs() > CENTER_THRESHOLD {
                parts.push(format!("nonzero slack entry {:.3e}", self.slack_entry));
            }
            if !self.forbidden_support.is_empty() {
                parts.push(format!(
                    "support on non-load buses {:?}",
                    self.forbidden_support
                ));
            }
            for &(bus, excess) in &self.load_shift_violations {
                parts.push(format!(
                    "load shift at bus index {bus} exceeds bound by {excess:.6} pu"
                ));
            }
            parts.join("; ")
        }
    }
}

/// Evaluate every attack-vector invariant and the induced subgraph size.
pub fn check_attack(
    attack: &AttackVector,
    case: &GridCase,
    model: &InjectionModel,
) -> AttackCheckReport {
    let slack = case.slack_position();
    let mut forbidden = Vec::new();
    let mut l0 = 0usize;
    for (i, &v) in attack.c.iter().enumerate() {
        if v.abs() > CENTER_THRESHOLD {
            if !case.is_load_bus(i) || i == slack {
                forbidden.push(i);
            } else {
                l0 += 1;
            }
        }
    }
    let hc = model.h_apply(&attack.c);
    let mut violations = Vec::new();
    let mut slack_room = Vec::with_capacity(case.n_buses());
    for (i, (&h, bus)) in hc.iter().zip(&case.buses).enumerate() {
        let allowed = attack.load_shift_limit * bus.p_load.max(0.0);
        slack_room.push(allowed - h.abs());
        if h.abs() > allowed + 1e-9 {
            violations.push((i, h.abs() - allowed));
        }
    }
    let (sb, sbr) = match build_subgraph(attack, case, model) {
        Ok(s) => (s.buses.len(), s.branches.len()),
        Err(_) => (0, 0),
    };
    AttackCheckReport {
        l1_usage: attack.l1_usage(case),
        l1_budget: attack.n1,
        l0_count: l0,
        center_count: attack.center_buses(case).len(),
        slack_entry: attack.c[slack],
        forbidden_support: forbidden,
        load_shift_violations: violations,
        load_shift_slack: slack_room,
        subgraph_buses: sb,
        subgraph_branches: sbr,
    }
}

/// JSON attack descriptor exchanged with the CLI and stored as fixtures:
/// sparse map from external bus id to perturbation value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackDescriptor {
    pub target_line: usize,
    pub n1: f64,
    pub ls: f64,
    pub c: BTreeMap<usize, f64>,
}

impl AttackDescriptor {
    pub fn from_attack(attack: &AttackVector, case: &GridCase, target_line: usize) -> Self {
        let mut c = BTreeMap::new();
        for (i, &v) in attack.c.iter().enumerate() {
            if v.abs() > CENTER_THRESHOLD {
                c.insert(case.buses[i].id, v);
            }
        }
        AttackDescriptor {
            target_line,
            n1: attack.n1,
            ls: attack.load_shift_limit,
            c,
        }
    }

    pub fn to_attack(&self, case: &GridCase) -> Result<AttackVector> {
        let mut c = vec![0.0; case.n_buses()];
        for (&bus_id, &v) in &self.c {
            let i = case
                .bus_position(bus_id)
                .ok_or_else(|| Error::Validation(format!("descriptor references unknown bus {bus_id}")))?;
            c[i] = v;
        }
        Ok(AttackVector {
            c,
            n1: self.n1,
            load_shift_limit: self.ls,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::parse_case;
    use crate::network::build_injection_model;

    // 1 -(slack, no load)- 2(load) - 3(no load) - 4(load); plus 2-4 direct
    const CHAIN: &str = "\
function mpc = chain
mpc.baseMVA = 100;
mpc.bus = [
    1 3  0 0 0 0 1 1 0 230 1 1.1 0.9;
    2 1 50 0 0 0 1 1 0 230 1 1.1 0.9;
    3 1  0 0 0 0 1 1 0 230 1 1.1 0.9;
    4 1 30 0 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [
    1 0 0 0 0 1 100 1 120 0;
];
mpc.branch = [
    1 2 0 0.10 0 100 0 0 0 0 1;
    2 3 0 0.10 0 100 0 0 0 0 1;
    3 4 0 0.10 0 100 0 0 0 0 1;
    2 4 0 0.20 0 100 0 0 0 0 1;
];
mpc.gencost = [
    2 0 0 2 10 0;
];
";

    #[test]
    fn one_round_expansion_when_neighbors_carry_load() {
        let case = parse_case(CHAIN).unwrap();
        let model = build_injection_model(&case).unwrap();
        // center at bus 4 (index 3); neighbors are bus 3 (non-load) and bus 2
        let mut attack = AttackVector::zero(&case, 1.0, 0.5);
        attack.c[3] = 0.001;
        let s = build_subgraph(&attack, &case, &model).unwrap();
        // step 2 pulls in buses {2,3,4}; bus 3 is a non-load boundary bus,
        // so step 3 expands it, reaching bus 1 as well
        assert!(s.buses.contains(&2));
        assert!(s.branches.contains(&1), "branches {:?}", s.branches);
        assert_eq!(s.center_buses.iter().copied().collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn non_load_boundary_forces_expansion() {
        let case = parse_case(CHAIN).unwrap();
        let model = build_injection_model(&case).unwrap();
        // center at bus 2 (index 1): neighbors bus1 (slack, no load),
        // bus3 (no load), bus4 (load). Non-load boundary buses keep the
        // expansion going until only load buses sit on the boundary.
        let mut attack = AttackVector::zero(&case, 1.0, 0.5);
        attack.c[1] = 0.001;
        let s = build_subgraph(&attack, &case, &model).unwrap();
        // bus 3 boundary is non-load -> its branch to 4 joins; bus 1 is
        // non-load too and has no further branches beyond 1-2
        assert!(s.branches.contains(&2));
        assert_eq!(s.buses.len(), 4);
        assert!(s.spans_network);
    }

    #[test]
    fn empty_attack_is_an_error() {
        let case = parse_case(CHAIN).unwrap();
        let model = build_injection_model(&case).unwrap();
        let attack = AttackVector::zero(&case, 1.0, 0.1);
        assert!(matches!(
            build_subgraph(&attack, &case, &model),
            Err(Error::EmptyAttack)
        ));
    }

    #[test]
    fn cyber_loads_preserve_total() {
        let case = parse_case(CHAIN).unwrap();
        let model = build_injection_model(&case).unwrap();
        let mut attack = AttackVector::zero(&case, 1.0, 0.5);
        attack.c[1] = 0.002;
        attack.c[3] = -0.001;
        let loads = cyber_loads(&attack, &case, &model);
        let diff: f64 = loads.iter().sum::<f64>() - case.total_load();
        assert!(diff.abs() < 1e-9);
        // and a zero attack changes nothing
        let zero = AttackVector::zero(&case, 1.0, 0.5);
        assert_eq!(cyber_loads(&zero, &case, &model), case.loads());
    }

    #[test]
    fn check_attack_flags_the_right_bus() {
        let case = parse_case(CHAIN).unwrap();
        let model = build_injection_model(&case).unwrap();
        let mut attack = AttackVector::zero(&case, 10.0, 0.01);
        attack.c[1] = 0.05; // huge shift against a 1% allowance
        let report = check_attack(&attack, &case, &model);
        assert!(!report.ok());
        assert!(!report.load_shift_violations.is_empty());
        // zero attack passes every check
        let report = check_attack(&AttackVector::zero(&case, 0.0, 0.1), &case, &model);
        assert!(report.ok());
        assert_eq!(report.l1_usage, 0.0);
    }

    #[test]
    fn subgraph_grows_with_support() {
        let case = parse_case(CHAIN).unwrap();
        let model = build_injection_model(&case).unwrap();
        let mut small = AttackVector::zero(&case, 1.0, 0.5);
        small.c[3] = 0.001;
        let mut large = small.clone();
        large.c[1] = 0.001;
        let s1 = build_subgraph(&small, &case, &model).unwrap();
        let s2 = build_subgraph(&large, &case, &model).unwrap();
        assert!(s1.buses.is_subset(&s2.buses));
        assert!(s1.branches.is_subset(&s2.branches));
    }

    #[test]
    fn descriptor_round_trip() {
        let case = parse_case(CHAIN).unwrap();
        let mut attack = AttackVector::zero(&case, 0.5, 0.1);
        attack.c[1] = 0.004;
        attack.c[3] = -0.002;
        let desc = AttackDescriptor::from_attack(&attack, &case, 2);
        let json = serde_json::to_string(&desc).unwrap();
        let back: AttackDescriptor = serde_json::from_str(&json).unwrap();
        let attack2 = back.to_attack(&case).unwrap();
        assert_eq!(attack, attack2);
    }
}
