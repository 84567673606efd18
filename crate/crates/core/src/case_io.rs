//! Grid case parsing, validation, and serialization.
//!
//! Two input formats are accepted: a subset of the MATPOWER `.m` case script
//! (`baseMVA`, `bus`, `gen`, `branch`, `gencost` matrix assignments) and a
//! canonical JSON form with the same tables. All internal quantities are
//! per-unit on the system MVA base; serialization emits the canonical JSON
//! form in per-unit so that a round trip is bit-exact.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Bus classification. A bus is a load bus iff it carries positive active
/// load; the slack designation is orthogonal but reported as its own kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BusKind {
    Load,
    NonLoad,
    Slack,
}

impl fmt::Display for BusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BusKind::Load => write!(f, "load"),
            BusKind::NonLoad => write!(f, "non-load"),
            BusKind::Slack => write!(f, "slack"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// External bus number, as it appears in the case file.
    pub id: usize,
    pub kind: BusKind,
    /// Active load, per-unit MW.
    pub p_load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// External bus number of the from end.
    pub from_bus: usize,
    /// External bus number of the to end.
    pub to_bus: usize,
    /// Series reactance, per-unit. Strictly positive.
    pub reactance: f64,
    /// Thermal limit, per-unit MW. `f64::INFINITY` when the source data
    /// specifies no rating (MATPOWER rateA = 0).
    #[serde(
        serialize_with = "ser_limit",
        deserialize_with = "de_limit",
        rename = "rate"
    )]
    pub limit: f64,
}

fn ser_limit<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    // JSON has no Infinity; unlimited lines round-trip through 0.0.
    s.serialize_f64(if v.is_finite() { *v } else { 0.0 })
}

fn de_limit<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let v = f64::deserialize(d)?;
    Ok(if v == 0.0 { f64::INFINITY } else { v })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    /// External bus number the unit is connected to.
    pub bus: usize,
    /// Minimum output, per-unit MW.
    pub p_min: f64,
    /// Maximum output, per-unit MW.
    pub p_max: f64,
    /// Linear cost coefficient, cost per per-unit MW and hour. Polynomial
    /// costs of degree two and above are linearized at the midpoint of the
    /// operating range when the case is parsed.
    pub cost_slope: f64,
    /// Constant cost term, cost per hour.
    pub cost_const: f64,
}

/// A validated grid case in per-unit on `base_mva`.
///
/// Out-of-service branches and generators are dropped at parse time, so every
/// element held here is in service and branch/generator indices are stable
/// 0-based positions used throughout the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    bus_index: BTreeMap<usize, usize>,
}

impl GridCase {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    /// Internal (0-based) index of an external bus number.
    pub fn bus_position(&self, bus_id: usize) -> Option<usize> {
        self.bus_index.get(&bus_id).copied()
    }

    /// Internal index of the slack bus.
    pub fn slack_position(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated case has a slack bus")
    }

    /// Whether the bus at internal index `i` carries load (`P_D > 0`).
    pub fn is_load_bus(&self, i: usize) -> bool {
        self.buses[i].p_load > 0.0
    }

    /// Per-unit load vector indexed by internal bus position.
    pub fn loads(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.p_load).collect()
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.p_load).sum()
    }

    fn validate(self) -> Result<Self> {
        let n_slack = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .count();
        if n_slack != 1 {
            return Err(Error::Validation(format!(
                "expected exactly one slack bus, found {n_slack}"
            )));
        }
        for (row, br) in self.branches.iter().enumerate() {
            for end in [br.from_bus, br.to_bus] {
                if !self.bus_index.contains_key(&end) {
                    return Err(Error::Validation(format!(
                        "branch row {} references missing bus {}",
                        row + 1,
                        end
                    )));
                }
            }
            if !(br.reactance > 0.0) {
                return Err(Error::Validation(format!(
                    "branch row {} has non-positive reactance {}",
                    row + 1,
                    br.reactance
                )));
            }
            if !(br.limit > 0.0) {
                return Err(Error::Validation(format!(
                    "branch row {} has non-positive thermal limit {}",
                    row + 1,
                    br.limit
                )));
            }
        }
        for (row, g) in self.generators.iter().enumerate() {
            if !self.bus_index.contains_key(&g.bus) {
                return Err(Error::Validation(format!(
                    "generator row {} references missing bus {}",
                    row + 1,
                    g.bus
                )));
            }
            if g.p_min > g.p_max {
                return Err(Error::Validation(format!(
                    "generator row {} has p_min {} > p_max {}",
                    row + 1,
                    g.p_min,
                    g.p_max
                )));
            }
        }
        let capacity: f64 = self.generators.iter().map(|g| g.p_max).sum();
        let load = self.total_load();
        if capacity < load {
            return Err(Error::Validation(format!(
                "total generation capacity {capacity:.4} pu below total load {load:.4} pu"
            )));
        }
        Ok(self)
    }
}

/// Raw numeric tables as read from text, before per-unit conversion and
/// validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawCaseDocument {
    pub base_mva: f64,
    pub tables: BTreeMap<String, Vec<Vec<f64>>>,
}

const KNOWN_TABLES: &[&str] = &["bus", "gen", "branch", "gencost"];

// Minimum column counts: bus needs Pd (col 2), gen needs Pmin (col 9),
// branch needs status (col 10), gencost needs the model header (cols 0..3).
const MIN_WIDTH: &[(&str, usize)] = &[("bus", 3), ("gen", 10), ("branch", 11), ("gencost", 4)];

impl RawCaseDocument {
    fn table(&self, name: &str) -> Result<&Vec<Vec<f64>>> {
        self.tables
            .get(name)
            .ok_or_else(|| Error::Validation(format!("missing required table '{name}'")))
    }

    fn check_shape(&self) -> Result<()> {
        if !self.base_mva.is_finite() || self.base_mva <= 0.0 {
            return Err(Error::Validation(format!(
                "baseMVA must be positive and finite, got {}",
                self.base_mva
            )));
        }
        for (name, rows) in &self.tables {
            if !KNOWN_TABLES.contains(&name.as_str()) {
                return Err(Error::Unsupported(format!("table '{name}'")));
            }
            let min = MIN_WIDTH
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, w)| *w)
                .unwrap_or(1);
            let width = rows.first().map(|r| r.len()).unwrap_or(min);
            for (i, row) in rows.iter().enumerate() {
                if row.len() != width {
                    return Err(Error::Validation(format!(
                        "table '{}' row {} has {} columns, expected {}",
                        name,
                        i + 1,
                        row.len(),
                        width
                    )));
                }
                if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                    return Err(Error::Validation(format!(
                        "table '{}' row {} contains non-finite value {}",
                        name,
                        i + 1,
                        v
                    )));
                }
            }
            if width < min {
                return Err(Error::Validation(format!(
                    "table '{name}' has {width} columns, needs at least {min}"
                )));
            }
        }
        Ok(())
    }
}

/// Parse a case file (MATPOWER `.m` subset or canonical JSON) into a
/// validated [`GridCase`].
pub fn parse_case(text: &str) -> Result<GridCase> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        parse_canonical_json(text)
    } else {
        build_case(&parse_matpower(text)?)
    }
}

/// Serialize a case to the canonical JSON form. `parse_case` of the output
/// reproduces the input field-for-field.
pub fn serialize_case(case: &GridCase) -> String {
    let mut tables = BTreeMap::new();
    tables.insert(
        "bus".to_string(),
        case.buses
            .iter()
            .map(|b| {
                let kind = match b.kind {
                    BusKind::Slack => 3.0,
                    _ => 1.0,
                };
                vec![b.id as f64, kind, b.p_load]
            })
            .collect(),
    );
    tables.insert(
        "branch".to_string(),
        case.branches
            .iter()
            .map(|br| {
                vec![
                    br.from_bus as f64,
                    br.to_bus as f64,
                    0.0,
                    br.reactance,
                    0.0,
                    if br.limit.is_finite() { br.limit } else { 0.0 },
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                    1.0,
                ]
            })
            .collect(),
    );
    tables.insert(
        "gen".to_string(),
        case.generators
            .iter()
            .map(|g| {
                vec![
                    g.bus as f64,
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                    1.0,
                    g.p_max,
                    g.p_min,
                ]
            })
            .collect(),
    );
    tables.insert(
        "gencost".to_string(),
        case.generators
            .iter()
            .map(|g| vec![2.0, 0.0, 0.0, 2.0, g.cost_slope, g.cost_const])
            .collect(),
    );
    let raw = RawCaseDocument {
        base_mva: case.base_mva,
        tables,
    };
    let mut out = serde_json::to_string_pretty(&CanonicalJson {
        per_unit: true,
        case: raw,
    })
    .expect("case serialization cannot fail");
    out.push('\n');
    out
}

/// Canonical JSON wrapper. `per_unit: true` marks MW columns as already
/// divided by `base_mva`; files converted from `.m` sources use MW values
/// (`per_unit: false` or absent).
#[derive(Serialize, Deserialize)]
struct CanonicalJson {
    #[serde(default)]
    per_unit: bool,
    #[serde(flatten)]
    case: RawCaseDocument,
}

fn parse_matpower(text: &str) -> Result<RawCaseDocument> {
    let mut base_mva: Option<f64> = None;
    let mut tables: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    let mut lines = text.lines().enumerate().peekable();

    while let Some((lineno, line)) = lines.next() {
        let line = strip_comment(line).trim().to_string();
        if line.is_empty() || line.starts_with("function") {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(Error::Syntax {
                line: lineno + 1,
                msg: format!("expected an assignment, found '{line}'"),
            });
        };
        let lhs = line[..eq].trim();
        let rhs = line[eq + 1..].trim();
        // field name after the struct variable, e.g. mpc.baseMVA -> baseMVA
        let field = lhs.rsplit('.').next().unwrap_or(lhs).trim();
        match field {
            "version" => continue,
            "baseMVA" => {
                let v = rhs.trim_end_matches(';').trim();
                base_mva = Some(v.parse::<f64>().map_err(|_| Error::Syntax {
                    line: lineno + 1,
                    msg: format!("invalid baseMVA value '{v}'"),
                })?);
            }
            name => {
                if !rhs.starts_with('[') {
                    return Err(Error::Unsupported(format!(
                        "assignment '{lhs}' at line {} (only numeric matrix tables are accepted)",
                        lineno + 1
                    )));
                }
                if !KNOWN_TABLES.contains(&name) {
                    return Err(Error::Unsupported(format!("table '{name}'")));
                }
                let mut body = rhs[1..].to_string();
                let mut end_line = lineno;
                while !body.contains(']') {
                    match lines.next() {
                        Some((n, l)) => {
                            end_line = n;
                            body.push('\n');
                            body.push_str(strip_comment(l));
                        }
                        None => {
                            return Err(Error::Syntax {
                                line: lineno + 1,
                                msg: format!("table '{name}' is not terminated by ']'"),
                            })
                        }
                    }
                }
                let body = &body[..body.find(']').unwrap()];
                let mut rows = Vec::new();
                for (k, row_text) in body
                    .split(|c| c == ';' || c == '\n')
                    .map(str::trim)
                    .enumerate()
                {
                    if row_text.is_empty() {
                        continue;
                    }
                    let mut row = Vec::new();
                    for tok in row_text.split([' ', '\t', ',']).filter(|t| !t.is_empty()) {
                        row.push(tok.parse::<f64>().map_err(|_| Error::Syntax {
                            line: end_line + 1,
                            msg: format!("invalid number '{tok}' in table '{name}' row {}", k + 1),
                        })?);
                    }
                    rows.push(row);
                }
                tables.insert(name.to_string(), rows);
            }
        }
    }

    Ok(RawCaseDocument {
        base_mva: base_mva.ok_or_else(|| Error::Validation("missing baseMVA".into()))?,
        tables,
    })
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(p) => &line[..p],
        None => line,
    }
}

fn build_case(raw: &RawCaseDocument) -> Result<GridCase> {
    build_case_inner(raw, false)
}

fn build_case_pu(raw: &RawCaseDocument) -> Result<GridCase> {
    build_case_inner(raw, true)
}

fn build_case_inner(raw: &RawCaseDocument, per_unit: bool) -> Result<GridCase> {
    raw.check_shape()?;
    let base = raw.base_mva;
    let scale = if per_unit { 1.0 } else { 1.0 / base };

    let mut buses = Vec::new();
    let mut bus_index = BTreeMap::new();
    for (row, b) in raw.table("bus")?.iter().enumerate() {
        let id = b[0] as usize;
        let p_load = b[2] * scale;
        let kind = if b[1] as i64 == 3 {
            BusKind::Slack
        } else if p_load > 0.0 {
            BusKind::Load
        } else {
            BusKind::NonLoad
        };
        if bus_index.insert(id, buses.len()).is_some() {
            return Err(Error::Validation(format!(
                "bus row {} duplicates bus number {}",
                row + 1,
                id
            )));
        }
        buses.push(Bus { id, kind, p_load });
    }

    let mut branches = Vec::new();
    for b in raw.table("branch")? {
        if b[10] <= 0.0 {
            continue; // out of service
        }
        let rate = b[5] * scale;
        branches.push(Branch {
            from_bus: b[0] as usize,
            to_bus: b[1] as usize,
            reactance: b[3],
            limit: if rate == 0.0 { f64::INFINITY } else { rate },
        });
    }

    let gen_rows = raw.table("gen")?;
    let cost_rows = raw.table("gencost")?;
    if cost_rows.len() != gen_rows.len() {
        return Err(Error::Unsupported(format!(
            "gencost has {} rows for {} generators (reactive cost rows are not supported)",
            cost_rows.len(),
            gen_rows.len()
        )));
    }
    let mut generators = Vec::new();
    for (g, gc) in gen_rows.iter().zip(cost_rows) {
        if g[7] <= 0.0 {
            continue; // out of service
        }
        // Cost coefficients live in the same power domain as the gen table
        // (MW for .m sources, per-unit for canonical JSON), so the tangent is
        // taken there and the slope rescaled to per-unit afterwards.
        let (slope, cost_const) = linearize_cost(gc, g[9], g[8])?;
        generators.push(Generator {
            bus: g[0] as usize,
            p_min: g[9] * scale,
            p_max: g[8] * scale,
            cost_slope: if per_unit { slope } else { slope * base },
            cost_const,
        });
    }

    GridCase {
        base_mva: base,
        buses,
        branches,
        generators,
        bus_index,
    }
    .validate()
}

/// Reduce a gencost row to an affine cost in the power domain of its table.
/// Polynomials of degree two and above become the tangent at the midpoint of
/// `[p_min, p_max]`, which preserves the marginal cost the dispatch actually
/// sees near the middle of the operating range.
fn linearize_cost(gc: &[f64], p_min: f64, p_max: f64) -> Result<(f64, f64)> {
    let model = gc[0] as i64;
    if model != 2 {
        return Err(Error::Unsupported(format!(
            "gencost model {model} (only polynomial costs are accepted)"
        )));
    }
    let n = gc[3] as usize;
    if gc.len() < 4 + n {
        return Err(Error::Validation(format!(
            "gencost row declares {n} coefficients but carries {}",
            gc.len() - 4
        )));
    }
    let coeffs = &gc[4..4 + n]; // highest order first
    let degree = n.saturating_sub(1);
    if degree <= 1 {
        let slope = if n >= 2 { coeffs[0] } else { 0.0 };
        let konst = coeffs.last().copied().unwrap_or(0.0);
        return Ok((slope, konst));
    }
    let mid = 0.5 * (p_min + p_max);
    let mut value = 0.0;
    let mut slope = 0.0;
    for (k, &c) in coeffs.iter().enumerate() {
        let pow = (n - 1 - k) as i32;
        value += c * mid.powi(pow);
        if pow >= 1 {
            slope += c * pow as f64 * mid.powi(pow - 1);
        }
    }
    Ok((slope, value - slope * mid))
}

/// Parse the canonical JSON form emitted by [`serialize_case`].
pub fn parse_canonical_json(text: &str) -> Result<GridCase> {
    let doc: CanonicalJson = serde_json::from_str(text)?;
    if doc.per_unit {
        build_case_pu(&doc.case)
    } else {
        build_case(&doc.case)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const FIVE_BUS: &str = "\
function mpc = five_bus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
    1  3   0  0 0 0 1 1 0 230 1 1.1 0.9;
    2  1  60  0 0 0 1 1 0 230 1 1.1 0.9;
    3  1  70  0 0 0 1 1 0 230 1 1.1 0.9;
    4  1   0  0 0 0 1 1 0 230 1 1.1 0.9;
    5  1  40  0 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [
    1 0 0 0 0 1 100 1 200 0;
    4 0 0 0 0 1 100 1 120 0;
];
mpc.branch = [
    1 2 0.00 0.060 0.0 120 0 0 0 0 1 -360 360;
    1 4 0.00 0.080 0.0 100 0 0 0 0 1 -360 360;
    2 3 0.00 0.070 0.0  90 0 0 0 0 1 -360 360;
    3 4 0.00 0.050 0.0  90 0 0 0 0 1 -360 360;
    2 5 0.00 0.090 0.0  80 0 0 0 0 1 -360 360;
    4 5 0.00 0.110 0.0  80 0 0 0 0 1 -360 360;
];
mpc.gencost = [
    2 0 0 3 0.02 14 0;
    2 0 0 3 0.03 22 0;
];
";

    #[test]
    fn parses_five_bus_fixture() {
        let case = parse_case(FIVE_BUS).unwrap();
        assert_eq!(case.n_buses(), 5);
        assert_eq!(case.n_branches(), 6);
        assert_eq!(case.n_generators(), 2);
        assert_eq!(case.slack_position(), 0);
        assert!(case.is_load_bus(1));
        assert!(!case.is_load_bus(3));
        // per-unit conversion: 60 MW on a 100 MVA base
        assert!((case.buses[1].p_load - 0.60).abs() < 1e-15);
    }

    #[test]
    fn midpoint_tangent_cost() {
        let case = parse_case(FIVE_BUS).unwrap();
        // gen 1: 0.02 p^2 + 14 p over [0, 200] MW, tangent at 100 MW:
        // slope = 2*0.02*100 + 14 = 18 $/MWh -> 1800 per pu-MW
        assert!((case.generators[0].cost_slope - 1800.0).abs() < 1e-9);
        // constant = f(100) - slope*100 = (200 + 1400) - 1800 = -200
        assert!((case.generators[0].cost_const + 200.0).abs() < 1e-9);
    }

    #[test]
    fn branch_to_missing_bus_is_reported() {
        let bad = FIVE_BUS.replace("4 5 0.00 0.110", "4 99 0.00 0.110");
        let err = parse_case(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("branch row 6"), "{msg}");
        assert!(msg.contains("bus 99"), "{msg}");
    }

    #[test]
    fn unknown_table_is_a_hard_error() {
        let bad = format!("{FIVE_BUS}mpc.dcline = [ 1 2 3 ];\n");
        match parse_case(&bad) {
            Err(Error::Unsupported(msg)) => assert!(msg.contains("dcline")),
            other => panic!("expected unsupported-feature error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_position() {
        let bad = FIVE_BUS.replace("mpc.baseMVA = 100;", "mpc.baseMVA = oops;");
        match parse_case(&bad) {
            Err(Error::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_service_branches_are_dropped() {
        let modified = FIVE_BUS.replace("2 3 0.00 0.070 0.0  90 0 0 0 0 1", "2 3 0.00 0.070 0.0  90 0 0 0 0 0");
        let case = parse_case(&modified).unwrap();
        assert_eq!(case.n_branches(), 5);
    }

    #[test]
    fn capacity_shortfall_is_rejected() {
        let bad = FIVE_BUS.replace("1 0 0 0 0 1 100 1 200 0;", "1 0 0 0 0 1 100 1 20 0;");
        match parse_case(&bad) {
            Err(Error::Validation(msg)) => assert!(msg.contains("capacity"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn two_slack_buses_rejected() {
        let bad = FIVE_BUS.replace("2  1  60", "2  3  60");
        match parse_case(&bad) {
            Err(Error::Validation(msg)) => assert!(msg.contains("slack"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn json_round_trip_is_identity() {
        let case = parse_case(FIVE_BUS).unwrap();
        let json = serialize_case(&case);
        let back = parse_case(&json).unwrap();
        assert_eq!(case, back);
        // idempotence of parse . serialize
        assert_eq!(serialize_case(&back), json);
        // exactly one generator record per generator
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["tables"]["gen"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn unlimited_rating_round_trips() {
        let modified = FIVE_BUS.replace("1 2 0.00 0.060 0.0 120", "1 2 0.00 0.060 0.0 0");
        let case = parse_case(&modified).unwrap();
        assert!(case.branches[0].limit.is_infinite());
        let back = parse_case(&serialize_case(&case)).unwrap();
        assert_eq!(case, back);
    }
}
