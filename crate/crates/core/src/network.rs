//! DC sensitivity structures: bus susceptance matrix, branch-flow operator,
//! PTDF, generator incidence, and the injection map used when perturbing
//! measurements.
//!
//! Flow orientation follows the branch's from->to declaration: a positive
//! flow runs from `from_bus` to `to_bus`. The PTDF column of the slack bus is
//! identically zero.

use nalgebra::{DMatrix, DVector};

use crate::case_io::GridCase;
use crate::{Error, Result};

/// Dense PTDF is formed up to this bus count; larger systems keep the
/// factorization and compute PTDF rows or flows on demand.
const DENSE_PTDF_LIMIT: usize = 300;

#[derive(Debug)]
pub struct InjectionModel {
    /// n_b x n_b bus susceptance matrix (symmetric, zero row sums).
    b_bus: DMatrix<f64>,
    /// n_br x n_b branch-flow operator: flows = b_branch * theta.
    b_branch: DMatrix<f64>,
    /// n_b x n_g generator-to-bus incidence.
    gen_incidence: DMatrix<f64>,
    /// LU factors of the susceptance matrix with the slack row/column removed.
    reduced_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// Full PTDF matrix, formed only for small systems.
    ptdf: Option<DMatrix<f64>>,
    /// Internal index of the slack bus.
    pub slack: usize,
    n_buses: usize,
    n_branches: usize,
}

impl InjectionModel {
    pub fn n_buses(&self) -> usize {
        self.n_buses
    }

    pub fn n_branches(&self) -> usize {
        self.n_branches
    }

    pub fn n_generators(&self) -> usize {
        self.gen_incidence.ncols()
    }

    pub fn b_bus(&self) -> &DMatrix<f64> {
        &self.b_bus
    }

    pub fn b_branch(&self) -> &DMatrix<f64> {
        &self.b_branch
    }

    pub fn gen_incidence(&self) -> &DMatrix<f64> {
        &self.gen_incidence
    }

    /// The injection map `H`: a state perturbation `c` induces the bus
    /// injection perturbation `H c`. For DC injection measurements this is
    /// exactly the bus susceptance matrix, which also guarantees
    /// `1' (H c) = 0` for every `c`.
    pub fn h_inj(&self) -> &DMatrix<f64> {
        &self.b_bus
    }

    /// `H c` as a vector.
    pub fn h_apply(&self, c: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(c);
        (&self.b_bus * v).data.into()
    }

    /// Voltage angles for a given injection vector, slack angle fixed at 0.
    pub fn theta(&self, injections: &[f64]) -> Vec<f64> {
        let mut rhs = DVector::zeros(self.n_buses - 1);
        let mut k = 0;
        for (i, &p) in injections.iter().enumerate() {
            if i != self.slack {
                rhs[k] = p;
                k += 1;
            }
        }
        let sol = self
            .reduced_lu
            .solve(&rhs)
            .expect("reduced susceptance factorized non-singular");
        let mut theta = vec![0.0; self.n_buses];
        let mut k = 0;
        for (i, t) in theta.iter_mut().enumerate() {
            if i != self.slack {
                *t = sol[k];
                k += 1;
            }
        }
        theta
    }

    /// One PTDF row (branch sensitivity to every bus injection).
    pub fn ptdf_row(&self, branch: usize) -> Vec<f64> {
        if let Some(ptdf) = &self.ptdf {
            return ptdf.row(branch).iter().copied().collect();
        }
        // row = e_l' B_branch[:, keep] B_red^{-1}, padded with 0 at the slack.
        // B_red is symmetric so a plain solve doubles as the transpose solve.
        let mut rhs = DVector::zeros(self.n_buses - 1);
        let mut k = 0;
        for j in 0..self.n_buses {
            if j != self.slack {
                rhs[k] = self.b_branch[(branch, j)];
                k += 1;
            }
        }
        let sol = self.reduced_lu.solve(&rhs).expect("non-singular");
        let mut row = vec![0.0; self.n_buses];
        let mut k = 0;
        for (j, r) in row.iter_mut().enumerate() {
            if j != self.slack {
                *r = sol[k];
                k += 1;
            }
        }
        row
    }

    /// One PTDF column (every branch's sensitivity to one bus injection).
    pub fn ptdf_col(&self, bus: usize) -> Vec<f64> {
        if let Some(ptdf) = &self.ptdf {
            return ptdf.column(bus).iter().copied().collect();
        }
        let mut inj = vec![0.0; self.n_buses];
        inj[bus] = 1.0;
        let theta = self.theta(&inj);
        let th = DVector::from_vec(theta);
        (&self.b_branch * th).data.into()
    }

    /// Branch flows for an arbitrary (not necessarily balanced) injection
    /// vector: `PTDF * injections`, with the slack absorbing any imbalance.
    pub fn ptdf_times(&self, injections: &[f64]) -> Vec<f64> {
        if let Some(ptdf) = &self.ptdf {
            let v = DVector::from_column_slice(injections);
            return (ptdf * v).data.into();
        }
        let theta = DVector::from_vec(self.theta(injections));
        (&self.b_branch * theta).data.into()
    }

    pub fn has_dense_ptdf(&self) -> bool {
        self.ptdf.is_some()
    }
}

/// Build all DC sensitivity structures for a validated, connected case.
pub fn build_injection_model(case: &GridCase) -> Result<InjectionModel> {
    build_injection_model_with(case, None, DENSE_PTDF_LIMIT)
}

/// As [`build_injection_model`], optionally overriding the slack bus
/// (internal index) and the dense-PTDF size threshold.
pub fn build_injection_model_with(
    case: &GridCase,
    slack_override: Option<usize>,
    dense_limit: usize,
) -> Result<InjectionModel> {
    let n_b = case.n_buses();
    let n_br = case.n_branches();
    check_connected(case)?;

    let mut b_bus = DMatrix::zeros(n_b, n_b);
    let mut b_branch = DMatrix::zeros(n_br, n_b);
    for (k, br) in case.branches.iter().enumerate() {
        let i = case.bus_position(br.from_bus).expect("validated");
        let j = case.bus_position(br.to_bus).expect("validated");
        let b = 1.0 / br.reactance;
        b_bus[(i, i)] += b;
        b_bus[(j, j)] += b;
        b_bus[(i, j)] -= b;
        b_bus[(j, i)] -= b;
        b_branch[(k, i)] = b;
        b_branch[(k, j)] = -b;
    }

    let mut gen_incidence = DMatrix::zeros(n_b, case.n_generators());
    for (g, gen) in case.generators.iter().enumerate() {
        let i = case.bus_position(gen.bus).expect("validated");
        gen_incidence[(i, g)] += 1.0;
    }

    let slack = slack_override.unwrap_or_else(|| case.slack_position());
    let keep: Vec<usize> = (0..n_b).filter(|&i| i != slack).collect();
    let reduced = b_bus.select_rows(keep.iter()).select_columns(keep.iter());
    let reduced_lu = reduced.lu();
    if reduced_lu.determinant() == 0.0 {
        return Err(Error::Singular(
            "reduced susceptance matrix did not factorize".into(),
        ));
    }

    let ptdf = if n_b <= dense_limit {
        // PTDF[:, keep] = B_branch[:, keep] * B_red^{-1}; solve on the
        // transpose since B_red is symmetric.
        let rhs = b_branch.select_columns(keep.iter()).transpose();
        let sol = reduced_lu
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("PTDF solve failed".into()))?;
        let mut ptdf = DMatrix::zeros(n_br, n_b);
        for (col, &j) in keep.iter().enumerate() {
            for l in 0..n_br {
                ptdf[(l, j)] = sol[(col, l)];
            }
        }
        Some(ptdf)
    } else {
        None
    };

    Ok(InjectionModel {
        b_bus,
        b_branch,
        gen_incidence,
        reduced_lu,
        ptdf,
        slack,
        n_buses: n_b,
        n_branches: n_br,
    })
}

/// Physical branch flows for a dispatch/load pair: `PTDF (G_B P_G - P_D)`.
/// The pair must balance to within `1e-8` total.
pub fn physical_flows(model: &InjectionModel, dispatch: &[f64], loads: &[f64]) -> Result<Vec<f64>> {
    if dispatch.len() != model.n_generators() {
        return Err(Error::Dimension(format!(
            "dispatch has {} entries for {} generators",
            dispatch.len(),
            model.n_generators()
        )));
    }
    if loads.len() != model.n_buses() {
        return Err(Error::Dimension(format!(
            "loads has {} entries for {} buses",
            loads.len(),
            model.n_buses()
        )));
    }
    let injections = injections_of(model, dispatch, loads);
    let imbalance: f64 = injections.iter().sum();
    const TOL: f64 = 1e-8;
    if imbalance.abs() > TOL {
        return Err(Error::Imbalance {
            imbalance,
            tol: TOL,
        });
    }
    Ok(model.ptdf_times(&injections))
}

/// `G_B * dispatch - loads` as a plain vector.
pub fn injections_of(model: &InjectionModel, dispatch: &[f64], loads: &[f64]) -> Vec<f64> {
    let d = DVector::from_column_slice(dispatch);
    let gen_inj = &model.gen_incidence * d;
    gen_inj
        .iter()
        .zip(loads)
        .map(|(g, l)| g - l)
        .collect()
}

fn check_connected(case: &GridCase) -> Result<()> {
    let n = case.n_buses();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for br in &case.branches {
        let i = case.bus_position(br.from_bus).expect("validated");
        let j = case.bus_position(br.to_bus).expect("validated");
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut comp = vec![usize::MAX; n];
    let mut n_comp = 0;
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = n_comp;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if comp[v] == usize::MAX {
                    comp[v] = n_comp;
                    stack.push(v);
                }
            }
        }
        n_comp += 1;
    }
    if n_comp > 1 {
        let mut islands = vec![Vec::new(); n_comp];
        for (i, &c) in comp.iter().enumerate() {
            islands[c].push(case.buses[i].id);
        }
        return Err(Error::Disconnected(islands));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::parse_case;

    const TWO_BUS: &str = "\
function mpc = two_bus
mpc.baseMVA = 100;
mpc.bus = [
    1 3  0 0 0 0 1 1 0 230 1 1.1 0.9;
    2 1 50 0 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [
    1 0 0 0 0 1 100 1 100 0;
    2 0 0 0 0 1 100 1 100 0;
];
mpc.branch = [
    1 2 0 0.1 0 100 0 0 0 0 1;
];
mpc.gencost = [
    2 0 0 2 10 0;
    2 0 0 2 20 0;
];
";

    #[test]
    fn two_bus_ptdf() {
        let case = parse_case(TWO_BUS).unwrap();
        let model = build_injection_model(&case).unwrap();
        let row = model.ptdf_row(0);
        // slack column is zero; a unit injection at bus 2 flows 2 -> 1,
        // i.e. -1 in the branch's declared 1 -> 2 orientation
        assert!(row[0].abs() < 1e-12);
        assert!((row[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_injection_zero_flow() {
        let case = parse_case(TWO_BUS).unwrap();
        let model = build_injection_model(&case).unwrap();
        let flows = model.ptdf_times(&[0.0, 0.0]);
        assert!(flows.iter().all(|f| f.abs() < 1e-12));
    }

    #[test]
    fn self_supplied_buses_have_zero_flows() {
        let case = parse_case(TWO_BUS).unwrap();
        let model = build_injection_model(&case).unwrap();
        // gen 1 covers nothing (bus 1 has no load), gen 2 covers its own 0.5
        let flows = physical_flows(&model, &[0.0, 0.5], &case.loads()).unwrap();
        assert!(flows.iter().all(|f| f.abs() < 1e-12));
    }

    #[test]
    fn flows_scale_linearly() {
        let case = parse_case(crate::case_io::tests::FIVE_BUS).unwrap();
        let model = build_injection_model(&case).unwrap();
        let loads = case.loads();
        let d1 = vec![1.0, 0.7];
        let f1 = physical_flows(&model, &d1, &loads).unwrap();
        let loads2: Vec<f64> = loads.iter().map(|l| 2.0 * l).collect();
        let d2 = vec![2.0, 1.4];
        let f2 = physical_flows(&model, &d2, &loads2).unwrap();
        for (a, b) in f1.iter().zip(&f2) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn imbalance_is_rejected() {
        let case = parse_case(TWO_BUS).unwrap();
        let model = build_injection_model(&case).unwrap();
        let err = physical_flows(&model, &[0.0, 0.0], &case.loads()).unwrap_err();
        assert!(matches!(err, Error::Imbalance { .. }));
    }

    #[test]
    fn b_bus_rows_sum_to_zero_and_symmetric() {
        let case = parse_case(crate::case_io::tests::FIVE_BUS).unwrap();
        let model = build_injection_model(&case).unwrap();
        let b = model.b_bus();
        for i in 0..5 {
            assert!(b.row(i).sum().abs() < 1e-12);
            for j in 0..5 {
                assert!((b[(i, j)] - b[(j, i)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn disconnected_network_lists_islands() {
        let text = TWO_BUS.replace(
            "mpc.bus = [
    1 3  0 0 0 0 1 1 0 230 1 1.1 0.9;
    2 1 50 0 0 0 1 1 0 230 1 1.1 0.9;
];",
            "mpc.bus = [
    1 3  0 0 0 0 1 1 0 230 1 1.1 0.9;
    2 1 50 0 0 0 1 1 0 230 1 1.1 0.9;
    7 1  0 0 0 0 1 1 0 230 1 1.1 0.9;
];",
        );
        let case = parse_case(&text).unwrap();
        match build_injection_model(&case) {
            Err(Error::Disconnected(islands)) => {
                assert_eq!(islands.len(), 2);
                assert!(islands.iter().any(|i| i == &vec![7]));
            }
            other => panic!("expected disconnected error, got {other:?}"),
        }
    }

    #[test]
    fn ptdf_matches_theta_route_on_demand() {
        let case = parse_case(crate::case_io::tests::FIVE_BUS).unwrap();
        let dense = build_injection_model_with(&case, None, 300).unwrap();
        let lazy = build_injection_model_with(&case, None, 0).unwrap();
        assert!(dense.has_dense_ptdf() && !lazy.has_dense_ptdf());
        let inj = vec![0.3, -0.1, -0.4, 0.5, -0.3];
        let f1 = dense.ptdf_times(&inj);
        let f2 = lazy.ptdf_times(&inj);
        for (a, b) in f1.iter().zip(&f2) {
            assert!((a - b).abs() < 1e-10);
        }
        for l in 0..case.n_branches() {
            let r1 = dense.ptdf_row(l);
            let r2 = lazy.ptdf_row(l);
            for (a, b) in r1.iter().zip(&r2) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
