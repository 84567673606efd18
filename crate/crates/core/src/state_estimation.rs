//! Measurement simulation, weighted least-squares DC state estimation, and
//! residual-based bad-data detection.
//!
//! The telemetry suite is the full redundant set: one injection measurement
//! per bus plus flow measurements at both ends of every branch. The slack
//! angle is fixed at zero by deleting its column from the estimation system.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::network::{injections_of, InjectionModel};
use crate::{Error, Result};

/// Variance floor applied to noiseless simulations so weights stay finite.
const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasKind {
    BusInjection,
    BranchFlowFrom,
    BranchFlowTo,
}

impl MeasKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MeasKind::BusInjection => "bus-injection",
            MeasKind::BranchFlowFrom => "branch-flow-from",
            MeasKind::BranchFlowTo => "branch-flow-to",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Measurement {
    pub kind: MeasKind,
    /// Bus index for injections, branch index for flows.
    pub element: usize,
    /// Measured value, per-unit MW.
    pub value: f64,
    /// Measurement variance, per-unit squared.
    pub variance: f64,
}

#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub entries: Vec<Measurement>,
    /// n_m x n_b measurement Jacobian.
    jacobian: DMatrix<f64>,
    slack: usize,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn jacobian(&self) -> &DMatrix<f64> {
        &self.jacobian
    }

    /// CSV dump: kind, element, value, variance.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,element,value,variance\n");
        for m in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                m.kind.as_str(),
                m.element,
                m.value,
                m.variance
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    /// Estimated bus angles, radians; the slack entry is exactly zero.
    pub x_hat: Vec<f64>,
    /// Per-measurement residual `z - H x_hat`.
    pub residual: Vec<f64>,
    /// Weighted residual sum of squares.
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct BadDataReport {
    pub pass: bool,
    pub j_statistic: f64,
    pub threshold: f64,
    pub degrees_of_freedom: usize,
    pub largest_normalized_residual: f64,
    /// Index into the measurement set of the worst residual.
    pub worst_measurement: usize,
}

/// Simulate the full measurement suite from the exact DC solution of a
/// dispatch/load pair, adding i.i.d. Gaussian noise. Deterministic per seed.
pub fn simulate_measurements(
    model: &InjectionModel,
    dispatch: &[f64],
    loads: &[f64],
    noise_stddev: f64,
    seed: u64,
) -> Result<MeasurementSet> {
    let injections = injections_of(model, dispatch, loads);
    let imbalance: f64 = injections.iter().sum();
    const TOL: f64 = 1e-8;
    if imbalance.abs() > TOL {
        return Err(Error::Imbalance {
            imbalance,
            tol: TOL,
        });
    }
    if noise_stddev < 0.0 {
        return Err(Error::Validation("noise stddev must be nonnegative".into()));
    }
    let theta = DVector::from_vec(model.theta(&injections));
    let from_flows = model.b_branch() * &theta;

    let n_b = model.n_buses();
    let n_br = model.n_branches();
    let n_m = n_b + 2 * n_br;
    let mut jacobian = DMatrix::zeros(n_m, n_b);
    let mut entries = Vec::with_capacity(n_m);
    let variance = noise_stddev.powi(2).max(VARIANCE_FLOOR);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_stddev.max(0.0)).expect("valid stddev");
    let noise = |rng: &mut ChaCha8Rng| -> f64 {
        if noise_stddev > 0.0 {
            normal.sample(rng)
        } else {
            0.0
        }
    };

    for i in 0..n_b {
        jacobian.row_mut(i).copy_from(&model.b_bus().row(i));
        entries.push(Measurement {
            kind: MeasKind::BusInjection,
            element: i,
            value: injections[i] + noise(&mut rng),
            variance,
        });
    }
    for k in 0..n_br {
        jacobian
            .row_mut(n_b + k)
            .copy_from(&model.b_branch().row(k));
        entries.push(Measurement {
            kind: MeasKind::BranchFlowFrom,
            element: k,
            value: from_flows[k] + noise(&mut rng),
            variance,
        });
    }
    for k in 0..n_br {
        let row = -model.b_branch().row(k);
        jacobian.row_mut(n_b + n_br + k).copy_from(&row);
        entries.push(Measurement {
            kind: MeasKind::BranchFlowTo,
            element: k,
            value: -from_flows[k] + noise(&mut rng),
            variance,
        });
    }

    Ok(MeasurementSet {
        entries,
        jacobian,
        slack: model.slack,
    })
}

/// Weighted least-squares estimate with the slack angle pinned at zero.
pub fn wls_estimate(meas: &MeasurementSet) -> Result<EstimationResult> {
    let n_m = meas.len();
    let n_b = meas.jacobian.ncols();
    if n_m == 0 {
        return Err(Error::RankDeficient);
    }
    let keep: Vec<usize> = (0..n_b).filter(|&j| j != meas.slack).collect();
    let h = meas.jacobian.select_columns(keep.iter());
    // normal equations: (H' R^-1 H) x = H' R^-1 z
    let mut hw = h.clone();
    for (i, m) in meas.entries.iter().enumerate() {
        let w = 1.0 / m.variance;
        hw.row_mut(i).scale_mut(w);
    }
    let gain = h.transpose() * &hw;
    let z = DVector::from_iterator(n_m, meas.entries.iter().map(|m| m.value));
    let rhs = hw.transpose() * &z;
    let chol = Cholesky::new(gain).ok_or(Error::RankDeficient)?;
    let sol = chol.solve(&rhs);

    let mut x_hat = vec![0.0; n_b];
    for (pos, &j) in keep.iter().enumerate() {
        x_hat[j] = sol[pos];
    }
    let xv = DVector::from_column_slice(&x_hat);
    let predicted = &meas.jacobian * xv;
    let residual: Vec<f64> = meas
        .entries
        .iter()
        .zip(predicted.iter())
        .map(|(m, p)| m.value - p)
        .collect();
    let objective = residual
        .iter()
        .zip(&meas.entries)
        .map(|(r, m)| r * r / m.variance)
        .sum();
    Ok(EstimationResult {
        x_hat,
        residual,
        objective,
    })
}

/// Replace every measurement `z_i` by `z_i + H_i c`. The attack vector is a
/// full state perturbation (length n_b, zero at the slack).
pub fn apply_attack(meas: &MeasurementSet, c: &[f64]) -> Result<MeasurementSet> {
    if c.len() != meas.jacobian.ncols() {
        return Err(Error::Dimension(format!(
            "attack vector has {} entries for {} state variables",
            c.len(),
            meas.jacobian.ncols()
        )));
    }
    if c[meas.slack].abs() > 1e-12 {
        return Err(Error::Validation(
            "attack vector must be zero at the slack bus".into(),
        ));
    }
    let shift = &meas.jacobian * DVector::from_column_slice(c);
    let mut out = meas.clone();
    for (m, s) in out.entries.iter_mut().zip(shift.iter()) {
        m.value += s;
    }
    Ok(out)
}

/// Chi-square test on the WLS objective at significance `alpha`, plus the
/// largest normalized residual.
pub fn bad_data_test(
    result: &EstimationResult,
    meas: &MeasurementSet,
    alpha: f64,
) -> BadDataReport {
    let n_m = meas.len();
    let n_states = meas.jacobian.ncols() - 1;
    let dof = n_m.saturating_sub(n_states).max(1);
    let chi = ChiSquared::new(dof as f64).expect("positive dof");
    let threshold = chi.inverse_cdf(1.0 - alpha);
    let mut worst = 0usize;
    let mut worst_norm = 0.0;
    for (i, (r, m)) in result.residual.iter().zip(&meas.entries).enumerate() {
        let nr = r.abs() / m.variance.sqrt();
        if nr > worst_norm {
            worst_norm = nr;
            worst = i;
        }
    }
    BadDataReport {
        pass: result.objective <= threshold,
        j_statistic: result.objective,
        threshold,
        degrees_of_freedom: dof,
        largest_normalized_residual: worst_norm,
        worst_measurement: worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::parse_case;
    use crate::network::build_injection_model;

    fn five_bus() -> (crate::case_io::GridCase, InjectionModel) {
        let case = parse_case(crate::case_io::tests::FIVE_BUS).unwrap();
        let model = build_injection_model(&case).unwrap();
        (case, model)
    }

    fn balanced_dispatch(case: &crate::case_io::GridCase) -> Vec<f64> {
        let total = case.total_load();
        vec![total * 0.75, total * 0.25]
    }

    #[test]
    fn noiseless_measurements_are_exact() {
        let (case, model) = five_bus();
        let d = balanced_dispatch(&case);
        let meas = simulate_measurements(&model, &d, &case.loads(), 0.0, 7).unwrap();
        // injection measurements reproduce the injections
        let inj = crate::network::injections_of(&model, &d, &case.loads());
        for i in 0..case.n_buses() {
            assert!((meas.entries[i].value - inj[i]).abs() < 1e-12);
        }
        // to-flows mirror from-flows
        let n_b = case.n_buses();
        let n_br = case.n_branches();
        for k in 0..n_br {
            let from = meas.entries[n_b + k].value;
            let to = meas.entries[n_b + n_br + k].value;
            assert!((from + to).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_measurements() {
        let (case, model) = five_bus();
        let d = balanced_dispatch(&case);
        let a = simulate_measurements(&model, &d, &case.loads(), 0.02, 42).unwrap();
        let b = simulate_measurements(&model, &d, &case.loads(), 0.02, 42).unwrap();
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert_eq!(x.value, y.value);
        }
    }

    #[test]
    fn wls_recovers_exact_state() {
        let (case, model) = five_bus();
        let d = balanced_dispatch(&case);
        let meas = simulate_measurements(&model, &d, &case.loads(), 0.0, 0).unwrap();
        let est = wls_estimate(&meas).unwrap();
        let inj = crate::network::injections_of(&model, &d, &case.loads());
        let truth = model.theta(&inj);
        for (a, b) in est.x_hat.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(est.objective < 1e-12);
    }

    #[test]
    fn duplicating_measurements_keeps_estimate() {
        let (case, model) = five_bus();
        let d = balanced_dispatch(&case);
        let meas = simulate_measurements(&model, &d, &case.loads(), 0.01, 3).unwrap();
        let est1 = wls_estimate(&meas).unwrap();
        let mut doubled = meas.clone();
        let j = meas.jacobian.clone();
        let rows = nalgebra::DMatrix::from_fn(2 * j.nrows(), j.ncols(), |i, c| {
            j[(i % j.nrows(), c)]
        });
        doubled.jacobian = rows;
        doubled.entries.extend(meas.entries.iter().cloned());
        let est2 = wls_estimate(&doubled).unwrap();
        for (a, b) in est1.x_hat.iter().zip(&est2.x_hat) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn wls_objective_matches_definition() {
        let (case, model) = five_bus();
        let d = balanced_dispatch(&case);
        let meas = simulate_measurements(&model, &d, &case.loads(), 0.01, 11).unwrap();
        let est = wls_estimate(&meas).unwrap();
        let recomputed: f64 = est
            .residual
            .iter()
            .zip(&meas.entries)
            .map(|(r, m)| r * r / m.variance)
            .sum();
        assert!((est.objective - recomputed).abs() < 1e-10);
    }

    #[test]
    fn unobservable_attack_invisible_gross_error_caught() {
        let (case, model) = five_bus();
        let d = balanced_dispatch(&case);
        let meas = simulate_measurements(&model, &d, &case.loads(), 0.0, 0).unwrap();
        let clean = wls_estimate(&meas).unwrap();

        // structured attack: shift the state at two load buses
        let mut c = vec![0.0; 5];
        c[1] = 0.01;
        c[2] = -0.004;
        let attacked = apply_attack(&meas, &c).unwrap();
        let est = wls_estimate(&attacked).unwrap();
        assert!((est.objective - clean.objective).abs() < 1e-10);
        for i in 0..5 {
            assert!((est.x_hat[i] - clean.x_hat[i] - c[i]).abs() < 1e-10);
        }
        let report = bad_data_test(&est, &attacked, 0.05);
        assert!(report.pass);

        // unstructured gross error trips the detector
        let mut corrupted = simulate_measurements(&model, &d, &case.loads(), 0.01, 5).unwrap();
        corrupted.entries[3].value += 10.0 * 0.01;
        let est = wls_estimate(&corrupted).unwrap();
        let report = bad_data_test(&est, &corrupted, 0.05);
        assert!(!report.pass, "J = {} thr = {}", report.j_statistic, report.threshold);
    }

    #[test]
    fn attack_with_nonzero_slack_rejected() {
        let (case, model) = five_bus();
        let d = balanced_dispatch(&case);
        let meas = simulate_measurements(&model, &d, &case.loads(), 0.0, 0).unwrap();
        let mut c = vec![0.0; 5];
        c[0] = 0.01; // slack is bus index 0 in the fixture
        assert!(apply_attack(&meas, &c).is_err());
    }
}
