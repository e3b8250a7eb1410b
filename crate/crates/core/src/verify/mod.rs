//! Self-check suites run by `tflis verify`.
//!
//! Every suite compares the estimators against an independent reference from
//! [`oracles`] or checks an exact structural identity.

pub mod oracles;

use nalgebra::{DMatrix, DVector, Dim, Matrix, RawStorage};
use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

use crate::matmodel::{is_valid_covariance, GaussianStats, StateSpaceModel, WishartStats};
use crate::sdu::sequential_data_update;
use crate::simgen::{simulate_run, PrbsGenerator, RngSpec, SimRng};
use crate::smoother::{flis_data_step, flis_init, flis_time_step};
use crate::transfer::{tflis_init, tflis_step, TransferOptions};

pub const SDU_TOLERANCE: f64 = 1e-9;
pub const WINDOW_TOLERANCE: f64 = 1e-8;
pub const KF_TOLERANCE: f64 = 1e-10;

/// `||a - b|| / ||b||`, falling back to the absolute error when `b` is zero.
pub fn relative_error<R: Dim, C: Dim, S1, S2>(a: &Matrix<f64, R, C, S1>, b: &Matrix<f64, R, C, S2>) -> f64
where
    S1: RawStorage<f64, R, C>,
    S2: RawStorage<f64, R, C>,
{
    assert_eq!(a.shape(), b.shape());
    let diff: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn uniform<R: Rng>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn random_vector<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| normal(rng)))
}

/// Random SPD matrix with condition number at most `max_cond`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, max_cond: f64) -> DMatrix<f64> {
    let basis = DMatrix::from_iterator(n, n, (0..n * n).map(|_| normal(rng))).qr().q();
    let log_span = max_cond.log10() * uniform(rng);
    let base = 10f64.powf(2.0 * uniform(rng) - 1.0);
    let eig = DVector::from_iterator(
        n,
        (0..n).map(|i| {
            let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            base * 10f64.powf(log_span * t)
        }),
    );
    let m = &basis * DMatrix::from_diagonal(&eig) * basis.transpose();
    (&m + m.transpose()) * 0.5
}

/// Prior, observation matrix, noise diagonal and observation for an
/// `n`-state, `m`-observation update.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    n: usize,
    m: usize,
) -> (GaussianStats, DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let prior = GaussianStats { mean: random_vector(rng, n), cov: random_spd(rng, n, 1e6) };
    let h = DMatrix::from_iterator(m, n, (0..m * n).map(|_| normal(rng)));
    let gamma = DVector::from_iterator(m, (0..m).map(|_| 0.1 + 1.9 * uniform(rng)));
    let z = random_vector(rng, m);
    (prior, h, gamma, z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl SuiteResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {} {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn benchmark_prior() -> GaussianStats {
    GaussianStats::isotropic(DVector::zeros(2), 1e7).expect("valid prior")
}

/// Sequential update against the batch information form on random instances.
pub fn sdu_batch_equivalence(instances: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let n = 1 + i % 8;
        let m = 1 + (i / 8) % 4;
        let (prior, h, gamma, z) = random_instance(&mut rng, n, m);
        let seq = match sequential_data_update(&prior, &h, &gamma, &z) {
            Ok(s) => s,
            Err(e) => return SuiteResult::new("sdu_batch_equivalence", false, format!("instance {i}: {e}")),
        };
        let batch = oracles::batch_information_update(&prior, &h, &gamma, &z);
        worst = worst.max(relative_error(&seq.mean, &batch.mean)).max(relative_error(&seq.cov, &batch.cov));
    }
    SuiteResult::new(
        "sdu_batch_equivalence",
        worst <= SDU_TOLERANCE,
        format!("instances={instances} max_rel_err={worst:.3e} tol={SDU_TOLERANCE:e}"),
    )
}

/// Plain FLIS window belief against the stacked trajectory solve, `k <= 6`.
pub fn window_joint_oracle(realizations: u64, seed: u64) -> SuiteResult {
    let model = StateSpaceModel::position_velocity();
    let lag = 2;
    let mut worst: f64 = 0.0;
    for r in 0..realizations {
        let run = match simulate_run(&model, 1e-3, RngSpec::new(seed, r), 6) {
            Ok(run) => run,
            Err(e) => return SuiteResult::new("window_joint_oracle", false, e.to_string()),
        };
        let mut state = flis_init(&model, benchmark_prior(), lag).expect("valid init");
        for k in 1..=6 {
            let post = flis_data_step(&model, &state, &run.y_target[k - 1]).expect("data step");
            let oracle =
                oracles::window_joint_posterior(&model, &benchmark_prior(), &run.inputs, &run.y_target[..k], lag);
            worst = worst
                .max(relative_error(&post.belief.mean, &oracle.mean))
                .max(relative_error(&post.belief.cov, &oracle.cov));
            state = flis_time_step(&model, &post, &run.inputs[k - 1]).expect("time step");
        }
    }
    SuiteResult::new(
        "window_joint_oracle",
        worst <= WINDOW_TOLERANCE,
        format!("realizations={realizations} max_rel_err={worst:.3e} tol={WINDOW_TOLERANCE:e}"),
    )
}

/// Errors of the two degeneration checks: transfer smoother with no passes
/// and no lag against the matrix-gain filter, and the newest-block marginal
/// of the lagged plain smoother against the same filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegenerationErrors {
    pub transfer_vs_kf: f64,
    pub marginal_vs_kf: f64,
}

pub fn degeneration_errors(steps: usize, seed: u64) -> DegenerationErrors {
    let model = StateSpaceModel::position_velocity();
    let run = simulate_run(&model, 1e-3, RngSpec::new(seed, 0), steps).expect("simulation");
    let reference = oracles::textbook_kalman_filter(&model, &benchmark_prior(), &run.inputs, &run.y_target, None);

    let mut transfer =
        tflis_init(&model, benchmark_prior(), WishartStats::zeros(2), 0, TransferOptions::with_iterations(0))
            .expect("valid init");
    let mut lagged = flis_init(&model, benchmark_prior(), 2).expect("valid init");
    let mut errors = DegenerationErrors { transfer_vs_kf: 0.0, marginal_vs_kf: 0.0 };
    for (t, kf) in reference.iter().enumerate() {
        let (next, out) =
            tflis_step(&model, &transfer, &run.inputs[t], &run.y_target[t], &run.y_external[t]).expect("transfer step");
        errors.transfer_vs_kf = errors
            .transfer_vs_kf
            .max(relative_error(&out.reported.mean, &kf.mean))
            .max(relative_error(&out.reported.cov, &kf.cov));
        transfer = next;

        let post = flis_data_step(&model, &lagged, &run.y_target[t]).expect("data step");
        let block_mean = post.belief.mean.rows(0, 2);
        let block_cov = post.belief.cov.view((0, 0), (2, 2));
        errors.marginal_vs_kf =
            errors.marginal_vs_kf.max(relative_error(&block_mean, &kf.mean)).max(relative_error(&block_cov, &kf.cov));
        lagged = flis_time_step(&model, &post, &run.inputs[t]).expect("time step");
    }
    errors
}

pub fn kf_degeneration(steps: usize, seed: u64) -> SuiteResult {
    let e = degeneration_errors(steps, seed);
    SuiteResult::new(
        "kf_degeneration",
        e.transfer_vs_kf <= KF_TOLERANCE && e.marginal_vs_kf <= KF_TOLERANCE,
        format!(
            "steps={steps} transfer_rel_err={:.3e} marginal_rel_err={:.3e} tol={KF_TOLERANCE:e}",
            e.transfer_vs_kf, e.marginal_vs_kf
        ),
    )
}

/// Period 15 and 8/7 sign balance from every nonzero seed.
pub fn prbs_period() -> SuiteResult {
    let mut failures = Vec::new();
    for seed in 1..=15u8 {
        let mut g = PrbsGenerator::new(seed).expect("nonzero seed");
        let mut states = std::collections::HashSet::new();
        let mut plus = 0;
        let mut period = None;
        for step in 1..=PrbsGenerator::PERIOD {
            states.insert(g.register());
            if g.next_value() > 0.0 {
                plus += 1;
            }
            if g.register() == seed && period.is_none() {
                period = Some(step);
            }
        }
        if period != Some(PrbsGenerator::PERIOD) || states.len() != 15 || plus != 8 {
            failures.push(seed);
        }
    }
    SuiteResult::new(
        "prbs_period",
        failures.is_empty() && PrbsGenerator::new(0).is_err(),
        format!("seeds=15 failing={failures:?}"),
    )
}

/// Violations found while checking the transfer smoother's bookkeeping over
/// one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdentityReport {
    pub steps: usize,
    pub nu_violations: usize,
    pub divisor_violations: usize,
    pub monotonicity_violations: usize,
    pub covariance_violations: usize,
    pub loewner_violations: usize,
}

impl IdentityReport {
    pub fn is_clean(&self) -> bool {
        self.nu_violations == 0
            && self.divisor_violations == 0
            && self.monotonicity_violations == 0
            && self.covariance_violations == 0
            && self.loewner_violations == 0
    }
}

pub fn transfer_identities(r_e: f64, lag: usize, horizon: usize, seed: u64) -> IdentityReport {
    let model = StateSpaceModel::position_velocity();
    let run = simulate_run(&model, r_e, RngSpec::new(seed, 0), horizon).expect("simulation");
    let nu0 = 0.0;
    let mut options = TransferOptions::with_iterations(10);
    options.trace_chains = true;
    let mut state = tflis_init(&model, benchmark_prior(), WishartStats::zeros(2), lag, options).expect("valid init");
    let mut probe = SimRng::from_seed(seed ^ 0x5eed);
    let mut report = IdentityReport { steps: horizon, ..Default::default() };

    for t in 0..horizon {
        let k = t + 1;
        let w = k.min(lag + 1);
        let nu_window_start = state.committed.nu;
        if nu_window_start != nu0 + k.saturating_sub(1 + lag) as f64 {
            report.nu_violations += 1;
        }
        let (next, out) =
            tflis_step(&model, &state, &run.inputs[t], &run.y_target[t], &run.y_external[t]).expect("transfer step");
        if out.committed_sigma_next.nu != nu0 + k.saturating_sub(lag) as f64 {
            report.nu_violations += 1;
        }
        if out.divisor != nu_window_start + w as f64 {
            report.divisor_violations += 1;
        }
        for chain in &out.sigma_chains {
            let mut prev = &state.committed.sigma;
            for sigma in chain {
                if sigma.iter().zip(prev.iter()).any(|(a, b)| a < b) {
                    report.monotonicity_violations += 1;
                }
                prev = sigma;
            }
        }
        for p in [&out.reported.cov, &out.pre_transfer.cov, &out.predicted.cov] {
            if !is_valid_covariance(p, 1e-9) {
                report.covariance_violations += 1;
            }
        }
        let tol = 1e-10 * out.pre_transfer.cov.norm();
        for _ in 0..10 {
            let x = probe.normal_vector(out.reported.dim());
            if x.dot(&(&out.reported.cov * &x)) > x.dot(&(&out.pre_transfer.cov * &x)) + tol {
                report.loewner_violations += 1;
            }
        }
        state = next;
    }
    report
}

pub fn sigma_nu_identities(seed: u64) -> SuiteResult {
    let report = transfer_identities(1e-3, 2, 50, seed);
    SuiteResult::new("sigma_nu_identities", report.is_clean(), format!("{report:?}"))
}

pub fn run_all() -> Vec<SuiteResult> {
    vec![
        sdu_batch_equivalence(200, 1),
        window_joint_oracle(20, 2),
        kf_degeneration(50, 3),
        prbs_period(),
        sigma_nu_identities(4),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes() {
        for suite in run_all() {
            assert!(suite.passed, "{}", suite.line());
        }
    }

    #[test]
    fn oracle_reproduces_hand_example() {
        let prior = GaussianStats { mean: DVector::zeros(2), cov: DMatrix::identity(2, 2) };
        let post = oracles::batch_information_update(
            &prior,
            &DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            &DVector::from_element(1, 1.0),
            &DVector::from_element(1, 1.0),
        );
        assert!((post.mean[0] - 0.5).abs() < 1e-15);
        assert!((post.cov[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((post.cov[(1, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_spd_respects_condition_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=8 {
            let m = random_spd(&mut rng, n, 1e6);
            let eig = nalgebra::SymmetricEigen::new(m).eigenvalues;
            assert!(eig.min() > 0.0);
            assert!(eig.max() / eig.min() <= 1e6 * (1.0 + 1e-6));
        }
    }
}
