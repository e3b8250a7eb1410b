//! One line per acceptance criterion. Run with
//! `cargo test -p tflis --test acceptance`.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::DVector;
use tflis::cli::{sweep, trace, Method, ScenarioConfig};
use tflis::matmodel::{GaussianStats, StateSpaceModel, WishartStats};
use tflis::simgen::{simulate_run, RngSpec};
use tflis::transfer::{tflis_init, tflis_step, TransferOptions};
use tflis::verify;

const DESK_RUNS: i64 = 1000;
const DESK_GRID: [f64; 7] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];

struct Outcome {
    id: u32,
    passed: bool,
    detail: String,
}

impl Outcome {
    fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("[{tag}] criterion {}: {}", self.id, self.detail)
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn desk_config() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::benchmark();
    cfg.runs = DESK_RUNS;
    cfg.r_e_grid = DESK_GRID.to_vec();
    cfg
}

fn criterion_1() -> Outcome {
    let (suite, took) = timed(|| verify::sdu_batch_equivalence(200, 1));
    let fast = took < Duration::from_secs(1);
    Outcome {
        id: 1,
        passed: suite.passed && fast,
        detail: format!("sdu vs batch: {} runtime={took:.2?}", suite.detail),
    }
}

fn criterion_2() -> Outcome {
    let (suite, took) = timed(|| verify::window_joint_oracle(20, 2));
    let fast = took < Duration::from_secs(1);
    Outcome {
        id: 2,
        passed: suite.passed && fast,
        detail: format!("window joint: {} runtime={took:.2?}", suite.detail),
    }
}

fn criterion_3() -> Outcome {
    let e = verify::degeneration_errors(50, 3);
    Outcome {
        id: 3,
        passed: e.transfer_vs_kf <= 1e-10 && e.marginal_vs_kf <= 1e-10,
        detail: format!(
            "N=0,L=0 vs KF rel_err={:.3e}; iFLS block vs KF rel_err={:.3e}; tol=1e-10",
            e.transfer_vs_kf, e.marginal_vs_kf
        ),
    }
}

fn criterion_4() -> Outcome {
    let scenario = desk_config().validate().expect("desk config");
    let (rows, took) = timed(|| sweep(&scenario, None).expect("sweep"));
    let mut failures = Vec::new();
    for row in &rows {
        let m = |method| row.mean(method).expect("all methods requested");
        let (ikf, ifls, kf, fls) =
            (m(Method::IsolatedKf), m(Method::IsolatedFls), m(Method::ExactKf), m(Method::ExactFls));
        let (tf, ts) = (m(Method::TransferFiltered), m(Method::TransferSmoothed));
        let r = row.r_e;
        if fls > 1.02 * kf {
            failures.push(format!("r_E={r:e}: FLS {fls:.4e} > 1.02*KF {kf:.4e}"));
        }
        if ifls > 1.02 * ikf {
            failures.push(format!("r_E={r:e}: iFLS {ifls:.4e} > 1.02*iKF {ikf:.4e}"));
        }
        if r <= 1e-3 {
            if !(kf <= tf && tf <= ikf) {
                failures.push(format!("r_E={r:e}: KF {kf:.4e} <= TFLIS-F {tf:.4e} <= iKF {ikf:.4e} violated"));
            }
            if tf > 0.8 * ikf {
                failures.push(format!("r_E={r:e}: TFLIS-F {tf:.4e} > 0.8*iKF {ikf:.4e}"));
            }
        }
        if r == 1.0 {
            if tf > 1.15 * ikf {
                failures.push(format!("r_E=1: TFLIS-F {tf:.4e} > 1.15*iKF {ikf:.4e}"));
            }
            if ts > 1.15 * ifls {
                failures.push(format!("r_E=1: TFLIS-S {ts:.4e} > 1.15*iFLS {ifls:.4e}"));
            }
        }
        if ts > tf {
            failures.push(format!("r_E={r:e}: TFLIS-S {ts:.4e} > TFLIS-F {tf:.4e}"));
        }
    }
    let summary = rows
        .iter()
        .map(|row| {
            format!(
                "r_E={:e} iKF={:.3e} TFLIS-F={:.3e} KF={:.3e}",
                row.r_e,
                row.mean(Method::IsolatedKf).unwrap_or(f64::NAN),
                row.mean(Method::TransferFiltered).unwrap_or(f64::NAN),
                row.mean(Method::ExactKf).unwrap_or(f64::NAN)
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    let detail = if failures.is_empty() {
        format!("MSE orderings hold over {} grid points, {DESK_RUNS} runs, runtime={took:.1?} [{summary}]", rows.len())
    } else {
        format!("violations: {}", failures.join("; "))
    };
    Outcome { id: 4, passed: failures.is_empty(), detail }
}

fn window_mean(series: &[f64], from: usize, to: usize) -> f64 {
    let slice = &series[from - 1..to];
    slice.iter().sum::<f64>() / slice.len() as f64
}

fn criterion_5() -> Outcome {
    let mut cfg = desk_config();
    cfg.methods = vec![Method::ExactKf, Method::TransferFiltered];
    let scenario = cfg.validate().expect("desk config");
    let table = trace(&scenario, 1e-3, None).expect("trace");
    let tf = table.series(Method::TransferFiltered).expect("requested");
    let kf = table.series(Method::ExactKf).expect("requested");
    let early = window_mean(&tf, 3, 8);
    let late = window_mean(&tf, 30, 48);
    let kf_late = window_mean(&kf, 30, 48);
    let ratio = late / kf_late;
    let passed = late < early && (ratio - 1.0).abs() <= 0.5;
    Outcome {
        id: 5,
        passed,
        detail: format!(
            "TFLIS-F mean SE k=3..8 {early:.3e}, k=30..48 {late:.3e}; KF k=30..48 {kf_late:.3e}; ratio {ratio:.3}"
        ),
    }
}

fn criterion_6() -> Outcome {
    let mut reports = Vec::new();
    for (r_e, lag, seed) in [(1e-3, 2, 4), (1e-6, 2, 5), (1.0, 2, 6), (1e-3, 0, 7), (1e-3, 5, 8)] {
        reports.push((r_e, lag, verify::transfer_identities(r_e, lag, 50, seed)));
    }
    let passed = reports.iter().all(|(_, _, r)| r.is_clean());
    let detail = reports
        .iter()
        .map(|(r_e, lag, r)| {
            format!(
                "r_E={r_e:e},L={lag}: nu={} divisor={} monotone={} cov={} loewner={}",
                r.nu_violations,
                r.divisor_violations,
                r.monotonicity_violations,
                r.covariance_violations,
                r.loewner_violations
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Outcome { id: 6, passed, detail: format!("violations over 50-step runs: {detail}") }
}

fn transfer_shift(bias: f64, at: usize) -> f64 {
    let model = StateSpaceModel::position_velocity();
    let run = simulate_run(&model, 1e-3, RngSpec::new(20250101, 0), at).expect("simulation");
    let prior = GaussianStats::isotropic(DVector::zeros(2), 1e7).expect("prior");
    let mut state = tflis_init(&model, prior, WishartStats::zeros(2), 2, TransferOptions::default()).expect("init");
    let mut shift = f64::NAN;
    for t in 0..at {
        let y_e = model.c() * &run.states[t] + DVector::from_element(model.n_output(), bias);
        let (next, out) = tflis_step(&model, &state, &run.inputs[t], &run.y_target[t], &y_e).expect("step");
        shift = (&out.reported.mean - &out.pre_transfer.mean).norm();
        state = next;
    }
    shift
}

fn criterion_7() -> Outcome {
    let shifts: Vec<(f64, f64)> = [1.0, 10.0, 100.0].iter().map(|&c| (c, transfer_shift(c, 20))).collect();
    let passed = shifts[2].1 < shifts[1].1;
    let detail = shifts.iter().map(|(c, s)| format!("c={c}: {s:.3e}")).collect::<Vec<_>>().join(", ");
    Outcome { id: 7, passed, detail: format!("transfer-induced mean shift at k=20: {detail}") }
}

fn cli_sweep(config: &std::path::Path, jobs: &str) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tflis"))
        .args(["sweep", "--config"])
        .arg(config)
        .args(["--jobs", jobs])
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(out.stdout)
}

fn criterion_8() -> Outcome {
    let mut cfg = ScenarioConfig::benchmark();
    cfg.runs = 200;
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("scenario.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).expect("serialize")).expect("write config");

    let outputs: Result<Vec<_>, _> = ["1", "1", "4", "0"].iter().map(|j| cli_sweep(&path, j)).collect();
    match outputs {
        Ok(outputs) => {
            let identical = outputs.windows(2).all(|w| w[0] == w[1]);
            let rows = outputs[0].iter().filter(|&&b| b == b'\n').count();
            Outcome {
                id: 8,
                passed: identical && rows == 1 + cfg.r_e_grid.len(),
                detail: format!(
                    "sweep CSV ({} bytes, {rows} lines) identical across --jobs 1,1,4,0: {identical}",
                    outputs[0].len()
                ),
            }
        }
        Err(e) => Outcome { id: 8, passed: false, detail: format!("tflis sweep failed: {e}") },
    }
}

fn main() -> ExitCode {
    let outcomes = [
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
    ];
    for o in &outcomes {
        println!("{}", o.line());
    }
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    if failed.is_empty() {
        println!("acceptance: {} of {} criteria passed", outcomes.len(), outcomes.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
