//! Monte Carlo sweep and trace experiments.
//!
//! Runs are independent and execute on a worker pool; results are collected
//! by run index and reduced in index order, so output is independent of the
//! number of workers.

use std::fmt::Write as _;

use nalgebra::DVector;
use rayon::prelude::*;

use super::config::{Method, Scenario};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, mse, se, Aggregate};
use crate::simgen::{simulate_run, Realization, RngSpec};
use crate::smoother::{baseline_step, flis_init, BaselineKind, ExternalObservation, LagHistory};
use crate::transfer::{tflis_init, tflis_step, TransferOptions};

/// SE series of one run, indexed by [`Method::index`]; each series has
/// `horizon - lag` entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunScores {
    pub se: [Option<Vec<f64>>; 6],
}

impl RunScores {
    pub fn get(&self, method: Method) -> Option<&[f64]> {
        self.se[method.index()].as_deref()
    }
}

/// One row of a sweep: aggregated MSE per method at one external variance.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub r_e: f64,
    pub mse: [Option<Aggregate>; 6],
}

impl SweepRow {
    pub fn mean(&self, method: Method) -> Option<f64> {
        self.mse[method.index()].map(|a| a.mean)
    }
}

/// Per-step mean SE across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    /// `rows[k-1][method]` for `k = 1..=horizon-lag`.
    pub rows: Vec<[Option<f64>; 6]>,
}

impl TraceTable {
    pub fn series(&self, method: Method) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r[method.index()]).collect()
    }
}

/// Scores every requested method on one realization, aligning each estimate
/// with the truth it refers to.
pub fn score_run(scenario: &Scenario, run: &Realization, r_e: f64) -> Result<RunScores> {
    let mut scores = RunScores::default();
    let scored = scenario.horizon - scenario.lag;

    for (method, kind) in [
        (Method::IsolatedKf, BaselineKind::IsolatedKf),
        (Method::IsolatedFls, BaselineKind::IsolatedFls),
        (Method::ExactKf, BaselineKind::ExactKf),
        (Method::ExactFls, BaselineKind::ExactFls),
    ] {
        if !scenario.wants(method) {
            continue;
        }
        let lag = kind.lag(scenario.lag);
        let model = &scenario.model;
        let mut state = flis_init(model, scenario.prior.clone(), lag)?;
        let mut history = LagHistory::new(scenario.lag, model.n_state());
        let mut series = Vec::with_capacity(scored);
        for t in 0..scenario.horizon {
            let external = ExternalObservation { y: &run.y_external[t], variance: r_e };
            let (posterior, next) = baseline_step(
                kind,
                model,
                &state,
                &run.inputs[t],
                &run.y_target[t],
                kind.uses_external().then_some(external),
            )?;
            state = next;
            if method.is_smoothing() {
                history.push(posterior.mean);
                push_smoothed(&mut series, &history, run, t + 1, scenario.lag, scored)?;
            } else if t < scored {
                series.push(se(&run.states[t], &posterior.mean.rows(0, model.n_state()).into_owned())?);
            }
        }
        scores.se[method.index()] = Some(series);
    }

    let want_f = scenario.wants(Method::TransferFiltered);
    let want_s = scenario.wants(Method::TransferSmoothed);
    if want_f || want_s {
        let model = &scenario.model;
        let mut state = tflis_init(
            model,
            scenario.prior.clone(),
            scenario.sigma0.clone(),
            scenario.lag,
            TransferOptions::with_iterations(scenario.iterations),
        )?;
        let mut history = LagHistory::new(scenario.lag, model.n_state());
        let mut filtered = Vec::with_capacity(scored);
        let mut smoothed = Vec::with_capacity(scored);
        for t in 0..scenario.horizon {
            let (next, out) = tflis_step(model, &state, &run.inputs[t], &run.y_target[t], &run.y_external[t])?;
            state = next;
            if t < scored {
                let est = out.reported.mean.rows(0, model.n_state()).into_owned();
                filtered.push(se(&run.states[t], &est)?);
            }
            history.push(out.reported.mean);
            push_smoothed(&mut smoothed, &history, run, t + 1, scenario.lag, scored)?;
        }
        if want_f {
            scores.se[Method::TransferFiltered.index()] = Some(filtered);
        }
        if want_s {
            scores.se[Method::TransferSmoothed.index()] = Some(smoothed);
        }
    }
    Ok(scores)
}

fn push_smoothed(
    series: &mut Vec<f64>,
    history: &LagHistory,
    run: &Realization,
    now: usize,
    lag: usize,
    scored: usize,
) -> Result<()> {
    if now > lag {
        let k = now - lag;
        if k <= scored {
            let est: DVector<f64> = history.smoothed(k)?;
            series.push(se(&run.states[k - 1], &est)?);
        }
    }
    Ok(())
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::arg(format!("cannot start worker pool: {e}")))
}

/// Scores all runs at one external variance, ordered by run index.
pub fn run_batch(scenario: &Scenario, r_e: f64, jobs: Option<usize>) -> Result<Vec<RunScores>> {
    let workers = pool(jobs)?;
    workers.install(|| {
        (0..scenario.runs as u64)
            .into_par_iter()
            .map(|i| {
                let run = simulate_run(&scenario.model, r_e, RngSpec::new(scenario.master_seed, i), scenario.horizon)?;
                score_run(scenario, &run, r_e)
            })
            .collect()
    })
}

pub fn sweep(scenario: &Scenario, jobs: Option<usize>) -> Result<Vec<SweepRow>> {
    scenario
        .r_e_grid
        .iter()
        .map(|&r_e| {
            let runs = run_batch(scenario, r_e, jobs)?;
            let mut row = SweepRow { r_e, mse: [None; 6] };
            for method in Method::ALL.into_iter().filter(|m| scenario.wants(*m)) {
                let per_run = runs
                    .iter()
                    .map(|s| mse(s.get(method).unwrap_or_default(), scenario.lag, scenario.horizon))
                    .collect::<Result<Vec<_>>>()?;
                row.mse[method.index()] = Some(aggregate(&per_run)?);
            }
            Ok(row)
        })
        .collect()
}

pub fn trace(scenario: &Scenario, r_e: f64, jobs: Option<usize>) -> Result<TraceTable> {
    if !(r_e > 0.0) || !r_e.is_finite() {
        return Err(Error::arg(format!("r_E must be positive and finite, got {r_e}")));
    }
    let runs = run_batch(scenario, r_e, jobs)?;
    let scored = scenario.horizon - scenario.lag;
    let n = runs.len() as f64;
    let rows = (0..scored)
        .map(|k| {
            let mut row = [None; 6];
            for method in Method::ALL.into_iter().filter(|m| scenario.wants(*m)) {
                let total: f64 = runs.iter().map(|s| s.get(method).map_or(0.0, |v| v[k])).sum();
                row[method.index()] = Some(total / n);
            }
            row
        })
        .collect();
    Ok(TraceTable { rows })
}

/// Twelve significant digits.
pub fn format_number(x: f64) -> String {
    format!("{x:.11e}")
}

pub const SWEEP_HEADER: &str =
    "r_E,mse_iKF,se_iKF,mse_iFLS,se_iFLS,mse_KF,se_KF,mse_FLS,se_FLS,mse_TFLIS_F,se_TFLIS_F,mse_TFLIS_S,se_TFLIS_S";

pub const TRACE_HEADER: &str = "k,se_iKF,se_iFLS,se_KF,se_FLS,se_TFLIS_F,se_TFLIS_S";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format_number(row.r_e));
        for cell in &row.mse {
            match cell {
                Some(a) => {
                    let _ = write!(out, ",{},{}", format_number(a.mean), format_number(a.std_error));
                }
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn trace_csv(table: &TraceTable) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for (i, row) in table.rows.iter().enumerate() {
        let _ = write!(out, "{}", i + 1);
        for cell in row {
            out.push(',');
            if let Some(v) = cell {
                out.push_str(&format_number(*v));
            }
        }
        out.push('\n');
    }
    out
}

pub fn run_sweep(scenario: &Scenario, jobs: Option<usize>) -> Result<String> {
    Ok(sweep_csv(&sweep(scenario, jobs)?))
}

pub fn run_trace(scenario: &Scenario, r_e: f64, jobs: Option<usize>) -> Result<String> {
    Ok(trace_csv(&trace(scenario, r_e, jobs)?))
}
