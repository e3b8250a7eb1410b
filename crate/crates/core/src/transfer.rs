//! Fixed-lag interval smoother with knowledge transfer from an external
//! observation stream whose relation to the target state is not modeled.
//!
//! Each external observation `y_E;q` is treated as a noisy reading of
//! `C x_q` with covariance `R Ξ`, where the diagonal scale `Ξ` carries an
//! inverse-Wishart belief learned from the data. The coupled Gaussian and
//! inverse-Wishart factors are found by a fixed number of variational Bayes
//! passes over the window, alternating two chains:
//!
//! * the Σ chain accumulates normalized squared residuals of the external
//!   data against the previous pass's window posterior;
//! * the X chain re-absorbs the external data into the post-target belief
//!   with noise `R Ξ̄`, where `Ξ̄ = Σ / (ν + w)`.
//!
//! Only the statistics after the oldest window element are propagated
//! (committed); the full-window posterior is reported.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matmodel::{build_output_selector, GaussianStats, StateSpaceModel, WishartStats};
use crate::sdu::update_in_place;
use crate::smoother::{check_observation, predict_window, Window};

/// Lower bound on `R Ξ̄` entries, relative to the matching `R` entry.
pub const NOISE_FLOOR: f64 = 1e-12;

/// Variational Bayes controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferOptions {
    /// Number of passes `N`; zero disables transfer.
    pub iterations: usize,
    /// Stop early once the relative change of the reported mean drops below
    /// this threshold. Off by default.
    pub early_stop: Option<f64>,
    /// Record every Σ chain in the step output.
    pub trace_chains: bool,
}

impl Default for TransferOptions {
    fn default() -> Self {
        Self { iterations: 10, early_stop: None, trace_chains: false }
    }
}

impl TransferOptions {
    pub fn with_iterations(iterations: usize) -> Self {
        Self { iterations, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TflisState {
    pub window: Window,
    /// Predicted window belief entering the target data step.
    pub belief_pred: GaussianStats,
    /// Committed scale statistics at the start of the window.
    pub committed: WishartStats,
    /// External observations of the window preceding the newest step,
    /// oldest first.
    pub ext_window: VecDeque<DVector<f64>>,
    pub options: TransferOptions,
}

impl TflisState {
    pub fn k(&self) -> usize {
        self.window.k
    }

    pub fn lag(&self) -> usize {
        self.window.lag
    }

    pub fn w(&self) -> usize {
        self.window.size()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TflisStepOutput {
    /// Window posterior given all target and external data up to `k`.
    pub reported: GaussianStats,
    /// Belief after the target data step, before any transfer.
    pub pre_transfer: GaussianStats,
    /// Predicted window belief for `k + 1`.
    pub predicted: GaussianStats,
    pub committed_sigma_next: WishartStats,
    /// Final `Ξ̄` diagonal.
    pub xi_bar: DVector<f64>,
    /// `ν + w` used to form `Ξ̄`.
    pub divisor: f64,
    pub iterations_run: usize,
    /// Σ after each window element, one vector per pass (empty unless traced).
    pub sigma_chains: Vec<Vec<DVector<f64>>>,
}

pub fn tflis_init(
    model: &StateSpaceModel,
    prior: GaussianStats,
    sigma0: WishartStats,
    lag: usize,
    options: TransferOptions,
) -> Result<TflisState> {
    if prior.dim() != model.n_state() {
        return Err(Error::dim("prior", model.n_state(), prior.dim()));
    }
    if sigma0.sigma.len() != model.n_output() {
        return Err(Error::dim("sigma0", model.n_output(), sigma0.sigma.len()));
    }
    if let Some(t) = options.early_stop {
        if !(t >= 0.0) {
            return Err(Error::arg("early-stop threshold must be nonnegative"));
        }
    }
    Ok(TflisState {
        window: Window::new(lag),
        belief_pred: prior,
        committed: sigma0,
        ext_window: VecDeque::with_capacity(lag + 1),
        options,
    })
}

/// One residual increment of the Σ chain:
/// `Σ + R⁻¹ ∘ [diag(y_E − Cq X̂)² + Cq P Cq']`, diagonal only.
pub fn sigma_accumulate(
    sigma_prev: &DVector<f64>,
    y_e: &DVector<f64>,
    cq: &DMatrix<f64>,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    r_diag: &DVector<f64>,
) -> Result<DVector<f64>> {
    let ny = sigma_prev.len();
    if y_e.len() != ny || r_diag.len() != ny || cq.nrows() != ny {
        return Err(Error::dim(
            "sigma increment outputs",
            ny,
            format!("y_E {}, R {}, Cq {}", y_e.len(), r_diag.len(), cq.nrows()),
        ));
    }
    if cq.ncols() != mean.len() || cov.shape() != (mean.len(), mean.len()) {
        return Err(Error::dim("sigma increment state", mean.len(), cq.ncols()));
    }
    let residual = y_e - cq * mean;
    let projected = cq * cov;
    let mut out = sigma_prev.clone();
    for i in 0..ny {
        let spread = projected.row(i).dot(&cq.row(i));
        out[i] += (residual[i] * residual[i] + spread) / r_diag[i];
    }
    Ok(out)
}

/// Posterior-mean scale `Σ / (ν + w)`.
pub fn xi_mean(sigma: &DVector<f64>, nu_base: f64, w: usize) -> Result<DVector<f64>> {
    let divisor = nu_base + w as f64;
    if !(divisor > 0.0) {
        return Err(Error::arg(format!("scale divisor nu + w = {divisor} must be positive")));
    }
    Ok(sigma / divisor)
}

/// One transfer-smoother step: target data step, variational passes over the
/// window, commit of the oldest element's statistics, and time step.
pub fn tflis_step(
    model: &StateSpaceModel,
    state: &TflisState,
    u: &DVector<f64>,
    y_t: &DVector<f64>,
    y_e: &DVector<f64>,
) -> Result<(TflisState, TflisStepOutput)> {
    check_observation(model, y_t, "target observation")?;
    check_observation(model, y_e, "external observation")?;
    let window = state.window;
    let k = window.k;
    let lag = window.lag;
    let w = window.size();
    let nx = model.n_state();
    if state.belief_pred.dim() != w * nx {
        return Err(Error::dim("predicted window belief", w * nx, state.belief_pred.dim()));
    }
    if state.ext_window.len() + 1 != w {
        return Err(Error::dim("external window", w - 1, state.ext_window.len()));
    }

    let r = model.r_diag();
    let mut externals = state.ext_window.clone();
    externals.push_back(y_e.clone());

    // Selector for element i (oldest first) of the window: q = k-w+1+i sits
    // at block position k-q+1 = w-i.
    let selectors: Vec<DMatrix<f64>> =
        (0..w).map(|i| build_output_selector(w, w - i, model.c())).collect::<Result<_>>()?;

    let newest = &selectors[w - 1];
    let mut target_mean = state.belief_pred.mean.clone();
    let mut target_cov = state.belief_pred.cov.clone();
    update_in_place(&mut target_mean, &mut target_cov, newest, r, y_t)?;
    let pre_transfer = GaussianStats::from_parts(target_mean, target_cov);

    let nu_base = state.committed.nu;
    let divisor = nu_base + w as f64;
    let mut previous = pre_transfer.clone();
    let mut xi_bar = DVector::zeros(model.n_output());
    let mut first_x: Option<GaussianStats> = None;
    let mut first_sigma: Option<DVector<f64>> = None;
    let mut sigma_chains = Vec::new();
    let mut iterations_run = 0;

    for _ in 0..state.options.iterations {
        let mut sigma = state.committed.sigma.clone();
        let mut chain_first = None;
        let mut trace = Vec::new();
        for (i, (cq, y)) in selectors.iter().zip(externals.iter()).enumerate() {
            sigma = sigma_accumulate(&sigma, y, cq, &previous.mean, &previous.cov, r)?;
            if i == 0 {
                chain_first = Some(sigma.clone());
            }
            if state.options.trace_chains {
                trace.push(sigma.clone());
            }
        }
        xi_bar = xi_mean(&sigma, nu_base, w)?;
        let gamma = DVector::from_iterator(
            r.len(),
            r.iter().zip(xi_bar.iter()).map(|(ri, xi)| (ri * xi).max(NOISE_FLOOR * ri)),
        );

        let mut mean = pre_transfer.mean.clone();
        let mut cov = pre_transfer.cov.clone();
        let mut chain_first_x = None;
        for (i, (cq, y)) in selectors.iter().zip(externals.iter()).enumerate() {
            update_in_place(&mut mean, &mut cov, cq, &gamma, y)?;
            if i == 0 {
                chain_first_x = Some(GaussianStats::from_parts(mean.clone(), cov.clone()));
            }
        }
        let current = GaussianStats::from_parts(mean, cov);

        iterations_run += 1;
        first_x = chain_first_x;
        first_sigma = chain_first;
        if state.options.trace_chains {
            sigma_chains.push(trace);
        }
        let converged = state.options.early_stop.is_some_and(|threshold| {
            let scale = current.mean.norm().max(f64::MIN_POSITIVE);
            (&current.mean - &previous.mean).norm() / scale < threshold
        });
        previous = current;
        if converged {
            break;
        }
    }
    let reported = previous;

    // Transfer is committed only once the window is full; before that the
    // missing oldest factors are non-informative.
    let (committed_belief, committed_sigma) = if k > lag {
        let belief = first_x.unwrap_or_else(|| pre_transfer.clone());
        let sigma = first_sigma.unwrap_or_else(|| state.committed.sigma.clone());
        (belief, WishartStats { sigma, nu: state.committed.nu + 1.0 })
    } else {
        (pre_transfer.clone(), state.committed.clone())
    };

    let predicted = predict_window(model, window, &committed_belief, u)?;

    if k > lag {
        externals.pop_front();
    }

    let next = TflisState {
        window: Window { k: k + 1, lag },
        belief_pred: predicted.clone(),
        committed: committed_sigma.clone(),
        ext_window: externals,
        options: state.options,
    };
    let output = TflisStepOutput {
        reported,
        pre_transfer,
        predicted,
        committed_sigma_next: committed_sigma,
        xi_bar,
        divisor,
        iterations_run,
        sigma_chains,
    };
    Ok((next, output))
}
