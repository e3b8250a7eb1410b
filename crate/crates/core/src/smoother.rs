//! Kalman fixed-lag interval smoother (FLIS) without transfer, plus the
//! baseline estimators it is compared against.
//!
//! The smoother keeps the joint belief over the last `w = min(k, L+1)`
//! states. A data step conditions on the newest target observation; a time
//! step pushes a predicted state on the front of the window and, once the
//! window is full, marginalizes the oldest one.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::matmodel::{symmetrize, AugmentedMatrices, GaussianStats, StateSpaceModel};
use crate::sdu::sequential_data_update;

/// Window bookkeeping shared by the plain and the transfer smoother.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    /// Current time index, starting at 1.
    pub k: usize,
    /// Fixed lag `L`.
    pub lag: usize,
}

impl Window {
    pub fn new(lag: usize) -> Self {
        Self { k: 1, lag }
    }

    /// Number of states in the window, `min(k, L+1)`.
    pub fn size(&self) -> usize {
        self.k.min(self.lag + 1)
    }

    /// Number of blocks carried over by the next time step, `min(k, L)`.
    pub fn carried(&self) -> usize {
        self.k.min(self.lag)
    }

    fn advance(self) -> Self {
        Self { k: self.k + 1, lag: self.lag }
    }
}

/// Plain FLIS state: the belief over the current window.
#[derive(Debug, Clone, PartialEq)]
pub struct FlisState {
    pub window: Window,
    pub belief: GaussianStats,
}

impl FlisState {
    pub fn k(&self) -> usize {
        self.window.k
    }

    pub fn lag(&self) -> usize {
        self.window.lag
    }

    pub fn w(&self) -> usize {
        self.window.size()
    }

    pub fn l(&self) -> usize {
        self.window.carried()
    }

    /// Filtered estimate: the newest block of the window mean.
    pub fn filtered(&self) -> DVector<f64> {
        let nx = self.belief.dim() / self.w();
        self.belief.mean_block(1, nx)
    }
}

/// Starts a smoother at `k = 1` with a belief over `x_1` alone.
pub fn flis_init(model: &StateSpaceModel, prior: GaussianStats, lag: usize) -> Result<FlisState> {
    if prior.dim() != model.n_state() {
        return Err(Error::dim("prior", model.n_state(), prior.dim()));
    }
    Ok(FlisState { window: Window::new(lag), belief: prior })
}

/// Conditions the window on the target observation of the newest state.
pub fn flis_data_step(model: &StateSpaceModel, state: &FlisState, y: &DVector<f64>) -> Result<FlisState> {
    check_observation(model, y, "target observation")?;
    let belief = observe_newest(model, state, y, model.r_diag())?;
    Ok(FlisState { window: state.window, belief })
}

/// Predicts the next window. Grows the window while `k <= L`, otherwise
/// drops the oldest block.
pub fn flis_time_step(model: &StateSpaceModel, state: &FlisState, u: &DVector<f64>) -> Result<FlisState> {
    let belief = predict_window(model, state.window, &state.belief, u)?;
    Ok(FlisState { window: state.window.advance(), belief })
}

pub(crate) fn check_observation(model: &StateSpaceModel, y: &DVector<f64>, what: &'static str) -> Result<()> {
    if y.len() != model.n_output() {
        return Err(Error::dim(what, model.n_output(), y.len()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg(format!("{what} must be finite")));
    }
    Ok(())
}

fn observe_newest(
    model: &StateSpaceModel,
    state: &FlisState,
    y: &DVector<f64>,
    noise: &DVector<f64>,
) -> Result<GaussianStats> {
    let w = state.w();
    if state.belief.dim() != w * model.n_state() {
        return Err(Error::dim("window belief", w * model.n_state(), state.belief.dim()));
    }
    let selector = crate::matmodel::build_output_selector(w, 1, model.c())?;
    sequential_data_update(&state.belief, &selector, noise, y)
}

/// `X <- A X + B u`, `P <- A P A' + Q` with the windowed matrices of `window`.
pub(crate) fn predict_window(
    model: &StateSpaceModel,
    window: Window,
    belief: &GaussianStats,
    u: &DVector<f64>,
) -> Result<GaussianStats> {
    if u.len() != model.n_input() {
        return Err(Error::dim("input", model.n_input(), u.len()));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("input must be finite"));
    }
    let w = window.size();
    if belief.dim() != w * model.n_state() {
        return Err(Error::dim("window belief", w * model.n_state(), belief.dim()));
    }
    let aug = AugmentedMatrices::new(model, w, window.carried())?;
    let mean = &aug.transition * &belief.mean + &aug.input * u;
    let mut cov = &aug.transition * &belief.cov * aug.transition.transpose() + &aug.noise;
    symmetrize(&mut cov);
    Ok(GaussianStats::from_parts(mean, cov))
}

/// Estimators the transfer smoother is benchmarked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    /// Kalman filter on target data only.
    IsolatedKf,
    /// Fixed-lag smoother on target data only.
    IsolatedFls,
    /// Kalman filter that also knows the external observation model exactly.
    ExactKf,
    /// Fixed-lag smoother that also knows the external observation model.
    ExactFls,
}

impl BaselineKind {
    /// Lag the estimator runs with; filter kinds ignore the configured lag.
    pub fn lag(self, configured: usize) -> usize {
        match self {
            BaselineKind::IsolatedKf | BaselineKind::ExactKf => 0,
            BaselineKind::IsolatedFls | BaselineKind::ExactFls => configured,
        }
    }

    pub fn uses_external(self) -> bool {
        matches!(self, BaselineKind::ExactKf | BaselineKind::ExactFls)
    }
}

/// External observation with its known noise level.
#[derive(Debug, Clone, Copy)]
pub struct ExternalObservation<'a> {
    pub y: &'a DVector<f64>,
    pub variance: f64,
}

/// One full baseline step. Returns the posterior window belief at time `k`
/// together with the predicted state for `k + 1`.
pub fn baseline_step(
    kind: BaselineKind,
    model: &StateSpaceModel,
    state: &FlisState,
    u: &DVector<f64>,
    y_t: &DVector<f64>,
    external: Option<ExternalObservation<'_>>,
) -> Result<(GaussianStats, FlisState)> {
    let mut posterior = flis_data_step(model, state, y_t)?;
    if kind.uses_external() {
        let ext = external
            .ok_or_else(|| Error::arg("exact-model baselines need the external observation and its variance"))?;
        check_observation(model, ext.y, "external observation")?;
        if !(ext.variance > 0.0) {
            return Err(Error::arg("external observation variance must be positive"));
        }
        let noise = DVector::from_element(model.n_output(), ext.variance);
        posterior.belief = observe_newest(model, &posterior, ext.y, &noise)?;
    }
    let next = flis_time_step(model, &posterior, u)?;
    Ok((posterior.belief, next))
}

/// First block of a window mean.
pub fn extract_filtered(mean: &DVector<f64>, n_state: usize) -> DVector<f64> {
    mean.rows(0, n_state).into_owned()
}

/// Block `L+1` of a full window mean: the estimate of the state `L` steps back.
pub fn extract_lagged(mean: &DVector<f64>, n_state: usize, lag: usize) -> Result<DVector<f64>> {
    let need = (lag + 1) * n_state;
    if mean.len() < need {
        return Err(Error::dim("window mean for lagged extraction", need, mean.len()));
    }
    Ok(mean.rows(lag * n_state, n_state).into_owned())
}

/// Ring of the last `L+1` window means, for smoothed lookups.
///
/// The smoothed estimate of `x_k` is the oldest block of the mean produced
/// at time `k + L`.
#[derive(Debug, Clone)]
pub struct LagHistory {
    lag: usize,
    n_state: usize,
    latest: usize,
    means: VecDeque<DVector<f64>>,
}

impl LagHistory {
    pub fn new(lag: usize, n_state: usize) -> Self {
        Self { lag, n_state, latest: 0, means: VecDeque::with_capacity(lag + 1) }
    }

    /// Records the reported window mean of the next time step.
    pub fn push(&mut self, mean: DVector<f64>) {
        if self.means.len() == self.lag + 1 {
            self.means.pop_front();
        }
        self.means.push_back(mean);
        self.latest += 1;
    }

    pub fn latest(&self) -> usize {
        self.latest
    }

    /// Smoothed estimate of `x_k`.
    pub fn smoothed(&self, k: usize) -> Result<DVector<f64>> {
        let source = k + self.lag;
        if k == 0 || source > self.latest {
            return Err(Error::NotYetAvailable { requested: k, latest: self.latest, lag: self.lag });
        }
        let age = self.latest - source;
        if age >= self.means.len() {
            return Err(Error::arg(format!("smoothed estimate of step {k} was evicted from the history")));
        }
        let mean = &self.means[self.means.len() - 1 - age];
        extract_lagged(mean, self.n_state, self.lag)
    }

    /// Filtered estimate of `x_k`, while it is still held.
    pub fn filtered(&self, k: usize) -> Result<DVector<f64>> {
        if k == 0 || k > self.latest || self.latest - k >= self.means.len() {
            return Err(Error::arg(format!("filtered estimate of step {k} not held")));
        }
        Ok(extract_filtered(&self.means[self.means.len() - 1 - (self.latest - k)], self.n_state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn scalar_model(a: f64, q: f64, r: f64) -> StateSpaceModel {
        StateSpaceModel::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, r),
        )
        .unwrap()
    }

    fn benchmark_prior() -> GaussianStats {
        GaussianStats::isotropic(DVector::zeros(2), 1e7).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn init_holds_single_block() {
        let model = StateSpaceModel::position_velocity();
        let s = flis_init(&model, benchmark_prior(), 2).unwrap();
        assert_eq!((s.k(), s.w(), s.belief.dim()), (1, 1, 2));
        assert!(flis_init(&model, GaussianStats::isotropic(DVector::zeros(3), 1.0).unwrap(), 2).is_err());
    }

    #[test]
    fn window_grows_then_saturates() {
        let model = StateSpaceModel::position_velocity();
        let mut s = flis_init(&model, benchmark_prior(), 2).unwrap();
        let mut dims = vec![s.belief.dim()];
        for _ in 0..5 {
            s = flis_data_step(&model, &s, &v(&[0.1, 0.0])).unwrap();
            s = flis_time_step(&model, &s, &v(&[1.0])).unwrap();
            dims.push(s.belief.dim());
            assert_eq!(s.w(), s.k().min(3));
            assert_eq!(s.l(), s.k().min(2));
        }
        assert_eq!(dims, vec![2, 4, 6, 6, 6, 6]);
    }

    #[test]
    fn zero_lag_window_stays_single() {
        let model = StateSpaceModel::position_velocity();
        let mut s = flis_init(&model, benchmark_prior(), 0).unwrap();
        for _ in 0..4 {
            s = flis_data_step(&model, &s, &v(&[0.0, 0.0])).unwrap();
            s = flis_time_step(&model, &s, &v(&[-1.0])).unwrap();
            assert_eq!(s.belief.dim(), 2);
        }
    }

    #[test]
    fn scalar_data_step_is_kalman_correction() {
        let model = scalar_model(1.0, 0.0, 2.0);
        let s = flis_init(&model, GaussianStats::new(v(&[1.0]), DMatrix::from_element(1, 1, 3.0)).unwrap(), 0).unwrap();
        let post = flis_data_step(&model, &s, &v(&[4.0])).unwrap();
        let gain = 3.0 / 5.0;
        assert!((post.belief.mean[0] - (1.0 + gain * 3.0)).abs() < 1e-15);
        assert!((post.belief.cov[(0, 0)] - (1.0 - gain) * 3.0).abs() < 1e-15);
    }

    #[test]
    fn diffuse_prior_follows_observation() {
        let model = StateSpaceModel::position_velocity();
        let s = flis_init(&model, benchmark_prior(), 2).unwrap();
        let y = v(&[0.03, -0.02]);
        let post = flis_data_step(&model, &s, &y).unwrap();
        let gain = 1e7 / (1e7 + 1e-3);
        for i in 0..2 {
            assert!((post.belief.mean[i] - gain * y[i]).abs() < 1e-12);
            assert!((gain - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn non_finite_observation_rejected() {
        let model = StateSpaceModel::position_velocity();
        let s = flis_init(&model, benchmark_prior(), 2).unwrap();
        assert!(flis_data_step(&model, &s, &v(&[f64::NAN, 0.0])).is_err());
        assert!(flis_data_step(&model, &s, &v(&[0.0])).is_err());
    }

    #[test]
    fn scalar_prediction() {
        let model = scalar_model(1.0, 0.25, 1.0);
        let s = flis_init(&model, GaussianStats::new(v(&[2.0]), DMatrix::from_element(1, 1, 0.5)).unwrap(), 0).unwrap();
        let next = flis_time_step(&model, &s, &v(&[1.0])).unwrap();
        assert_eq!(next.belief.mean[0], 3.0);
        assert_eq!(next.belief.cov[(0, 0)], 0.75);
        assert_eq!(next.k(), 2);
    }

    #[test]
    fn huge_external_variance_matches_isolated() {
        let model = StateSpaceModel::position_velocity();
        let mut iso = flis_init(&model, benchmark_prior(), 0).unwrap();
        let mut exact = iso.clone();
        let ys = [[0.01, 0.02], [0.5, 0.4], [1.2, 0.9], [2.0, 1.1]];
        for (k, y) in ys.iter().enumerate() {
            let y = v(y);
            let ye = v(&[5.0 * k as f64, -3.0]);
            let u = v(&[1.0]);
            let (p_iso, n_iso) = baseline_step(BaselineKind::IsolatedKf, &model, &iso, &u, &y, None).unwrap();
            let (p_ex, n_ex) = baseline_step(
                BaselineKind::ExactKf,
                &model,
                &exact,
                &u,
                &y,
                Some(ExternalObservation { y: &ye, variance: 1e30 }),
            )
            .unwrap();
            assert!((&p_iso.mean - &p_ex.mean).norm() <= 1e-8);
            iso = n_iso;
            exact = n_ex;
        }
    }

    #[test]
    fn equal_precision_external_averages_observations() {
        let model = scalar_model(1.0, 0.1, 0.5);
        let prior = GaussianStats::new(v(&[0.0]), DMatrix::from_element(1, 1, 2.0)).unwrap();
        let s = flis_init(&model, prior, 0).unwrap();
        let (post, _) = baseline_step(
            BaselineKind::ExactKf,
            &model,
            &s,
            &v(&[0.0]),
            &v(&[1.0]),
            Some(ExternalObservation { y: &v(&[3.0]), variance: 0.5 }),
        )
        .unwrap();
        // Stacked observation z = [1, 3], H = [1; 1], noise 0.5 I: information
        // 1/2 + 2 + 2 = 4.5, mean (2 + 6) / 4.5.
        assert!((post.cov[(0, 0)] - 1.0 / 4.5).abs() < 1e-14);
        assert!((post.mean[0] - 8.0 / 4.5).abs() < 1e-14);
    }

    #[test]
    fn exact_kinds_need_external_data() {
        let model = StateSpaceModel::position_velocity();
        let s = flis_init(&model, benchmark_prior(), 0).unwrap();
        let err = baseline_step(BaselineKind::ExactKf, &model, &s, &v(&[1.0]), &v(&[0.0, 0.0]), None);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn lagged_extraction_picks_last_block() {
        let mean = v(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(extract_filtered(&mean, 2).as_slice(), &[1.0, 2.0]);
        assert_eq!(extract_lagged(&mean, 2, 2).unwrap().as_slice(), &[5.0, 6.0]);
        let single = v(&[7.0, 8.0]);
        assert_eq!(extract_filtered(&single, 2), extract_lagged(&single, 2, 0).unwrap());
    }

    #[test]
    fn history_reports_not_yet_available() {
        let mut h = LagHistory::new(2, 1);
        h.push(v(&[1.0]));
        h.push(v(&[2.0, 1.0]));
        assert!(matches!(h.smoothed(1), Err(Error::NotYetAvailable { requested: 1, latest: 2, lag: 2 })));
        h.push(v(&[3.0, 2.0, 1.5]));
        assert_eq!(h.smoothed(1).unwrap()[0], 1.5);
        assert_eq!(h.filtered(3).unwrap()[0], 3.0);
        h.push(v(&[4.0, 3.0, 2.5]));
        assert_eq!(h.smoothed(2).unwrap()[0], 2.5);
        assert_eq!(h.smoothed(1).unwrap()[0], 1.5);
        h.push(v(&[5.0, 4.0, 3.5]));
        h.push(v(&[6.0, 5.0, 4.5]));
        assert!(matches!(h.smoothed(1), Err(Error::InvalidArgument(_))));
    }
}
