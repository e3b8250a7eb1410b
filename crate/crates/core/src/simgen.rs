//! Ground-truth simulation and deterministic randomness.
//!
//! Stream layout, fixed so that other implementations can replay it:
//!
//! * Child seed of run `i` under master seed `s`:
//!   `child = splitmix64(s ^ splitmix64(i))`, where `splitmix64` is the
//!   SplitMix64 output finalizer applied to `x + 0x9E3779B97F4A7C15`.
//! * The per-run uniform generator is ChaCha8 keyed with the 32 bytes of four
//!   successive SplitMix64 outputs seeded at `child` (little-endian words).
//! * Uniforms on `[0, 1)`: `(next_u64 >> 11) * 2^-53`.
//! * Standard normals: Box-Muller cosine branch,
//!   `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`, one normal per two uniforms.
//! * Draw order per run: `x_1` entries (uniform on `[-0.05, 0.05]`), one PRBS
//!   seed per input channel (`1 + floor(15 u)`), then for each `k`: target
//!   noise, external noise, and (except at the horizon) process noise.
//!
//! The standardized noise draws do not depend on `r_E`, so runs with the same
//! index share their truth and target data across an `r_E` sweep.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::matmodel::StateSpaceModel;

/// Half-width of the uniform box the initial state is drawn from.
pub const INITIAL_STATE_HALF_WIDTH: f64 = 0.05;

const COVARIANCE_JITTER: f64 = 1e-18;

/// Identifies one reproducible run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSpec {
    pub master_seed: u64,
    pub run_index: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64, run_index: u64) -> Self {
        Self { master_seed, run_index }
    }

    pub fn child_seed(&self) -> u64 {
        splitmix64(self.master_seed ^ splitmix64(self.run_index))
    }

    pub fn rng(&self) -> SimRng {
        SimRng::from_seed(self.child_seed())
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform and Gaussian draws on top of ChaCha8.
#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn from_seed(seed: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = seed;
        for chunk in key.chunks_exact_mut(8) {
            let word = splitmix64(state);
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        Self { inner: ChaCha8Rng::from_seed(key) }
    }

    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal_vector(&mut self, n: usize) -> DVector<f64> {
        DVector::from_iterator(n, (0..n).map(|_| self.standard_normal()))
    }
}

/// Maximal-length 4-bit Fibonacci LFSR, feedback polynomial `x^4 + x^3 + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrbsGenerator {
    register: u8,
    position: u64,
}

impl PrbsGenerator {
    pub const PERIOD: usize = 15;

    pub fn new(seed: u8) -> Result<Self> {
        if seed == 0 || seed > 0x0F {
            return Err(Error::arg(format!("PRBS seed must be a nonzero 4-bit value, got {seed}")));
        }
        Ok(Self { register: seed, position: 0 })
    }

    pub fn register(&self) -> u8 {
        self.register
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    /// Emits `+1` for output bit 1 and `-1` for bit 0, then shifts.
    pub fn next_value(&mut self) -> f64 {
        let out = self.register & 1;
        // taps 4 and 3 are bits 0 and 1 of the right-shifting register
        let feedback = (self.register ^ (self.register >> 1)) & 1;
        self.register = (self.register >> 1) | (feedback << 3);
        self.position += 1;
        if out == 1 {
            1.0
        } else {
            -1.0
        }
    }
}

/// One simulated experiment: truth plus both observation streams.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub y_target: Vec<DVector<f64>>,
    pub y_external: Vec<DVector<f64>>,
}

impl Realization {
    pub fn horizon(&self) -> usize {
        self.states.len()
    }
}

/// `G` with `G G' = cov` for sampling; Cholesky, with jitter for singular
/// but nonzero matrices.
pub fn noise_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let n = cov.nrows();
    if cov.iter().all(|v| *v == 0.0) {
        return DMatrix::zeros(n, n);
    }
    if let Some(ch) = cov.clone().cholesky() {
        return ch.l();
    }
    let jittered = cov + DMatrix::identity(n, n) * COVARIANCE_JITTER;
    if let Some(ch) = jittered.cholesky() {
        return ch.l();
    }
    let eig = SymmetricEigen::new(cov.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// Simulates `horizon` steps of the model with PRBS input and both target and
/// external observations of the same truth.
pub fn simulate_run(model: &StateSpaceModel, r_e: f64, rng: RngSpec, horizon: usize) -> Result<Realization> {
    if !(r_e > 0.0) || !r_e.is_finite() {
        return Err(Error::arg(format!("external variance must be positive and finite, got {r_e}")));
    }
    if horizon == 0 {
        return Err(Error::arg("horizon must be at least 1"));
    }
    let (nx, nu, ny) = (model.n_state(), model.n_input(), model.n_output());
    let q_factor = noise_factor(model.q());
    let r_sd = model.r_diag().map(f64::sqrt);
    let e_sd = r_e.sqrt();

    let mut draw = rng.rng();
    let mut x = DVector::from_iterator(
        nx,
        (0..nx).map(|_| draw.uniform_range(-INITIAL_STATE_HALF_WIDTH, INITIAL_STATE_HALF_WIDTH)),
    );
    let mut prbs = (0..nu)
        .map(|_| {
            let seed = 1 + (draw.uniform() * PrbsGenerator::PERIOD as f64) as u8;
            PrbsGenerator::new(seed.min(PrbsGenerator::PERIOD as u8))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Realization {
        states: Vec::with_capacity(horizon),
        inputs: Vec::with_capacity(horizon),
        y_target: Vec::with_capacity(horizon),
        y_external: Vec::with_capacity(horizon),
    };
    for k in 1..=horizon {
        let u = DVector::from_iterator(nu, prbs.iter_mut().map(PrbsGenerator::next_value));
        let clean = model.c() * &x;
        let v_t = draw.normal_vector(ny).component_mul(&r_sd);
        let v_e = draw.normal_vector(ny) * e_sd;
        out.y_target.push(&clean + v_t);
        out.y_external.push(&clean + v_e);
        let next =
            if k < horizon { Some(model.a() * &x + model.b() * &u + &q_factor * draw.normal_vector(nx)) } else { None };
        out.states.push(x.clone());
        out.inputs.push(u);
        if let Some(n) = next {
            x = n;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn prbs_visits_every_state_once() {
        let mut g = PrbsGenerator::new(0b1111).unwrap();
        let mut seen = HashSet::new();
        for _ in 0..PrbsGenerator::PERIOD {
            assert!(seen.insert(g.register()));
            g.next_value();
        }
        assert_eq!(seen.len(), 15);
        assert!(!seen.contains(&0));
        assert_eq!(g.register(), 0b1111);
    }

    #[test]
    fn prbs_period_and_balance_for_every_seed() {
        for seed in 1..=15u8 {
            let mut g = PrbsGenerator::new(seed).unwrap();
            let first: Vec<f64> = (0..15).map(|_| g.next_value()).collect();
            let second: Vec<f64> = (0..15).map(|_| g.next_value()).collect();
            assert_eq!(first, second);
            let mut g = PrbsGenerator::new(seed).unwrap();
            let period = (1..=15).find(|_| {
                g.next_value();
                g.register() == seed
            });
            assert_eq!(period, Some(15));
            let plus = first.iter().filter(|v| **v > 0.0).count();
            assert_eq!(plus, 8, "seed {seed}");
        }
    }

    #[test]
    fn prbs_rejects_zero_seed() {
        assert!(PrbsGenerator::new(0).is_err());
        assert!(PrbsGenerator::new(16).is_err());
    }

    #[test]
    fn child_seeds_are_distinct() {
        let seeds: HashSet<u64> = (0..10_000).map(|i| RngSpec::new(42, i).child_seed()).collect();
        assert_eq!(seeds.len(), 10_000);
    }

    #[test]
    fn simulation_is_replayable() {
        let model = StateSpaceModel::position_velocity();
        let a = simulate_run(&model, 1e-3, RngSpec::new(7, 3), 50).unwrap();
        let b = simulate_run(&model, 1e-3, RngSpec::new(7, 3), 50).unwrap();
        let c = simulate_run(&model, 1e-3, RngSpec::new(7, 4), 50).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.horizon(), 50);
        assert!(a.states[0].iter().all(|x| x.abs() <= 0.05));
        assert!(a.inputs.iter().all(|u| u[0] == 1.0 || u[0] == -1.0));
    }

    #[test]
    fn truth_is_shared_across_external_variances() {
        let model = StateSpaceModel::position_velocity();
        let a = simulate_run(&model, 1e-6, RngSpec::new(1, 0), 20).unwrap();
        let b = simulate_run(&model, 1.0, RngSpec::new(1, 0), 20).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.y_target, b.y_target);
    }

    #[test]
    fn noise_free_limit_is_deterministic() {
        let tiny = DMatrix::identity(2, 2) * 1e-30;
        let model = StateSpaceModel::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.5, 1.0]),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            tiny,
        )
        .unwrap();
        let run = simulate_run(&model, 1e-30, RngSpec::new(9, 0), 30).unwrap();
        for k in 0..30 {
            assert!((&run.y_target[k] - &run.states[k]).norm() < 1e-13);
            assert!((&run.y_external[k] - &run.states[k]).norm() < 1e-13);
            if k + 1 < 30 {
                let expected = model.a() * &run.states[k] + model.b() * &run.inputs[k];
                assert_eq!(run.states[k + 1], expected);
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let model = StateSpaceModel::position_velocity();
        assert!(simulate_run(&model, 0.0, RngSpec::new(0, 0), 10).is_err());
        assert!(simulate_run(&model, -1.0, RngSpec::new(0, 0), 10).is_err());
        assert!(simulate_run(&model, 1.0, RngSpec::new(0, 0), 0).is_err());
    }

    fn sample_cov(samples: &[DVector<f64>]) -> DMatrix<f64> {
        let n = samples[0].len();
        let count = samples.len() as f64;
        let mean = samples.iter().fold(DVector::zeros(n), |acc, s| acc + s) / count;
        samples.iter().fold(DMatrix::zeros(n, n), |acc, s| acc + (s - &mean) * (s - &mean).transpose()) / (count - 1.0)
    }

    #[test]
    fn empirical_noise_moments() {
        let model = StateSpaceModel::position_velocity();
        let q = model.q();
        let factor = noise_factor(q);
        let mut rng = SimRng::from_seed(2024);
        let draws: Vec<_> = (0..100_000).map(|_| &factor * rng.normal_vector(2)).collect();
        let cov = sample_cov(&draws);
        for (est, exact) in cov.iter().zip(q.iter()) {
            assert!((est - exact).abs() <= 0.05 * exact.abs(), "{cov} vs {q}");
        }

        let r_sd = model.r_diag().map(f64::sqrt);
        let draws: Vec<_> = (0..100_000).map(|_| rng.normal_vector(2).component_mul(&r_sd)).collect();
        let cov = sample_cov(&draws);
        for i in 0..2 {
            assert!((cov[(i, i)] - 1e-3).abs() <= 0.05e-3);
        }
        assert!(cov[(0, 1)].abs() <= 0.05e-3);
    }

    #[test]
    fn uniform_and_normal_ranges() {
        let mut rng = SimRng::from_seed(1);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
            assert!(rng.standard_normal().is_finite());
        }
    }
}
