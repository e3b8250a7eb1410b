//! Reference computations that share no code path with the estimators:
//! batch information-form posteriors with explicit inversion, a stacked
//! linear-Gaussian solve over a whole trajectory, and a matrix-gain Kalman
//! filter.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::matmodel::{GaussianStats, StateSpaceModel};

fn inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    match sym.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => sym.try_inverse().expect("oracle matrix is invertible"),
    }
}

fn symmetric(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `S = (S0^-1 + H' G^-1 H)^-1`, `mu = S (S0^-1 mu0 + H' G^-1 z)`.
pub fn batch_information_update(
    prior: &GaussianStats,
    h: &DMatrix<f64>,
    gamma: &DVector<f64>,
    z: &DVector<f64>,
) -> GaussianStats {
    let prior_info = inverse(&prior.cov);
    let noise_info = DMatrix::from_diagonal(&gamma.map(|g| 1.0 / g));
    let info = &prior_info + h.transpose() * &noise_info * h;
    let cov = symmetric(inverse(&info));
    let mean = &cov * (&prior_info * &prior.mean + h.transpose() * &noise_info * z);
    GaussianStats { mean, cov }
}

/// Factor `G` with `G G' = Q`, dropping null directions.
fn process_factor(q: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(q.clone());
    let top = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let keep: Vec<usize> = (0..q.nrows()).filter(|&i| eig.eigenvalues[i] > 1e-12 * top).collect();
    let mut g = DMatrix::zeros(q.nrows(), keep.len());
    for (col, &i) in keep.iter().enumerate() {
        g.set_column(col, &(eig.eigenvectors.column(i) * eig.eigenvalues[i].sqrt()));
    }
    g
}

/// Joint posterior of `[x_k; x_{k-1}; ...; x_{k-w+1}]` given `y_1..y_k`,
/// with `w = min(k, lag + 1)`.
///
/// The trajectory is parametrized by `x_1` and whitened process noise, so a
/// singular `Q` needs no inverse. All observation equations are stacked into
/// one information-form solve.
pub fn window_joint_posterior(
    model: &StateSpaceModel,
    prior: &GaussianStats,
    inputs: &[DVector<f64>],
    observations: &[DVector<f64>],
    lag: usize,
) -> GaussianStats {
    let k = observations.len();
    assert!(k >= 1 && inputs.len() + 1 >= k);
    let nx = model.n_state();
    let g = process_factor(model.q());
    let nr = g.ncols();
    let nz = nx + (k - 1) * nr;

    // x_t = maps[t] z + offsets[t]
    let mut maps = Vec::with_capacity(k);
    let mut offsets = Vec::with_capacity(k);
    let mut first = DMatrix::zeros(nx, nz);
    first.view_mut((0, 0), (nx, nx)).fill_with_identity();
    maps.push(first);
    offsets.push(DVector::zeros(nx));
    for t in 1..k {
        let mut next = model.a() * &maps[t - 1];
        let mut shock = next.view_mut((0, nx + (t - 1) * nr), (nx, nr));
        shock += &g;
        maps.push(next);
        offsets.push(model.a() * &offsets[t - 1] + model.b() * &inputs[t - 1]);
    }

    let mut info = DMatrix::zeros(nz, nz);
    let mut shift = DVector::zeros(nz);
    let prior_info = inverse(&prior.cov);
    info.view_mut((0, 0), (nx, nx)).copy_from(&prior_info);
    shift.rows_mut(0, nx).copy_from(&(&prior_info * &prior.mean));
    for i in 0..(k - 1) * nr {
        info[(nx + i, nx + i)] = 1.0;
    }
    let r_info = DMatrix::from_diagonal(&model.r_diag().map(|r| 1.0 / r));
    for t in 0..k {
        let h = model.c() * &maps[t];
        let resid = &observations[t] - model.c() * &offsets[t];
        info += h.transpose() * &r_info * &h;
        shift += h.transpose() * &r_info * resid;
    }
    let z_cov = symmetric(inverse(&info));
    let z_mean = &z_cov * shift;

    let w = k.min(lag + 1);
    let mut stack = DMatrix::zeros(w * nx, nz);
    let mut stack_offset = DVector::zeros(w * nx);
    for b in 0..w {
        let t = k - 1 - b;
        stack.view_mut((b * nx, 0), (nx, nz)).copy_from(&maps[t]);
        stack_offset.rows_mut(b * nx, nx).copy_from(&offsets[t]);
    }
    GaussianStats { mean: &stack * z_mean + stack_offset, cov: symmetric(&stack * z_cov * stack.transpose()) }
}

/// Matrix-gain Kalman filter. Returns the posterior after each observation.
/// When `external` is given, each step also absorbs `y_E ~ N(C x, r_E I)`
/// stacked with the target observation.
pub fn textbook_kalman_filter(
    model: &StateSpaceModel,
    prior: &GaussianStats,
    inputs: &[DVector<f64>],
    observations: &[DVector<f64>],
    external: Option<(&[DVector<f64>], f64)>,
) -> Vec<GaussianStats> {
    let nx = model.n_state();
    let ny = model.n_output();
    let (h, noise) = match external {
        Some((_, r_e)) => {
            let mut h = DMatrix::zeros(2 * ny, nx);
            h.view_mut((0, 0), (ny, nx)).copy_from(model.c());
            h.view_mut((ny, 0), (ny, nx)).copy_from(model.c());
            let mut noise = DMatrix::zeros(2 * ny, 2 * ny);
            noise.view_mut((0, 0), (ny, ny)).copy_from(model.r());
            noise.view_mut((ny, ny), (ny, ny)).fill_diagonal(r_e);
            (h, noise)
        }
        None => (model.c().clone(), model.r().clone()),
    };

    let mut x = prior.mean.clone();
    let mut p = prior.cov.clone();
    let mut out = Vec::with_capacity(observations.len());
    for (t, y) in observations.iter().enumerate() {
        let z = match external {
            Some((ext, _)) => {
                let mut z = DVector::zeros(2 * ny);
                z.rows_mut(0, ny).copy_from(y);
                z.rows_mut(ny, ny).copy_from(&ext[t]);
                z
            }
            None => y.clone(),
        };
        let s = &h * &p * h.transpose() + &noise;
        let gain = &p * h.transpose() * inverse(&s);
        x = &x + &gain * (z - &h * &x);
        let i_kh = DMatrix::identity(nx, nx) - &gain * &h;
        p = symmetric(&i_kh * &p * i_kh.transpose() + &gain * &noise * gain.transpose());
        out.push(GaussianStats { mean: x.clone(), cov: p.clone() });
        if t < inputs.len() {
            x = model.a() * &x + model.b() * &inputs[t];
            p = symmetric(model.a() * &p * model.a().transpose() + model.q());
        }
    }
    out
}
