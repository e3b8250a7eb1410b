//! Matrix-inversion-free Bayes update for observations with diagonal noise.
//!
//! An observation `z ~ N(H x, diag(gamma))` is absorbed one scalar row at a
//! time; each row is a rank-one Kalman correction with the covariance carried
//! in Joseph form. Rows are always processed in ascending order.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matmodel::{symmetrize, GaussianStats};

/// Rows whose innovation variance falls below this are skipped.
pub const MIN_INNOVATION_VARIANCE: f64 = 1e-300;

/// Noise variance marking a row as non-informative; such rows are skipped.
pub const NON_INFORMATIVE: f64 = f64::INFINITY;

/// Posterior of `N(mu0, s0)` after observing `z ~ N(H x, diag(gamma))`.
pub fn sequential_data_update(
    prior: &GaussianStats,
    h: &DMatrix<f64>,
    gamma: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<GaussianStats> {
    let mut mean = prior.mean.clone();
    let mut cov = prior.cov.clone();
    update_in_place(&mut mean, &mut cov, h, gamma, z)?;
    Ok(GaussianStats::from_parts(mean, cov))
}

/// In-place variant of [`sequential_data_update`].
pub fn update_in_place(
    mean: &mut DVector<f64>,
    cov: &mut DMatrix<f64>,
    h: &DMatrix<f64>,
    gamma: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<()> {
    let n = mean.len();
    let m = h.nrows();
    if cov.shape() != (n, n) {
        return Err(Error::dim("sdu prior covariance", format!("{n}x{n}"), format!("{:?}", cov.shape())));
    }
    if h.ncols() != n {
        return Err(Error::dim("sdu observation matrix columns", n, h.ncols()));
    }
    if gamma.len() != m {
        return Err(Error::dim("sdu noise diagonal", m, gamma.len()));
    }
    if z.len() != m {
        return Err(Error::dim("sdu observation", m, z.len()));
    }
    if let Some(g) = gamma.iter().find(|g| !(**g > 0.0)) {
        return Err(Error::arg(format!("observation noise variance must be positive, got {g}")));
    }

    for i in 0..m {
        let gi = gamma[i];
        if gi == NON_INFORMATIVE {
            continue;
        }
        let hi = h.row(i).transpose();
        // s_h = S h_i'
        let s_h = &*cov * &hi;
        let innovation_var = gi + hi.dot(&s_h);
        if !(innovation_var >= MIN_INNOVATION_VARIANCE) {
            continue;
        }
        let gain = s_h / innovation_var;
        let residual = z[i] - hi.dot(mean);
        mean.axpy(residual, &gain, 1.0);

        // Joseph form (I - K h) S (I - K h)' + K g K', applied as two
        // rank-one corrections: M = (I - K h) S, then M (I - K h)'.
        let h_s = hi.transpose() * &*cov;
        let mut reduced = &*cov - &gain * h_s;
        let m_h = &reduced * &hi;
        reduced -= m_h * gain.transpose();
        reduced += (&gain * gain.transpose()) * gi;
        symmetrize(&mut reduced);
        *cov = reduced;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::oracles::batch_information_update;
    use crate::verify::{random_instance, relative_error};
    use proptest::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_core::SeedableRng;

    fn stats(mean: &[f64], cov: DMatrix<f64>) -> GaussianStats {
        GaussianStats::new(DVector::from_row_slice(mean), cov).unwrap()
    }

    #[test]
    fn unit_prior_single_observation() {
        let prior = stats(&[0.0, 0.0], DMatrix::identity(2, 2));
        let post = sequential_data_update(
            &prior,
            &DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            &DVector::from_element(1, 1.0),
            &DVector::from_element(1, 1.0),
        )
        .unwrap();
        assert_eq!(post.mean.as_slice(), &[0.5, 0.0]);
        assert_eq!(post.cov, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn zero_observation_matrix_is_identity_map() {
        let prior =
            stats(&[1.0, -2.0, 3.0], DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 4.0]));
        let post = sequential_data_update(
            &prior,
            &DMatrix::zeros(2, 3),
            &DVector::from_element(2, 0.5),
            &DVector::from_vec(vec![7.0, -9.0]),
        )
        .unwrap();
        assert_eq!(post, prior);
    }

    #[test]
    fn non_informative_rows_are_skipped() {
        let prior = stats(&[0.0, 0.0], DMatrix::identity(2, 2));
        let post = sequential_data_update(
            &prior,
            &DMatrix::identity(2, 2),
            &DVector::from_vec(vec![NON_INFORMATIVE, 1.0]),
            &DVector::from_vec(vec![5.0, 1.0]),
        )
        .unwrap();
        assert_eq!(post.mean.as_slice(), &[0.0, 0.5]);
        assert_eq!(post.cov[(0, 0)], 1.0);
    }

    #[test]
    fn degenerate_innovation_is_skipped() {
        let prior = stats(&[1.0], DMatrix::zeros(1, 1));
        let post = sequential_data_update(
            &prior,
            &DMatrix::identity(1, 1),
            &DVector::from_element(1, 1e-320),
            &DVector::from_element(1, 3.0),
        )
        .unwrap();
        assert_eq!(post.mean[0], 1.0);
        assert!(post.mean.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_nonpositive_noise_and_bad_shapes() {
        let prior = stats(&[0.0, 0.0], DMatrix::identity(2, 2));
        let h = DMatrix::identity(2, 2);
        let z = DVector::zeros(2);
        assert!(sequential_data_update(&prior, &h, &DVector::from_vec(vec![1.0, 0.0]), &z).is_err());
        assert!(sequential_data_update(&prior, &h, &DVector::from_vec(vec![1.0, -1.0]), &z).is_err());
        assert!(sequential_data_update(&prior, &h, &DVector::from_vec(vec![1.0, f64::NAN]), &z).is_err());
        assert!(sequential_data_update(&prior, &h, &DVector::from_element(1, 1.0), &z).is_err());
        assert!(sequential_data_update(&prior, &DMatrix::identity(2, 3), &DVector::from_element(2, 1.0), &z).is_err());
    }

    #[test]
    fn random_instance_matches_batch_posterior() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (prior, h, gamma, z) = random_instance(&mut rng, 4, 3);
        let seq = sequential_data_update(&prior, &h, &gamma, &z).unwrap();
        let batch = batch_information_update(&prior, &h, &gamma, &z);
        assert!(relative_error(&seq.mean, &batch.mean) <= 1e-9);
        assert!(relative_error(&seq.cov, &batch.cov) <= 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn row_order_is_irrelevant(seed in any::<u64>(), n in 1usize..=8, m in 1usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (prior, h, gamma, z) = random_instance(&mut rng, n, m);
            let forward = sequential_data_update(&prior, &h, &gamma, &z).unwrap();
            let rev: Vec<usize> = (0..m).rev().collect();
            let h_rev = h.select_rows(rev.iter());
            let g_rev = gamma.select_rows(rev.iter());
            let z_rev = z.select_rows(rev.iter());
            let backward = sequential_data_update(&prior, &h_rev, &g_rev, &z_rev).unwrap();
            prop_assert!(relative_error(&forward.mean, &backward.mean) <= 1e-9);
            prop_assert!(relative_error(&forward.cov, &backward.cov) <= 1e-9);
        }

        #[test]
        fn posterior_is_loewner_dominated(seed in any::<u64>(), n in 1usize..=8, m in 1usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (prior, h, gamma, z) = random_instance(&mut rng, n, m);
            let post = sequential_data_update(&prior, &h, &gamma, &z).unwrap();
            let norm = post.cov.norm();
            prop_assert!(crate::matmodel::asymmetry(&post.cov) == 0.0);
            prop_assert!(crate::matmodel::min_eigenvalue(&post.cov) >= -1e-12 * norm);
            let tol = 1e-10 * prior.cov.norm();
            for _ in 0..20 {
                let x = crate::verify::random_vector(&mut rng, n);
                let before = x.dot(&(&prior.cov * &x));
                let after = x.dot(&(&post.cov * &x));
                prop_assert!(after <= before + tol);
            }
        }
    }
}
