//! Squared-error scoring and Monte Carlo aggregation.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Squared Euclidean distance between truth and estimate.
pub fn se(truth: &DVector<f64>, estimate: &DVector<f64>) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::dim("squared error", truth.len(), estimate.len()));
    }
    Ok((truth - estimate).norm_squared())
}

/// Mean of the first `horizon - lag` entries of an SE series.
pub fn mse(series: &[f64], lag: usize, horizon: usize) -> Result<f64> {
    if horizon <= lag {
        return Err(Error::arg(format!("horizon {horizon} must exceed lag {lag}")));
    }
    let count = horizon - lag;
    if series.len() < count {
        return Err(Error::arg(format!("SE series has {} entries, need {count}", series.len())));
    }
    Ok(series[..count].iter().sum::<f64>() / count as f64)
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std_error: f64,
}

/// Mean and standard error over runs; a single run reports a standard error
/// of zero.
pub fn aggregate(values: &[f64]) -> Result<Aggregate> {
    if values.is_empty() {
        return Err(Error::arg("cannot aggregate zero runs"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok(Aggregate { mean, std_error: 0.0 });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Aggregate { mean, std_error: (var / n).sqrt() })
}
