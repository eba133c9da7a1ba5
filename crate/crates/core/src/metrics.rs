//! Prediction quality criteria.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Root mean square error.
pub fn rmse(preds: &[f64], truths: &[f64]) -> Result<f64> {
    if preds.len() != truths.len() || preds.is_empty() {
        return Err(Error::invalid(format!(
            "rmse needs equal non-empty lengths, got {} and {}",
            preds.len(),
            truths.len()
        )));
    }
    let mse = preds.iter().zip(truths).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / preds.len() as f64;
    Ok(mse.sqrt())
}

/// The `(1 + α) / 2` quantile of the standard normal.
pub fn normal_interval_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let std = Normal::standard();
    Ok(std.inverse_cdf(0.5 + 0.5 * alpha))
}

/// Fraction of truths inside the central level-α Gaussian predictive interval
/// (boundary counts as covered).
pub fn cir(preds: &[f64], sds: &[f64], truths: &[f64], alpha: f64) -> Result<f64> {
    if preds.len() != truths.len() || sds.len() != truths.len() || preds.is_empty() {
        return Err(Error::invalid("cir needs equal non-empty lengths"));
    }
    if let Some(s) = sds.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::invalid(format!("predictive sd {s} is negative")));
    }
    let q = normal_interval_quantile(alpha)?;
    let covered = preds
        .iter()
        .zip(sds)
        .zip(truths)
        .filter(|((p, s), t)| (*p - *t).abs() <= q * *s)
        .count();
    Ok(covered as f64 / preds.len() as f64)
}
