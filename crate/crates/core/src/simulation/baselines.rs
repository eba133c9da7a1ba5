//! Kernel density estimation and the Nadaraya–Watson baseline on densities.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::GridDensity;
use crate::error::{Error, Result};
use crate::kernels::median;
use crate::metrics::rmse;

/// Bandwidth used when the samples have zero spread.
pub const DEGENERATE_BANDWIDTH: f64 = 1e-3;

/// Silverman's rule `1.06·sd·n^{-1/5}` (sample sd with `n − 1`).
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let h = 1.06 * var.sqrt() * n.powf(-0.2);
    if h > 0.0 {
        h
    } else {
        DEGENERATE_BANDWIDTH
    }
}

/// Gaussian KDE on `d` equispaced points over `[lo, hi]`, renormalized on the grid.
pub fn kde_density(samples: &[f64], bandwidth: Option<f64>, lo: f64, hi: f64, d: usize) -> Result<GridDensity> {
    if samples.len() < 2 {
        return Err(Error::invalid("kernel density estimate needs at least 2 samples"));
    }
    if d < 2 {
        return Err(Error::invalid("density grid needs at least two points"));
    }
    let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(samples));
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be > 0, got {h}")));
    }
    let step = (hi - lo) / (d - 1) as f64;
    let values: Vec<f64> = (0..d)
        .map(|j| {
            let x = lo + j as f64 * step;
            samples
                .iter()
                .map(|s| (-0.5 * ((x - s) / h).powi(2)).exp())
                .sum::<f64>()
        })
        .collect();
    GridDensity::normalized(lo, hi, values)
        .map_err(|_| Error::invalid(format!("no estimated mass on the grid [{lo}, {hi}] at bandwidth {h}")))
}

/// Result of the kernel-regression baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelRegressionFit {
    pub predictions: Vec<f64>,
    pub bandwidth: f64,
    pub bandwidth_grid: Vec<f64>,
    pub validation_rmse: Vec<f64>,
}

fn nw_predict(dists: &[f64], ys: &[f64], h: f64, fallback: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (d, y) in dists.iter().zip(ys) {
        let w = (-0.5 * (d / h).powi(2)).exp();
        num += w * y;
        den += w;
    }
    if den > 0.0 && den.is_finite() {
        num / den
    } else {
        fallback
    }
}

/// Nadaraya–Watson regression with Gaussian weights on L¹ density distances.
///
/// The bandwidth is picked from `bandwidth_grid` (default `median(D)·2^k`,
/// `k = −4..=4`) by validation RMSE on a seeded 80/20 split of `train`;
/// predictions then use the whole training set.
pub fn kernel_regression_predict(
    train: &[(GridDensity, f64)],
    test: &[GridDensity],
    bandwidth_grid: Option<&[f64]>,
    split_seed: u64,
) -> Result<KernelRegressionFit> {
    let n = train.len();
    if n < 5 {
        return Err(Error::invalid(format!(
            "kernel regression needs at least 5 training points, got {n}"
        )));
    }
    let ys: Vec<f64> = train.iter().map(|(_, y)| *y).collect();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = train[i].0.l1_distance(&train[j].0)?;
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    let grid: Vec<f64> = match bandwidth_grid {
        Some(g) => {
            if g.is_empty() || g.iter().any(|h| !(*h > 0.0)) {
                return Err(Error::invalid("bandwidth grid must be non-empty and positive"));
            }
            g.to_vec()
        }
        None => {
            let mut off: Vec<f64> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .map(|(i, j)| dist[i * n + j])
                .collect();
            let med = median(&mut off);
            let med = if med > 0.0 { med } else { 1.0 };
            (-4..=4).map(|k| med * 2f64.powi(k)).collect()
        }
    };

    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let n_val = ((n as f64 * 0.2).round() as usize).clamp(1, n - 1);
    let (val, fit) = idx.split_at(n_val);
    let fit_y: Vec<f64> = fit.iter().map(|&i| ys[i]).collect();
    let fit_mean = fit_y.iter().sum::<f64>() / fit_y.len() as f64;
    let val_y: Vec<f64> = val.iter().map(|&i| ys[i]).collect();

    let mut scores = Vec::with_capacity(grid.len());
    for &h in &grid {
        let preds: Vec<f64> = val
            .iter()
            .map(|&v| {
                let d: Vec<f64> = fit.iter().map(|&i| dist[v * n + i]).collect();
                nw_predict(&d, &fit_y, h, fit_mean)
            })
            .collect();
        scores.push(rmse(&preds, &val_y)?);
    }
    let best = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(k, _)| k)
        .expect("non-empty grid");
    let h = grid[best];

    let mean = ys.iter().sum::<f64>() / n as f64;
    let predictions = test
        .iter()
        .map(|g| {
            let d = train
                .iter()
                .map(|(t, _)| g.l1_distance(t))
                .collect::<Result<Vec<f64>>>()?;
            Ok(nw_predict(&d, &ys, h, mean))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(KernelRegressionFit {
        predictions,
        bandwidth: h,
        bandwidth_grid: grid,
        validation_rmse: scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::generators::rng_for;
    use rand_distr::{Distribution, Normal};

    fn bump(center: f64) -> GridDensity {
        let v: Vec<f64> = (0..101)
            .map(|j| (-0.5 * ((j as f64 / 100.0 - center) / 0.05).powi(2)).exp())
            .collect();
        GridDensity::normalized(0.0, 1.0, v).unwrap()
    }

    #[test]
    fn kde_normalized_and_centered() {
        let normal = Normal::new(0.5, 0.1).unwrap();
        let mut rng = rng_for(1, 0);
        let xs: Vec<f64> = (0..5000).map(|_| normal.sample(&mut rng)).collect();
        let g = kde_density(&xs, None, -0.5, 1.5, 801).unwrap();
        assert!((g.integral() - 1.0).abs() < 1e-6);
        let mean: f64 = g.abscissae().iter().zip(g.values()).map(|(x, f)| x * f).sum::<f64>() * g.spacing();
        assert!((mean - 0.5).abs() < 0.01);
    }

    #[test]
    fn kde_zero_spread_uses_fixed_bandwidth() {
        assert_eq!(silverman_bandwidth(&[0.3, 0.3, 0.3]), DEGENERATE_BANDWIDTH);
        assert!(kde_density(&[0.3, 0.3], None, 0.0, 1.0, 1001).is_ok());
        assert!(kde_density(&[0.3], None, 0.0, 1.0, 11).is_err());
    }

    #[test]
    fn kde_sharpens_as_bandwidth_shrinks() {
        let xs = [0.2, 0.5, 0.55, 0.8];
        let peak = |h: f64| {
            kde_density(&xs, Some(h), 0.0, 1.0, 2001)
                .unwrap()
                .values()
                .iter()
                .copied()
                .fold(0.0, f64::max)
        };
        assert!(peak(0.01) > peak(0.05) && peak(0.05) > peak(0.2));
    }

    #[test]
    fn constant_targets_give_constant_predictions() {
        let train: Vec<(GridDensity, f64)> = (0..8).map(|i| (bump(0.2 + 0.07 * i as f64), 4.5)).collect();
        let test = vec![bump(0.33), bump(0.9)];
        let fit = kernel_regression_predict(&train, &test, None, 3).unwrap();
        for p in fit.predictions {
            assert!((p - 4.5).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_bandwidth_recovers_training_target() {
        let train: Vec<(GridDensity, f64)> = (0..8).map(|i| (bump(0.2 + 0.07 * i as f64), i as f64)).collect();
        let fit = kernel_regression_predict(&train, &[bump(0.34)], Some(&[1e-3]), 0).unwrap();
        assert!((fit.predictions[0] - 2.0).abs() < 1e-12);
        assert!(kernel_regression_predict(&train[..4], &[bump(0.34)], None, 0).is_err());
    }
}
