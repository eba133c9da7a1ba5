//! Random inputs: Matérn-perturbed densities, shifted random measures and
//! Beta samples.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distribution::{invert_cdf, moments_of, GridDensity, QuantileFunction};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// Generator for stream `stream` of `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Matérn 5/2 covariance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub sigma: f64,
    pub ell: f64,
}

impl Default for MaternParams {
    fn default() -> Self {
        Self { sigma: 1.0, ell: 0.2 }
    }
}

/// `σ²(1 + √5 d/ℓ + 5d²/(3ℓ²)) exp(−√5 d/ℓ)`.
pub fn matern52(d: f64, ell: f64, sigma: f64) -> f64 {
    let r = 5f64.sqrt() * d.abs() / ell;
    sigma * sigma * (1.0 + r + r * r / 3.0) * (-r).exp()
}

/// Draws from a zero-mean Matérn 5/2 process on a fixed grid, factorizing once.
#[derive(Debug, Clone)]
pub struct MaternSampler {
    chol: Cholesky,
}

impl MaternSampler {
    pub fn new(grid: &[f64], params: MaternParams) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::invalid("Matérn grid is empty"));
        }
        if grid.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::invalid("Matérn grid must be sorted"));
        }
        if !(params.ell > 0.0 && params.sigma > 0.0) {
            return Err(Error::invalid(format!("Matérn parameters must be > 0, got {params:?}")));
        }
        let n = grid.len();
        let k = DMatrix::from_fn(n, n, |i, j| matern52(grid[i] - grid[j], params.ell, params.sigma));
        Ok(Self {
            chol: Cholesky::with_jitter(&k, 1e-10)?,
        })
    }

    pub fn len(&self) -> usize {
        self.chol.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.len(), |_, _| StandardNormal.sample(rng));
        (self.chol.l() * z).iter().copied().collect()
    }
}

/// One Matérn 5/2 draw on `grid`, deterministic in `seed`.
pub fn matern52_sample(grid: &[f64], ell: f64, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    let sampler = MaternSampler::new(grid, MaternParams { sigma, ell })?;
    Ok(sampler.sample(&mut ChaCha8Rng::seed_from_u64(seed)))
}

fn unit_grid(lo: f64, hi: f64, d: usize) -> Vec<f64> {
    (0..d).map(|j| lo + (hi - lo) * j as f64 / (d - 1) as f64).collect()
}

/// Normalizes `exp(log_f)` on `[lo, hi]`, shifting by the maximum first.
fn exp_density(lo: f64, hi: f64, log_f: &[f64]) -> Result<GridDensity> {
    let top = log_f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    GridDensity::normalized(lo, hi, log_f.iter().map(|v| (v - top).exp()).collect())
}

/// A learning distribution together with its Gaussian base parameters.
#[derive(Debug, Clone)]
pub struct LearningDistribution {
    pub density: GridDensity,
    pub mean: f64,
    pub sd: f64,
}

/// Gaussian pdfs with `μ ~ U[0.3, 0.7]`, `σ ~ U[0.001, 0.2]`, multiplied by
/// `exp(Z)` for a Matérn draw `Z` and renormalized on a `d`-point grid over `[0, 1]`.
#[derive(Debug, Clone)]
pub struct LearningGenerator {
    grid: Vec<f64>,
    sampler: Option<MaternSampler>,
}

impl LearningGenerator {
    pub fn new(d: usize, matern: MaternParams) -> Result<Self> {
        if d < 2 {
            return Err(Error::invalid("density grid needs at least two points"));
        }
        let grid = unit_grid(0.0, 1.0, d);
        let sampler = Some(MaternSampler::new(&grid, matern)?);
        Ok(Self { grid, sampler })
    }

    /// Same generator with `Z ≡ 0`.
    pub fn unperturbed(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::invalid("density grid needs at least two points"));
        }
        Ok(Self {
            grid: unit_grid(0.0, 1.0, d),
            sampler: None,
        })
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LearningDistribution> {
        let mean = rng.random_range(0.3..0.7);
        let sd = rng.random_range(0.001..0.2);
        self.with_base(mean, sd, rng)
    }

    /// Density for a given Gaussian base; the Matérn draw (if any) uses `rng`.
    pub fn with_base<R: Rng + ?Sized>(&self, mean: f64, sd: f64, rng: &mut R) -> Result<LearningDistribution> {
        let z = match &self.sampler {
            Some(s) => s.sample(rng),
            None => vec![0.0; self.grid.len()],
        };
        let log_f: Vec<f64> = self
            .grid
            .iter()
            .zip(&z)
            .map(|(x, zi)| -0.5 * ((x - mean) / sd).powi(2) + zi)
            .collect();
        Ok(LearningDistribution {
            density: exp_density(0.0, 1.0, &log_f)?,
            mean,
            sd,
        })
    }
}

/// One learning distribution from a fresh generator seeded by `seed`.
pub fn gen_learning_distribution(d: usize, matern: MaternParams, seed: u64) -> Result<GridDensity> {
    let gen = LearningGenerator::new(d, matern)?;
    Ok(gen.generate(&mut ChaCha8Rng::seed_from_u64(seed))?.density)
}

/// `F(ν) = m₁ / (0.05 + sd(ν))`.
pub fn target_f(q: &QuantileFunction) -> f64 {
    let m = moments_of(q);
    m.m1 / (0.05 + m.variance().sqrt())
}

/// `n` measures, the i-th (1-based) with density `exp(Z_i(t − i))` normalized
/// on `[i, i + L]`; `perturb = false` replaces `Z_i` by zero.
pub fn shifted_random_measures(
    n: usize,
    length: f64,
    matern: MaternParams,
    d: usize,
    seed: u64,
    perturb: bool,
) -> Result<Vec<GridDensity>> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::invalid(format!("support length must be > 0, got {length}")));
    }
    if d < 2 {
        return Err(Error::invalid("density grid needs at least two points"));
    }
    let local = unit_grid(0.0, length, d);
    let sampler = if perturb {
        Some(MaternSampler::new(&local, matern)?)
    } else {
        None
    };
    (1..=n)
        .map(|i| {
            let z = match &sampler {
                Some(s) => s.sample(&mut rng_for(seed, i as u64)),
                None => vec![0.0; d],
            };
            exp_density(i as f64, i as f64 + length, &z)
        })
        .collect()
}

/// `count` draws from a tabulated density by CDF inversion.
pub fn sample_density<R: Rng + ?Sized>(g: &GridDensity, count: usize, rng: &mut R) -> Vec<f64> {
    let cdf = g.cdf_nodes();
    let (lo, _) = g.support();
    let h = g.spacing();
    (0..count)
        .map(|_| invert_cdf(&cdf, lo, h, rng.random::<f64>()))
        .collect()
}

/// `count` draws from Beta(a, b) as `X / (X + Y)` with `X ~ Γ(a)`, `Y ~ Γ(b)`.
pub fn beta_samples<R: Rng + ?Sized>(a: f64, b: f64, count: usize, rng: &mut R) -> Result<Vec<f64>> {
    let ga = Gamma::new(a, 1.0).map_err(|e| Error::invalid(format!("beta shape a={a}: {e}")))?;
    let gb = Gamma::new(b, 1.0).map_err(|e| Error::invalid(format!("beta shape b={b}: {e}")))?;
    Ok((0..count)
        .map(|_| {
            let x: f64 = ga.sample(rng);
            let y: f64 = gb.sample(rng);
            x / (x + y)
        })
        .collect())
}

/// Skewness of Beta(a, b).
pub fn beta_skewness(a: f64, b: f64) -> f64 {
    2.0 * (b - a) * (a + b + 1.0).sqrt() / ((a + b + 2.0) * (a * b).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{quantile_from_density, w2_distance, QuantileFunction};

    #[test]
    fn matern_variance_and_correlation() {
        // Monte-Carlo over independent draws at two points a distance ℓ apart
        let grid = [0.0, 0.2];
        let s = MaternSampler::new(&grid, MaternParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws: Vec<Vec<f64>> = (0..2000).map(|_| s.sample(&mut rng)).collect();
        let var0 = draws.iter().map(|z| z[0] * z[0]).sum::<f64>() / 2000.0;
        let var1 = draws.iter().map(|z| z[1] * z[1]).sum::<f64>() / 2000.0;
        let cov = draws.iter().map(|z| z[0] * z[1]).sum::<f64>() / 2000.0;
        assert!((0.9..=1.1).contains(&var0) && (0.9..=1.1).contains(&var1));
        let r5 = 5f64.sqrt();
        let expected = (1.0 + r5 + 5.0 / 3.0) * (-r5).exp();
        assert!((cov / (var0 * var1).sqrt() - expected).abs() < 0.05);
        assert_eq!(matern52(0.0, 0.2, 1.0), 1.0);
    }

    #[test]
    fn matern_deterministic_per_seed() {
        let g = unit_grid(0.0, 1.0, 20);
        assert_eq!(
            matern52_sample(&g, 0.2, 1.0, 3).unwrap(),
            matern52_sample(&g, 0.2, 1.0, 3).unwrap()
        );
        assert!(matern52_sample(&[1.0, 0.0], 0.2, 1.0, 3).is_err());
    }

    #[test]
    fn learning_densities_normalized() {
        let gen = LearningGenerator::new(100, MaternParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let g = gen.generate(&mut rng).unwrap().density;
            assert!((g.integral() - 1.0).abs() < 1e-8);
            assert!(g.values().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn unperturbed_is_truncated_gaussian() {
        let gen = LearningGenerator::unperturbed(101).unwrap();
        let g = gen
            .with_base(0.5, 0.1, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap()
            .density;
        let x = g.abscissae();
        let raw: Vec<f64> = x.iter().map(|x| (-0.5 * ((x - 0.5) / 0.1f64).powi(2)).exp()).collect();
        let c = g.values()[50] / raw[50];
        for (v, r) in g.values().iter().zip(&raw) {
            assert!((v - c * r).abs() < 1e-12);
        }
    }

    #[test]
    fn narrow_base_concentrates() {
        let gen = LearningGenerator::new(100, MaternParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = gen.with_base(0.5, 0.001, &mut rng).unwrap().density;
        let q = quantile_from_density(&g, 512).unwrap();
        assert!(moments_of(&q).variance() < 1e-4);
    }

    #[test]
    fn target_values() {
        let q = QuantileFunction::point_mass(0.3, 64).unwrap();
        assert!((target_f(&q) - 6.0).abs() < 1e-12);
        // untruncated N(0.5, 0.1²) through its exact quantile function
        let normal = statrs::distribution::Normal::new(0.5, 0.1).unwrap();
        use statrs::distribution::ContinuousCDF;
        let m = 4096;
        let q = QuantileFunction::new(
            (0..m)
                .map(|k| normal.inverse_cdf((k as f64 + 0.5) / m as f64))
                .collect(),
        )
        .unwrap();
        assert!((target_f(&q) - 10.0 / 3.0).abs() < 1e-2);
    }

    #[test]
    fn shifted_measures_properties() {
        let ms = shifted_random_measures(12, 0.8, MaternParams::default(), 50, 4, true).unwrap();
        let qs: Vec<_> = ms.iter().map(|g| quantile_from_density(g, 256).unwrap()).collect();
        for (i, g) in ms.iter().enumerate() {
            assert!((g.integral() - 1.0).abs() < 1e-8);
            assert_eq!(g.support(), ((i + 1) as f64, (i + 1) as f64 + 0.8));
        }
        for i in 0..12 {
            for j in 0..12 {
                let gap = (i as f64 - j as f64).abs();
                if gap >= 0.8 {
                    assert!(w2_distance(&qs[i], &qs[j]).unwrap() >= gap - 0.8);
                }
            }
        }
        let flat = shifted_random_measures(3, 0.8, MaternParams::default(), 50, 4, false).unwrap();
        for g in &flat {
            assert!(g.values().iter().all(|v| (v - 1.25).abs() < 1e-12));
        }
    }

    #[test]
    fn beta_skewness_values() {
        assert_eq!(beta_skewness(3.0, 3.0), 0.0);
        let expected = -34.0 * 24f64.sqrt() / (25.0 * 60f64.sqrt());
        assert!((beta_skewness(20.0, 3.0) - expected).abs() < 1e-14);
        let xs = beta_samples(2.0, 5.0, 20000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 2.0 / 7.0).abs() < 0.01);
        assert!(xs.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn density_sampling_matches_mean() {
        let gen = LearningGenerator::unperturbed(201).unwrap();
        let g = gen
            .with_base(0.4, 0.05, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap()
            .density;
        let xs = sample_density(&g, 20000, &mut ChaCha8Rng::seed_from_u64(2));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.4).abs() < 0.005);
    }
}
