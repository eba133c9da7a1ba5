//! Numerical checks of kernel validity and identifiability.
//!
//! The suites at the bottom produce a [`DiagnosticReport`] of independent
//! records (test, configuration, statistic, threshold, pass) that the CLI
//! serializes as JSON.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::distribution::{
    distance_matrix, quantile_from_density, quantile_from_samples, EmpiricalDistribution, QuantileFunction,
};
use crate::error::{Error, Result};
use crate::gp::build_gram;
use crate::kernels::{FbmParams, Inputs, KernelSpec, PairTable, ParamKind, PowExpParams};
use crate::linalg::min_eigenvalue;
use crate::simulation::{rng_for, shifted_random_measures, MaternParams};

/// `Σᵢⱼ cᵢ cⱼ W₂^{2H}(μᵢ, μⱼ)` for zero-sum weights.
pub fn negdef_form(inputs: &[QuantileFunction], c: &[f64], h: f64) -> Result<f64> {
    let d = check_form(inputs, c, h)?;
    let n = inputs.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += c[i] * c[j] * pow_dist(d[i * n + j], h);
        }
    }
    Ok(s)
}

/// `Σᵢⱼ |cᵢ cⱼ| · maxᵢⱼ W₂^{2H}`, the magnitude that rounding error scales with.
pub fn negdef_scale(inputs: &[QuantileFunction], c: &[f64], h: f64) -> Result<f64> {
    let d = check_form(inputs, c, h)?;
    let abs_sum: f64 = c.iter().map(|x| x.abs()).sum();
    let max = d.iter().map(|&w| pow_dist(w, h)).fold(0.0, f64::max);
    Ok(abs_sum * abs_sum * max)
}

fn pow_dist(w: f64, h: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w.powf(2.0 * h)
    }
}

fn check_form(inputs: &[QuantileFunction], c: &[f64], h: f64) -> Result<Vec<f64>> {
    if inputs.len() < 2 {
        return Err(Error::invalid("quadratic form needs at least 2 inputs"));
    }
    if c.len() != inputs.len() {
        return Err(Error::invalid(format!(
            "{} weights for {} inputs",
            c.len(),
            inputs.len()
        )));
    }
    let total: f64 = c.iter().sum();
    if total.abs() > 1e-12 {
        return Err(Error::invalid(format!("weights must sum to 0, got {total:e}")));
    }
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("exponent H must be >= 0, got {h}")));
    }
    distance_matrix(inputs)
}

/// Smallest eigenvalue of the Gram matrix of `inputs` under `spec`.
pub fn gram_min_eig(spec: &KernelSpec, inputs: &Inputs) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::invalid("gram_min_eig needs at least one input"));
    }
    let k = build_gram(spec, inputs)?;
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("Gram matrix has non-finite entries"));
    }
    Ok(min_eigenvalue(&k))
}

fn largest_eigenvalue(k: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(k.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `(1/n) Σᵢⱼ (K_A − K_B)²` over the Gram matrices of two parameterizations.
pub fn separation_sum(a: &KernelSpec, b: &KernelSpec, inputs: &Inputs) -> Result<f64> {
    if a.family() != b.family() {
        return Err(Error::invalid(format!(
            "separation sum needs one kernel family, got {} and {}",
            a.family(),
            b.family()
        )));
    }
    let table = PairTable::gram(a, inputs)?;
    Ok(separation_with_table(a, b, &table))
}

fn separation_with_table(a: &KernelSpec, b: &KernelSpec, table: &PairTable) -> f64 {
    let n = table.rows();
    (0..n * n)
        .map(|idx| (table.value(a, idx) - table.value(b, idx)).powi(2))
        .sum::<f64>()
        / n as f64
}

/// The `p × p` form `G_kl = (1/n) Σᵢⱼ ∂_k K ∂_l K` at `spec`, so that the
/// curvature sum at `λ` equals `λᵀ G λ`.
pub fn curvature_form(spec: &KernelSpec, inputs: &Inputs) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let table = PairTable::gram(spec, inputs)?;
    let n = inputs.len();
    let p = spec.params().len();
    let mut g = DMatrix::<f64>::zeros(p, p);
    let mut grad = vec![0.0; p];
    for idx in 0..n * n {
        table.gradient(spec, idx, &mut grad);
        for k in 0..p {
            for l in k..p {
                g[(k, l)] += grad[k] * grad[l];
            }
        }
    }
    for k in 0..p {
        for l in k..p {
            let v = g[(k, l)] / n as f64;
            g[(k, l)] = v;
            g[(l, k)] = v;
        }
    }
    Ok(g)
}

/// `(1/n) Σᵢⱼ (Σ_k λ_k ∂_k K)²` at `spec`, for a unit vector `λ` over
/// [`KernelSpec::params`]. All kernel families provide analytic derivatives.
pub fn curvature_sum(spec: &KernelSpec, lambda: &[f64], inputs: &Inputs) -> Result<f64> {
    let p = spec.params().len();
    check_unit(lambda, p)?;
    let g = curvature_form(spec, inputs)?;
    Ok(quad(&g, lambda))
}

fn check_unit(lambda: &[f64], p: usize) -> Result<()> {
    if lambda.len() != p {
        return Err(Error::invalid(format!(
            "lambda has {} entries, kernel has {p} parameters",
            lambda.len()
        )));
    }
    let norm = lambda.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::invalid(format!("lambda must have unit norm, got {norm}")));
    }
    Ok(())
}

fn quad(g: &DMatrix<f64>, v: &[f64]) -> f64 {
    let p = v.len();
    let mut s = 0.0;
    for k in 0..p {
        for l in 0..p {
            s += v[k] * g[(k, l)] * v[l];
        }
    }
    s
}

/// Minimum of the curvature sum over random and coordinate directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSummary {
    pub random_min: f64,
    pub coordinate_min: f64,
    /// Smallest eigenvalue of the implied form, reported when `p ≤ 4`.
    pub eigen_min: Option<f64>,
    pub n_random: usize,
}

pub fn curvature_minimum(spec: &KernelSpec, inputs: &Inputs, n_random: usize, seed: u64) -> Result<CurvatureSummary> {
    let g = curvature_form(spec, inputs)?;
    let p = g.nrows();
    let mut rng = rng_for(seed, 0);
    let mut random_min = f64::INFINITY;
    for _ in 0..n_random {
        let v: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let v: Vec<f64> = v.iter().map(|x| x / norm).collect();
        random_min = random_min.min(quad(&g, &v));
    }
    let coordinate_min = (0..p).map(|k| g[(k, k)]).fold(f64::INFINITY, f64::min);
    Ok(CurvatureSummary {
        random_min,
        coordinate_min,
        eigen_min: (p <= 4).then(|| min_eigenvalue(&g)),
        n_random,
    })
}

fn to_coord(kind: ParamKind, theta: f64) -> f64 {
    match kind {
        ParamKind::Hurst => (theta / (1.0 - theta)).ln(),
        _ => theta.ln(),
    }
}

fn from_coord(kind: ParamKind, c: f64) -> f64 {
    match kind {
        ParamKind::Hurst => 1.0 / (1.0 + (-c).exp()),
        _ => c.exp(),
    }
}

/// Outcome of a separation sweep around `θ₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationSweep {
    /// Minimum of the sum over grid points at log/logit distance `≥ α` from `θ₀`.
    pub min_outside: f64,
    pub argmin: Vec<f64>,
    pub points: usize,
    /// Smallest sum over all grid points other than `θ₀` itself.
    pub min_off_center: f64,
    /// The sum at `θ₀` (zero up to rounding).
    pub at_center: f64,
}

/// Evaluates the separation sum on the product grid `θ₀ + offsets` in
/// log/logit coordinates of the parameters `free` (others stay at `θ₀`).
pub fn separation_sweep(
    theta0: &KernelSpec,
    inputs: &Inputs,
    free: &[usize],
    offsets: &[f64],
    alpha: f64,
) -> Result<SeparationSweep> {
    theta0.validate()?;
    let base = theta0.params();
    let kinds = theta0.param_kinds();
    if free.is_empty() || offsets.is_empty() {
        return Err(Error::invalid("sweep needs free parameters and offsets"));
    }
    if let Some(&k) = free.iter().find(|&&k| k >= base.len() || base[k] <= 0.0) {
        return Err(Error::invalid(format!(
            "parameter {k} cannot be swept in log/logit coordinates"
        )));
    }
    let table = PairTable::gram(theta0, inputs)?;
    let points = offsets.len().pow(free.len() as u32);
    let evals: Vec<(f64, f64, Vec<f64>)> = (0..points)
        .into_par_iter()
        .map(|mut code| {
            let mut theta = base.clone();
            let mut dist2 = 0.0;
            for &k in free {
                let off = offsets[code % offsets.len()];
                code /= offsets.len();
                dist2 += off * off;
                theta[k] = from_coord(kinds[k], to_coord(kinds[k], base[k]) + off);
            }
            let value = match theta0.with_params(&theta) {
                Ok(spec) => separation_with_table(&spec, theta0, &table),
                Err(_) => f64::NAN,
            };
            (dist2.sqrt(), value, theta)
        })
        .collect();
    let mut min_outside = f64::INFINITY;
    let mut argmin = base.clone();
    let mut min_off_center = f64::INFINITY;
    let mut at_center = f64::NAN;
    for (dist, value, theta) in evals {
        if dist == 0.0 {
            at_center = value;
            continue;
        }
        min_off_center = min_off_center.min(value);
        if dist >= alpha && value < min_outside {
            min_outside = value;
            argmin = theta;
        }
    }
    Ok(SeparationSweep {
        min_outside,
        argmin,
        points,
        min_off_center,
        at_center,
    })
}

/// One check in a diagnostic report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub test: String,
    pub configuration: serde_json::Value,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub suite: String,
    pub records: Vec<DiagnosticRecord>,
}

impl DiagnosticReport {
    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &DiagnosticRecord> {
        self.records.iter().filter(|r| !r.pass)
    }
}

/// Exponents checked by the negative-definiteness suite.
pub const NEGDEF_EXPONENTS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
/// Exponents at which the Dirac triple witnesses failure of negative definiteness.
pub const WITNESS_EXPONENTS: [f64; 3] = [1.1, 1.5, 2.0];

/// Random distributions for a check: empirical measures with a few atoms,
/// some of them far apart so that term magnitudes vary widely.
fn random_inputs<R: Rng>(rng: &mut R, n: usize, m: usize) -> Result<Vec<QuantileFunction>> {
    let spread = if rng.random_bool(0.5) { 1.0 } else { 100.0 };
    (0..n)
        .map(|_| {
            let atoms = rng.random_range(1..=6);
            let center = rng.random_range(-5.0..5.0) * spread;
            let scale = rng.random_range(0.05..2.0);
            let xs: Vec<f64> = (0..atoms)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    center + scale * z
                })
                .collect();
            quantile_from_samples(&EmpiricalDistribution::new(xs)?, m)
        })
        .collect()
}

fn zero_sum_weights<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let c: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let mean = c.iter().sum::<f64>() / n as f64;
    c.iter().map(|x| x - mean).collect()
}

/// Negative-definiteness checks on `n_configs` random configurations for each
/// exponent in [`NEGDEF_EXPONENTS`], plus the Dirac-triple witnesses.
pub fn negdef_suite(n_configs: usize, seed: u64) -> Result<DiagnosticReport> {
    let mut records = Vec::new();
    for k in 0..n_configs {
        let mut rng = rng_for(seed, k as u64);
        let n = rng.random_range(2..=12);
        let inputs = random_inputs(&mut rng, n, 64)?;
        let c = zero_sum_weights(&mut rng, n);
        for &h in &NEGDEF_EXPONENTS {
            let stat = negdef_form(&inputs, &c, h)?;
            let threshold = 1e-8 * negdef_scale(&inputs, &c, h)?;
            records.push(DiagnosticRecord {
                test: "negdef_form".into(),
                configuration: json!({ "config": k, "n": n, "hurst": h, "seed": seed }),
                statistic: stat,
                threshold,
                pass: stat <= threshold,
            });
        }
    }
    let diracs: Vec<QuantileFunction> = [0.0, 1.0, 2.0]
        .iter()
        .map(|&x| QuantileFunction::point_mass(x, 8))
        .collect::<Result<_>>()?;
    for &h in &WITNESS_EXPONENTS {
        let stat = negdef_form(&diracs, &[1.0, -2.0, 1.0], h)?;
        records.push(DiagnosticRecord {
            test: "dirac_witness".into(),
            configuration: json!({ "points": [0.0, 1.0, 2.0], "weights": [1.0, -2.0, 1.0], "hurst": h,
                                    "expected": 2.0 * 2f64.powf(2.0 * h) - 8.0 }),
            statistic: stat,
            threshold: 0.0,
            pass: stat > 0.0,
        });
    }
    Ok(DiagnosticReport {
        suite: "negdef".into(),
        records,
    })
}

fn quantiles_of_measures(n: usize, length: f64, seed: u64, m: usize) -> Result<Vec<QuantileFunction>> {
    shifted_random_measures(n, length, MaternParams::default(), 50, seed, true)?
        .iter()
        .map(|g| quantile_from_density(g, m))
        .collect()
}

fn fbm(hurst: f64, m: usize) -> Result<KernelSpec> {
    Ok(KernelSpec::Fbm(FbmParams {
        sigma2: 1.0,
        hurst,
        origin: QuantileFunction::point_mass(0.0, m)?,
    }))
}

/// Nondegeneracy of fBm Gram matrices on distinct inputs, a degenerate
/// control with a duplicated input, and positive semi-definiteness of POWEXP.
pub fn nondegen_suite(n_configs: usize, seed: u64) -> Result<DiagnosticReport> {
    let m = 64;
    let mut records = Vec::new();
    for k in 0..n_configs {
        let mut rng = rng_for(seed, k as u64);
        let n = rng.random_range(2..=12);
        let inputs = random_inputs(&mut rng, n, m)?;
        let distinct = inputs.iter().enumerate().all(|(i, a)| {
            inputs[i + 1..].iter().all(|b| a.values() != b.values()) && a.values().iter().any(|v| *v != 0.0)
        });
        if !distinct {
            continue;
        }
        let inputs = Inputs::Quantiles(inputs);
        for h in [0.25, 0.5, 0.75] {
            let stat = gram_min_eig(&fbm(h, m)?, &inputs)?;
            records.push(DiagnosticRecord {
                test: "fbm_min_eig".into(),
                configuration: json!({ "config": k, "n": n, "hurst": h, "seed": seed }),
                statistic: stat,
                threshold: 0.0,
                pass: stat > 0.0,
            });
        }
        let hurst = rng.random_range(0.05..1.0);
        let spec = KernelSpec::Powexp(PowExpParams {
            sigma2: 1.0,
            ell: rng.random_range(0.1..10.0),
            hurst,
            nugget: 0.0,
        });
        let gram = build_gram(&spec, &inputs)?;
        let stat = min_eigenvalue(&gram);
        let threshold = -1e-10 * largest_eigenvalue(&gram);
        records.push(DiagnosticRecord {
            test: "powexp_psd".into(),
            configuration: json!({ "config": k, "n": n, "params": spec.params(), "seed": seed }),
            statistic: stat,
            threshold,
            pass: stat >= threshold,
        });
    }

    let measures = Inputs::Quantiles(quantiles_of_measures(10, 0.8, seed, 128)?);
    let stat = gram_min_eig(&fbm(0.5, 128)?, &measures)?;
    records.push(DiagnosticRecord {
        test: "fbm_min_eig_shifted_measures".into(),
        configuration: json!({ "n": 10, "length": 0.8, "hurst": 0.5, "seed": seed }),
        statistic: stat,
        threshold: 0.0,
        pass: stat > 0.0,
    });

    let Inputs::Quantiles(mut qs) = measures else {
        unreachable!()
    };
    qs.truncate(4);
    qs.push(qs[0].clone());
    let spec = KernelSpec::Powexp(PowExpParams {
        sigma2: 1.0,
        ell: 1.0,
        hurst: 0.5,
        nugget: 0.0,
    });
    let gram = build_gram(&spec, &Inputs::Quantiles(qs))?;
    let stat = min_eigenvalue(&gram);
    let threshold = 1e-10 * largest_eigenvalue(&gram);
    records.push(DiagnosticRecord {
        test: "duplicate_input_degenerate".into(),
        configuration: json!({ "n": 5, "duplicated": 0, "params": spec.params() }),
        statistic: stat,
        threshold,
        pass: stat <= threshold,
    });
    Ok(DiagnosticReport {
        suite: "nondegen".into(),
        records,
    })
}

/// Settings of the identifiability suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityConfig {
    pub sizes: Vec<usize>,
    /// POWEXP `θ₀ = [σ², ℓ, H, δ]`.
    pub theta0: [f64; 4],
    pub length: f64,
    pub grid_size: usize,
    pub offsets: Vec<f64>,
    pub alpha: f64,
    pub n_random: usize,
    /// Sample size of the curvature check.
    pub curvature_n: usize,
    pub seed: u64,
}

impl Default for IdentifiabilityConfig {
    fn default() -> Self {
        Self {
            sizes: vec![50, 100, 200],
            theta0: [1.0, 1.0, 0.5, 0.05],
            length: 0.8,
            grid_size: 128,
            offsets: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            alpha: 0.5,
            n_random: 100,
            curvature_n: 100,
            seed: 7,
        }
    }
}

/// separation sweeps and stabilization across sample sizes, and the
/// curvature minimum, all on shifted random measures under POWEXP.
pub fn identifiability_suite(cfg: &IdentifiabilityConfig) -> Result<DiagnosticReport> {
    let [sigma2, ell, hurst, nugget] = cfg.theta0;
    let theta0 = KernelSpec::Powexp(PowExpParams {
        sigma2,
        ell,
        hurst,
        nugget,
    });
    theta0.validate()?;
    let free: Vec<usize> = if nugget > 0.0 { vec![0, 1, 2, 3] } else { vec![0, 1, 2] };
    // fixed alternative for the stabilization check: +0.5 on each free coordinate
    let kinds = theta0.param_kinds();
    let mut alt = theta0.params();
    for &k in &free {
        alt[k] = from_coord(kinds[k], to_coord(kinds[k], alt[k]) + 0.5);
    }
    let alt = theta0.with_params(&alt)?;

    let mut records = Vec::new();
    let mut previous: Option<(usize, f64)> = None;
    for &n in &cfg.sizes {
        let inputs = Inputs::Quantiles(quantiles_of_measures(n, cfg.length, cfg.seed, cfg.grid_size)?);
        let sweep = separation_sweep(&theta0, &inputs, &free, &cfg.offsets, cfg.alpha)?;
        records.push(DiagnosticRecord {
            test: "separation_min_outside".into(),
            configuration: json!({ "n": n, "theta0": cfg.theta0, "alpha": cfg.alpha, "offsets": cfg.offsets,
                                    "points": sweep.points, "argmin": sweep.argmin }),
            statistic: sweep.min_outside,
            threshold: 0.0,
            pass: sweep.min_outside > 0.0,
        });
        records.push(DiagnosticRecord {
            test: "separation_zero_only_at_theta0".into(),
            configuration: json!({ "n": n, "at_theta0": sweep.at_center }),
            statistic: sweep.min_off_center,
            threshold: 0.0,
            pass: sweep.min_off_center > 0.0 && sweep.at_center == 0.0,
        });
        let value = separation_sum(&alt, &theta0, &inputs)?;
        if let Some((prev_n, prev)) = previous {
            let change = (value - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
            records.push(DiagnosticRecord {
                test: "separation_stabilization".into(),
                configuration: json!({ "n": [prev_n, n], "values": [prev, value], "alternative": alt.params() }),
                statistic: change,
                threshold: 0.2,
                pass: change < 0.2,
            });
        }
        previous = Some((n, value));
    }

    let inputs = Inputs::Quantiles(quantiles_of_measures(
        cfg.curvature_n,
        cfg.length,
        cfg.seed,
        cfg.grid_size,
    )?);
    let summary = curvature_minimum(&theta0, &inputs, cfg.n_random, cfg.seed)?;
    records.push(DiagnosticRecord {
        test: "curvature_min".into(),
        configuration: json!({ "n": cfg.curvature_n, "theta0": cfg.theta0, "n_random": cfg.n_random,
                                "coordinate_min": summary.coordinate_min, "eigen_min": summary.eigen_min }),
        statistic: summary.random_min,
        threshold: 0.0,
        pass: summary.random_min > 0.0,
    });
    Ok(DiagnosticReport {
        suite: "identifiability".into(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diracs(xs: &[f64]) -> Vec<QuantileFunction> {
        xs.iter()
            .map(|&x| QuantileFunction::point_mass(x, 8).unwrap())
            .collect()
    }

    #[test]
    fn dirac_triple_values() {
        let d = diracs(&[0.0, 1.0, 2.0]);
        let c = [1.0, -2.0, 1.0];
        assert!(negdef_form(&d, &c, 1.0).unwrap().abs() < 1e-12);
        assert!((negdef_form(&d, &c, 1.5).unwrap() - 8.0).abs() < 1e-12);
        assert_eq!(negdef_form(&d, &[0.0; 3], 0.5).unwrap(), 0.0);
        assert!(negdef_form(&d, &[1.0, 1.0, 0.0], 0.5).is_err());
        assert!(negdef_form(&d[..1], &[0.0], 0.5).is_err());
    }

    #[test]
    fn single_input_min_eig() {
        let spec = KernelSpec::Powexp(PowExpParams {
            sigma2: 2.0,
            ell: 1.0,
            hurst: 0.5,
            nugget: 0.3,
        });
        let v = gram_min_eig(&spec, &Inputs::Quantiles(diracs(&[0.4]))).unwrap();
        assert!((v - 2.3).abs() < 1e-12);
    }

    #[test]
    fn separation_symmetric_and_zero_on_diagonal() {
        let inputs = Inputs::Quantiles(diracs(&[0.0, 0.5, 1.3, 2.0]));
        let a = KernelSpec::Powexp(PowExpParams {
            sigma2: 1.0,
            ell: 1.0,
            hurst: 0.5,
            nugget: 0.0,
        });
        let b = a.with_params(&[1.5, 0.7, 0.6, 0.1]).unwrap();
        assert_eq!(separation_sum(&a, &a, &inputs).unwrap(), 0.0);
        let ab = separation_sum(&a, &b, &inputs).unwrap();
        assert!(ab > 0.0);
        assert!((ab - separation_sum(&b, &a, &inputs).unwrap()).abs() < 1e-15);
        assert!(separation_sum(&a, &fbm(0.5, 8).unwrap(), &inputs).is_err());
    }

    #[test]
    fn curvature_sigma_direction_matches_symbolic_form() {
        // λ = e_σ²: ∂K/∂σ² = K/σ² off the nugget, so the sum is (1/n) Σ (K_nonugget/σ²)²
        let inputs = Inputs::Quantiles(diracs(&[0.0, 0.5, 1.3, 2.0, 2.2]));
        let spec = KernelSpec::Powexp(PowExpParams {
            sigma2: 1.7,
            ell: 0.8,
            hurst: 0.4,
            nugget: 0.05,
        });
        let s = curvature_sum(&spec, &[1.0, 0.0, 0.0, 0.0], &inputs).unwrap();
        let no_nugget = spec.with_params(&[1.7, 0.8, 0.4, 0.0]).unwrap();
        let k = build_gram(&no_nugget, &inputs).unwrap();
        let expected = k.iter().map(|v| (v / 1.7).powi(2)).sum::<f64>() / 5.0;
        assert!((s - expected).abs() < 1e-12 * expected);
        assert!(curvature_sum(&spec, &[0.0; 4], &inputs).is_err());
        assert!(curvature_sum(&spec, &[1.0, 0.0], &inputs).is_err());
    }

    #[test]
    fn curvature_minimum_bounded_by_eigenvalue() {
        let inputs = Inputs::Quantiles(diracs(&[0.0, 0.5, 1.3, 2.0, 2.2, 3.1]));
        let spec = KernelSpec::Powexp(PowExpParams {
            sigma2: 1.0,
            ell: 1.0,
            hurst: 0.5,
            nugget: 0.05,
        });
        let s = curvature_minimum(&spec, &inputs, 200, 1).unwrap();
        let e = s.eigen_min.unwrap();
        assert!(s.random_min >= e - 1e-12 && s.coordinate_min >= e - 1e-12);
    }

    #[test]
    fn sweep_center_is_zero() {
        let inputs = Inputs::Quantiles(diracs(&[0.0, 0.5, 1.3, 2.0]));
        let spec = KernelSpec::Powexp(PowExpParams {
            sigma2: 1.0,
            ell: 1.0,
            hurst: 0.5,
            nugget: 0.05,
        });
        let s = separation_sweep(&spec, &inputs, &[0, 1, 2, 3], &[-0.5, 0.0, 0.5], 0.5).unwrap();
        assert_eq!(s.points, 81);
        assert_eq!(s.at_center, 0.0);
        assert!(s.min_off_center > 0.0 && s.min_outside >= s.min_off_center);
    }

    #[test]
    fn suites_pass_small() {
        assert!(negdef_suite(10, 3).unwrap().all_pass());
        let r = nondegen_suite(10, 3).unwrap();
        assert!(r.all_pass(), "{:?}", r.failures().collect::<Vec<_>>());
    }
}
