//! Simulation study drivers: random learning distributions, the target map,
//! projection and kernel-regression baselines, and the benchmark tables.

mod baselines;
mod generators;

pub use baselines::{
    kde_density, kernel_regression_predict, silverman_bandwidth, KernelRegressionFit, DEGENERATE_BANDWIDTH,
};
pub use generators::{
    beta_samples, beta_skewness, gen_learning_distribution, matern52, matern52_sample, rng_for, sample_density,
    shifted_random_measures, target_f, LearningDistribution, LearningGenerator, MaternParams, MaternSampler,
};

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{
    quantile_from_density, quantile_from_samples, EmpiricalDistribution, GridDensity, QuantileFunction,
};
use crate::error::{Error, Result};
use crate::gp::{fit_ml, Dataset, FitConfig, NuggetMode, Provenance};
use crate::kernels::{legendre_features, pca_features, pca_fit, Inputs, KernelSpec, PowExpParams, ProjectionParams};
use crate::metrics::{cir, rmse};

/// Stream offset separating test draws from training draws.
const TEST_STREAM: u64 = 1 << 32;
/// Seed offset for sample draws, so they are independent of the density draws.
const SAMPLE_SEED: u64 = 0x5a3d_17c1;

/// Settings shared by the exact-density and sampled-input benchmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_train: usize,
    pub n_test: usize,
    /// Points of the density grid over `[0, 1]`.
    pub density_grid: usize,
    /// Quantile grid size `m`.
    pub grid_size: usize,
    pub matern: MaternParams,
    pub seed: u64,
    pub samples_per_dist: usize,
    /// Points of the KDE grid over `[0, 1]` for the kernel-regression baseline.
    pub kde_grid: usize,
    pub projection_orders: Vec<usize>,
    pub n_starts: usize,
    pub max_evals: usize,
    pub threads: usize,
    pub center_targets: bool,
    /// Nominal coverage of the predictive intervals.
    pub alpha: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_train: 100,
            n_test: 500,
            density_grid: 100,
            grid_size: crate::distribution::DEFAULT_GRID_SIZE,
            matern: MaternParams::default(),
            seed: 2024,
            samples_per_dist: 500,
            kde_grid: 1001,
            projection_orders: vec![5, 10, 15],
            n_starts: 10,
            max_evals: 400,
            threads: 0,
            center_targets: true,
            alpha: 0.9,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_train", self.n_train),
            ("n_test", self.n_test),
            ("grid_size", self.grid_size),
            ("samples_per_dist", self.samples_per_dist),
            ("n_starts", self.n_starts),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.n_train < 5 {
            return Err(Error::invalid("n_train must be at least 5"));
        }
        if self.density_grid < 2 || self.kde_grid < 2 {
            return Err(Error::invalid("density grids need at least two points"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    fn fit_config(&self, nugget: NuggetMode) -> FitConfig {
        FitConfig {
            n_starts: self.n_starts,
            max_evals: self.max_evals,
            seed: self.seed,
            nugget,
            center_targets: self.center_targets,
            threads: self.threads,
            ..FitConfig::default()
        }
    }
}

/// Settings of the Beta-skewness experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BetaConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub samples_per_dist: usize,
    /// Range of the first shape parameter `a`.
    pub a_range: (f64, f64),
    /// Second shape parameter `b`.
    pub b: f64,
    pub grid_size: usize,
    pub kde_grid: usize,
    pub seed: u64,
    pub n_starts: usize,
    pub max_evals: usize,
    pub threads: usize,
    pub center_targets: bool,
    pub alpha: f64,
}

impl Default for BetaConfig {
    fn default() -> Self {
        Self {
            n_train: 275,
            n_test: 50,
            samples_per_dist: 500,
            a_range: (3.0, 20.0),
            b: 3.0,
            grid_size: crate::distribution::DEFAULT_GRID_SIZE,
            kde_grid: 1001,
            seed: 2024,
            n_starts: 10,
            max_evals: 400,
            threads: 0,
            center_targets: true,
            alpha: 0.9,
        }
    }
}

/// A named parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

/// One model's line of a benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub model: String,
    pub rmse: f64,
    /// Only for models with a predictive variance.
    pub cir: Option<f64>,
    pub params: Vec<NamedValue>,
    /// Fitted likelihood criterion, for GP rows.
    pub criterion: Option<f64>,
    pub wall_time_s: f64,
}

/// Prediction against the truth for one test input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPair {
    pub model: String,
    pub index: usize,
    /// Experiment-specific covariate (the Beta shape `a`), if any.
    pub covariate: Option<f64>,
    pub truth: f64,
    pub mean: f64,
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub experiment: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub grid_size: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<BenchmarkRow>,
    pub pairs: Vec<PredictionPair>,
}

impl BenchmarkReport {
    pub fn row(&self, model: &str) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
        let mut out = format!(
            "{:<width$}  {:>8}  {:>8}  {:>12}  {:>9}\n",
            "model", "RMSE", "CIR", "criterion", "time (s)"
        );
        for r in &self.rows {
            let cir = r.cir.map_or("-".to_string(), |c| format!("{c:.3}"));
            let crit = r.criterion.map_or("-".to_string(), |c| format!("{c:.5}"));
            out.push_str(&format!(
                "{:<width$}  {:>8.4}  {:>8}  {:>12}  {:>9.2}\n",
                r.model, r.rmse, cir, crit, r.wall_time_s
            ));
        }
        out
    }

    /// One CSV line per row; parameters as `name=value` joined by `;`.
    pub fn rows_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model", "rmse", "cir", "criterion", "wall_time_s", "params"])?;
        for r in &self.rows {
            let params: Vec<String> = r.params.iter().map(|p| format!("{}={}", p.name, p.value)).collect();
            w.write_record([
                r.model.clone(),
                r.rmse.to_string(),
                r.cir.map(|c| c.to_string()).unwrap_or_default(),
                r.criterion.map(|c| c.to_string()).unwrap_or_default(),
                r.wall_time_s.to_string(),
                params.join(";"),
            ])?;
        }
        csv_string(w)
    }

    /// Predicted-vs-true pairs as CSV.
    pub fn pairs_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model", "index", "covariate", "truth", "mean", "sd"])?;
        for p in &self.pairs {
            w.write_record([
                p.model.clone(),
                p.index.to_string(),
                p.covariate.map(|c| c.to_string()).unwrap_or_default(),
                p.truth.to_string(),
                p.mean.to_string(),
                p.sd.map(|s| s.to_string()).unwrap_or_default(),
            ])?;
        }
        csv_string(w)
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::numeric(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::numeric(format!("csv buffer: {e}")))
}

/// Runs `f` inside a dedicated pool when `threads > 0`.
fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Exact learning and test distributions with their targets.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub train: Vec<GridDensity>,
    pub test: Vec<GridDensity>,
    pub train_quantiles: Vec<QuantileFunction>,
    pub test_quantiles: Vec<QuantileFunction>,
    pub y_train: Vec<f64>,
    pub y_test: Vec<f64>,
}

impl Scenario {
    pub fn generate(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let gen = LearningGenerator::new(cfg.density_grid, cfg.matern)?;
        let draw = |stream: u64| -> Result<(GridDensity, QuantileFunction, f64)> {
            let g = gen.generate(&mut rng_for(cfg.seed, stream))?.density;
            let q = quantile_from_density(&g, cfg.grid_size)?;
            let y = target_f(&q);
            Ok((g, q, y))
        };
        let train: Vec<_> = (0..cfg.n_train as u64)
            .into_par_iter()
            .map(draw)
            .collect::<Result<_>>()?;
        let test: Vec<_> = (0..cfg.n_test as u64)
            .into_par_iter()
            .map(|i| draw(TEST_STREAM + i))
            .collect::<Result<_>>()?;
        let (train, train_quantiles, y_train) = unzip3(train);
        let (test, test_quantiles, y_test) = unzip3(test);
        Ok(Self {
            train,
            test,
            train_quantiles,
            test_quantiles,
            y_train,
            y_test,
        })
    }
}

fn unzip3<A, B, C>(v: Vec<(A, B, C)>) -> (Vec<A>, Vec<B>, Vec<C>) {
    let mut a = Vec::with_capacity(v.len());
    let mut b = Vec::with_capacity(v.len());
    let mut c = Vec::with_capacity(v.len());
    for (x, y, z) in v {
        a.push(x);
        b.push(y);
        c.push(z);
    }
    (a, b, c)
}

fn powexp_template() -> KernelSpec {
    KernelSpec::Powexp(PowExpParams {
        sigma2: 1.0,
        ell: 1.0,
        hurst: 0.5,
        nugget: 0.0,
    })
}

fn projection_params(order: usize) -> ProjectionParams {
    ProjectionParams {
        order,
        sigma2: 1.0,
        ells: vec![1.0; order],
        hurst: 0.5,
    }
}

/// Fits a GP row and predicts the test inputs.
#[allow(clippy::too_many_arguments)]
fn gp_row(
    name: &str,
    data: Dataset,
    template: &KernelSpec,
    test: &Inputs,
    truths: &[f64],
    covariates: Option<&[f64]>,
    fit_cfg: &FitConfig,
    alpha: f64,
) -> Result<(BenchmarkRow, Vec<PredictionPair>)> {
    let start = Instant::now();
    let outcome = fit_ml(&data, template, fit_cfg)?;
    let preds = outcome.model.predict_many(test)?;
    let elapsed = start.elapsed().as_secs_f64();
    let means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
    let sds: Vec<f64> = preds.iter().map(|p| p.sd()).collect();
    let spec = outcome.model.spec();
    let row = BenchmarkRow {
        model: name.to_string(),
        rmse: rmse(&means, truths)?,
        cir: Some(cir(&means, &sds, truths, alpha)?),
        params: spec
            .param_names()
            .into_iter()
            .zip(spec.params())
            .map(|(name, value)| NamedValue { name, value })
            .collect(),
        criterion: Some(outcome.model.criterion()),
        wall_time_s: elapsed,
    };
    log::info!("{name}: rmse {:.4} in {elapsed:.2}s", row.rmse);
    let pairs = (0..truths.len())
        .map(|i| PredictionPair {
            model: name.to_string(),
            index: i,
            covariate: covariates.map(|c| c[i]),
            truth: truths[i],
            mean: means[i],
            sd: Some(sds[i]),
        })
        .collect();
    Ok((row, pairs))
}

fn kernel_regression_row(
    train: &[(GridDensity, f64)],
    test: &[GridDensity],
    truths: &[f64],
    covariates: Option<&[f64]>,
    seed: u64,
) -> Result<(BenchmarkRow, Vec<PredictionPair>)> {
    let start = Instant::now();
    let fit = kernel_regression_predict(train, test, None, seed)?;
    let elapsed = start.elapsed().as_secs_f64();
    let name = "kernel regression";
    let row = BenchmarkRow {
        model: name.to_string(),
        rmse: rmse(&fit.predictions, truths)?,
        cir: None,
        params: vec![NamedValue {
            name: "bandwidth".into(),
            value: fit.bandwidth,
        }],
        criterion: None,
        wall_time_s: elapsed,
    };
    let pairs = fit
        .predictions
        .iter()
        .enumerate()
        .map(|(i, &mean)| PredictionPair {
            model: name.to_string(),
            index: i,
            covariate: covariates.map(|c| c[i]),
            truth: truths[i],
            mean,
            sd: None,
        })
        .collect();
    Ok((row, pairs))
}

fn push(report: &mut BenchmarkReport, (row, pairs): (BenchmarkRow, Vec<PredictionPair>)) {
    report.rows.push(row);
    report.pairs.extend(pairs);
}

fn empty_report<C: Serialize>(
    experiment: &str,
    cfg: &C,
    seed: u64,
    grid_size: usize,
    notes: Vec<String>,
) -> BenchmarkReport {
    BenchmarkReport {
        metadata: ReportMetadata {
            experiment: experiment.to_string(),
            config: serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null),
            seed,
            grid_size,
            notes,
        },
        rows: Vec::new(),
        pairs: Vec::new(),
    }
}

fn density_notes(cfg: &SimConfig) -> Vec<String> {
    vec![
        format!(
            "densities: Gaussian pdf times exp(Matern 5/2 draw, sigma={}, ell={}) renormalized on {} points over [0,1]",
            cfg.matern.sigma, cfg.matern.ell, cfg.density_grid
        ),
        format!("targets centered before fitting: {}", cfg.center_targets),
    ]
}

/// Exact-density benchmark: POWEXP on quantile functions (with and without
/// a fitted nugget) against Legendre and PCA projection kernels.
pub fn table1_benchmark(cfg: &SimConfig) -> Result<BenchmarkReport> {
    with_pool(cfg.threads, || table1_inner(cfg))?
}

fn table1_inner(cfg: &SimConfig) -> Result<BenchmarkReport> {
    let sc = Scenario::generate(cfg)?;
    let mut report = empty_report("table1", cfg, cfg.seed, cfg.grid_size, density_notes(cfg));
    let q_train = Inputs::Quantiles(sc.train_quantiles.clone());
    let q_test = Inputs::Quantiles(sc.test_quantiles.clone());

    for (name, nugget) in [
        ("distribution", NuggetMode::Off),
        ("distribution+nugget", NuggetMode::Fit),
    ] {
        let data = Dataset::uniform(q_train.clone(), sc.y_train.clone(), Provenance::Density)?;
        push(
            &mut report,
            gp_row(
                name,
                data,
                &powexp_template(),
                &q_test,
                &sc.y_test,
                None,
                &cfg.fit_config(nugget),
                cfg.alpha,
            )?,
        );
    }

    for &order in &cfg.projection_orders {
        let feats = |gs: &[GridDensity]| -> Result<Inputs> {
            Ok(Inputs::Features(
                gs.iter().map(|g| legendre_features(g, order)).collect::<Result<_>>()?,
            ))
        };
        let data = Dataset::uniform(feats(&sc.train)?, sc.y_train.clone(), Provenance::Features)?;
        let template = KernelSpec::Legendre(projection_params(order));
        push(
            &mut report,
            gp_row(
                &format!("Legendre {order}"),
                data,
                &template,
                &feats(&sc.test)?,
                &sc.y_test,
                None,
                &cfg.fit_config(NuggetMode::Off),
                cfg.alpha,
            )?,
        );
    }

    for &order in &cfg.projection_orders {
        let basis = pca_fit(&sc.train, order)?;
        let feats = |gs: &[GridDensity]| -> Result<Inputs> {
            Ok(Inputs::Features(
                gs.iter().map(|g| pca_features(g, &basis)).collect::<Result<_>>()?,
            ))
        };
        let data = Dataset::uniform(feats(&sc.train)?, sc.y_train.clone(), Provenance::Features)?;
        let template = KernelSpec::Pca {
            params: projection_params(order),
            basis: basis.clone(),
        };
        push(
            &mut report,
            gp_row(
                &format!("PCA {order}"),
                data,
                &template,
                &feats(&sc.test)?,
                &sc.y_test,
                None,
                &cfg.fit_config(NuggetMode::Off),
                cfg.alpha,
            )?,
        );
    }
    Ok(report)
}

/// Sampled inputs for one distribution: empirical quantiles and a KDE.
fn sampled_views(samples: Vec<f64>, m: usize, kde_grid: usize) -> Result<(QuantileFunction, GridDensity)> {
    let h = silverman_bandwidth(&samples).max(1.0 / (kde_grid - 1) as f64);
    let kde = kde_density(&samples, Some(h), 0.0, 1.0, kde_grid)?;
    let q = quantile_from_samples(&EmpiricalDistribution::new(samples)?, m)?;
    Ok((q, kde))
}

fn kde_notes(kde_grid: usize) -> Vec<String> {
    vec![format!(
        "kernel regression: Gaussian KDE on {kde_grid} points over [0,1], Silverman bandwidth floored at the grid spacing; \
         Gaussian weights on trapezoid L1 distances; bandwidth from median(D)*2^k, k=-4..4, by 80/20 validation split"
    )]
}

/// Sampled-input benchmark: POWEXP with fitted nugget on empirical quantile
/// functions against Nadaraya–Watson regression on KDE densities.
pub fn table2_benchmark(cfg: &SimConfig) -> Result<BenchmarkReport> {
    with_pool(cfg.threads, || table2_inner(cfg))?
}

fn table2_inner(cfg: &SimConfig) -> Result<BenchmarkReport> {
    let sc = Scenario::generate(cfg)?;
    let mut notes = density_notes(cfg);
    notes.push(format!("{} samples per distribution", cfg.samples_per_dist));
    notes.extend(kde_notes(cfg.kde_grid));
    let mut report = empty_report("table2", cfg, cfg.seed, cfg.grid_size, notes);

    let sample_seed = cfg.seed.wrapping_add(SAMPLE_SEED);
    let views = |gs: &[GridDensity], offset: u64| -> Result<Vec<(QuantileFunction, GridDensity)>> {
        gs.par_iter()
            .enumerate()
            .map(|(i, g)| {
                let xs = sample_density(g, cfg.samples_per_dist, &mut rng_for(sample_seed, offset + i as u64));
                sampled_views(xs, cfg.grid_size, cfg.kde_grid)
            })
            .collect()
    };
    let (tr_q, tr_kde): (Vec<_>, Vec<_>) = views(&sc.train, 0)?.into_iter().unzip();
    let (te_q, te_kde): (Vec<_>, Vec<_>) = views(&sc.test, TEST_STREAM)?.into_iter().unzip();

    let data = Dataset::uniform(
        Inputs::Quantiles(tr_q),
        sc.y_train.clone(),
        Provenance::Empirical {
            sample_count: cfg.samples_per_dist,
        },
    )?;
    push(
        &mut report,
        gp_row(
            "distribution+nugget",
            data,
            &powexp_template(),
            &Inputs::Quantiles(te_q),
            &sc.y_test,
            None,
            &cfg.fit_config(NuggetMode::Fit),
            cfg.alpha,
        )?,
    );
    let train: Vec<(GridDensity, f64)> = tr_kde.into_iter().zip(sc.y_train.iter().copied()).collect();
    push(
        &mut report,
        kernel_regression_row(&train, &te_kde, &sc.y_test, None, cfg.seed)?,
    );
    Ok(report)
}

/// Beta(a, b) skewness regression from samples, GP against kernel regression.
pub fn beta_skewness_experiment(cfg: &BetaConfig) -> Result<BenchmarkReport> {
    with_pool(cfg.threads, || beta_inner(cfg))?
}

fn beta_inner(cfg: &BetaConfig) -> Result<BenchmarkReport> {
    if cfg.n_train < 5 || cfg.n_test == 0 || cfg.samples_per_dist < 2 {
        return Err(Error::invalid(
            "beta experiment needs n_train >= 5, n_test >= 1 and >= 2 samples",
        ));
    }
    let (lo, hi) = cfg.a_range;
    if !(lo > 0.0 && lo < hi && cfg.b > 0.0) {
        return Err(Error::invalid(format!(
            "invalid Beta shapes: a in [{lo}, {hi}], b = {}",
            cfg.b
        )));
    }
    let mut notes = vec![format!(
        "Beta(a, {}) with a ~ U[{lo}, {hi}], {} samples per distribution via gamma ratio",
        cfg.b, cfg.samples_per_dist
    )];
    notes.extend(kde_notes(cfg.kde_grid));
    notes.push(format!("targets centered before fitting: {}", cfg.center_targets));
    let mut report = empty_report("beta", cfg, cfg.seed, cfg.grid_size, notes);

    type Draw = (f64, f64, QuantileFunction, GridDensity);
    let draw = |stream: u64| -> Result<Draw> {
        let mut rng = rng_for(cfg.seed, stream);
        let a = rng.random_range(lo..hi);
        let xs = beta_samples(a, cfg.b, cfg.samples_per_dist, &mut rng)?;
        let (q, kde) = sampled_views(xs, cfg.grid_size, cfg.kde_grid)?;
        Ok((a, beta_skewness(a, cfg.b), q, kde))
    };
    let train: Vec<Draw> = (0..cfg.n_train as u64)
        .into_par_iter()
        .map(draw)
        .collect::<Result<_>>()?;
    let test: Vec<Draw> = (0..cfg.n_test as u64)
        .into_par_iter()
        .map(|i| draw(TEST_STREAM + i))
        .collect::<Result<_>>()?;

    let y_train: Vec<f64> = train.iter().map(|d| d.1).collect();
    let y_test: Vec<f64> = test.iter().map(|d| d.1).collect();
    let a_test: Vec<f64> = test.iter().map(|d| d.0).collect();
    let fit_cfg = FitConfig {
        n_starts: cfg.n_starts,
        max_evals: cfg.max_evals,
        seed: cfg.seed,
        nugget: NuggetMode::Fit,
        center_targets: cfg.center_targets,
        threads: cfg.threads,
        ..FitConfig::default()
    };
    let data = Dataset::uniform(
        Inputs::Quantiles(train.iter().map(|d| d.2.clone()).collect()),
        y_train.clone(),
        Provenance::Empirical {
            sample_count: cfg.samples_per_dist,
        },
    )?;
    push(
        &mut report,
        gp_row(
            "distribution+nugget",
            data,
            &powexp_template(),
            &Inputs::Quantiles(test.iter().map(|d| d.2.clone()).collect()),
            &y_test,
            Some(&a_test),
            &fit_cfg,
            cfg.alpha,
        )?,
    );
    let kr_train: Vec<(GridDensity, f64)> = train.iter().map(|d| (d.3.clone(), d.1)).collect();
    let kr_test: Vec<GridDensity> = test.iter().map(|d| d.3.clone()).collect();
    push(
        &mut report,
        kernel_regression_row(&kr_train, &kr_test, &y_test, Some(&a_test), cfg.seed)?,
    );
    Ok(report)
}
