//! Gaussian-process likelihood, maximum-likelihood fitting and Kriging.
//!
//! The criterion minimized is
//! `L(θ) = (1/n) ln det R_θ + (1/n) yᵀ R_θ⁻¹ y`,
//! i.e. the Gaussian negative log-likelihood scaled by `2/n` and without the
//! `ln 2π` constant. Fitting runs several local searches from Latin-hypercube
//! starts inside a box and keeps the best.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{median, InputRef, Inputs, KernelFamily, KernelSpec, PairTable, ParamKind};
use crate::linalg::Cholesky;
use crate::optim::{bfgs, nelder_mead, BfgsOptions, NelderMeadOptions};

/// Where an input distribution came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Density,
    Empirical { sample_count: usize },
    Features,
}

/// Paired inputs and scalar outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Inputs,
    pub targets: Vec<f64>,
    pub meta: Vec<Provenance>,
}

impl Dataset {
    pub fn new(inputs: Inputs, targets: Vec<f64>, meta: Vec<Provenance>) -> Result<Self> {
        if inputs.len() != targets.len() || meta.len() != targets.len() {
            return Err(Error::invalid(format!(
                "dataset has {} inputs, {} targets and {} provenance tags",
                inputs.len(),
                targets.len(),
                meta.len()
            )));
        }
        if targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::invalid("targets must be finite"));
        }
        Ok(Self { inputs, targets, meta })
    }

    /// Dataset with every input tagged by the same provenance.
    pub fn uniform(inputs: Inputs, targets: Vec<f64>, tag: Provenance) -> Result<Self> {
        let meta = vec![tag; targets.len()];
        Self::new(inputs, targets, meta)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Dense Gram matrix `[K(x_i, x_j)]`.
pub fn build_gram(spec: &KernelSpec, inputs: &Inputs) -> Result<DMatrix<f64>> {
    if inputs.is_empty() {
        return Err(Error::invalid("Gram matrix needs at least one input"));
    }
    let table = PairTable::gram(spec, inputs)?;
    gram_from_table(spec, &table)
}

fn gram_from_table(spec: &KernelSpec, table: &PairTable) -> Result<DMatrix<f64>> {
    let r = table.matrix(spec);
    if let Some(pos) = r.iter().position(|v| !v.is_finite()) {
        let n = r.nrows();
        return Err(Error::numeric(format!(
            "non-finite kernel value at pair ({}, {})",
            pos % n,
            pos / n
        )));
    }
    Ok(r)
}

/// Value of the likelihood criterion with the jitter that was needed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Criterion {
    pub value: f64,
    pub jitter: f64,
}

struct Evaluation {
    value: f64,
    jitter: f64,
    grad: Option<Vec<f64>>,
}

fn evaluate(
    spec: &KernelSpec,
    table: &PairTable,
    y: &DVector<f64>,
    rel_jitter: f64,
    with_grad: bool,
) -> Result<Evaluation> {
    let n = y.len();
    let r = gram_from_table(spec, table)?;
    let chol = Cholesky::with_jitter(&r, rel_jitter)?;
    let z = chol.solve_lower(y);
    let value = (chol.log_det() + z.norm_squared()) / n as f64;
    if !value.is_finite() {
        return Err(Error::numeric("likelihood criterion is not finite"));
    }
    let grad = if with_grad {
        let alpha = chol.solve_upper(&z);
        let rinv = chol.inverse();
        let p = spec.params().len();
        let mut grad = vec![0.0; p];
        let mut dk = vec![0.0; p];
        for i in 0..n {
            for j in i..n {
                let w = rinv[(i, j)] - alpha[i] * alpha[j];
                let weight = if i == j { w } else { 2.0 * w };
                table.gradient(spec, i * n + j, &mut dk);
                for (g, d) in grad.iter_mut().zip(&dk) {
                    *g += weight * d;
                }
            }
        }
        grad.iter_mut().for_each(|g| *g /= n as f64);
        Some(grad)
    } else {
        None
    };
    Ok(Evaluation {
        value,
        jitter: chol.jitter(),
        grad,
    })
}

/// Likelihood criterion `L(θ)` of `data` under `spec`, computed by Cholesky.
pub fn neg_log_lik(spec: &KernelSpec, data: &Dataset, rel_jitter: f64) -> Result<Criterion> {
    spec.validate()?;
    let table = PairTable::gram(spec, &data.inputs)?;
    let y = DVector::from_column_slice(&data.targets);
    let e = evaluate(spec, &table, &y, rel_jitter, false)?;
    Ok(Criterion {
        value: e.value,
        jitter: e.jitter,
    })
}

/// Gradient of `L(θ)` with respect to [`KernelSpec::params`]:
/// `∂L/∂θ_k = (1/n)(Tr(R⁻¹ ∂_k R) − αᵀ ∂_k R α)`, `α = R⁻¹ y`.
pub fn neg_log_lik_grad(spec: &KernelSpec, data: &Dataset, rel_jitter: f64) -> Result<Vec<f64>> {
    spec.validate()?;
    let table = PairTable::gram(spec, &data.inputs)?;
    let y = DVector::from_column_slice(&data.targets);
    let e = evaluate(spec, &table, &y, rel_jitter, true)?;
    Ok(e.grad.expect("gradient requested"))
}

/// How the power-exponential nugget is handled during a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NuggetMode {
    Fit,
    Fixed(f64),
    Off,
}

impl std::str::FromStr for NuggetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fit" => Ok(NuggetMode::Fit),
            "off" => Ok(NuggetMode::Off),
            other => match other.strip_prefix("fixed:") {
                Some(v) => v
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v >= 0.0)
                    .map(NuggetMode::Fixed)
                    .ok_or_else(|| Error::invalid(format!("bad nugget value '{v}'"))),
                None => Err(Error::invalid(format!(
                    "nugget must be fit, off or fixed:<v>, got '{other}'"
                ))),
            },
        }
    }
}

/// Fitting options.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Per-parameter boxes in [`KernelSpec::params`] order; data-driven defaults when `None`.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub n_starts: usize,
    pub max_evals: usize,
    pub seed: u64,
    /// Relative jitter, multiplied by the mean Gram diagonal.
    pub jitter: f64,
    pub nugget: NuggetMode,
    /// Subtract the training mean before fitting and add it back when predicting.
    pub center_targets: bool,
    /// Worker threads for the multi-start search; 0 uses the ambient rayon pool.
    pub threads: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            bounds: None,
            n_starts: 10,
            max_evals: 400,
            seed: 0,
            jitter: 1e-10,
            nugget: NuggetMode::Off,
            center_targets: true,
            threads: 0,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(Error::invalid("n_starts must be >= 1"));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(Error::invalid("jitter must be >= 0"));
        }
        if let Some(b) = &self.bounds {
            if let Some((lo, hi)) = b.iter().find(|(lo, hi)| !(lo < hi)) {
                return Err(Error::invalid(format!("bound [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }
}

/// Smooth bijection between an unconstrained coordinate and a parameter box.
#[derive(Debug, Clone, Copy, PartialEq)]
enum BoxMap {
    /// `θ = exp(a + (b − a) s(u))`, `[a, b]` the log-bounds.
    Log { a: f64, b: f64 },
    /// `θ = lo + (hi − lo) s(u)`.
    Linear { lo: f64, hi: f64 },
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn logit(s: f64) -> f64 {
    let s = s.clamp(1e-12, 1.0 - 1e-12);
    (s / (1.0 - s)).ln()
}

impl BoxMap {
    fn new(kind: ParamKind, lo: f64, hi: f64) -> Result<Self> {
        match kind {
            ParamKind::Hurst => Ok(BoxMap::Linear { lo, hi }),
            _ => {
                if !(lo > 0.0) {
                    return Err(Error::invalid(format!(
                        "positive parameter needs a lower bound > 0, got {lo}"
                    )));
                }
                Ok(BoxMap::Log { a: lo.ln(), b: hi.ln() })
            }
        }
    }

    fn to_param(self, u: f64) -> f64 {
        let s = sigmoid(u);
        match self {
            BoxMap::Log { a, b } => (a + (b - a) * s).exp(),
            BoxMap::Linear { lo, hi } => lo + (hi - lo) * s,
        }
    }

    fn derivative(self, u: f64) -> f64 {
        let s = sigmoid(u);
        let ds = s * (1.0 - s);
        match self {
            BoxMap::Log { a, b } => self.to_param(u) * (b - a) * ds,
            BoxMap::Linear { lo, hi } => (hi - lo) * ds,
        }
    }

    fn from_fraction(self, s: f64) -> f64 {
        logit(s)
    }

    fn to_unconstrained(self, theta: f64) -> f64 {
        match self {
            BoxMap::Log { a, b } => logit((theta.ln() - a) / (b - a)),
            BoxMap::Linear { lo, hi } => logit((theta - lo) / (hi - lo)),
        }
    }
}

/// Data-driven default boxes, in [`KernelSpec::params`] order.
///
/// σ² ∈ [1e-6, 1e4]·var(y); H ∈ [0.01, 1] (fbm: [0.01, 0.99]);
/// δ ∈ [1e-6, 10]·var(y); ℓ spans 1e-3 to 1e3 times the range of the median
/// pairwise `W^{2H}` over `H ∈ [0, 1]`; projection `ℓ_i` span 1e-3 to 1e3
/// times the median `|Δa_i|` (a coordinate whose median is below 1e-8 of the
/// largest one uses the largest instead).
pub fn default_bounds(template: &KernelSpec, table: &PairTable, targets: &[f64]) -> Vec<(f64, f64)> {
    let var = {
        let n = targets.len() as f64;
        let mean = targets.iter().sum::<f64>() / n;
        let v = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        if v.is_finite() && v > 0.0 {
            v
        } else {
            1.0
        }
    };
    let dist_median = table
        .distances()
        .map(|d| {
            let n = table.rows();
            let mut off: Vec<f64> = (0..n * n).filter(|i| i / n != i % n).map(|i| d[i]).collect();
            median(&mut off)
        })
        .filter(|m| *m > 0.0)
        .unwrap_or(1.0);
    let coord_medians = table.coordinate_medians();
    let mut length_idx = 0;
    template
        .param_kinds()
        .into_iter()
        .map(|kind| match kind {
            ParamKind::Variance => (1e-6 * var, 1e4 * var),
            ParamKind::Nugget => (1e-6 * var, 10.0 * var),
            ParamKind::Hurst => match template.family() {
                KernelFamily::Fbm => (0.01, 0.99),
                _ => (0.01, 1.0),
            },
            ParamKind::Length => {
                let bound = match &coord_medians {
                    Some(m) => {
                        // a coordinate that only varies at rounding level borrows the largest scale
                        let top = m.iter().copied().fold(0.0, f64::max);
                        let fallback = if top > 0.0 { top } else { 1.0 };
                        let s = m[length_idx];
                        let s = if s > 1e-8 * top { s } else { fallback };
                        (1e-3 * s, 1e3 * s)
                    }
                    None => {
                        let sq = dist_median * dist_median;
                        (1e-3 * sq.min(1.0), 1e3 * sq.max(1.0))
                    }
                };
                length_idx += 1;
                bound
            }
        })
        .collect()
}

/// The likelihood as a function of unconstrained optimizer coordinates.
///
/// Only the free parameters move; fixed ones (for example a nugget that is
/// switched off) keep their template value.
pub struct LikelihoodSurface {
    template: KernelSpec,
    table: PairTable,
    y: DVector<f64>,
    free: Vec<usize>,
    maps: Vec<BoxMap>,
    rel_jitter: f64,
}

impl LikelihoodSurface {
    pub fn new(template: &KernelSpec, data: &Dataset, targets: &[f64], config: &FitConfig) -> Result<Self> {
        config.validate()?;
        let table = PairTable::gram(template, &data.inputs)?;
        let bounds = match &config.bounds {
            Some(b) => {
                if b.len() != template.params().len() {
                    return Err(Error::invalid(format!(
                        "{} bounds for {} parameters",
                        b.len(),
                        template.params().len()
                    )));
                }
                b.clone()
            }
            None => default_bounds(template, &table, targets),
        };
        let mut theta = template.params();
        let nugget_idx = template.nugget_index();
        let mut free = Vec::new();
        let mut maps = Vec::new();
        for (k, kind) in template.param_kinds().into_iter().enumerate() {
            if Some(k) == nugget_idx {
                match config.nugget {
                    NuggetMode::Off => {
                        theta[k] = 0.0;
                        continue;
                    }
                    NuggetMode::Fixed(v) => {
                        theta[k] = v;
                        continue;
                    }
                    NuggetMode::Fit => {}
                }
            }
            let (lo, hi) = bounds[k];
            free.push(k);
            maps.push(BoxMap::new(kind, lo, hi)?);
            theta[k] = theta[k].clamp(lo, hi);
        }
        for (&k, map) in free.iter().zip(&maps) {
            theta[k] = map.to_param(map.to_unconstrained(theta[k]));
        }
        let template = template.with_params(&theta)?;
        Ok(Self {
            template,
            table,
            y: DVector::from_column_slice(targets),
            free,
            maps,
            rel_jitter: config.jitter,
        })
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    /// Indices of the free parameters within [`KernelSpec::params`].
    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    pub fn spec_at(&self, u: &[f64]) -> Result<KernelSpec> {
        let mut theta = self.template.params();
        for ((&k, map), &ui) in self.free.iter().zip(&self.maps).zip(u) {
            theta[k] = map.to_param(ui);
        }
        self.template.with_params(&theta)
    }

    pub fn to_unconstrained(&self, spec: &KernelSpec) -> Vec<f64> {
        let theta = spec.params();
        self.free
            .iter()
            .zip(&self.maps)
            .map(|(&k, map)| map.to_unconstrained(theta[k]))
            .collect()
    }

    /// Criterion at `u`.
    pub fn value(&self, u: &[f64]) -> Result<f64> {
        let spec = self.spec_at(u)?;
        evaluate(&spec, &self.table, &self.y, self.rel_jitter, false).map(|e| e.value)
    }

    /// Criterion and its gradient with respect to `u`.
    pub fn value_and_grad(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        let spec = self.spec_at(u)?;
        let e = evaluate(&spec, &self.table, &self.y, self.rel_jitter, true)?;
        let g = e.grad.expect("gradient requested");
        let gu = self
            .free
            .iter()
            .zip(&self.maps)
            .zip(u)
            .map(|((&k, map), &ui)| g[k] * map.derivative(ui))
            .collect();
        Ok((e.value, gu))
    }

    /// Latin-hypercube start points in unconstrained coordinates.
    pub fn latin_hypercube(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = self.dim();
        let mut starts = vec![vec![0.0; p]; n];
        for (d, map) in self.maps.iter().enumerate() {
            let mut strata: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                strata.swap(i, j);
            }
            for (s, start) in strata.iter().zip(starts.iter_mut()) {
                let frac = (*s as f64 + rng.random::<f64>()) / n as f64;
                start[d] = map.from_fraction(frac);
            }
        }
        starts
    }
}

/// Record of one local search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartRecord {
    pub start: Vec<f64>,
    pub start_value: Option<f64>,
    pub final_value: Option<f64>,
    pub evals: usize,
    pub converged: bool,
}

/// Fitted model together with the per-start search history.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: GPModel,
    pub starts: Vec<StartRecord>,
    pub best_start: usize,
}

/// Maximum-likelihood fit of the family of `template` (its parameter values
/// only seed fixed entries such as a fixed nugget).
pub fn fit_ml(data: &Dataset, template: &KernelSpec, config: &FitConfig) -> Result<FitOutcome> {
    if data.len() < 2 {
        return Err(Error::invalid(format!(
            "fitting needs at least 2 observations, got {}",
            data.len()
        )));
    }
    let offset = if config.center_targets {
        data.targets.iter().sum::<f64>() / data.len() as f64
    } else {
        0.0
    };
    let targets: Vec<f64> = data.targets.iter().map(|y| y - offset).collect();
    let surface = LikelihoodSurface::new(template, data, &targets, config)?;
    let starts = surface.latin_hypercube(config.n_starts, config.seed);
    let use_simplex = template.family() == KernelFamily::Fbm;

    let run = |start: &Vec<f64>| -> (StartRecord, Option<Vec<f64>>) {
        let start_value = surface.value(start).ok();
        let result = if start_value.is_none() {
            None
        } else if use_simplex {
            nelder_mead(
                |u| surface.value(u).ok(),
                start,
                &NelderMeadOptions {
                    max_evals: config.max_evals,
                    ..Default::default()
                },
            )
        } else {
            bfgs(
                |u| surface.value_and_grad(u).ok(),
                start,
                &BfgsOptions {
                    max_evals: config.max_evals,
                    ..Default::default()
                },
            )
        };
        let record = StartRecord {
            start: start.clone(),
            start_value,
            final_value: result.as_ref().map(|r| r.f),
            evals: result.as_ref().map_or(1, |r| r.evals),
            converged: result.as_ref().is_some_and(|r| r.converged),
        };
        (record, result.map(|r| r.x))
    };

    let results: Vec<(StartRecord, Option<Vec<f64>>)> = if config.threads == 0 {
        starts.par_iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| starts.par_iter().map(run).collect())
    };

    let best = results
        .iter()
        .enumerate()
        .filter_map(|(i, (rec, x))| Some((i, rec.final_value?, x.as_ref()?)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let Some((best_start, _, u)) = best else {
        return Err(Error::numeric(
            "ill-conditioned data: covariance factorization failed at every start point",
        ));
    };
    let spec = surface.spec_at(u)?;
    let mut model = GPModel::fit_at(spec, data.inputs.clone(), targets, offset, config.jitter)?;
    model.free = surface.free_indices().to_vec();
    Ok(FitOutcome {
        model,
        starts: results.into_iter().map(|(r, _)| r).collect(),
        best_start,
    })
}

/// Posterior mean and variance at one query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// A Gaussian-process model conditioned on training data.
#[derive(Debug, Clone)]
pub struct GPModel {
    spec: KernelSpec,
    inputs: Inputs,
    /// Centered targets the model was conditioned on.
    targets: Vec<f64>,
    mean_offset: f64,
    chol: Cholesky,
    alpha: DVector<f64>,
    criterion: f64,
    rel_jitter: f64,
    free: Vec<usize>,
}

impl GPModel {
    /// Conditions `spec` on `(inputs, targets + offset)`; `targets` are already centered.
    pub fn fit_at(
        spec: KernelSpec,
        inputs: Inputs,
        targets: Vec<f64>,
        mean_offset: f64,
        rel_jitter: f64,
    ) -> Result<Self> {
        spec.validate()?;
        if inputs.len() != targets.len() || targets.is_empty() {
            return Err(Error::invalid("model needs equally many (>= 1) inputs and targets"));
        }
        let table = PairTable::gram(&spec, &inputs)?;
        let r = gram_from_table(&spec, &table)?;
        let chol = Cholesky::with_jitter(&r, rel_jitter)?;
        let y = DVector::from_column_slice(&targets);
        let z = chol.solve_lower(&y);
        let criterion = (chol.log_det() + z.norm_squared()) / y.len() as f64;
        let alpha = chol.solve_upper(&z);
        let free = (0..spec.params().len()).collect();
        Ok(Self {
            spec,
            inputs,
            targets,
            mean_offset,
            chol,
            alpha,
            criterion,
            rel_jitter,
            free,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn inputs(&self) -> &Inputs {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        self.chol.l()
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// `L(θ̂)` as minimized by the fit.
    pub fn criterion(&self) -> f64 {
        self.criterion
    }

    /// Gaussian log-likelihood `−(n/2) L(θ̂)`, without the `ln 2π` term.
    pub fn log_likelihood(&self) -> f64 {
        -0.5 * self.len() as f64 * self.criterion
    }

    pub fn jitter_used(&self) -> f64 {
        self.chol.jitter()
    }

    pub fn mean_offset(&self) -> f64 {
        self.mean_offset
    }

    /// Indices of the estimated parameters within [`KernelSpec::params`].
    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    pub fn set_free_indices(&mut self, free: Vec<usize>) {
        self.free = free;
    }

    /// Kriging mean and variance at each query.
    pub fn predict_many(&self, queries: &Inputs) -> Result<Vec<Prediction>> {
        let table = PairTable::between(&self.spec, queries, &self.inputs)?;
        let n = self.len();
        (0..queries.len())
            .map(|q| {
                let r = DVector::from_fn(n, |j, _| table.value(&self.spec, q * n + j));
                if r.iter().any(|v| !v.is_finite()) {
                    return Err(Error::numeric(format!("non-finite cross-covariance for query {q}")));
                }
                let kqq = self.spec.self_covariance(queries.get(q))?;
                let mean = r.dot(&self.alpha) + self.mean_offset;
                let v = self.chol.solve_lower(&r);
                let raw = kqq - v.norm_squared();
                let variance = if raw >= 0.0 {
                    raw
                } else if raw >= -1e-8 * kqq.abs() {
                    log::warn!("clamping posterior variance {raw:e} to 0 at query {q}");
                    0.0
                } else {
                    return Err(Error::numeric(format!(
                        "posterior variance {raw:e} is negative beyond tolerance at query {q}"
                    )));
                };
                Ok(Prediction { mean, variance })
            })
            .collect()
    }

    pub fn predict(&self, query: InputRef<'_>) -> Result<Prediction> {
        Ok(self.predict_many(&Inputs::single(query))?[0])
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            spec: self.spec.clone(),
            parameter_names: self.spec.param_names(),
            parameters: self.spec.params(),
            free_parameters: self.free.clone(),
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
            mean_offset: self.mean_offset,
            alpha: self.alpha.iter().copied().collect(),
            criterion: self.criterion,
            rel_jitter: self.rel_jitter,
            jitter_used: self.chol.jitter(),
        }
    }

    /// Rebuilds the Cholesky factor and checks it reproduces the stored criterion.
    pub fn from_file(file: ModelFile) -> Result<Self> {
        file.spec.validate()?;
        let table = PairTable::gram(&file.spec, &file.inputs)?;
        let mut r = gram_from_table(&file.spec, &table)?;
        for i in 0..r.nrows() {
            r[(i, i)] += file.jitter_used;
        }
        let chol = Cholesky::new(&r)?;
        let chol = Cholesky::with_recorded_jitter(chol, file.jitter_used);
        if file.targets.len() != r.nrows() {
            return Err(Error::invalid("model file targets do not match its inputs"));
        }
        let y = DVector::from_column_slice(&file.targets);
        let z = chol.solve_lower(&y);
        let criterion = (chol.log_det() + z.norm_squared()) / y.len() as f64;
        if (criterion - file.criterion).abs() > 1e-8 * (1.0 + file.criterion.abs()) {
            return Err(Error::numeric(format!(
                "model file criterion {} does not match recomputed {criterion}",
                file.criterion
            )));
        }
        let alpha = chol.solve_upper(&z);
        Ok(Self {
            spec: file.spec,
            inputs: file.inputs,
            targets: file.targets,
            mean_offset: file.mean_offset,
            chol,
            alpha,
            criterion,
            rel_jitter: file.rel_jitter,
            free: file.free_parameters,
        })
    }
}

/// JSON persistence format of a [`GPModel`]; the Cholesky factor is not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub spec: KernelSpec,
    pub parameter_names: Vec<String>,
    pub parameters: Vec<f64>,
    pub free_parameters: Vec<usize>,
    pub inputs: Inputs,
    pub targets: Vec<f64>,
    pub mean_offset: f64,
    pub alpha: Vec<f64>,
    pub criterion: f64,
    pub rel_jitter: f64,
    pub jitter_used: f64,
}

/// Parameterization in which an information matrix is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coordinates {
    /// Raw parameter values.
    Natural,
    /// `ln` for positive parameters, `logit` for the exponent H.
    LogLogit,
}

impl Coordinates {
    /// Maps a natural parameter value to this coordinate system.
    pub fn forward(self, kind: ParamKind, theta: f64) -> f64 {
        match (self, kind) {
            (Coordinates::Natural, _) => theta,
            (Coordinates::LogLogit, ParamKind::Hurst) => (theta / (1.0 - theta)).ln(),
            (Coordinates::LogLogit, _) => theta.ln(),
        }
    }

    /// `dθ/dc` at natural value `theta`.
    fn jacobian(self, kind: ParamKind, theta: f64) -> f64 {
        match (self, kind) {
            (Coordinates::Natural, _) => 1.0,
            (Coordinates::LogLogit, ParamKind::Hurst) => theta * (1.0 - theta),
            (Coordinates::LogLogit, _) => theta,
        }
    }
}

/// `(M)_{ij} = (1/2n) Tr(R⁻¹ ∂_i R R⁻¹ ∂_j R)` with its eigenvalues.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfoMatrix {
    pub names: Vec<String>,
    pub coordinates: Coordinates,
    /// Row-major `p × p`.
    pub matrix: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

impl InfoMatrix {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        let p = self.dim();
        DMatrix::from_row_slice(p, p, &self.matrix)
    }
}

/// Information matrix of the free parameters `free` of `spec` at `inputs`.
pub fn fisher_information(
    spec: &KernelSpec,
    inputs: &Inputs,
    free: &[usize],
    coords: Coordinates,
    rel_jitter: f64,
) -> Result<InfoMatrix> {
    spec.validate()?;
    let table = PairTable::gram(spec, inputs)?;
    let r = gram_from_table(spec, &table)?;
    let chol = Cholesky::with_jitter(&r, rel_jitter)?;
    let rinv = chol.inverse();
    let n = inputs.len();
    let theta = spec.params();
    let kinds = spec.param_kinds();
    let np = theta.len();

    let mut derivs = vec![DMatrix::<f64>::zeros(n, n); free.len()];
    let mut g = vec![0.0; np];
    for i in 0..n {
        for j in i..n {
            table.gradient(spec, i * n + j, &mut g);
            for (d, &k) in derivs.iter_mut().zip(free) {
                let v = g[k] * coords.jacobian(kinds[k], theta[k]);
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
    }
    let a: Vec<DMatrix<f64>> = derivs.iter().map(|d| &rinv * d).collect();
    let p = free.len();
    let mut m = DMatrix::<f64>::zeros(p, p);
    for x in 0..p {
        for y in x..p {
            // Tr(A_x A_y) = Σ_ab (A_x)_ab (A_y)_ba
            let tr = a[x].component_mul(&a[y].transpose()).sum();
            let v = tr / (2.0 * n as f64);
            m[(x, y)] = v;
            m[(y, x)] = v;
        }
    }
    let mut eigenvalues: Vec<f64> = nalgebra::SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigenvalues.sort_by(f64::total_cmp);
    let names = spec.param_names();
    Ok(InfoMatrix {
        names: free.iter().map(|&k| names[k].clone()).collect(),
        coordinates: coords,
        matrix: m.transpose().iter().copied().collect(),
        eigenvalues,
    })
}

/// Information matrix of a fitted model at its estimate.
pub fn info_matrix(model: &GPModel, coords: Coordinates) -> Result<InfoMatrix> {
    fisher_information(
        model.spec(),
        model.inputs(),
        model.free_indices(),
        coords,
        model.rel_jitter,
    )
}
