//! Covariance functions on distribution inputs.
//!
//! Two kernels act directly on quantile functions through W₂: the
//! fractional Brownian kernel with a fixed origin measure and the
//! power-exponential kernel `σ² exp(-W₂^{2H} / ℓ) + δ·1{W₂ = 0}`. Two
//! baselines act on finite projections of densities (shifted Legendre
//! coefficients or functional PCA scores).
//!
//! Batch evaluation goes through [`PairTable`], which caches everything that
//! does not depend on the kernel parameters (pairwise distances, origin
//! distances, coordinate differences) so that re-evaluating a Gram matrix at
//! new parameters costs O(n²).

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::distribution::{distance_matrix, trapezoid, w2_distance, GridDensity, QuantileFunction};
use crate::error::{Error, Result};

/// Projection coefficients of a density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector {
    pub coeffs: Vec<f64>,
}

impl FeatureVector {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("feature vector has non-finite entries"));
        }
        Ok(Self { coeffs })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// Principal directions of a set of discretized densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    /// Subtract `mean` before projecting. Off by default: the fit is centered
    /// but scores are taken on the raw density vectors.
    #[serde(default)]
    pub center_projection: bool,
}

impl PcaBasis {
    pub fn grid_len(&self) -> usize {
        self.mean.len()
    }

    pub fn order(&self) -> usize {
        self.components.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbmParams {
    #[serde(default = "one")]
    pub sigma2: f64,
    pub hurst: f64,
    pub origin: QuantileFunction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowExpParams {
    pub sigma2: f64,
    pub ell: f64,
    pub hurst: f64,
    #[serde(default)]
    pub nugget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionParams {
    pub order: usize,
    pub sigma2: f64,
    pub ells: Vec<f64>,
    pub hurst: f64,
}

fn one() -> f64 {
    1.0
}

/// Kernel family plus its parameters, tagged by `kernel` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "lowercase")]
pub enum KernelSpec {
    Fbm(FbmParams),
    Powexp(PowExpParams),
    Legendre(ProjectionParams),
    Pca {
        #[serde(flatten)]
        params: ProjectionParams,
        basis: PcaBasis,
    },
}

/// Variant tag without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Fbm,
    Powexp,
    Legendre,
    Pca,
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            KernelFamily::Fbm => "fbm",
            KernelFamily::Powexp => "powexp",
            KernelFamily::Legendre => "legendre",
            KernelFamily::Pca => "pca",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fbm" => Ok(KernelFamily::Fbm),
            "powexp" => Ok(KernelFamily::Powexp),
            "legendre" => Ok(KernelFamily::Legendre),
            "pca" => Ok(KernelFamily::Pca),
            other => Err(Error::invalid(format!("unknown kernel family '{other}'"))),
        }
    }
}

/// Role of a kernel parameter; drives bounds and coordinate transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Variance,
    Length,
    Hurst,
    Nugget,
}

impl KernelSpec {
    pub fn family(&self) -> KernelFamily {
        match self {
            KernelSpec::Fbm(_) => KernelFamily::Fbm,
            KernelSpec::Powexp(_) => KernelFamily::Powexp,
            KernelSpec::Legendre(_) => KernelFamily::Legendre,
            KernelSpec::Pca { .. } => KernelFamily::Pca,
        }
    }

    /// Checks every parameter against its admissible range.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        match self {
            KernelSpec::Fbm(p) => {
                positive("sigma2", p.sigma2)?;
                if !(p.hurst > 0.0 && p.hurst <= 1.0) {
                    return Err(Error::invalid(format!("fbm hurst must lie in (0, 1], got {}", p.hurst)));
                }
            }
            KernelSpec::Powexp(p) => {
                positive("sigma2", p.sigma2)?;
                positive("ell", p.ell)?;
                if !(p.hurst > 0.0 && p.hurst <= 1.0) {
                    return Err(Error::invalid(format!("hurst must lie in (0, 1], got {}", p.hurst)));
                }
                if !(p.nugget.is_finite() && p.nugget >= 0.0) {
                    return Err(Error::invalid(format!("nugget must be >= 0, got {}", p.nugget)));
                }
            }
            KernelSpec::Legendre(p) | KernelSpec::Pca { params: p, .. } => {
                if p.order == 0 || p.ells.len() != p.order {
                    return Err(Error::invalid(format!(
                        "projection order {} with {} length scales",
                        p.order,
                        p.ells.len()
                    )));
                }
                positive("sigma2", p.sigma2)?;
                for (i, &l) in p.ells.iter().enumerate() {
                    positive(&format!("ell_{i}"), l)?;
                }
                if !(p.hurst > 0.0 && p.hurst <= 1.0) {
                    return Err(Error::invalid(format!("hurst must lie in (0, 1], got {}", p.hurst)));
                }
            }
        }
        if let KernelSpec::Pca { params, basis } = self {
            if basis.order() != params.order {
                return Err(Error::invalid("PCA basis order differs from kernel order"));
            }
        }
        Ok(())
    }

    /// Parameter values in the documented order:
    /// fbm `[σ², H]`, powexp `[σ², ℓ, H, δ]`, projections `[σ², ℓ₀, …, ℓ_{o-1}, H]`.
    pub fn params(&self) -> Vec<f64> {
        match self {
            KernelSpec::Fbm(p) => vec![p.sigma2, p.hurst],
            KernelSpec::Powexp(p) => vec![p.sigma2, p.ell, p.hurst, p.nugget],
            KernelSpec::Legendre(p) | KernelSpec::Pca { params: p, .. } => {
                let mut v = Vec::with_capacity(p.order + 2);
                v.push(p.sigma2);
                v.extend_from_slice(&p.ells);
                v.push(p.hurst);
                v
            }
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            KernelSpec::Fbm(_) => vec!["sigma2".into(), "hurst".into()],
            KernelSpec::Powexp(_) => vec!["sigma2".into(), "ell".into(), "hurst".into(), "nugget".into()],
            KernelSpec::Legendre(p) | KernelSpec::Pca { params: p, .. } => {
                let mut v = vec!["sigma2".to_string()];
                v.extend((0..p.order).map(|i| format!("ell_{i}")));
                v.push("hurst".into());
                v
            }
        }
    }

    pub fn param_kinds(&self) -> Vec<ParamKind> {
        match self {
            KernelSpec::Fbm(_) => vec![ParamKind::Variance, ParamKind::Hurst],
            KernelSpec::Powexp(_) => vec![
                ParamKind::Variance,
                ParamKind::Length,
                ParamKind::Hurst,
                ParamKind::Nugget,
            ],
            KernelSpec::Legendre(p) | KernelSpec::Pca { params: p, .. } => {
                let mut v = vec![ParamKind::Variance];
                v.extend(std::iter::repeat_n(ParamKind::Length, p.order));
                v.push(ParamKind::Hurst);
                v
            }
        }
    }

    /// Same family and fixed data (origin, basis) with new parameter values.
    pub fn with_params(&self, theta: &[f64]) -> Result<KernelSpec> {
        let expected = self.params().len();
        if theta.len() != expected {
            return Err(Error::invalid(format!(
                "expected {expected} parameters, got {}",
                theta.len()
            )));
        }
        let spec = match self {
            KernelSpec::Fbm(p) => KernelSpec::Fbm(FbmParams {
                sigma2: theta[0],
                hurst: theta[1],
                origin: p.origin.clone(),
            }),
            KernelSpec::Powexp(_) => KernelSpec::Powexp(PowExpParams {
                sigma2: theta[0],
                ell: theta[1],
                hurst: theta[2],
                nugget: theta[3],
            }),
            KernelSpec::Legendre(p) => KernelSpec::Legendre(projection_from(p.order, theta)),
            KernelSpec::Pca { params, basis } => KernelSpec::Pca {
                params: projection_from(params.order, theta),
                basis: basis.clone(),
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Index of the nugget parameter, if the family has one.
    pub fn nugget_index(&self) -> Option<usize> {
        matches!(self, KernelSpec::Powexp(_)).then_some(3)
    }

    /// Variance of a single input, `K(x, x)`, for a query that coincides with itself.
    pub fn self_covariance(&self, input: InputRef<'_>) -> Result<f64> {
        kernel_value(self, input, input)
    }
}

fn projection_from(order: usize, theta: &[f64]) -> ProjectionParams {
    ProjectionParams {
        order,
        sigma2: theta[0],
        ells: theta[1..=order].to_vec(),
        hurst: theta[order + 1],
    }
}

/// Training or query inputs for a GP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "items", rename_all = "lowercase")]
pub enum Inputs {
    Quantiles(Vec<QuantileFunction>),
    Features(Vec<FeatureVector>),
}

/// Borrowed single input.
#[derive(Debug, Clone, Copy)]
pub enum InputRef<'a> {
    Quantile(&'a QuantileFunction),
    Features(&'a FeatureVector),
}

impl Inputs {
    pub fn len(&self) -> usize {
        match self {
            Inputs::Quantiles(v) => v.len(),
            Inputs::Features(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> InputRef<'_> {
        match self {
            Inputs::Quantiles(v) => InputRef::Quantile(&v[i]),
            Inputs::Features(v) => InputRef::Features(&v[i]),
        }
    }

    /// Subset in the given index order.
    pub fn select(&self, idx: &[usize]) -> Inputs {
        match self {
            Inputs::Quantiles(v) => Inputs::Quantiles(idx.iter().map(|&i| v[i].clone()).collect()),
            Inputs::Features(v) => Inputs::Features(idx.iter().map(|&i| v[i].clone()).collect()),
        }
    }

    pub fn single(input: InputRef<'_>) -> Inputs {
        match input {
            InputRef::Quantile(q) => Inputs::Quantiles(vec![q.clone()]),
            InputRef::Features(f) => Inputs::Features(vec![f.clone()]),
        }
    }
}

/// Fractional Brownian kernel `½(W^{2H}(μ₀,a) + W^{2H}(μ₀,b) − W^{2H}(a,b))`, scaled by σ².
pub fn fbm_kernel(spec: &FbmParams, a: &QuantileFunction, b: &QuantileFunction) -> Result<f64> {
    let da = w2_distance(&spec.origin, a)?;
    let db = w2_distance(&spec.origin, b)?;
    let dab = w2_distance(a, b)?;
    Ok(fbm_value(spec.sigma2, spec.hurst, da, db, dab))
}

/// Power-exponential kernel with nugget on exact equality of the quantile arrays.
pub fn powexp_kernel(spec: &PowExpParams, a: &QuantileFunction, b: &QuantileFunction) -> Result<f64> {
    let w = w2_distance(a, b)?;
    Ok(powexp_value(spec, w, a.values() == b.values()))
}

/// `σ² exp(-(Σ_i |Δa_i| / ℓ_i)^H)` on projection coefficients.
pub fn projection_kernel(spec: &ProjectionParams, fa: &FeatureVector, fb: &FeatureVector) -> Result<f64> {
    if fa.len() != spec.order || fb.len() != spec.order {
        return Err(Error::invalid(format!(
            "feature lengths {} and {} differ from kernel order {}",
            fa.len(),
            fb.len(),
            spec.order
        )));
    }
    let s: f64 = fa
        .coeffs
        .iter()
        .zip(&fb.coeffs)
        .zip(&spec.ells)
        .map(|((x, y), l)| (x - y).abs() / l)
        .sum();
    Ok(spec.sigma2 * (-pow_or_zero(s, spec.hurst)).exp())
}

/// Dispatches a single kernel evaluation on any variant.
pub fn kernel_value(spec: &KernelSpec, a: InputRef<'_>, b: InputRef<'_>) -> Result<f64> {
    match (spec, a, b) {
        (KernelSpec::Fbm(p), InputRef::Quantile(a), InputRef::Quantile(b)) => fbm_kernel(p, a, b),
        (KernelSpec::Powexp(p), InputRef::Quantile(a), InputRef::Quantile(b)) => powexp_kernel(p, a, b),
        (KernelSpec::Legendre(p) | KernelSpec::Pca { params: p, .. }, InputRef::Features(a), InputRef::Features(b)) => {
            projection_kernel(p, a, b)
        }
        _ => Err(Error::invalid(format!(
            "{} kernel cannot act on this input type",
            spec.family()
        ))),
    }
}

#[inline]
fn pow_or_zero(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.powf(e)
    }
}

/// `x^{2H} ln x`, continuously extended by 0 at `x = 0`.
#[inline]
fn pow_log(x: f64, two_h: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.powf(two_h) * x.ln()
    }
}

#[inline]
fn fbm_value(sigma2: f64, hurst: f64, da: f64, db: f64, dab: f64) -> f64 {
    let e = 2.0 * hurst;
    0.5 * sigma2 * (pow_or_zero(da, e) + pow_or_zero(db, e) - pow_or_zero(dab, e))
}

#[inline]
fn powexp_value(p: &PowExpParams, w: f64, same: bool) -> f64 {
    let base = p.sigma2 * (-pow_or_zero(w, 2.0 * p.hurst) / p.ell).exp();
    if same {
        base + p.nugget
    } else {
        base
    }
}

/// Parameter-independent pair data for a block of kernel evaluations.
#[derive(Debug, Clone)]
pub struct PairTable {
    rows: usize,
    cols: usize,
    data: PairData,
}

#[derive(Debug, Clone)]
enum PairData {
    Wasserstein {
        dist: Vec<f64>,
        same: Vec<bool>,
        row_origin: Vec<f64>,
        col_origin: Vec<f64>,
    },
    Projection {
        order: usize,
        abs_diff: Vec<f64>,
    },
}

impl PairTable {
    /// Symmetric table for the Gram matrix of `inputs`.
    pub fn gram(spec: &KernelSpec, inputs: &Inputs) -> Result<Self> {
        let n = inputs.len();
        match inputs {
            Inputs::Quantiles(qs) => {
                Self::check_quantile_family(spec)?;
                let dist = distance_matrix(qs)?;
                let mut same = vec![false; n * n];
                for i in 0..n {
                    same[i * n + i] = true;
                    for j in i + 1..n {
                        let s = qs[i].values() == qs[j].values();
                        same[i * n + j] = s;
                        same[j * n + i] = s;
                    }
                }
                let origin = Self::origin_distances(spec, qs)?;
                Ok(Self {
                    rows: n,
                    cols: n,
                    data: PairData::Wasserstein {
                        dist,
                        same,
                        row_origin: origin.clone(),
                        col_origin: origin,
                    },
                })
            }
            Inputs::Features(_) => Self::between(spec, inputs, inputs),
        }
    }

    /// Cross table: rows index `a`, columns index `b`.
    pub fn between(spec: &KernelSpec, a: &Inputs, b: &Inputs) -> Result<Self> {
        let (rows, cols) = (a.len(), b.len());
        match (a, b) {
            (Inputs::Quantiles(qa), Inputs::Quantiles(qb)) => {
                Self::check_quantile_family(spec)?;
                let mut dist = Vec::with_capacity(rows * cols);
                let mut same = Vec::with_capacity(rows * cols);
                for x in qa {
                    for y in qb {
                        dist.push(w2_distance(x, y)?);
                        same.push(x.values() == y.values());
                    }
                }
                Ok(Self {
                    rows,
                    cols,
                    data: PairData::Wasserstein {
                        dist,
                        same,
                        row_origin: Self::origin_distances(spec, qa)?,
                        col_origin: Self::origin_distances(spec, qb)?,
                    },
                })
            }
            (Inputs::Features(fa), Inputs::Features(fb)) => {
                let order = match spec {
                    KernelSpec::Legendre(p) | KernelSpec::Pca { params: p, .. } => p.order,
                    _ => {
                        return Err(Error::invalid(format!(
                            "{} kernel cannot act on projection features",
                            spec.family()
                        )))
                    }
                };
                if let Some(f) = fa.iter().chain(fb).find(|f| f.len() != order) {
                    return Err(Error::invalid(format!(
                        "feature vector of length {} for kernel order {order}",
                        f.len()
                    )));
                }
                let mut abs_diff = Vec::with_capacity(rows * cols * order);
                for x in fa {
                    for y in fb {
                        abs_diff.extend(x.coeffs.iter().zip(&y.coeffs).map(|(u, v)| (u - v).abs()));
                    }
                }
                Ok(Self {
                    rows,
                    cols,
                    data: PairData::Projection { order, abs_diff },
                })
            }
            _ => Err(Error::invalid("mixed input types in kernel table")),
        }
    }

    fn check_quantile_family(spec: &KernelSpec) -> Result<()> {
        match spec {
            KernelSpec::Fbm(_) | KernelSpec::Powexp(_) => Ok(()),
            _ => Err(Error::invalid(format!(
                "{} kernel needs projection features, not quantile functions",
                spec.family()
            ))),
        }
    }

    fn origin_distances(spec: &KernelSpec, qs: &[QuantileFunction]) -> Result<Vec<f64>> {
        match spec {
            KernelSpec::Fbm(p) => qs.iter().map(|q| w2_distance(&p.origin, q)).collect(),
            _ => Ok(Vec::new()),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Pairwise W₂ distances, when the table was built from quantile inputs.
    pub fn distances(&self) -> Option<&[f64]> {
        match &self.data {
            PairData::Wasserstein { dist, .. } => Some(dist),
            PairData::Projection { .. } => None,
        }
    }

    /// Per-coordinate median of `|Δa_i|` over off-diagonal pairs (projection tables).
    pub fn coordinate_medians(&self) -> Option<Vec<f64>> {
        let PairData::Projection { order, abs_diff } = &self.data else {
            return None;
        };
        let mut out = Vec::with_capacity(*order);
        for c in 0..*order {
            let mut vals: Vec<f64> = (0..self.rows * self.cols)
                .filter(|idx| idx / self.cols != idx % self.cols)
                .map(|idx| abs_diff[idx * order + c])
                .collect();
            out.push(median(&mut vals));
        }
        Some(out)
    }

    /// Kernel value at flat index `idx = i * cols + j`.
    #[inline]
    pub fn value(&self, spec: &KernelSpec, idx: usize) -> f64 {
        let (i, j) = (idx / self.cols, idx % self.cols);
        match (&self.data, spec) {
            (PairData::Wasserstein { dist, same, .. }, KernelSpec::Powexp(p)) => powexp_value(p, dist[idx], same[idx]),
            (
                PairData::Wasserstein {
                    dist,
                    row_origin,
                    col_origin,
                    ..
                },
                KernelSpec::Fbm(p),
            ) => fbm_value(p.sigma2, p.hurst, row_origin[i], col_origin[j], dist[idx]),
            (PairData::Projection { order, abs_diff }, KernelSpec::Legendre(p) | KernelSpec::Pca { params: p, .. }) => {
                let d = &abs_diff[idx * order..(idx + 1) * order];
                let s: f64 = d.iter().zip(&p.ells).map(|(x, l)| x / l).sum();
                p.sigma2 * (-pow_or_zero(s, p.hurst)).exp()
            }
            _ => f64::NAN,
        }
    }

    /// Gradient of the kernel value at `idx` with respect to [`KernelSpec::params`].
    pub fn gradient(&self, spec: &KernelSpec, idx: usize, out: &mut [f64]) {
        let (i, j) = (idx / self.cols, idx % self.cols);
        match (&self.data, spec) {
            (PairData::Wasserstein { dist, same, .. }, KernelSpec::Powexp(p)) => {
                let w = dist[idx];
                let w2h = pow_or_zero(w, 2.0 * p.hurst);
                let e = (-w2h / p.ell).exp();
                let base = p.sigma2 * e;
                out[0] = e;
                out[1] = base * w2h / (p.ell * p.ell);
                out[2] = -base * 2.0 * pow_log(w, 2.0 * p.hurst) / p.ell;
                out[3] = if same[idx] { 1.0 } else { 0.0 };
            }
            (
                PairData::Wasserstein {
                    dist,
                    row_origin,
                    col_origin,
                    ..
                },
                KernelSpec::Fbm(p),
            ) => {
                let (da, db, dab) = (row_origin[i], col_origin[j], dist[idx]);
                let e = 2.0 * p.hurst;
                out[0] = fbm_value(1.0, p.hurst, da, db, dab);
                out[1] = p.sigma2 * (pow_log(da, e) + pow_log(db, e) - pow_log(dab, e));
            }
            (PairData::Projection { order, abs_diff }, KernelSpec::Legendre(p) | KernelSpec::Pca { params: p, .. }) => {
                let o = *order;
                let d = &abs_diff[idx * o..(idx + 1) * o];
                let s: f64 = d.iter().zip(&p.ells).map(|(x, l)| x / l).sum();
                let e = (-pow_or_zero(s, p.hurst)).exp();
                out[0] = e;
                if s == 0.0 {
                    out[1..o + 2].iter_mut().for_each(|g| *g = 0.0);
                } else {
                    let base = p.sigma2 * e;
                    let ds = base * p.hurst * s.powf(p.hurst - 1.0);
                    for c in 0..o {
                        out[1 + c] = ds * d[c] / (p.ells[c] * p.ells[c]);
                    }
                    out[o + 1] = -base * s.powf(p.hurst) * s.ln();
                }
            }
            _ => out.iter_mut().for_each(|g| *g = f64::NAN),
        }
    }

    /// Dense kernel block at `spec`.
    pub fn matrix(&self, spec: &KernelSpec) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.value(spec, i * self.cols + j))
    }
}

pub(crate) fn median(vals: &mut [f64]) -> f64 {
    if vals.is_empty() {
        return 0.0;
    }
    vals.sort_by(f64::total_cmp);
    let n = vals.len();
    if n % 2 == 1 {
        vals[n / 2]
    } else {
        0.5 * (vals[n / 2 - 1] + vals[n / 2])
    }
}

/// Shifted Legendre polynomials on `[0, 1]`, normalized to unit L² norm,
/// evaluated at `t` for degrees `0..order`.
pub fn shifted_legendre(order: usize, t: f64) -> Vec<f64> {
    let x = 2.0 * t - 1.0;
    let mut p = Vec::with_capacity(order);
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..order {
        if k == 1 {
            prev = 1.0;
            cur = x;
        } else if k > 1 {
            let kf = k as f64;
            let next = ((2.0 * kf - 1.0) * x * cur - (kf - 1.0) * prev) / kf;
            prev = cur;
            cur = next;
        }
        p.push(cur * (2.0 * k as f64 + 1.0).sqrt());
    }
    p
}

/// Legendre coefficients `a_i = ∫₀¹ f p_i` by the trapezoid rule on the density grid.
pub fn legendre_features(g: &GridDensity, order: usize) -> Result<FeatureVector> {
    if g.support() != (0.0, 1.0) {
        return Err(Error::invalid(format!(
            "Legendre features need support [0, 1], got {:?}",
            g.support()
        )));
    }
    if order == 0 {
        return Err(Error::invalid("Legendre order must be >= 1"));
    }
    let d = g.len();
    let h = g.spacing();
    let mut integrands = vec![vec![0.0; d]; order];
    for (j, &f) in g.values().iter().enumerate() {
        for (i, p) in shifted_legendre(order, g.abscissa(j)).into_iter().enumerate() {
            integrands[i][j] = f * p;
        }
    }
    FeatureVector::new(integrands.iter().map(|v| trapezoid(v, h)).collect())
}

/// Principal components of the centered density vectors.
pub fn pca_fit(densities: &[GridDensity], order: usize) -> Result<PcaBasis> {
    if order == 0 {
        return Err(Error::invalid("PCA order must be >= 1"));
    }
    if densities.len() < order {
        return Err(Error::invalid(format!(
            "PCA of order {order} needs at least {order} densities, got {}",
            densities.len()
        )));
    }
    let d = densities[0].len();
    if densities
        .iter()
        .any(|g| g.len() != d || g.support() != densities[0].support())
    {
        return Err(Error::invalid("PCA needs all densities on the same grid"));
    }
    let n = densities.len();
    let mut mean = vec![0.0; d];
    for g in densities {
        for (m, v) in mean.iter_mut().zip(g.values()) {
            *m += v / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| densities[i].values()[j] - mean[j]);
    let cov = centered.transpose() * &centered;
    let eig = SymmetricEigen::new(cov);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let components = idx
        .iter()
        .take(order)
        .map(|&k| {
            let mut w: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            w.iter_mut().for_each(|x| *x /= norm);
            let lead = w
                .iter()
                .enumerate()
                .fold(0, |best, (j, x)| if x.abs() > w[best].abs() { j } else { best });
            if w[lead] < 0.0 {
                w.iter_mut().for_each(|x| *x = -*x);
            }
            w
        })
        .collect();
    Ok(PcaBasis {
        mean,
        components,
        center_projection: false,
    })
}

/// Scores `a_i = (1/d) Σ_j v_j (w_i)_j` of a density against a PCA basis.
pub fn pca_features(g: &GridDensity, basis: &PcaBasis) -> Result<FeatureVector> {
    let d = basis.grid_len();
    if g.len() != d {
        return Err(Error::invalid(format!(
            "density has {} grid points, PCA basis expects {d}",
            g.len()
        )));
    }
    let coeffs = basis
        .components
        .iter()
        .map(|w| {
            let dot: f64 = g
                .values()
                .iter()
                .zip(&basis.mean)
                .zip(w)
                .map(|((v, m), wj)| if basis.center_projection { (v - m) * wj } else { v * wj })
                .sum();
            dot / d as f64
        })
        .collect();
    FeatureVector::new(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{quantile_from_samples, shift, EmpiricalDistribution};

    fn q(xs: &[f64], m: usize) -> QuantileFunction {
        quantile_from_samples(&EmpiricalDistribution::new(xs.to_vec()).unwrap(), m).unwrap()
    }

    fn pe(sigma2: f64, ell: f64, hurst: f64, nugget: f64) -> PowExpParams {
        PowExpParams {
            sigma2,
            ell,
            hurst,
            nugget,
        }
    }

    #[test]
    fn fbm_vanishes_at_origin() {
        let origin = q(&[0.0, 1.0], 8);
        let spec = FbmParams {
            sigma2: 1.0,
            hurst: 0.3,
            origin: origin.clone(),
        };
        let b = q(&[4.0, -1.0, 2.0, 0.5], 8);
        assert_eq!(fbm_kernel(&spec, &origin, &b).unwrap(), 0.0);
    }

    #[test]
    fn fbm_variance_of_centered_input_from_dirac_origin() {
        let m = 64;
        let spec = FbmParams {
            sigma2: 1.0,
            hurst: 0.7,
            origin: QuantileFunction::point_mass(0.0, m).unwrap(),
        };
        let a = q(&[-1.0, 1.0, -3.0, 3.0], m);
        // Var(a) = (1 + 1 + 9 + 9) / 4 = 5
        let k = fbm_kernel(&spec, &a, &a).unwrap();
        assert!((k - 5f64.powf(0.7)).abs() < 1e-12);
    }

    #[test]
    fn powexp_examples() {
        let a = q(&[0.0, 1.0], 10);
        let spec = pe(1.3, 0.7, 0.4, 0.2);
        assert!((powexp_kernel(&spec, &a, &a).unwrap() - 1.5).abs() < 1e-15);

        let x = QuantileFunction::point_mass(0.0, 4).unwrap();
        let y = QuantileFunction::point_mass(4.0, 4).unwrap();
        let v = powexp_kernel(&pe(1.0, 1.0, 0.5, 0.0), &x, &y).unwrap();
        assert!((v - (-4.0f64).exp()).abs() < 1e-15);
        let y = QuantileFunction::point_mass(2.0, 4).unwrap();
        let v = powexp_kernel(&pe(1.0, 1.0, 0.5, 0.0), &x, &y).unwrap();
        assert!((v - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn powexp_shift_invariant() {
        let a = q(&[0.1, 0.5, 0.9], 30);
        let b = q(&[0.3, 0.2], 30);
        let spec = pe(2.0, 0.3, 0.8, 0.1);
        let base = powexp_kernel(&spec, &a, &b).unwrap();
        for c in [-3.0, 0.25, 7.0] {
            let v = powexp_kernel(&spec, &shift(&a, c), &shift(&b, c)).unwrap();
            assert!((v - base).abs() <= 1e-15 * base.abs().max(1.0));
        }
    }

    #[test]
    fn projection_examples() {
        let spec = ProjectionParams {
            order: 1,
            sigma2: 2.0,
            ells: vec![0.5],
            hurst: 1.0,
        };
        let fa = FeatureVector::new(vec![0.2]).unwrap();
        let fb = FeatureVector::new(vec![0.7]).unwrap();
        assert_eq!(projection_kernel(&spec, &fa, &fa).unwrap(), 2.0);
        assert!((projection_kernel(&spec, &fa, &fb).unwrap() - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        let fc = FeatureVector::new(vec![0.9]).unwrap();
        assert!(projection_kernel(&spec, &fa, &fc).unwrap() < projection_kernel(&spec, &fa, &fb).unwrap());
        assert!(projection_kernel(&spec, &fa, &FeatureVector::new(vec![0.0, 1.0]).unwrap()).is_err());
    }

    #[test]
    fn shifted_legendre_closed_forms() {
        let closed = |k: usize, t: f64| -> f64 {
            match k {
                0 => 1.0,
                1 => 3f64.sqrt() * (2.0 * t - 1.0),
                2 => 5f64.sqrt() * (6.0 * t * t - 6.0 * t + 1.0),
                3 => 7f64.sqrt() * (20.0 * t.powi(3) - 30.0 * t * t + 12.0 * t - 1.0),
                4 => 3.0 * (70.0 * t.powi(4) - 140.0 * t.powi(3) + 90.0 * t * t - 20.0 * t + 1.0),
                5 => {
                    11f64.sqrt()
                        * (252.0 * t.powi(5) - 630.0 * t.powi(4) + 560.0 * t.powi(3) - 210.0 * t * t + 30.0 * t - 1.0)
                }
                _ => unreachable!(),
            }
        };
        for t in [0.0, 0.13, 0.5, 0.77, 1.0] {
            let p = shifted_legendre(6, t);
            for k in 0..6 {
                assert!((p[k] - closed(k, t)).abs() < 1e-11, "degree {k} at {t}");
            }
        }
        // unit norm, checked by fine trapezoid quadrature
        let d = 20001;
        let h = 1.0 / (d - 1) as f64;
        for k in 0..6 {
            let sq: Vec<f64> = (0..d).map(|j| shifted_legendre(6, j as f64 * h)[k].powi(2)).collect();
            assert!((trapezoid(&sq, h) - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn legendre_features_of_uniform() {
        let g = GridDensity::new(0.0, 1.0, vec![1.0; 100_001]).unwrap();
        let f = legendre_features(&g, 5).unwrap();
        assert!((f.coeffs[0] - 1.0).abs() < 1e-8);
        for c in &f.coeffs[1..] {
            assert!(c.abs() < 1e-8, "{c}");
        }
    }

    #[test]
    fn legendre_features_recover_linear_component() {
        let d = 4001;
        let vals: Vec<f64> = (0..d)
            .map(|j| 1.0 + 0.5 * shifted_legendre(2, j as f64 / (d - 1) as f64)[1])
            .collect();
        let g = GridDensity::new(0.0, 1.0, vals).unwrap();
        let f = legendre_features(&g, 3).unwrap();
        assert!((f.coeffs[1] - 0.5).abs() < 1e-6);
        assert!(f.coeffs[2].abs() < 1e-6);
    }

    #[test]
    fn legendre_features_need_unit_support() {
        let g = GridDensity::new(0.0, 2.0, vec![0.5; 11]).unwrap();
        assert!(legendre_features(&g, 2).is_err());
    }

    fn bump(center: f64, d: usize) -> GridDensity {
        let vals = (0..d)
            .map(|j| {
                let x = j as f64 / (d - 1) as f64;
                (-(x - center).powi(2) / 0.02).exp()
            })
            .collect();
        GridDensity::normalized(0.0, 1.0, vals).unwrap()
    }

    #[test]
    fn pca_of_two_densities_is_their_difference() {
        let a = bump(0.3, 50);
        let b = bump(0.6, 50);
        let basis = pca_fit(&[a.clone(), b.clone()], 1).unwrap();
        let diff: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
        let norm = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
        let dot: f64 = diff.iter().zip(&basis.components[0]).map(|(x, w)| x * w).sum::<f64>() / norm;
        assert!((dot.abs() - 1.0).abs() < 1e-10);
        let w = &basis.components[0];
        let lead = w
            .iter()
            .cloned()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        assert!(lead > 0.0);
    }

    #[test]
    fn pca_identical_densities_give_zero_centered_scores() {
        let a = bump(0.4, 30);
        let mut basis = pca_fit(&[a.clone(), a.clone(), a.clone()], 2).unwrap();
        basis.center_projection = true;
        let f = pca_features(&a, &basis).unwrap();
        assert!(f.coeffs.iter().all(|c| c.abs() < 1e-14));
    }

    #[test]
    fn pca_errors() {
        let a = bump(0.4, 30);
        assert!(pca_fit(&[a.clone()], 2).is_err());
        let basis = pca_fit(&[a.clone(), bump(0.5, 30)], 1).unwrap();
        assert!(pca_features(&bump(0.5, 31), &basis).is_err());
    }

    #[test]
    fn spec_round_trip_json() {
        let spec = KernelSpec::Powexp(pe(1.0, 2.0, 0.5, 0.01));
        let s = serde_json::to_string(&spec).unwrap();
        assert!(s.contains("\"kernel\":\"powexp\""));
        assert_eq!(serde_json::from_str::<KernelSpec>(&s).unwrap(), spec);

        let a = bump(0.3, 20);
        let b = bump(0.6, 20);
        let spec = KernelSpec::Pca {
            params: ProjectionParams {
                order: 1,
                sigma2: 1.0,
                ells: vec![0.3],
                hurst: 0.9,
            },
            basis: pca_fit(&[a, b], 1).unwrap(),
        };
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<KernelSpec>(&s).unwrap(), spec);
    }

    #[test]
    fn with_params_round_trips_and_validates() {
        let spec = KernelSpec::Legendre(ProjectionParams {
            order: 3,
            sigma2: 1.0,
            ells: vec![1.0, 2.0, 3.0],
            hurst: 0.5,
        });
        assert_eq!(spec.with_params(&spec.params()).unwrap(), spec);
        assert_eq!(spec.param_names().len(), 5);
        assert!(spec.with_params(&[1.0, 1.0, -1.0, 1.0, 0.5]).is_err());
    }

    #[test]
    fn table_gradient_matches_finite_differences() {
        let qs: Vec<QuantileFunction> = [[0.0, 0.3], [0.5, 1.1], [2.0, 2.2]].iter().map(|x| q(x, 16)).collect();
        let inputs = Inputs::Quantiles(qs.clone());
        let specs = [
            KernelSpec::Powexp(pe(1.3, 0.8, 0.6, 0.1)),
            KernelSpec::Fbm(FbmParams {
                sigma2: 0.9,
                hurst: 0.4,
                origin: q(&[1.0], 16),
            }),
        ];
        for spec in specs {
            let table = PairTable::gram(&spec, &inputs).unwrap();
            let theta = spec.params();
            let mut g = vec![0.0; theta.len()];
            for idx in [1usize, 2, 5] {
                table.gradient(&spec, idx, &mut g);
                for k in 0..theta.len() {
                    let h = 1e-6 * theta[k].abs().max(1e-3);
                    let mut tp = theta.clone();
                    tp[k] += h;
                    let mut tm = theta.clone();
                    tm[k] -= h;
                    let fd = (table.value(&spec.with_params(&tp).unwrap(), idx)
                        - table.value(&spec.with_params(&tm).unwrap(), idx))
                        / (2.0 * h);
                    assert!((fd - g[k]).abs() < 1e-6 * (1.0 + fd.abs()), "{k}: {fd} vs {}", g[k]);
                }
            }
        }
    }
}
