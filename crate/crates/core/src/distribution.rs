//! One-dimensional distributions and the quadratic Wasserstein distance.
//!
//! Every distribution is reduced to its quantile function sampled on the
//! midpoint grid `(k + 1/2) / m`, `k = 0..m`. On that grid W₂ is the plain
//! root-mean-square difference of the two value arrays, which makes it an
//! exact Euclidean distance at the discrete level.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of quantile grid points.
pub const DEFAULT_GRID_SIZE: usize = 512;

/// Tolerance on the trapezoid integral of a [`GridDensity`].
pub const DENSITY_NORM_TOL: f64 = 1e-8;

/// Discretized quantile function `values[k] ≈ F⁻¹((k + 1/2) / m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileFunction {
    values: Vec<f64>,
}

impl QuantileFunction {
    /// Wraps a non-decreasing array of finite values.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("quantile function needs at least one grid point"));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite quantile value at grid index {k}")));
        }
        if let Some(k) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::invalid(format!(
                "quantile values decrease between grid indices {k} and {}",
                k + 1
            )));
        }
        Ok(Self { values })
    }

    /// Point mass at `x` on a grid of `m` points.
    pub fn point_mass(x: f64, m: usize) -> Result<Self> {
        Self::new(vec![x; m])
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Probability level of grid index `k`.
    pub fn level(&self, k: usize) -> f64 {
        midpoint_level(k, self.values.len())
    }
}

impl TryFrom<Vec<f64>> for QuantileFunction {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<QuantileFunction> for Vec<f64> {
    fn from(q: QuantileFunction) -> Self {
        q.values
    }
}

#[inline]
pub(crate) fn midpoint_level(k: usize, m: usize) -> f64 {
    (k as f64 + 0.5) / m as f64
}

/// Finite, possibly weighted, sample from a distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl EmpiricalDistribution {
    /// Uniformly weighted samples.
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        Self::build(samples, None)
    }

    /// Samples with explicit positive weights summing to one.
    pub fn weighted(samples: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != samples.len() {
            return Err(Error::invalid(format!(
                "{} weights for {} samples",
                weights.len(),
                samples.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("weights must be finite and strictly positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
        }
        Self::build(samples, Some(weights))
    }

    fn build(samples: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("empirical distribution needs at least one sample"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("samples must be finite"));
        }
        Ok(Self { samples, weights })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Density tabulated at `d` equispaced abscissae spanning `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    lo: f64,
    hi: f64,
    density: Vec<f64>,
}

impl GridDensity {
    /// Validates an already normalized density.
    pub fn new(lo: f64, hi: f64, density: Vec<f64>) -> Result<Self> {
        let g = Self::unchecked(lo, hi, density)?;
        let total = g.integral();
        if (total - 1.0).abs() > DENSITY_NORM_TOL {
            return Err(Error::invalid(format!(
                "density integrates to {total}, expected 1 within {DENSITY_NORM_TOL:e}"
            )));
        }
        Ok(g)
    }

    /// Rescales non-negative values so the trapezoid integral is one.
    pub fn normalized(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        let mut g = Self::unchecked(lo, hi, values)?;
        let total = g.integral();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::invalid(format!(
                "cannot normalize density with integral {total}"
            )));
        }
        g.density.iter_mut().for_each(|v| *v /= total);
        Ok(g)
    }

    fn unchecked(lo: f64, hi: f64, density: Vec<f64>) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!(
                "density support [{lo}, {hi}] is not a proper interval"
            )));
        }
        if density.len() < 2 {
            return Err(Error::invalid("density grid needs at least two points"));
        }
        if let Some(j) = density.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!(
                "density value {} at grid index {j} is negative or non-finite",
                density[j]
            )));
        }
        Ok(Self { lo, hi, density })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn values(&self) -> &[f64] {
        &self.density
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.density.len() - 1) as f64
    }

    pub fn abscissa(&self, j: usize) -> f64 {
        self.lo + j as f64 * self.spacing()
    }

    pub fn abscissae(&self) -> Vec<f64> {
        (0..self.density.len()).map(|j| self.abscissa(j)).collect()
    }

    /// Trapezoid integral of the tabulated values.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.density, self.spacing())
    }

    /// CDF at the grid nodes, built by trapezoid accumulation and pinned to 1 at `hi`.
    pub fn cdf_nodes(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut cdf = Vec::with_capacity(self.density.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in self.density.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            cdf.push(acc);
        }
        let total = acc;
        cdf.iter_mut().for_each(|c| *c /= total);
        cdf
    }

    /// Inverts the piecewise-linear CDF at level `t ∈ [0, 1]`.
    pub fn quantile_at(&self, t: f64) -> f64 {
        let cdf = self.cdf_nodes();
        invert_cdf(&cdf, self.lo, self.spacing(), t)
    }

    /// Linear interpolation of the density at `x`, zero outside the support.
    pub fn value_at(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        let pos = (x - self.lo) / self.spacing();
        let j = (pos.floor() as usize).min(self.density.len() - 2);
        let frac = pos - j as f64;
        self.density[j] * (1.0 - frac) + self.density[j + 1] * frac
    }

    /// Trapezoid L¹ distance between two densities tabulated on the same grid.
    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        if self.density.len() != other.density.len() || self.lo != other.lo || self.hi != other.hi {
            return Err(Error::invalid("L1 distance needs densities on identical grids"));
        }
        let diff: Vec<f64> = self
            .density
            .iter()
            .zip(&other.density)
            .map(|(a, b)| (a - b).abs())
            .collect();
        Ok(trapezoid(&diff, self.spacing()))
    }
}

pub(crate) fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    h * (inner + 0.5 * (values[0] + values[n - 1]))
}

pub(crate) fn invert_cdf(cdf: &[f64], lo: f64, h: f64, t: f64) -> f64 {
    let last = cdf.len() - 1;
    // first node whose CDF reaches t, skipping zero-mass cells
    let j = cdf.partition_point(|&c| c < t).clamp(1, last);
    let (c0, c1) = (cdf[j - 1], cdf[j]);
    let x0 = lo + (j - 1) as f64 * h;
    if c1 > c0 {
        let frac = ((t - c0) / (c1 - c0)).clamp(0.0, 1.0);
        x0 + frac * h
    } else {
        x0 + h
    }
}

/// First and second raw moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m1: f64,
    pub m2: f64,
}

impl Moments {
    /// `m2 - m1²`, clamped at zero when the negative part is rounding noise.
    pub fn variance(&self) -> f64 {
        let v = self.m2 - self.m1 * self.m1;
        if (-1e-12..0.0).contains(&v) {
            0.0
        } else {
            v
        }
    }
}

/// Quantile function of a (weighted) empirical distribution, using the
/// right-continuous inverse `inf{u : F(u) ≥ t}` without interpolation.
pub fn quantile_from_samples(e: &EmpiricalDistribution, m: usize) -> Result<QuantileFunction> {
    if m == 0 {
        return Err(Error::invalid("grid size must be positive"));
    }
    let n = e.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| e.samples[i].total_cmp(&e.samples[j]));
    let values = match &e.weights {
        None => {
            // F jumps to (j+1)/n at the j-th order statistic; compare in integers so
            // grid levels landing exactly on a jump resolve to the lower atom.
            (0..m)
                .map(|k| {
                    let num = (2 * k + 1) * n;
                    let j = num.div_ceil(2 * m) - 1;
                    e.samples[order[j.min(n - 1)]]
                })
                .collect()
        }
        Some(w) => {
            let mut cum = Vec::with_capacity(n);
            let mut acc = 0.0;
            for &i in &order {
                acc += w[i];
                cum.push(acc);
            }
            (0..m)
                .map(|k| {
                    let t = midpoint_level(k, m);
                    let j = cum.partition_point(|&c| c < t - 1e-12).min(n - 1);
                    e.samples[order[j]]
                })
                .collect()
        }
    };
    QuantileFunction::new(values)
}

/// Quantile function of a tabulated density by piecewise-linear CDF inversion.
pub fn quantile_from_density(g: &GridDensity, m: usize) -> Result<QuantileFunction> {
    if m == 0 {
        return Err(Error::invalid("grid size must be positive"));
    }
    let total = g.integral();
    if (total - 1.0).abs() > DENSITY_NORM_TOL {
        return Err(Error::invalid(format!("density integrates to {total}, expected 1")));
    }
    let cdf = g.cdf_nodes();
    let h = g.spacing();
    let values: Vec<f64> = (0..m)
        .map(|k| invert_cdf(&cdf, g.lo, h, midpoint_level(k, m)).clamp(g.lo, g.hi))
        .collect();
    QuantileFunction::new(values)
}

/// Squared W₂ between two quantile functions on the same grid.
pub fn w2_squared(a: &QuantileFunction, b: &QuantileFunction) -> Result<f64> {
    if a.grid_size() != b.grid_size() {
        return Err(Error::invalid(format!(
            "quantile grid sizes differ ({} vs {})",
            a.grid_size(),
            b.grid_size()
        )));
    }
    let sum: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.grid_size() as f64)
}

/// Quadratic Wasserstein distance.
pub fn w2_distance(a: &QuantileFunction, b: &QuantileFunction) -> Result<f64> {
    w2_squared(a, b).map(f64::sqrt)
}

/// Symmetric matrix of pairwise W₂ distances, row-major `n × n`.
///
/// Rows are computed in parallel on the current rayon pool; each entry is
/// evaluated by exactly one task so the result does not depend on the
/// thread count.
pub fn distance_matrix(inputs: &[QuantileFunction]) -> Result<Vec<f64>> {
    let n = inputs.len();
    if let Some(q) = inputs.iter().find(|q| q.grid_size() != inputs[0].grid_size()) {
        return Err(Error::invalid(format!(
            "mixed quantile grid sizes ({} vs {})",
            inputs[0].grid_size(),
            q.grid_size()
        )));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| w2_distance(&inputs[i], &inputs[j]).expect("grid sizes checked"))
                .collect()
        })
        .collect();
    let mut d = vec![0.0; n * n];
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    Ok(d)
}

/// Exact W₂ between uniform empirical measures by brute force over all
/// `n!` assignments. Intended as a test oracle; refuses `n > 8`.
pub fn w2_oracle_discrete(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("oracle needs equally many atoms on both sides"));
    }
    let n = xs.len();
    if n == 0 {
        return Err(Error::invalid("oracle needs at least one atom"));
    }
    if n > 8 {
        return Err(Error::invalid(format!("oracle refuses n = {n} > 8 (n! assignments)")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let cost: f64 = p.iter().enumerate().map(|(i, &j)| (xs[i] - ys[j]).powi(2)).sum();
        best = best.min(cost);
    });
    Ok((best / n as f64).sqrt())
}

fn permute(p: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}

/// First two raw moments by midpoint quadrature of `∫₀¹ q(t)^k dt`.
pub fn moments_of(q: &QuantileFunction) -> Moments {
    let m = q.grid_size() as f64;
    let m1 = q.values.iter().sum::<f64>() / m;
    let m2 = q.values.iter().map(|v| v * v).sum::<f64>() / m;
    Moments { m1, m2 }
}

/// Push-forward by the translation `x ↦ x + c`.
pub fn shift(q: &QuantileFunction, c: f64) -> QuantileFunction {
    QuantileFunction {
        values: q.values.iter().map(|v| v + c).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emp(xs: &[f64]) -> EmpiricalDistribution {
        EmpiricalDistribution::new(xs.to_vec()).unwrap()
    }

    /// Brute-force generalized inverse straight from the definition.
    fn brute_quantile(xs: &[f64], t: f64) -> f64 {
        let n = xs.len() as f64;
        let mut cands: Vec<f64> = xs.to_vec();
        cands.sort_by(f64::total_cmp);
        *cands
            .iter()
            .find(|&&u| xs.iter().filter(|&&x| x <= u).count() as f64 / n >= t)
            .unwrap()
    }

    #[test]
    fn point_mass_quantile() {
        let q = quantile_from_samples(&emp(&[3.0]), 4).unwrap();
        assert_eq!(q.values(), &[3.0; 4]);
    }

    #[test]
    fn two_atoms_quantile() {
        let q = quantile_from_samples(&emp(&[1.0, 2.0]), 4).unwrap();
        assert_eq!(q.values(), &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn unsorted_three_atoms_match_brute_force() {
        let xs = [0.7, 0.1, 0.4];
        let q = quantile_from_samples(&emp(&xs), 6).unwrap();
        let expected: Vec<f64> = (0..6).map(|k| brute_quantile(&xs, midpoint_level(k, 6))).collect();
        assert_eq!(expected, vec![0.1, 0.1, 0.4, 0.4, 0.7, 0.7]);
        assert_eq!(q.values(), expected.as_slice());
    }

    #[test]
    fn grid_level_on_a_jump_takes_lower_atom() {
        // t = 1/2 coincides with F(1) = 1/2
        let q = quantile_from_samples(&emp(&[1.0, 2.0]), 1).unwrap();
        assert_eq!(q.values(), &[1.0]);
        let xs = [5.0, -1.0, 2.0, 8.0, 0.5];
        for m in [1, 3, 5, 10, 7, 20] {
            let q = quantile_from_samples(&emp(&xs), m).unwrap();
            for k in 0..m {
                assert_eq!(q.values()[k], brute_quantile(&xs, midpoint_level(k, m)));
            }
        }
    }

    #[test]
    fn weighted_quantile() {
        let e = EmpiricalDistribution::weighted(vec![2.0, 1.0], vec![0.25, 0.75]).unwrap();
        let q = quantile_from_samples(&e, 4).unwrap();
        assert_eq!(q.values(), &[1.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn empty_and_bad_weights_rejected() {
        assert!(EmpiricalDistribution::new(vec![]).is_err());
        assert!(EmpiricalDistribution::weighted(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
        assert!(EmpiricalDistribution::weighted(vec![1.0, 2.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn uniform_density_quantiles() {
        let g = GridDensity::new(0.0, 1.0, vec![1.0; 11]).unwrap();
        let q = quantile_from_density(&g, 2).unwrap();
        assert!((q.values()[0] - 0.25).abs() < 1e-12);
        assert!((q.values()[1] - 0.75).abs() < 1e-12);

        let g = GridDensity::new(2.0, 4.0, vec![0.5; 5]).unwrap();
        let q = quantile_from_density(&g, 4).unwrap();
        for (v, e) in q.values().iter().zip([2.25, 2.75, 3.25, 3.75]) {
            assert!((v - e).abs() < 1e-12, "{v} vs {e}");
        }
    }

    #[test]
    fn triangular_density_against_closed_form() {
        let d = 4001;
        let xs: Vec<f64> = (0..d).map(|j| j as f64 / (d - 1) as f64).collect();
        let g = GridDensity::new(0.0, 1.0, xs.iter().map(|x| 2.0 * x).collect()).unwrap();
        let q = quantile_from_density(&g, 4).unwrap();
        // F(x) = x², so F⁻¹(t) = √t
        for (k, v) in q.values().iter().enumerate() {
            let t = midpoint_level(k, 4);
            assert!((v - t.sqrt()).abs() < 1e-4, "k={k}: {v} vs {}", t.sqrt());
        }
    }

    #[test]
    fn density_validation() {
        assert!(GridDensity::new(0.0, 1.0, vec![2.0; 5]).is_err());
        assert!(GridDensity::new(0.0, 1.0, vec![1.0, -1.0, 3.0]).is_err());
        assert!(GridDensity::new(1.0, 0.0, vec![1.0; 3]).is_err());
        let g = GridDensity::normalized(0.0, 2.0, vec![3.0; 9]).unwrap();
        assert!((g.integral() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn density_quantiles_stay_in_support_with_zero_mass_cells() {
        let g = GridDensity::normalized(0.0, 1.0, vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let q = quantile_from_density(&g, 64).unwrap();
        assert!(q.values().iter().all(|v| (0.125..=0.875).contains(v)));
    }

    #[test]
    fn w2_of_point_masses() {
        let a = QuantileFunction::point_mass(1.5, 16).unwrap();
        let b = QuantileFunction::point_mass(-2.0, 16).unwrap();
        assert!((w2_distance(&a, &b).unwrap() - 3.5).abs() < 1e-15);
        assert_eq!(w2_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn w2_two_point_supports() {
        let a = quantile_from_samples(&emp(&[0.0, 1.0]), 100).unwrap();
        let b = quantile_from_samples(&emp(&[0.0, 2.0]), 100).unwrap();
        assert!((w2_distance(&a, &b).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn w2_grid_mismatch() {
        let a = QuantileFunction::point_mass(0.0, 4).unwrap();
        let b = QuantileFunction::point_mass(0.0, 5).unwrap();
        assert!(matches!(w2_distance(&a, &b), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(w2_oracle_discrete(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!((w2_oracle_discrete(&[0.0, 1.0], &[0.0, 2.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(w2_oracle_discrete(&[5.0], &[9.0]).unwrap(), 4.0);
        assert!(w2_oracle_discrete(&[0.0; 9], &[0.0; 9]).is_err());
    }

    #[test]
    fn moments_examples() {
        let m = moments_of(&QuantileFunction::point_mass(3.0, 7).unwrap());
        assert_eq!((m.m1, m.m2), (3.0, 9.0));
        let m = moments_of(&quantile_from_samples(&emp(&[0.0, 2.0]), 10).unwrap());
        assert_eq!((m.m1, m.m2), (1.0, 2.0));
    }

    #[test]
    fn uniform_moments_converge_quadratically() {
        for m in [64usize, 256, 1024] {
            let q = QuantileFunction::new((0..m).map(|k| midpoint_level(k, m)).collect()).unwrap();
            let mo = moments_of(&q);
            let h2 = 1.0 / (m * m) as f64;
            assert!((mo.m1 - 0.5).abs() < 1e-12);
            // midpoint rule error for t² is exactly h²/12
            assert!((mo.m2 - 1.0 / 3.0).abs() <= h2 / 12.0 + 1e-15);
        }
    }

    #[test]
    fn shift_examples() {
        let q = quantile_from_samples(&emp(&[0.3, -1.0, 2.0]), 9).unwrap();
        assert_eq!(shift(&q, 0.0), q);
        let s = shift(&q, 2.5);
        assert!((moments_of(&s).m1 - moments_of(&q).m1 - 2.5).abs() < 1e-12);
    }

    #[test]
    fn distance_matrix_matches_pairwise_calls() {
        let qs: Vec<QuantileFunction> = (0..5)
            .map(|i| quantile_from_samples(&emp(&[i as f64, 2.0 * i as f64, 1.0]), 12).unwrap())
            .collect();
        let d = distance_matrix(&qs).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(d[i * 5 + j], w2_distance(&qs[i], &qs[j]).unwrap());
            }
        }
    }

    #[test]
    fn quantile_function_rejects_decreasing() {
        assert!(QuantileFunction::new(vec![1.0, 0.0]).is_err());
        assert!(QuantileFunction::new(vec![f64::NAN]).is_err());
        assert!(serde_json::from_str::<QuantileFunction>("[2.0, 1.0]").is_err());
    }
}
