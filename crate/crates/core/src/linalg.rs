//! Cholesky factorization with a bounded jitter escalation policy.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Number of ×10 jitter escalations allowed after the first attempt.
pub const MAX_JITTER_ESCALATIONS: usize = 3;

/// Lower-triangular factor `L` with `L Lᵀ = A + jitter·I`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
    jitter: f64,
}

/// Plain Cholesky; on failure returns the offending (non-positive) pivot.
fn factor(a: &DMatrix<f64>, jitter: f64) -> std::result::Result<DMatrix<f64>, f64> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] + jitter;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(d);
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

impl Cholesky {
    /// Factorizes `a` exactly, without jitter.
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        factor(a, 0.0)
            .map(|l| Self { l, jitter: 0.0 })
            .map_err(|p| Error::IllConditioned {
                smallest_pivot: p,
                jitter: 0.0,
            })
    }

    /// Factorizes `a + j·I`, starting at `j = rel_jitter · mean(diag a)` and
    /// multiplying by 10 up to [`MAX_JITTER_ESCALATIONS`] times. A zero
    /// `rel_jitter` means a single attempt without jitter.
    pub fn with_jitter(a: &DMatrix<f64>, rel_jitter: f64) -> Result<Self> {
        let n = a.nrows();
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("covariance matrix has non-finite entries"));
        }
        if rel_jitter == 0.0 {
            return Self::new(a);
        }
        let mean_diag = a.diagonal().sum() / n.max(1) as f64;
        let mut jitter = rel_jitter * mean_diag.abs();
        let mut pivot = f64::NAN;
        for _ in 0..=MAX_JITTER_ESCALATIONS {
            match factor(a, jitter) {
                Ok(l) => return Ok(Self { l, jitter }),
                Err(p) => pivot = p,
            }
            jitter *= 10.0;
        }
        Err(Error::IllConditioned {
            smallest_pivot: pivot,
            jitter: jitter / 10.0,
        })
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn into_l(self) -> DMatrix<f64> {
        self.l
    }

    /// Absolute jitter added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Marks a factor of a matrix whose diagonal already carries `jitter`.
    pub(crate) fn with_recorded_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `ln det(A + jitter·I)`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves `L z = b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut z = b.clone();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[(i, k)] * z[k];
            }
            z[i] = s / self.l[(i, i)];
        }
        z
    }

    /// Solves `Lᵀ x = z`.
    pub fn solve_upper(&self, z: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut x = z.clone();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `(L Lᵀ) x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Dense inverse of `L Lᵀ`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        // invert L column by column, then form L⁻ᵀ L⁻¹
        let mut linv = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            linv[(j, j)] = 1.0 / self.l[(j, j)];
            for i in j + 1..n {
                let mut s = 0.0;
                for k in j..i {
                    s -= self.l[(i, k)] * linv[(k, j)];
                }
                linv[(i, j)] = s / self.l[(i, i)];
            }
        }
        let inv = linv.transpose() * &linv;
        (&inv + inv.transpose()) * 0.5
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
