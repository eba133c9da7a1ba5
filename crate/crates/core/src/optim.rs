//! Unconstrained local minimizers used by the likelihood fit.
//!
//! Objectives return `None` where they cannot be evaluated (for example a
//! covariance matrix that fails to factorize); both methods treat that as
//! `+∞` and retreat.

/// Outcome of one local search.
#[derive(Debug, Clone)]
pub struct LocalMin {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_evals: usize,
    /// Stop when `‖g‖∞ ≤ gtol·(1 + |f|)`.
    pub gtol: f64,
    /// Largest coordinate change of a trial step.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_evals: 400,
            gtol: 1e-7,
            max_step: 2.0,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// BFGS on the inverse Hessian with Armijo backtracking.
pub fn bfgs<F>(mut objective: F, x0: &[f64], opts: &BfgsOptions) -> Option<LocalMin>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let p = x0.len();
    let mut evals = 1;
    let (mut f, mut g) = objective(x0)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut x = x0.to_vec();
    let mut h = identity(p);
    let mut converged = false;
    let mut stalls = 0;

    while evals < opts.max_evals {
        if inf_norm(&g) <= opts.gtol * (1.0 + f.abs()) {
            converged = true;
            break;
        }
        let mut d: Vec<f64> = (0..p).map(|i| -dot(&h[i], &g)).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = identity(p);
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let scale = (opts.max_step / inf_norm(&d)).min(1.0);
        d.iter_mut().for_each(|v| *v *= scale);
        slope *= scale;

        let mut step = 1.0;
        let mut accepted = None;
        while evals < opts.max_evals && step > 1e-12 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            evals += 1;
            if let Some((ft, gt)) = objective(&trial) {
                if ft.is_finite() && gt.iter().all(|v| v.is_finite()) && ft <= f + 1e-4 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            if is_identity(&h) {
                converged = inf_norm(&g) <= 1e-4 * (1.0 + f.abs());
                break;
            }
            h = identity(p);
            continue;
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            let hy: Vec<f64> = (0..p).map(|i| dot(&h[i], &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..p {
                for j in 0..p {
                    h[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
        let decrease = f - fnew;
        x = xn;
        f = fnew;
        g = gn;
        if decrease <= 1e-14 * (1.0 + f.abs()) {
            stalls += 1;
            if stalls >= 3 {
                converged = true;
                break;
            }
        } else {
            stalls = 0;
        }
    }
    Some(LocalMin { x, f, evals, converged })
}

fn identity(p: usize) -> Vec<Vec<f64>> {
    (0..p)
        .map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn is_identity(h: &[Vec<f64>]) -> bool {
    h.iter().enumerate().all(|(i, row)| {
        row.iter()
            .enumerate()
            .all(|(j, &v)| v == if i == j { 1.0 } else { 0.0 })
    })
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Initial simplex edge along each coordinate.
    pub initial_step: f64,
    /// Stop when the spread of simplex values falls below `ftol·(1 + |f_best|)`.
    pub ftol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 400,
            initial_step: 0.5,
            ftol: 1e-10,
        }
    }
}

/// Nelder–Mead simplex search with standard coefficients.
pub fn nelder_mead<F>(mut objective: F, x0: &[f64], opts: &NelderMeadOptions) -> Option<LocalMin>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let p = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        objective(x).filter(|v| v.is_finite()).unwrap_or(f64::INFINITY)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(p + 1);
    let f0 = eval(x0, &mut evals);
    if !f0.is_finite() {
        return None;
    }
    simplex.push((x0.to_vec(), f0));
    for i in 0..p {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        let fv = eval(&v, &mut evals);
        simplex.push((v, fv));
    }
    let mut converged = false;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[p].1;
        if worst.is_finite() && worst - best <= opts.ftol * (1.0 + best.abs()) {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..p)
            .map(|j| simplex[..p].iter().map(|(v, _)| v[j]).sum::<f64>() / p as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[p].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < best {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[p] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[p - 1].1 {
            simplex[p] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < worst.min(fr) {
                simplex[p] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let v: Vec<f64> = x_best.iter().zip(&vertex.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    let fv = eval(&v, &mut evals);
                    *vertex = (v, fv);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    Some(LocalMin { x, f, evals, converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosen(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    fn rosen_grad(x: &[f64]) -> Vec<f64> {
        vec![
            -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
            200.0 * (x[1] - x[0] * x[0]),
        ]
    }

    #[test]
    fn bfgs_solves_rosenbrock() {
        let opts = BfgsOptions {
            max_evals: 2000,
            ..Default::default()
        };
        let r = bfgs(|x| Some((rosen(x), rosen_grad(x))), &[-1.2, 1.0], &opts).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn bfgs_backs_off_from_failures() {
        // objective undefined for x > 1
        let r = bfgs(
            |x| (x[0] <= 1.0).then(|| ((x[0] - 0.9).powi(2), vec![2.0 * (x[0] - 0.9)])),
            &[-3.0],
            &BfgsOptions::default(),
        )
        .unwrap();
        assert!((r.x[0] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn nelder_mead_solves_quadratic() {
        let r = nelder_mead(
            |x| Some((x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2)),
            &[0.0, 0.0],
            &NelderMeadOptions {
                max_evals: 1000,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] + 2.0).abs() < 1e-4);
        assert!(r.f <= 1.0 + 12.0);
    }

    #[test]
    fn never_worse_than_start() {
        let x0 = [0.3, -0.7];
        let f0 = rosen(&x0);
        let r = bfgs(
            |x| Some((rosen(x), rosen_grad(x))),
            &x0,
            &BfgsOptions {
                max_evals: 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.f <= f0);
        let r = nelder_mead(
            |x| Some(rosen(x)),
            &x0,
            &NelderMeadOptions {
                max_evals: 7,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.f <= f0);
    }
}
