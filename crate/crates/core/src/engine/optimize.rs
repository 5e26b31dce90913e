//! Derivative-free simplex search, BFGS with finite-difference gradients,
//! and a finite-difference Hessian. All routines minimize.

use std::cell::Cell;

use rayon::prelude::*;

/// Relative finite-difference step for gradients, about the cube root of
/// machine epsilon.
const GRADIENT_STEP: f64 = 6e-6;

/// Step used for coordinate `x` in gradient evaluations.
pub fn gradient_step(x: f64) -> f64 {
    GRADIENT_STEP * (1.0 + x.abs())
}

/// Central-difference gradient of `f` at `x`.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = gradient_step(x[i]);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub(crate) struct SimplexOptions {
    pub initial_step: f64,
    pub max_evaluations: usize,
    /// Stop once `f_max − f_min` over the simplex falls below this.
    pub f_spread: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder–Mead with the standard reflection, expansion, contraction and
/// shrink coefficients (1, 2, ½, ½).
pub(crate) fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], opts: &SimplexOptions) -> Minimum {
    let n = x0.len();
    let evals = Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(x0);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let fx = eval(&x);
        simplex.push((x, fx));
    }
    let mut iterations = 0;
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        if worst - best < opts.f_spread {
            converged = true;
            break;
        }
        if evals.get() >= opts.max_evaluations {
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        // Outside contraction when the reflection improved on the worst point.
        let xc = along(if fr < simplex[n].1 { 0.5 } else { -0.5 });
        let fc = eval(&xc);
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = x_best
                .iter()
                .zip(&v.0)
                .map(|(b, x)| b + 0.5 * (x - b))
                .collect();
            let fx = eval(&x);
            *v = (x, fx);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    Minimum {
        x,
        f,
        iterations,
        evaluations: evals.get(),
        converged,
    }
}

#[derive(Debug, Clone)]
pub(crate) struct QuasiNewtonOptions {
    pub max_iterations: usize,
    /// Threshold on the last decrease of the objective and on the decrease
    /// predicted by the quasi-Newton model.
    pub f_tol: f64,
    /// Gradient max-norm below which a small last decrease suffices.
    pub grad_tol: f64,
    /// Largest coordinate move tried by a single line search.
    pub max_step: f64,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS on the inverse Hessian with Armijo backtracking. Converged when the
/// last accepted step changed `f` by less than `f_tol` and the gradient
/// max-norm is below `grad_tol`, or when no descent is possible and the
/// gradient is already below `grad_tol`.
pub(crate) fn bfgs(
    f: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    opts: &QuasiNewtonOptions,
) -> Minimum {
    let n = x0.len();
    let evals = Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let identity = |scale: f64| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { scale } else { 0.0 }).collect())
            .collect()
    };
    let mut x = x0.to_vec();
    let mut fx = eval(&x);
    let mut g = grad(&x);
    let mut h = identity(1.0);
    let mut fresh = true;
    let mut last_change = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        let gnorm = max_norm(&g);
        let mut d: Vec<f64> = h.iter().map(|row| -dot(row, &g)).collect();
        let mut slope = dot(&g, &d);
        // −slope/2 is the decrease predicted by the quadratic model; once it
        // is below the tolerance the remaining gradient is not worth chasing.
        let small_decrement = !fresh && slope < 0.0 && -0.5 * slope < opts.f_tol;
        if last_change < opts.f_tol && (gnorm < opts.grad_tol || small_decrement) {
            converged = true;
            break;
        }
        if !(slope < 0.0) {
            h = identity(1.0);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let dmax = max_norm(&d);
        if dmax == 0.0 || !dmax.is_finite() {
            converged = gnorm < opts.grad_tol;
            break;
        }
        let mut t = (opts.max_step / dmax).min(1.0);
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let fn_ = eval(&xn);
            if fn_ < fx && fn_ <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fn_));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_)) = accepted else {
            if !fresh {
                h = identity(1.0);
                fresh = true;
                continue;
            }
            converged =
                gnorm < opts.grad_tol || (last_change < opts.f_tol && -0.5 * slope < opts.f_tol);
            break;
        };
        iterations += 1;
        let gn = grad(&xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                h = identity(sy / dot(&y, &y));
            }
            let hy: Vec<f64> = h.iter().map(|row| dot(row, &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            let coef = (1.0 + rho * yhy) * rho;
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
            fresh = false;
        }
        last_change = fx - fn_;
        x = xn;
        fx = fn_;
        g = gn;
    }
    Minimum {
        x,
        f: fx,
        iterations,
        evaluations: evals.get(),
        converged,
    }
}

/// Central-difference Hessian with per-coordinate step `rel·(1+|x_i|)`.
/// Entries are computed independently, so parallel evaluation does not
/// change the result.
pub(crate) fn hessian(f: impl Fn(&[f64]) -> f64 + Sync, x: &[f64], rel: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| rel * (1.0 + v.abs())).collect();
    let f0 = f(x);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let at = |di: f64, dj: f64| {
                let mut p = x.to_vec();
                p[i] += di;
                p[j] += dj;
                f(&p)
            };
            if i == j {
                (at(h[i], 0.0) - 2.0 * f0 + at(-h[i], 0.0)) / (h[i] * h[i])
            } else {
                (at(h[i], h[j]) - at(h[i], -h[j]) - at(-h[i], h[j]) + at(-h[i], -h[j]))
                    / (4.0 * h[i] * h[j])
            }
        })
        .collect();
    let mut out = vec![vec![0.0; n]; n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        out[i][j] = v;
        out[j][i] = v;
    }
    out
}
