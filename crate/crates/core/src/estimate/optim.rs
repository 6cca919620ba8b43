//! BFGS maximization with finite-difference derivatives.

use crate::correlation::{cholesky, Matrix};
use crate::error::{Error, Result};

/// Stopping rules for [`maximize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaximizeOptions {
    /// Stop when the gradient's largest component is below this.
    pub gtol: f64,
    /// Stop after two successive iterations whose relative change in the
    /// objective is below this.
    pub ftol: f64,
    pub max_iter: usize,
    /// Relative step of the central-difference gradient.
    pub grad_step: f64,
}

impl Default for MaximizeOptions {
    fn default() -> Self {
        Self { gtol: 1e-5, ftol: 1e-12, max_iter: 500, grad_step: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Maximum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub message: String,
}

/// Central-difference gradient with steps `h_k = step · max(1, |x_k|)`.
pub fn gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = step * x[k].abs().max(1.0);
            xp[k] = x[k] + h;
            let up = f(&xp);
            xp[k] = x[k] - h;
            let down = f(&xp);
            xp[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian with steps `h_k = step · max(1, |x_k|)`,
/// symmetrized.
pub fn hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Matrix {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| step * v.abs().max(1.0)).collect();
    let f0 = f(x);
    let mut xp = x.to_vec();
    let at = |xp: &mut Vec<f64>, moves: &[(usize, f64)]| {
        for &(k, s) in moves {
            xp[k] += s * h[k];
        }
        let v = f(xp);
        xp.copy_from_slice(x);
        v
    };
    let mut hm = Matrix::zeros(n);
    for i in 0..n {
        let up = at(&mut xp, &[(i, 1.0)]);
        let down = at(&mut xp, &[(i, -1.0)]);
        hm[(i, i)] = (up - 2.0 * f0 + down) / (h[i] * h[i]);
        for j in 0..i {
            let pp = at(&mut xp, &[(i, 1.0), (j, 1.0)]);
            let pm = at(&mut xp, &[(i, 1.0), (j, -1.0)]);
            let mp = at(&mut xp, &[(i, -1.0), (j, 1.0)]);
            let mm = at(&mut xp, &[(i, -1.0), (j, -1.0)]);
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            hm[(i, j)] = v;
            hm[(j, i)] = v;
        }
    }
    hm
}

/// `(-H)⁻¹` when `H` is negative definite, else `None`.
pub fn negative_inverse(h: &Matrix) -> Option<Matrix> {
    let n = h.dim();
    let neg = Matrix::from_fn(n, |i, j| -h[(i, j)]);
    cholesky(&neg).ok().map(|c| c.inverse())
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximizes `f` from `x0` by BFGS on the inverse Hessian with a
/// backtracking Armijo line search. Non-finite values count as `-∞`.
pub fn maximize(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], opts: &MaximizeOptions) -> Result<Maximum> {
    let n = x0.len();
    // minimize g = -f
    let g = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };
    let grad = |x: &[f64]| -> Vec<f64> { gradient(f, x, opts.grad_step).into_iter().map(|v| -v).collect() };

    let mut x = x0.to_vec();
    let mut fx = g(&x);
    if !fx.is_finite() {
        return Err(Error::Numerical("objective is not finite at the starting point".into()));
    }
    if n == 0 {
        return Ok(Maximum { x, value: -fx, iterations: 0, converged: true, grad_norm: 0.0, message: "no parameters".into() });
    }
    let mut gx = grad(&x);
    let mut hinv = Matrix::identity(n);
    let mut first = true;
    let mut small_steps = 0;
    let mut message = String::from("iteration limit reached");
    let mut converged = false;
    let mut iter = 0;
    while iter < opts.max_iter {
        if norm_inf(&gx) <= opts.gtol {
            converged = true;
            message = "gradient tolerance met".into();
            break;
        }
        let mut p: Vec<f64> = hinv.mul_vec(&gx).into_iter().map(|v| -v).collect();
        let mut slope = dot(&gx, &p);
        if !(slope < 0.0) {
            hinv = Matrix::identity(n);
            p = gx.iter().map(|v| -v).collect();
            slope = dot(&gx, &p);
        }
        // keep the trial step bounded on the transformed scale
        let longest = norm_inf(&p);
        let mut alpha = if longest > 5.0 { 5.0 / longest } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + alpha * b).collect();
            let ft = g(&trial);
            if ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // Armijo failed along a descent direction: restart once from
            // steepest descent, otherwise we are at the noise floor.
            if first {
                message = "line search failed".into();
                break;
            }
            hinv = Matrix::identity(n);
            first = true;
            iter += 1;
            continue;
        };
        let g_new = grad(&x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if first {
                let scale = sy / dot(&y, &y);
                hinv = Matrix::from_fn(n, |i, j| if i == j { scale } else { 0.0 });
            }
            let hy = hinv.mul_vec(&y);
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            let coef = (1.0 + rho * yhy) * rho;
            let mut next = hinv.clone();
            for i in 0..n {
                for j in 0..n {
                    next[(i, j)] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
            hinv = next;
            first = false;
        }
        let rel = (fx - f_new).abs() / (fx.abs() + opts.ftol);
        x = x_new;
        fx = f_new;
        gx = g_new;
        iter += 1;
        if rel < opts.ftol {
            small_steps += 1;
            if small_steps >= 2 {
                converged = true;
                message = "relative function change below tolerance".into();
                break;
            }
        } else {
            small_steps = 0;
        }
    }
    if !converged && norm_inf(&gx) <= opts.gtol {
        converged = true;
        message = "gradient tolerance met".into();
    }
    Ok(Maximum { grad_norm: norm_inf(&gx), x, value: -fx, iterations: iter, converged, message })
}
