//! Quasi-Newton minimisation with finite-difference gradients, followed by a
//! damped Newton refinement on the finite-difference Hessian.

use nalgebra::{DMatrix, DVector};

use crate::numdiff::{gradient, numeric_hessian, HessianSettings};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimSettings {
    /// Convergence threshold on the gradient max-norm.
    pub gtol: f64,
    /// Gradient max-norm at which BFGS hands over to Newton steps.
    pub handover_gtol: f64,
    pub max_iter: usize,
    pub max_newton_iter: usize,
}

impl Default for OptimSettings {
    fn default() -> Self {
        Self { gtol: 1e-6, handover_gtol: 1e-3, max_iter: 1000, max_newton_iter: 25 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl OptimResult {
    pub fn grad_norm(&self) -> f64 {
        max_abs(&self.grad)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Backtracking (Armijo) line search along `d`. Returns `(step, x_new, f_new)`.
fn line_search(
    f: &mut impl FnMut(&[f64]) -> f64,
    x: &[f64],
    fx: f64,
    g: &[f64],
    d: &[f64],
    init_step: f64,
) -> Option<(f64, Vec<f64>, f64)> {
    let slope = dotv(g, d);
    if !(slope < 0.0) {
        return None;
    }
    let slack = 1e-12 * fx.abs().max(1.0);
    let mut a = init_step;
    for _ in 0..60 {
        let xn: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + a * di).collect();
        let fnew = f(&xn);
        if fnew.is_finite() && fnew <= fx + 1e-4 * a * slope + slack && fnew <= fx + slack {
            return Some((a, xn, fnew));
        }
        a *= 0.5;
    }
    None
}

/// BFGS on the inverse Hessian with central-difference gradients.
pub fn bfgs(f: &mut impl FnMut(&[f64]) -> f64, x0: &[f64], settings: &OptimSettings) -> OptimResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return OptimResult { x, f: fx, grad: vec![f64::NAN; n], iterations: 0, converged: false };
    }
    let mut g = gradient(f, &x, fx);
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut first = true;
    let mut iterations = 0;
    let mut stall = 0;
    while iterations < settings.max_iter {
        if g.iter().any(|v| !v.is_finite()) {
            break;
        }
        if max_abs(&g) < settings.gtol {
            return OptimResult { x, f: fx, grad: g, iterations, converged: true };
        }
        iterations += 1;
        let gv = DVector::from_column_slice(&g);
        let mut d: Vec<f64> = (-(&hinv * &gv)).iter().copied().collect();
        if !(dotv(&d, &g) < 0.0) {
            hinv = DMatrix::identity(n, n);
            first = true;
            d = g.iter().map(|v| -v).collect();
        }
        let init = if first { (1.0 / max_abs(&d)).min(1.0) } else { 1.0 };
        let Some((_, xn, fnew)) = line_search(f, &x, fx, &g, &d, init) else {
            if first {
                break;
            }
            // retry from steepest descent
            hinv = DMatrix::identity(n, n);
            first = true;
            continue;
        };
        let gn = gradient(f, &xn, fnew);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dotv(&s, &y);
        if sy > 1e-12 * dotv(&s, &s).sqrt() * dotv(&y, &y).sqrt() {
            if first {
                let scale = sy / dotv(&y, &y);
                hinv = DMatrix::identity(n, n) * scale;
                first = false;
            }
            let sv = DVector::from_column_slice(&s);
            let yv = DVector::from_column_slice(&y);
            let rho = 1.0 / sy;
            let hy = &hinv * &yv;
            let yhy = yv.dot(&hy);
            // H+ = H - rho (s (Hy)' + (Hy) s') + (rho^2 y'Hy + rho) s s'
            hinv -= (&sv * hy.transpose() + &hy * sv.transpose()) * rho;
            hinv += (&sv * sv.transpose()) * (rho * rho * yhy + rho);
        }
        let rel = (fx - fnew).abs() / fx.abs().max(1.0);
        stall = if rel < 1e-15 { stall + 1 } else { 0 };
        x = xn;
        fx = fnew;
        g = gn;
        if stall >= 5 {
            break;
        }
    }
    let converged = max_abs(&g) < settings.gtol;
    OptimResult { x, f: fx, grad: g, iterations, converged }
}

/// Damped Newton steps using the finite-difference Hessian; a ridge is added
/// when the Hessian is not positive definite.
pub fn newton_refine(f: &mut impl FnMut(&[f64]) -> f64, start: OptimResult, settings: &OptimSettings) -> OptimResult {
    let mut cur = start;
    let n = cur.x.len();
    for _ in 0..settings.max_newton_iter {
        if !cur.f.is_finite() || cur.grad.iter().any(|v| !v.is_finite()) {
            break;
        }
        if max_abs(&cur.grad) < settings.gtol {
            cur.converged = true;
            return cur;
        }
        let Ok(h) = numeric_hessian(f, &cur.x, HessianSettings::default()) else {
            break;
        };
        let gv = DVector::from_column_slice(&cur.grad);
        let diag_scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-8);
        let mut ridge = 0.0;
        let mut moved = false;
        for _ in 0..12 {
            let hr = &h + DMatrix::identity(n, n) * ridge;
            if let Some(chol) = hr.cholesky() {
                let d: Vec<f64> = (-chol.solve(&gv)).iter().copied().collect();
                if let Some((_, xn, fnew)) = line_search(f, &cur.x, cur.f, &cur.grad, &d, 1.0) {
                    let gn = gradient(f, &xn, fnew);
                    cur = OptimResult { x: xn, f: fnew, grad: gn, iterations: cur.iterations + 1, converged: false };
                    moved = true;
                    break;
                }
            }
            ridge = if ridge == 0.0 { 1e-8 * diag_scale } else { ridge * 10.0 };
        }
        if !moved {
            break;
        }
    }
    cur.converged = max_abs(&cur.grad) < settings.gtol;
    cur
}

/// BFGS down to `handover_gtol`, then Newton refinement. If Newton stalls,
/// BFGS resumes at the full tolerance and Newton is tried once more.
pub fn minimize(f: &mut impl FnMut(&[f64]) -> f64, x0: &[f64], settings: &OptimSettings) -> OptimResult {
    let coarse = OptimSettings { gtol: settings.handover_gtol.max(settings.gtol), ..*settings };
    let first = bfgs(f, x0, &coarse);
    let res = newton_refine(f, first, settings);
    if res.converged || !res.f.is_finite() {
        return res;
    }
    let iterations = res.iterations;
    let mut fine = bfgs(f, &res.x, settings);
    fine.iterations += iterations;
    let out = newton_refine(f, fine, settings);
    if out.f <= res.f {
        out
    } else {
        res
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let mut f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize(&mut f, &[-1.2, 1.0], &OptimSettings::default());
        assert!(r.converged, "{r:?}");
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn respects_infinite_barrier() {
        // minimum at 0.5 with +inf for x <= 0
        let mut f = |x: &[f64]| if x[0] <= 0.0 { f64::INFINITY } else { x[0] - x[0].ln() * 0.5 };
        let r = minimize(&mut f, &[3.0], &OptimSettings::default());
        assert!(r.converged);
        assert!((r.x[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn non_finite_start_is_not_converged() {
        let mut f = |_: &[f64]| f64::NAN;
        let r = minimize(&mut f, &[0.0], &OptimSettings::default());
        assert!(!r.converged);
    }
}
