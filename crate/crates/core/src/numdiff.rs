//! Finite-difference gradients and Hessians.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `cbrt(machine epsilon)`.
pub fn cbrt_eps() -> f64 {
    f64::EPSILON.cbrt()
}

/// Per-coordinate step `cbrt(eps) * max(1, |x_i|)`.
#[inline]
pub fn step(x: f64) -> f64 {
    cbrt_eps() * x.abs().max(1.0)
}

/// Base of the per-coordinate Hessian step `base * max(1, |x_i|)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianStep {
    /// `(eps max(1, |f(x)|))^(1/4)`: balances truncation against the
    /// roundoff `eps |f| / h^2` of the stencil.
    #[default]
    FourthRootEps,
    /// `eps^(1/3)`, the first-derivative step.
    CubeRootEps,
}

impl HessianStep {
    pub fn base(self) -> f64 {
        match self {
            HessianStep::FourthRootEps => f64::EPSILON.sqrt().sqrt(),
            HessianStep::CubeRootEps => cbrt_eps(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HessianSettings {
    /// Combine step `h` and `h/2` stencils as `(4 H(h/2) - H(h)) / 3`.
    pub richardson: bool,
    pub step: HessianStep,
}

/// Central-difference gradient. Coordinates whose central stencil is not
/// finite fall back to a one-sided difference; if that also fails the entry
/// is NaN.
pub fn gradient(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], fx: f64) -> Vec<f64> {
    let mut xs = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step(x[i]);
            xs[i] = x[i] + h;
            let fp = f(&xs);
            xs[i] = x[i] - h;
            let fm = f(&xs);
            xs[i] = x[i];
            if fp.is_finite() && fm.is_finite() {
                (fp - fm) / (2.0 * h)
            } else if fp.is_finite() {
                (fp - fx) / h
            } else if fm.is_finite() {
                (fx - fm) / h
            } else {
                f64::NAN
            }
        })
        .collect()
}

/// Forward-difference gradient, used as an independent check of [`gradient`].
pub fn forward_gradient(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], fx: f64) -> Vec<f64> {
    let mut xs = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step(x[i]);
            xs[i] = x[i] + h;
            let fp = f(&xs);
            xs[i] = x[i];
            (fp - fx) / h
        })
        .collect()
}

fn hessian_with_steps(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], steps: &[f64]) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut eval = |xs: &[f64], coordinate: usize| -> Result<f64> {
        let v = f(xs);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteStencil { coordinate })
        }
    };
    let mut xs = x.to_vec();
    let f0 = eval(&xs, 0)?;
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let hi = steps[i];
        xs[i] = x[i] + hi;
        let fp = eval(&xs, i)?;
        xs[i] = x[i] - hi;
        let fm = eval(&xs, i)?;
        xs[i] = x[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                xs[i] = x[i] + si * hi;
                xs[j] = x[j] + sj * hj;
                let v = eval(&xs, i);
                xs[i] = x[i];
                xs[j] = x[j];
                v
            };
            let fpp = corner(1.0, 1.0)?;
            let fpm = corner(1.0, -1.0)?;
            let fmp = corner(-1.0, 1.0)?;
            let fmm = corner(-1.0, -1.0)?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

/// Central-difference Hessian of `f` at `x` with steps
/// `settings.step.base() * max(1, |x_i|)`, symmetrised as `(H + H')/2`.
/// The fourth-root step is further scaled by `max(1, |f(x)|)^(1/4)`.
///
/// Fails with [`Error::NonFiniteStencil`] naming the coordinate whose
/// stencil produced a non-finite value.
pub fn numeric_hessian(
    f: &mut impl FnMut(&[f64]) -> f64,
    x: &[f64],
    settings: HessianSettings,
) -> Result<DMatrix<f64>> {
    let f0 = f(x);
    if !f0.is_finite() {
        return Err(Error::NonFiniteStencil { coordinate: 0 });
    }
    let base = match settings.step {
        HessianStep::FourthRootEps => settings.step.base() * f0.abs().max(1.0).sqrt().sqrt(),
        HessianStep::CubeRootEps => settings.step.base(),
    };
    let steps: Vec<f64> = x.iter().map(|&v| base * v.abs().max(1.0)).collect();
    let mut h = hessian_with_steps(f, x, &steps)?;
    if settings.richardson {
        let half: Vec<f64> = steps.iter().map(|s| 0.5 * s).collect();
        let h2 = hessian_with_steps(f, x, &half)?;
        h = (h2 * 4.0 - h) / 3.0;
    }
    let sym = (&h + h.transpose()) * 0.5;
    Ok(sym)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_recovered() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, -0.5, 1.0, 3.0, 0.2, -0.5, 0.2, 2.0]);
        let mut f = |x: &[f64]| {
            let v = nalgebra::DVector::from_column_slice(x);
            0.5 * (v.transpose() * &a * &v)[(0, 0)]
        };
        let h = numeric_hessian(&mut f, &[0.3, -1.2, 2.0], HessianSettings::default()).unwrap();
        assert!((&h - &a).abs().max() < 1e-6);
        assert_eq!((&h - h.transpose()).abs().max(), 0.0);
        let hr = numeric_hessian(&mut f, &[0.3, -1.2, 2.0], HessianSettings { richardson: true, ..Default::default() })
            .unwrap();
        assert!((&hr - &a).abs().max() < 1e-6);
    }

    #[test]
    fn non_finite_stencil_names_coordinate() {
        let mut f = |x: &[f64]| if x[1] > 1.0 { f64::NAN } else { x[0] * x[0] + x[1] };
        match numeric_hessian(&mut f, &[0.0, 1.0], HessianSettings::default()) {
            Err(Error::NonFiniteStencil { coordinate }) => assert_eq!(coordinate, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gradient_of_smooth_function() {
        let mut f = |x: &[f64]| x[0].sin() + x[0] * x[1] * x[1];
        let x = [0.4, -1.5];
        let fx = f(&x);
        let g = gradient(&mut f, &x, fx);
        assert!((g[0] - (0.4f64.cos() + 2.25)).abs() < 1e-9);
        assert!((g[1] - (2.0 * 0.4 * -1.5)).abs() < 1e-9);
    }
}
