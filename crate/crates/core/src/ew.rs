//! Exponentiated Weibull distribution.
//!
//! With scale `sigma`, shape `kappa` and power `alpha` the cdf is
//! `F(t) = [1 - exp{-(t/sigma)^kappa}]^alpha`; `alpha = 1` gives the Weibull
//! distribution and `kappa = alpha = 1` the exponential.
//!
//! Everything is evaluated through `z = (t/sigma)^kappa` and
//! `lw = ln(1 - exp(-z))`, using `expm1`/`log1p` so that both tails keep
//! full relative precision.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{domain, Error, Result};

/// Above this `z` the log-survival uses its two-term asymptotic expansion.
const Z_ASYMPTOTIC: f64 = 50.0;
/// Below this `z`, `ln(1 - e^-z)` is taken from its series in `z`.
const Z_SERIES: f64 = 1e-10;

/// Natural-scale baseline parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwParams {
    pub sigma: f64,
    pub kappa: f64,
    pub alpha: f64,
}

/// Log-scale counterpart of [`EwParams`], the working scale of the optimiser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEwParams {
    pub log_sigma: f64,
    pub log_kappa: f64,
    pub log_alpha: f64,
}

impl EwParams {
    pub fn new(sigma: f64, kappa: f64, alpha: f64) -> Result<Self> {
        let p = Self { sigma, kappa, alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma", self.sigma), ("kappa", self.kappa), ("alpha", self.alpha)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn to_log(&self) -> LogEwParams {
        LogEwParams { log_sigma: self.sigma.ln(), log_kappa: self.kappa.ln(), log_alpha: self.alpha.ln() }
    }
}

impl LogEwParams {
    pub fn new(log_sigma: f64, log_kappa: f64, log_alpha: f64) -> Result<Self> {
        let lp = Self { log_sigma, log_kappa, log_alpha };
        lp.to_natural()?;
        Ok(lp)
    }

    /// Exponentiates each field; fails if any result is zero or infinite.
    pub fn to_natural(&self) -> Result<EwParams> {
        EwParams::new(self.log_sigma.exp(), self.log_kappa.exp(), self.log_alpha.exp())
    }
}

pub fn to_log_params(p: &EwParams) -> Result<LogEwParams> {
    p.validate()?;
    Ok(p.to_log())
}

pub fn from_log_params(lp: &LogEwParams) -> Result<EwParams> {
    lp.to_natural()
}

/// `ln(1 - e^{-x})` for `x > 0`.
#[inline]
pub(crate) fn log1mexp(x: f64) -> f64 {
    if x > LN_2 {
        (-(-x).exp()).ln_1p()
    } else {
        (-(-x).exp_m1()).ln()
    }
}

/// Parameter-dependent constants, precomputed once per parameter value.
///
/// This is the unchecked fast path used by the likelihood; construct it only
/// from validated parameters.
#[derive(Debug, Clone, Copy)]
pub struct EwKernel {
    log_sigma: f64,
    log_kappa: f64,
    log_alpha: f64,
    kappa: f64,
    alpha: f64,
}

impl EwKernel {
    pub fn new(p: &EwParams) -> Self {
        Self {
            log_sigma: p.sigma.ln(),
            log_kappa: p.kappa.ln(),
            log_alpha: p.alpha.ln(),
            kappa: p.kappa,
            alpha: p.alpha,
        }
    }

    /// Builds the kernel directly from log-scale values, keeping the log
    /// constants bit-exact with the optimiser's parameter vector.
    pub fn from_log(lp: &LogEwParams) -> Self {
        Self {
            log_sigma: lp.log_sigma,
            log_kappa: lp.log_kappa,
            log_alpha: lp.log_alpha,
            kappa: lp.log_kappa.exp(),
            alpha: lp.log_alpha.exp(),
        }
    }

    #[inline]
    fn log_z(&self, log_t: f64) -> f64 {
        self.kappa * (log_t - self.log_sigma)
    }

    /// `ln(1 - e^{-z})`, given both `z` and `ln z`.
    #[inline]
    fn lw(z: f64, log_z: f64) -> f64 {
        if z < Z_SERIES {
            log_z - 0.5 * z
        } else {
            log1mexp(z)
        }
    }

    #[inline]
    fn log_survival_z(&self, z: f64, lw: f64) -> f64 {
        if z > Z_ASYMPTOTIC {
            // 1 - (1 - e)^a = a e (1 - (a - 1) e / 2 + O(e^2)), e = exp(-z)
            self.log_alpha - z + (-(self.alpha - 1.0) * 0.5 * (-z).exp()).ln_1p()
        } else {
            log1mexp(-self.alpha * lw)
        }
    }

    /// Log-survival at `t = exp(log_t)`.
    #[inline]
    pub fn log_survival(&self, log_t: f64) -> f64 {
        let log_z = self.log_z(log_t);
        let z = log_z.exp();
        let lw = Self::lw(z, log_z);
        self.log_survival_z(z, lw)
    }

    /// Log-cdf at `t = exp(log_t)`.
    #[inline]
    pub fn log_cdf(&self, log_t: f64) -> f64 {
        let log_z = self.log_z(log_t);
        let z = log_z.exp();
        self.alpha * Self::lw(z, log_z)
    }

    /// Log-density at `t = exp(log_t)`.
    #[inline]
    pub fn log_pdf(&self, log_t: f64) -> f64 {
        let log_z = self.log_z(log_t);
        let z = log_z.exp();
        let lw = Self::lw(z, log_z);
        self.log_pdf_parts(log_t, z, lw)
    }

    #[inline]
    fn log_pdf_parts(&self, log_t: f64, z: f64, lw: f64) -> f64 {
        let power_term = if self.alpha == 1.0 { 0.0 } else { (self.alpha - 1.0) * lw };
        let shape_term = if self.kappa == 1.0 { 0.0 } else { (self.kappa - 1.0) * (log_t - self.log_sigma) };
        self.log_alpha + self.log_kappa - self.log_sigma + shape_term + power_term - z
    }

    /// Returns `(ln h0(t), H0(t))` at `t = exp(log_t)`.
    #[inline]
    pub fn log_hazard_and_cum_hazard(&self, log_t: f64) -> (f64, f64) {
        let log_z = self.log_z(log_t);
        let z = log_z.exp();
        let lw = Self::lw(z, log_z);
        let log_s = self.log_survival_z(z, lw);
        if z > Z_ASYMPTOTIC {
            // `-z` cancels between ln f and ln S; drop it symbolically
            let shape_term = (self.kappa - 1.0) * (log_t - self.log_sigma);
            let correction = (-(self.alpha - 1.0) * 0.5 * (-z).exp()).ln_1p();
            let log_h = self.log_kappa - self.log_sigma + shape_term + (self.alpha - 1.0) * lw - correction;
            return (log_h, -log_s);
        }
        (self.log_pdf_parts(log_t, z, lw) - log_s, -log_s)
    }

    /// Cumulative hazard at `t = exp(log_t)`.
    #[inline]
    pub fn cum_hazard(&self, log_t: f64) -> f64 {
        -self.log_survival(log_t)
    }

    /// Log of the time at which the cumulative hazard reaches `v > 0`.
    ///
    /// Returns `+inf` only when `v` itself is infinite.
    #[inline]
    pub fn log_inverse_cum_hazard(&self, v: f64) -> f64 {
        let log_z = if v > Z_ASYMPTOTIC {
            // inverse of the asymptotic branch of log_survival_z
            let z = v + self.log_alpha + (-(self.alpha - 1.0) / (2.0 * self.alpha) * (-v).exp()).ln_1p();
            z.ln()
        } else {
            // ln F = ln(1 - e^{-v}); lw = ln F / alpha
            self.log_z_from_lw(log1mexp(v) / self.alpha)
        };
        self.log_sigma + log_z / self.kappa
    }

    /// Log of the `u`-quantile, `0 < u < 1`.
    #[inline]
    pub fn log_quantile(&self, u: f64) -> f64 {
        let log_z = self.log_z_from_lw(u.ln() / self.alpha);
        self.log_sigma + log_z / self.kappa
    }

    /// Inverts `lw = ln(1 - e^{-z})` for `ln z`.
    #[inline]
    fn log_z_from_lw(&self, lw: f64) -> f64 {
        if lw < -30.0 {
            // z = -ln(1 - e^lw) = e^lw (1 + e^lw / 2 + ...)
            lw + 0.5 * lw.exp()
        } else {
            (-log1mexp(-lw)).ln()
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(domain(format!("time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// Density `f(t)`. At `t = 0` returns the limit: 0 when `kappa*alpha > 1`,
/// `+inf` when `kappa*alpha < 1`, `1/sigma` when `kappa*alpha = 1`.
pub fn ew_pdf(t: f64, p: &EwParams) -> Result<f64> {
    check_time(t)?;
    p.validate()?;
    if t == 0.0 {
        let ka = p.kappa * p.alpha;
        return Ok(if ka > 1.0 {
            0.0
        } else if ka < 1.0 {
            f64::INFINITY
        } else {
            1.0 / p.sigma
        });
    }
    Ok(EwKernel::new(p).log_pdf(t.ln()).exp())
}

pub fn ew_cdf(t: f64, p: &EwParams) -> Result<f64> {
    check_time(t)?;
    p.validate()?;
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(EwKernel::new(p).log_cdf(t.ln()).exp())
}

pub fn ew_survival(t: f64, p: &EwParams) -> Result<f64> {
    check_time(t)?;
    p.validate()?;
    if t == 0.0 {
        return Ok(1.0);
    }
    Ok(EwKernel::new(p).log_survival(t.ln()).exp())
}

/// Log-hazard, evaluated as `ln f - ln S` without forming `1 - F`.
pub fn ew_log_hazard(t: f64, p: &EwParams) -> Result<f64> {
    check_time(t)?;
    p.validate()?;
    if t == 0.0 {
        return Ok(ew_pdf(0.0, p)?.ln());
    }
    let (log_h, cum) = EwKernel::new(p).log_hazard_and_cum_hazard(t.ln());
    if !cum.is_finite() || log_h.is_nan() {
        return Err(Error::Overflow {
            t,
            detail: format!(
                "log-survival not representable for sigma={}, kappa={}, alpha={}",
                p.sigma, p.kappa, p.alpha
            ),
        });
    }
    Ok(log_h)
}

/// Hazard `f(t) / (1 - F(t))`.
pub fn ew_hazard(t: f64, p: &EwParams) -> Result<f64> {
    ew_log_hazard(t, p).map(f64::exp)
}

/// Cumulative hazard `-ln(1 - F(t))`.
pub fn ew_cum_hazard(t: f64, p: &EwParams) -> Result<f64> {
    check_time(t)?;
    p.validate()?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let h = EwKernel::new(p).cum_hazard(t.ln());
    if !h.is_finite() {
        return Err(Error::Overflow { t, detail: "cumulative hazard overflowed".into() });
    }
    Ok(h)
}

/// Closed-form inverse of the cdf: `sigma * (-ln(1 - u^{1/alpha}))^{1/kappa}`.
pub fn ew_quantile(u: f64, p: &EwParams) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(domain(format!("quantile level must lie in (0, 1), got {u}")));
    }
    p.validate()?;
    Ok(EwKernel::new(p).log_quantile(u).exp())
}

/// Time at which the baseline cumulative hazard equals `v > 0`.
pub fn ew_inverse_cum_hazard(v: f64, p: &EwParams) -> Result<f64> {
    if !(v > 0.0) || v.is_nan() {
        return Err(domain(format!("cumulative hazard target must be > 0, got {v}")));
    }
    p.validate()?;
    let t = EwKernel::new(p).log_inverse_cum_hazard(v).exp();
    if !t.is_finite() {
        return Err(Error::Saturation { target: v });
    }
    Ok(t)
}

/// Shape of a hazard curve over a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HazardShape {
    Constant,
    Increasing,
    Decreasing,
    Bathtub,
    Unimodal,
    Other,
}

impl std::fmt::Display for HazardShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            HazardShape::Constant => "constant",
            HazardShape::Increasing => "increasing",
            HazardShape::Decreasing => "decreasing",
            HazardShape::Bathtub => "bathtub",
            HazardShape::Unimodal => "unimodal",
            HazardShape::Other => "other",
        };
        f.write_str(s)
    }
}

/// Classifies a sampled curve by the signs of its first differences.
/// Differences within `rel_tol * max|v|` of zero are ignored; the remaining
/// sign runs decide the shape (`-+` bathtub, `+-` unimodal).
pub fn classify_shape(values: &[f64], rel_tol: f64) -> HazardShape {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = rel_tol * scale;
    let mut runs: Vec<bool> = Vec::new();
    for w in values.windows(2) {
        let d = w[1] - w[0];
        if d.is_nan() {
            return HazardShape::Other;
        }
        if d.abs() <= tol {
            continue;
        }
        let up = d > 0.0;
        if runs.last() != Some(&up) {
            runs.push(up);
        }
    }
    match runs.as_slice() {
        [] => HazardShape::Constant,
        [true] => HazardShape::Increasing,
        [false] => HazardShape::Decreasing,
        [false, true] => HazardShape::Bathtub,
        [true, false] => HazardShape::Unimodal,
        _ => HazardShape::Other,
    }
}

/// Shape of the EW hazard on `n` equally spaced points of `(0, t_max]`.
pub fn ew_hazard_shape(p: &EwParams, t_max: f64, n: usize) -> Result<HazardShape> {
    if !(t_max > 0.0 && t_max.is_finite()) || n < 3 {
        return Err(domain("shape grid needs t_max > 0 and at least 3 points"));
    }
    let h = (1..=n).map(|i| ew_hazard(t_max * i as f64 / n as f64, p)).collect::<Result<Vec<_>>>()?;
    Ok(classify_shape(&h, 1e-12))
}
