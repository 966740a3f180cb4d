//! Hazard structures over an exponentiated Weibull baseline.
//!
//! Every structure is written through two linear predictors: a time-scale
//! predictor `lp_t` and a level predictor `lp_l`, giving
//!
//! ```text
//! h_E(t; x) = h0(t * exp(lp_t)) * exp(lp_l)
//! H_E(t; x) = H0(t * exp(lp_t)) * exp(lp_l - lp_t)
//! ```
//!
//! PH has `lp_t = 0`, AH has `lp_l = 0`, AFT has `lp_t = lp_l = x'beta`,
//! HH uses covariate subsets for each predictor and GH uses all covariates
//! for both.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{domain, Error, Result};
use crate::ew::{EwKernel, EwParams};

/// Bounds on `exp(lp_t)`.
pub const TIME_SCALE_MIN: f64 = 1e-15;
pub const TIME_SCALE_MAX: f64 = 1e15;

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

/// Structure family, without HH's covariate assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureKind {
    Ph,
    Ah,
    Aft,
    Hh,
    Gh,
}

impl StructureKind {
    pub fn label(self) -> &'static str {
        match self {
            StructureKind::Ph => "PH",
            StructureKind::Ah => "AH",
            StructureKind::Aft => "AFT",
            StructureKind::Hh => "HH",
            StructureKind::Gh => "GH",
        }
    }
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for StructureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ph" => Ok(StructureKind::Ph),
            "ah" => Ok(StructureKind::Ah),
            "aft" => Ok(StructureKind::Aft),
            "hh" => Ok(StructureKind::Hh),
            "gh" => Ok(StructureKind::Gh),
            other => Err(domain(format!("unknown structure `{other}` (expected ph, ah, aft, hh or gh)"))),
        }
    }
}

/// A hazard structure. HH carries the covariate indices entering the
/// time-scale component (`time`) and the level component (`level`); the two
/// sets may overlap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Structure {
    Ph,
    Ah,
    Aft,
    Hh { time: Vec<usize>, level: Vec<usize> },
    Gh,
}

impl Structure {
    pub fn kind(&self) -> StructureKind {
        match self {
            Structure::Ph => StructureKind::Ph,
            Structure::Ah => StructureKind::Ah,
            Structure::Aft => StructureKind::Aft,
            Structure::Hh { .. } => StructureKind::Hh,
            Structure::Gh => StructureKind::Gh,
        }
    }

    /// Non-HH structure from its kind. HH needs index sets; use
    /// [`Structure::hh`].
    pub fn simple(kind: StructureKind) -> Result<Self> {
        Ok(match kind {
            StructureKind::Ph => Structure::Ph,
            StructureKind::Ah => Structure::Ah,
            StructureKind::Aft => Structure::Aft,
            StructureKind::Gh => Structure::Gh,
            StructureKind::Hh => return Err(domain("HH requires time-scale and level covariate index sets")),
        })
    }

    pub fn hh(time: Vec<usize>, level: Vec<usize>) -> Self {
        Structure::Hh { time, level }
    }

    /// Checks that HH index sets fit in `p` covariates and hold no duplicates.
    pub fn validate(&self, p: usize) -> Result<()> {
        if let Structure::Hh { time, level } = self {
            for (name, set) in [("time-scale", time), ("level", level)] {
                let mut seen = vec![false; p];
                for &i in set {
                    if i >= p {
                        return Err(domain(format!("HH {name} covariate index {i} out of range for {p} covariates")));
                    }
                    if seen[i] {
                        return Err(domain(format!("HH {name} covariate index {i} repeated")));
                    }
                    seen[i] = true;
                }
            }
        }
        Ok(())
    }

    /// Lengths of (beta1, beta2) for `p` covariates.
    pub fn coefficient_lengths(&self, p: usize) -> (usize, usize) {
        match self {
            Structure::Ph => (0, p),
            Structure::Ah | Structure::Aft => (p, 0),
            Structure::Hh { time, level } => (time.len(), level.len()),
            Structure::Gh => (p, p),
        }
    }

    pub fn n_coefficients(&self, p: usize) -> usize {
        let (a, b) = self.coefficient_lengths(p);
        a + b
    }

    /// Labels of the regression coefficients in parameter-vector order.
    /// Time-scale effects carry a `_t` suffix.
    pub fn coefficient_names(&self, covariates: &[String]) -> Vec<String> {
        let timed = |i: usize| format!("{}_t", covariates[i]);
        let plain = |i: usize| covariates[i].clone();
        let p = covariates.len();
        match self {
            Structure::Ph => (0..p).map(plain).collect(),
            Structure::Ah | Structure::Aft => (0..p).map(timed).collect(),
            Structure::Hh { time, level } => {
                time.iter().map(|&i| timed(i)).chain(level.iter().map(|&i| plain(i))).collect()
            }
            Structure::Gh => (0..p).map(timed).chain((0..p).map(plain)).collect(),
        }
    }

    /// `(lp_t, lp_l)` for covariates `x` and the flat coefficient slice
    /// `beta1 ++ beta2`. `lp_t` is not yet clamped.
    #[inline]
    pub fn linear_predictors(&self, coefs: &[f64], x: &[f64]) -> (f64, f64) {
        match self {
            Structure::Ph => (0.0, dot(x, coefs)),
            Structure::Ah => (dot(x, coefs), 0.0),
            Structure::Aft => {
                let lp = dot(x, coefs);
                (lp, lp)
            }
            Structure::Gh => {
                let p = x.len();
                (dot(x, &coefs[..p]), dot(x, &coefs[p..]))
            }
            Structure::Hh { time, level } => {
                let (b1, b2) = coefs.split_at(time.len());
                (indexed_dot(x, time, b1), indexed_dot(x, level, b2))
            }
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind().label())
    }
}

#[inline]
fn dot(x: &[f64], b: &[f64]) -> f64 {
    x.iter().zip(b).fold(0.0, |acc, (xi, bi)| acc + xi * bi)
}

#[inline]
fn indexed_dot(x: &[f64], idx: &[usize], b: &[f64]) -> f64 {
    idx.iter().zip(b).fold(0.0, |acc, (&i, bi)| acc + x[i] * bi)
}

/// Clamps `lp_t` so that `exp(lp_t)` stays in `[1e-15, 1e15]`.
/// Returns the clamped value and whether clamping happened.
#[inline]
pub fn clamp_time_predictor(lp_t: f64) -> (f64, bool) {
    let lo = TIME_SCALE_MIN.ln();
    let hi = TIME_SCALE_MAX.ln();
    if lp_t < lo {
        (lo, true)
    } else if lp_t > hi {
        (hi, true)
    } else {
        (lp_t, false)
    }
}

pub(crate) fn warn_clamp_once(lp_t: f64) {
    if !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("time-scale factor exp({lp_t}) clamped to [1e-15, 1e15]");
    }
}

/// `(ln h_E, H_E)` at `t = exp(log_t)` for predictors `(lp_t, lp_l)`; the
/// time predictor must already be clamped.
#[inline]
pub(crate) fn excess_log_hazard_and_cum(kernel: &EwKernel, log_t: f64, lp_t: f64, lp_l: f64) -> (f64, f64) {
    let (log_h0, cum0) = kernel.log_hazard_and_cum_hazard(log_t + lp_t);
    (log_h0 + lp_l, cum0 * (lp_l - lp_t).exp())
}

/// Regression coefficients: `beta1` (time-scale) and `beta2` (level).
///
/// PH keeps only `beta2`; AH and AFT keep only `beta1` (AFT aliases it as the
/// level effect); HH keeps one coefficient per selected covariate; GH keeps
/// both at full length.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RegressionParams {
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
}

impl RegressionParams {
    pub fn new(beta1: Vec<f64>, beta2: Vec<f64>) -> Self {
        Self { beta1, beta2 }
    }

    pub fn zeros(structure: &Structure, p: usize) -> Self {
        let (a, b) = structure.coefficient_lengths(p);
        Self { beta1: vec![0.0; a], beta2: vec![0.0; b] }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.beta1.iter().chain(&self.beta2).copied().collect()
    }

    pub fn from_flat(structure: &Structure, p: usize, coefs: &[f64]) -> Result<Self> {
        let (a, b) = structure.coefficient_lengths(p);
        if coefs.len() != a + b {
            return Err(Error::DimensionMismatch { expected: a + b, actual: coefs.len() });
        }
        Ok(Self { beta1: coefs[..a].to_vec(), beta2: coefs[a..].to_vec() })
    }
}

/// A fully specified excess-hazard model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub structure: Structure,
    pub baseline: EwParams,
    pub betas: RegressionParams,
    pub covariate_names: Vec<String>,
}

impl ModelSpec {
    pub fn new(
        structure: Structure,
        baseline: EwParams,
        betas: RegressionParams,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        baseline.validate()?;
        let p = covariate_names.len();
        structure.validate(p)?;
        let (a, b) = structure.coefficient_lengths(p);
        if betas.beta1.len() != a {
            return Err(Error::DimensionMismatch { expected: a, actual: betas.beta1.len() });
        }
        if betas.beta2.len() != b {
            return Err(Error::DimensionMismatch { expected: b, actual: betas.beta2.len() });
        }
        if betas.flat().iter().any(|v| !v.is_finite()) {
            return Err(domain("regression coefficients must be finite"));
        }
        Ok(Self { structure, baseline, betas, covariate_names })
    }

    /// Same model with covariates named `x1, x2, ...`.
    pub fn unnamed(structure: Structure, baseline: EwParams, betas: RegressionParams, p: usize) -> Result<Self> {
        let names = (1..=p).map(|i| format!("x{i}")).collect();
        Self::new(structure, baseline, betas, names)
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    /// Clamped time predictor and level predictor for `x`.
    pub fn predictors(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.n_covariates() {
            return Err(Error::DimensionMismatch { expected: self.n_covariates(), actual: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(domain("covariates must be finite"));
        }
        let (lp_t, lp_l) = self.structure.linear_predictors(&self.betas.flat(), x);
        let (lp_t, clamped) = clamp_time_predictor(lp_t);
        if clamped {
            warn_clamp_once(lp_t);
        }
        Ok((lp_t, lp_l))
    }

    pub(crate) fn kernel(&self) -> EwKernel {
        EwKernel::new(&self.baseline)
    }
}

fn check_positive_time(t: f64) -> Result<()> {
    if !t.is_finite() || t <= 0.0 {
        return Err(domain(format!("time must be finite and > 0, got {t}")));
    }
    Ok(())
}

/// Excess hazard `h_E(t; x)`.
pub fn excess_hazard(t: f64, x: &[f64], m: &ModelSpec) -> Result<f64> {
    check_positive_time(t)?;
    let (lp_t, lp_l) = m.predictors(x)?;
    let (log_h, cum) = excess_log_hazard_and_cum(&m.kernel(), t.ln(), lp_t, lp_l);
    if !cum.is_finite() || log_h.is_nan() {
        return Err(Error::Overflow { t, detail: "excess survival numerically zero".into() });
    }
    Ok(log_h.exp())
}

/// Cumulative excess hazard `H_E(t; x)`.
pub fn excess_cum_hazard(t: f64, x: &[f64], m: &ModelSpec) -> Result<f64> {
    if !t.is_finite() || t < 0.0 {
        return Err(domain(format!("time must be finite and >= 0, got {t}")));
    }
    let (lp_t, lp_l) = m.predictors(x)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let (_, cum) = excess_log_hazard_and_cum(&m.kernel(), t.ln(), lp_t, lp_l);
    if !cum.is_finite() {
        return Err(Error::Overflow { t, detail: "cumulative excess hazard overflowed".into() });
    }
    Ok(cum)
}

/// Net survival `exp(-H_E(t; x))` of one covariate pattern.
pub fn net_survival_individual(t: f64, x: &[f64], m: &ModelSpec) -> Result<f64> {
    Ok((-excess_cum_hazard(t, x, m)?).exp())
}

/// Time at which `H_E(t; x) = v`, by inverting the baseline cumulative hazard
/// at `v * exp(lp_t - lp_l)` and rescaling by `exp(-lp_t)`.
pub fn excess_event_time(v: f64, x: &[f64], m: &ModelSpec) -> Result<f64> {
    if !(v > 0.0) || v.is_nan() {
        return Err(domain(format!("cumulative hazard target must be > 0, got {v}")));
    }
    let (lp_t, lp_l) = m.predictors(x)?;
    excess_event_time_with(&m.kernel(), v, lp_t, lp_l)
}

#[inline]
pub(crate) fn excess_event_time_with(kernel: &EwKernel, v: f64, lp_t: f64, lp_l: f64) -> Result<f64> {
    let target = v * (lp_t - lp_l).exp();
    let t = (kernel.log_inverse_cum_hazard(target) - lp_t).exp();
    if !t.is_finite() || t <= 0.0 || target.is_infinite() {
        return Err(Error::Saturation { target: v });
    }
    Ok(t)
}

/// Tabulates `(t, h_E(t; x))` over a strictly increasing positive grid.
pub fn hazard_curve(x: &[f64], m: &ModelSpec, t_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if t_grid.is_empty() {
        return Err(Error::Empty("time grid".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(domain("time grid must be strictly increasing"));
    }
    t_grid.iter().map(|&t| Ok((t, excess_hazard(t, x, m)?))).collect()
}
