//! Excess-hazard log-likelihood.
//!
//! For subject `j` with follow-up `t_j`, status `d_j` and covariates `x_j` the
//! contribution is `d_j * ln(h_P(age_j + t_j, year_j + t_j) + h_E(t_j; x_j)) - H_E(t_j; x_j)`.
//! The population cumulative hazard does not depend on the parameters and is
//! left out.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ew::{EwKernel, EwParams, LogEwParams};
use crate::life_table::LifeTable;
use crate::structure::{clamp_time_predictor, excess_log_hazard_and_cum, ModelSpec, RegressionParams, Structure};

/// Names of the three baseline entries of a parameter vector.
pub const BASELINE_PARAM_NAMES: [&str; 3] = ["log_sigma", "log_kappa", "log_alpha"];

/// Working-scale parameter vector `(log sigma, log kappa, log alpha, beta1.., beta2..)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Maps between a [`ParamVector`] and (baseline, coefficients) for one structure.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub structure: Structure,
    pub n_covariates: usize,
}

impl ParamLayout {
    pub fn new(structure: Structure, n_covariates: usize) -> Result<Self> {
        structure.validate(n_covariates)?;
        Ok(Self { structure, n_covariates })
    }

    pub fn len(&self) -> usize {
        3 + self.structure.n_coefficients(self.n_covariates)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self, covariate_names: &[String]) -> Vec<String> {
        BASELINE_PARAM_NAMES
            .iter()
            .map(|s| s.to_string())
            .chain(self.structure.coefficient_names(covariate_names))
            .collect()
    }

    pub fn pack(&self, baseline: &EwParams, betas: &RegressionParams) -> Result<ParamVector> {
        baseline.validate()?;
        let (a, b) = self.structure.coefficient_lengths(self.n_covariates);
        if betas.beta1.len() != a || betas.beta2.len() != b {
            return Err(Error::DimensionMismatch { expected: a + b, actual: betas.beta1.len() + betas.beta2.len() });
        }
        let lp = baseline.to_log();
        let mut v = vec![lp.log_sigma, lp.log_kappa, lp.log_alpha];
        v.extend(betas.flat());
        Ok(ParamVector(v))
    }

    pub fn unpack(&self, psi: &[f64]) -> Result<(EwParams, RegressionParams)> {
        if psi.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), actual: psi.len() });
        }
        let baseline = LogEwParams { log_sigma: psi[0], log_kappa: psi[1], log_alpha: psi[2] }.to_natural()?;
        let betas = RegressionParams::from_flat(&self.structure, self.n_covariates, &psi[3..])?;
        Ok((baseline, betas))
    }

    pub fn to_model_spec(&self, psi: &[f64], covariate_names: &[String]) -> Result<ModelSpec> {
        let (baseline, betas) = self.unpack(psi)?;
        ModelSpec::new(self.structure.clone(), baseline, betas, covariate_names.to_vec())
    }
}

/// Dataset prepared for repeated likelihood evaluation: log-times,
/// covariates in row-major order and the log population rate at exit for
/// each death.
#[derive(Debug, Clone)]
pub struct Likelihood {
    layout: ParamLayout,
    log_t: Vec<f64>,
    status: Vec<bool>,
    x: Vec<f64>,
    log_pop_rate: Vec<f64>,
}

/// Outcome of one evaluation, with the first offending subject when the
/// value is the `-inf` sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub bad_subject: Option<usize>,
    pub clamped: usize,
}

impl Likelihood {
    pub fn new(data: &Dataset, structure: Structure, lt: &LifeTable) -> Result<Self> {
        let layout = ParamLayout::new(structure, data.n_covariates())?;
        let n = data.len();
        let mut log_t = Vec::with_capacity(n);
        let mut status = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n * data.n_covariates());
        let mut log_pop_rate = Vec::with_capacity(n);
        for r in &data.records {
            log_t.push(r.time.ln());
            status.push(r.status);
            x.extend_from_slice(&r.covariates);
            let lr = if r.status {
                let si = lt.strata_index(&r.demographic.strata)?;
                lt.rate_by_index(si, r.demographic.age + r.time, r.demographic.year + r.time).ln()
            } else {
                f64::NEG_INFINITY
            };
            log_pop_rate.push(lr);
        }
        Ok(Self { layout, log_t, status, x, log_pop_rate })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn n_params(&self) -> usize {
        self.layout.len()
    }

    pub fn n_obs(&self) -> usize {
        self.log_t.len()
    }

    /// Log-likelihood, or `-inf` when any contribution is not finite.
    /// A wrong-length `psi` also yields `-inf`.
    #[inline]
    pub fn value(&self, psi: &[f64]) -> f64 {
        self.evaluate(psi).value
    }

    pub fn evaluate(&self, psi: &[f64]) -> Evaluation {
        let bad = |j| Evaluation { value: f64::NEG_INFINITY, bad_subject: Some(j), clamped: 0 };
        if psi.len() != self.layout.len() || psi.iter().any(|v| !v.is_finite()) {
            return Evaluation { value: f64::NEG_INFINITY, bad_subject: None, clamped: 0 };
        }
        let lp = LogEwParams { log_sigma: psi[0], log_kappa: psi[1], log_alpha: psi[2] };
        let kernel = EwKernel::from_log(&lp);
        let coefs = &psi[3..];
        let p = self.layout.n_covariates;
        let structure = &self.layout.structure;
        // Neumaier summation keeps finite-difference noise near eps * |total|
        let mut total = 0.0;
        let mut comp = 0.0;
        let mut clamped = 0;
        for j in 0..self.log_t.len() {
            let xj = &self.x[j * p..(j + 1) * p];
            let (lp_t, lp_l) = structure.linear_predictors(coefs, xj);
            let (lp_t, c) = clamp_time_predictor(lp_t);
            clamped += usize::from(c);
            let (log_h, cum) = excess_log_hazard_and_cum(&kernel, self.log_t[j], lp_t, lp_l);
            let mut term = -cum;
            if self.status[j] {
                term += log_add_exp(self.log_pop_rate[j], log_h);
            }
            if !term.is_finite() {
                return bad(j);
            }
            let next = total + term;
            comp += if total.abs() >= term.abs() { (total - next) + term } else { (term - next) + total };
            total = next;
        }
        total += comp;
        if !total.is_finite() {
            return bad(self.log_t.len().saturating_sub(1));
        }
        Evaluation { value: total, bad_subject: None, clamped }
    }
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// One-shot log-likelihood of `psi` under `structure`. Non-finite
/// contributions give `Ok(-inf)`; the offending subject is logged.
pub fn log_likelihood(psi: &ParamVector, data: &Dataset, structure: &Structure, lt: &LifeTable) -> Result<f64> {
    let lik = Likelihood::new(data, structure.clone(), lt)?;
    if psi.len() != lik.n_params() {
        return Err(Error::DimensionMismatch { expected: lik.n_params(), actual: psi.len() });
    }
    let ev = lik.evaluate(&psi.0);
    if let Some(j) = ev.bad_subject {
        log::debug!("log-likelihood not finite: contribution of subject {j}");
    }
    Ok(ev.value)
}
