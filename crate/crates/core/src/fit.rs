//! Maximum-likelihood fitting, asymptotic intervals and AIC selection.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{domain, Error, Result};
use crate::life_table::LifeTable;
use crate::likelihood::{Likelihood, ParamLayout, ParamVector};
use crate::numdiff::{numeric_hessian, HessianSettings};
use crate::optim::{minimize, OptimResult, OptimSettings};
use crate::structure::{ModelSpec, Structure};

/// Initial power parameter used by [`default_initial_values`].
pub const INITIAL_ALPHA: f64 = 1.1;

#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub optim: OptimSettings,
    /// Restarts from a perturbed initial point before giving up.
    pub max_restarts: usize,
    /// Standard deviation of the restart perturbation on the working scale.
    pub restart_scale: f64,
    pub seed: u64,
    pub hessian: HessianSettings,
    /// Parameters held at fixed values, as `(index, value)` in the layout.
    pub fixed: Vec<(usize, f64)>,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            optim: OptimSettings::default(),
            max_restarts: 3,
            restart_scale: 0.1,
            seed: 0x5eed,
            hessian: HessianSettings::default(),
            fixed: Vec::new(),
        }
    }
}

/// A fitted model. Matrices are stored row-major over the full parameter
/// vector; rows and columns of fixed parameters are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub structure: Structure,
    pub covariate_names: Vec<String>,
    pub param_names: Vec<String>,
    pub psi_hat: ParamVector,
    pub fixed: Vec<bool>,
    pub loglik: f64,
    /// Number of free parameters.
    pub k: usize,
    pub aic: f64,
    /// Observed information `J = -d2 loglik`.
    pub hessian: Option<Vec<Vec<f64>>>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub converged: bool,
    pub iterations: usize,
    pub restarts: usize,
    pub gradient_norm: f64,
    pub n_obs: usize,
    pub warnings: Vec<String>,
}

impl ModelFit {
    /// Assembles a fit; `aic` is always `-2 loglik + 2k`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        structure: Structure,
        covariate_names: Vec<String>,
        psi_hat: ParamVector,
        fixed: Vec<bool>,
        loglik: f64,
        hessian: Option<DMatrix<f64>>,
        covariance: Option<DMatrix<f64>>,
        converged: bool,
    ) -> Result<Self> {
        let layout = ParamLayout::new(structure.clone(), covariate_names.len())?;
        if psi_hat.len() != layout.len() || fixed.len() != layout.len() {
            return Err(Error::DimensionMismatch { expected: layout.len(), actual: psi_hat.len() });
        }
        let k = fixed.iter().filter(|f| !**f).count();
        let to_rows = |m: DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        Ok(Self {
            param_names: layout.names(&covariate_names),
            structure,
            covariate_names,
            psi_hat,
            fixed,
            loglik,
            k,
            aic: aic_value(loglik, k),
            hessian: hessian.map(to_rows),
            covariance: covariance.map(to_rows),
            converged,
            iterations: 0,
            restarts: 0,
            gradient_norm: f64::NAN,
            n_obs: 0,
            warnings: Vec::new(),
        })
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout { structure: self.structure.clone(), n_covariates: self.covariate_names.len() }
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        self.layout().to_model_spec(&self.psi_hat.0, &self.covariate_names)
    }

    pub fn covariance_matrix(&self) -> Option<DMatrix<f64>> {
        self.covariance.as_ref().map(|rows| from_rows(rows))
    }

    pub fn hessian_matrix(&self) -> Option<DMatrix<f64>> {
        self.hessian.as_ref().map(|rows| from_rows(rows))
    }

    /// Working-scale standard errors `sqrt(diag(J^-1))`.
    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        self.covariance.as_ref().map(|c| (0..c.len()).map(|i| c[i][i].max(0.0).sqrt()).collect())
    }
}

pub(crate) fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

pub fn aic_value(loglik: f64, k: usize) -> f64 {
    -2.0 * loglik + 2.0 * k as f64
}

pub fn aic(fit: &ModelFit) -> f64 {
    aic_value(fit.loglik, fit.k)
}

fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Starting point: zero coefficients and a Weibull matched to the quartiles
/// of the death times, with `alpha = 1.1`. Falls back to
/// `(median time, 1, 1)` when that point has a non-finite likelihood.
pub fn default_initial_values(data: &Dataset, structure: &Structure, lt: &LifeTable) -> Result<ParamVector> {
    let mut deaths: Vec<f64> = data.records.iter().filter(|r| r.status).map(|r| r.time).collect();
    if deaths.is_empty() {
        return Err(Error::Initialisation("every subject is censored".into()));
    }
    deaths.sort_by(f64::total_cmp);
    let lik = Likelihood::new(data, structure.clone(), lt)?;
    let n_coef = lik.n_params() - 3;
    let (t25, t50, t75) = (quantile_type7(&deaths, 0.25), quantile_type7(&deaths, 0.5), quantile_type7(&deaths, 0.75));
    let mut kappa = ((-(0.25f64).ln()).ln() - (-(0.75f64).ln()).ln()) / (t75.ln() - t25.ln());
    if !kappa.is_finite() || kappa <= 0.0 {
        kappa = 1.0;
    }
    let log_sigma = t50.ln() - (2.0f64.ln()).ln() / kappa;
    let mut psi = vec![log_sigma, kappa.ln(), INITIAL_ALPHA.ln()];
    psi.extend(std::iter::repeat_n(0.0, n_coef));
    if lik.value(&psi).is_finite() {
        return Ok(ParamVector(psi));
    }
    let mut all: Vec<f64> = data.records.iter().map(|r| r.time).collect();
    all.sort_by(f64::total_cmp);
    let mut fallback = vec![quantile_type7(&all, 0.5).ln(), 0.0, 0.0];
    fallback.extend(std::iter::repeat_n(0.0, n_coef));
    if lik.value(&fallback).is_finite() {
        Ok(ParamVector(fallback))
    } else {
        Err(Error::Initialisation("no finite log-likelihood at the default starting points".into()))
    }
}

/// Maximises the log-likelihood on the log-reparameterised scale.
///
/// Non-convergence after the restarts is reported through
/// `converged = false`. A non-finite or indefinite information matrix leaves
/// the covariance absent and adds a warning.
pub fn fit(
    data: &Dataset,
    structure: &Structure,
    lt: &LifeTable,
    init: Option<&ParamVector>,
    settings: &FitSettings,
) -> Result<ModelFit> {
    let lik = Likelihood::new(data, structure.clone(), lt)?;
    fit_prepared(&lik, &data.covariate_names, init, settings, || default_initial_values(data, structure, lt))
}

/// [`fit`] on an already prepared likelihood.
pub fn fit_prepared(
    lik: &Likelihood,
    covariate_names: &[String],
    init: Option<&ParamVector>,
    settings: &FitSettings,
    default_init: impl FnOnce() -> Result<ParamVector>,
) -> Result<ModelFit> {
    let n = lik.n_params();
    let x0 = match init {
        Some(p) => p.clone(),
        None => default_init()?,
    };
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: x0.len() });
    }
    let mut full = x0.0.clone();
    let mut fixed = vec![false; n];
    for &(i, v) in &settings.fixed {
        if i >= n || !v.is_finite() {
            return Err(domain(format!("invalid fixed parameter ({i}, {v})")));
        }
        fixed[i] = true;
        full[i] = v;
    }
    let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
    if free.is_empty() {
        return Err(domain("every parameter is fixed"));
    }
    let template = full.clone();
    let expand = |z: &[f64]| {
        let mut v = template.clone();
        for (k, &i) in free.iter().enumerate() {
            v[i] = z[k];
        }
        v
    };
    let mut objective = |z: &[f64]| {
        let v = -lik.value(&expand(z));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let start: Vec<f64> = free.iter().map(|&i| full[i]).collect();
    if !objective(&start).is_finite() {
        return Err(Error::Initialisation("log-likelihood is not finite at the initial point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut best: Option<OptimResult> = None;
    let mut restarts = 0;
    let mut iterations = 0;
    for attempt in 0..=settings.max_restarts {
        let x_start: Vec<f64> = if attempt == 0 {
            start.clone()
        } else {
            restarts += 1;
            let base = best.as_ref().map(|b| b.x.clone()).unwrap_or_else(|| start.clone());
            let perturbed: Vec<f64> = base
                .iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + settings.restart_scale * z
                })
                .collect();
            if !objective(&perturbed).is_finite() {
                continue;
            }
            perturbed
        };
        let res = minimize(&mut objective, &x_start, &settings.optim);
        iterations += res.iterations;
        let better = match &best {
            None => true,
            Some(b) => (res.converged && !b.converged) || (res.converged == b.converged && res.f < b.f),
        };
        if better {
            best = Some(res);
        }
        if best.as_ref().is_some_and(|b| b.converged) {
            break;
        }
    }
    let best = best.ok_or_else(|| Error::Initialisation("no finite restart point".into()))?;

    let psi_hat = expand(&best.x);
    let mut warnings = Vec::new();
    if !best.converged {
        warnings.push(format!(
            "optimiser did not converge: gradient max-norm {:.3e} after {} restarts",
            best.grad_norm(),
            restarts
        ));
    }

    let (hessian, covariance) = match numeric_hessian(&mut objective, &best.x, settings.hessian) {
        Err(e) => {
            warnings.push(format!("Hessian evaluation failed: {e}"));
            (None, None)
        }
        Ok(j_free) if j_free.iter().any(|v| !v.is_finite()) => {
            warnings.push("Hessian has non-finite entries".into());
            (None, None)
        }
        Ok(j_free) => {
            let embed = |m: &DMatrix<f64>| {
                let mut out = DMatrix::zeros(n, n);
                for (a, &i) in free.iter().enumerate() {
                    for (b, &j) in free.iter().enumerate() {
                        out[(i, j)] = m[(a, b)];
                    }
                }
                out
            };
            let cov = j_free.clone().cholesky().map(|c| {
                let inv = c.inverse();
                (&inv + inv.transpose()) * 0.5
            });
            if cov.is_none() {
                warnings.push("information matrix is not positive definite; covariance unavailable".into());
            }
            (Some(embed(&j_free)), cov.as_ref().map(embed))
        }
    };

    let ev = lik.evaluate(&psi_hat);
    if ev.clamped > 0 {
        warnings
            .push(format!("time-scale factor clamped to [1e-15, 1e15] for {} subjects at the estimate", ev.clamped));
    }

    let mut out = ModelFit::new(
        lik.layout().structure.clone(),
        covariate_names.to_vec(),
        ParamVector(psi_hat),
        fixed,
        -best.f,
        hessian,
        covariance,
        best.converged,
    )?;
    out.iterations = iterations;
    out.restarts = restarts;
    out.gradient_norm = best.grad_norm();
    out.n_obs = lik.n_obs();
    out.warnings = warnings;
    if let Some(se) = out.standard_errors() {
        let z = normal_quantile(0.975);
        let (lo, hi) = (out.psi_hat.0[2] - z * se[2], out.psi_hat.0[2] + z * se[2]);
        if lo <= 0.0 && 0.0 <= hi {
            out.warnings.push(
                "95% interval for alpha contains 1: baseline is compatible with a Weibull, \
                 where PH, AH and AFT coincide and GH is not identifiable"
                    .into(),
            );
        }
    }
    for w in &out.warnings {
        log::warn!("{} fit: {w}", out.structure);
    }
    Ok(out)
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

/// Normal critical value `z_{1 - (1-level)/2}`.
pub fn critical_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(domain(format!("confidence level must lie in (0, 1), got {level}")));
    }
    Ok(normal_quantile(1.0 - (1.0 - level) / 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Interval for one parameter. `natural` is set for the three baseline
/// parameters: endpoints exponentiated, SE by the delta method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInterval {
    pub name: String,
    pub working: Interval,
    pub natural: Option<Interval>,
}

/// `psi_i +/- z * sqrt((J^-1)_ii)` on the working scale.
pub fn confidence_intervals(fit: &ModelFit, level: f64) -> Result<Vec<ParamInterval>> {
    let z = critical_value(level)?;
    let se = fit
        .standard_errors()
        .ok_or_else(|| Error::NoCovariance(format!("{} fit has no valid covariance", fit.structure)))?;
    Ok(fit
        .psi_hat
        .0
        .iter()
        .zip(&se)
        .enumerate()
        .map(|(i, (&est, &s))| {
            let working = Interval { estimate: est, se: s, lower: est - z * s, upper: est + z * s };
            let natural = (i < 3).then(|| Interval {
                estimate: est.exp(),
                se: est.exp() * s,
                lower: working.lower.exp(),
                upper: working.upper.exp(),
            });
            ParamInterval { name: fit.param_names[i].clone(), working, natural }
        })
        .collect())
}

/// Index of the minimum-AIC converged fit. Ties go to fewer parameters,
/// then to the order PH < AH < AFT < HH < GH.
pub fn select_model(fits: &[ModelFit]) -> Result<usize> {
    if fits.is_empty() {
        return Err(Error::Empty("no candidate fits".into()));
    }
    let mut best: Option<usize> = None;
    for (i, f) in fits.iter().enumerate() {
        if !f.converged || !f.aic.is_finite() {
            log::warn!("excluding non-converged {} fit from AIC selection", f.structure);
            continue;
        }
        best = Some(match best {
            None => i,
            Some(b) => {
                let fb = &fits[b];
                let key = |m: &ModelFit| (m.k, m.structure.kind());
                if f.aic < fb.aic || (f.aic == fb.aic && key(f) < key(fb)) {
                    i
                } else {
                    b
                }
            }
        });
    }
    best.ok_or_else(|| Error::Empty("no converged candidate fits".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy(structure: Structure, loglik: f64, k: usize, converged: bool) -> ModelFit {
        let p = match structure {
            Structure::Gh => (k - 3) / 2,
            _ => k - 3,
        };
        let names = (0..p).map(|i| format!("x{i}")).collect();
        ModelFit::new(structure, names, ParamVector(vec![0.0; k]), vec![false; k], loglik, None, None, converged)
            .unwrap()
    }

    #[test]
    fn aic_formula() {
        let f = dummy(Structure::Gh, -100.0, 9, true);
        assert_eq!(f.aic, 218.0);
        assert_eq!(aic(&f), 218.0);
    }

    #[test]
    fn tie_goes_to_fewer_parameters() {
        let gh = dummy(Structure::Gh, -100.0, 9, true);
        // same AIC with k = 5
        let ph = dummy(Structure::Ph, -104.0, 5, true);
        assert_eq!(gh.aic, ph.aic);
        assert_eq!(select_model(&[gh.clone(), ph.clone()]).unwrap(), 1);
        let ah = dummy(Structure::Ah, -104.0, 5, true);
        assert_eq!(select_model(&[ah, ph]).unwrap(), 1);
    }

    #[test]
    fn selection_skips_non_converged() {
        let a = dummy(Structure::Gh, -10.0, 9, false);
        let b = dummy(Structure::Ph, -100.0, 5, true);
        assert_eq!(select_model(&[a.clone(), b]).unwrap(), 1);
        assert!(select_model(&[a]).is_err());
        assert!(select_model(&[]).is_err());
    }

    #[test]
    fn critical_values() {
        assert!((critical_value(0.95).unwrap() - 1.959964).abs() < 1e-6);
        assert!(critical_value(0.99).unwrap() > critical_value(0.95).unwrap());
        assert!(critical_value(1.0).is_err());
    }

    #[test]
    fn intervals_need_covariance() {
        let f = dummy(Structure::Ph, -1.0, 4, true);
        assert!(matches!(confidence_intervals(&f, 0.95), Err(Error::NoCovariance(_))));
    }
}
