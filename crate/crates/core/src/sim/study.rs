//! Replicate studies: generate, fit, score and aggregate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::generate::{generate_dataset_with_rate, resolve_dropout_rate};
use super::metrics::{
    natural_param_names, natural_truth, performance_metrics, PerformanceSummary, ReplicateEstimate, SelectionSummary,
};
use crate::error::{Error, Result};
use crate::fit::{default_initial_values, fit_prepared, FitSettings, ModelFit};
use crate::life_table::LifeTable;
use crate::likelihood::{Likelihood, ParamLayout};
use crate::netsurv::stream_rng;
use crate::structure::Structure;

#[derive(Debug, Clone, PartialEq)]
pub struct StudySettings {
    /// Structures compared by AIC, each fitted from default initial values.
    pub candidates: Vec<Structure>,
    pub fit: FitSettings,
    pub level: f64,
    /// Start the scoring fit of the true structure at the true parameters.
    pub truth_init: bool,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            candidates: vec![Structure::Ph, Structure::Ah, Structure::Aft, Structure::Gh],
            fit: FitSettings::default(),
            level: 0.95,
            truth_init: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub n_deaths: usize,
    pub censoring: f64,
    /// Working-scale estimate of the scoring fit.
    pub psi_hat: Option<Vec<f64>>,
    pub loglik: Option<f64>,
    pub converged: bool,
    /// Positive-definite information matrix at the scoring fit.
    pub hessian_pd: bool,
    pub estimate: Option<ReplicateEstimate>,
    /// Why the replicate is left out of the performance summary.
    pub exclusion: Option<String>,
    /// AIC per candidate; `None` for failed or non-converged fits.
    pub aics: Vec<Option<f64>>,
    pub selected: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub scenario: ScenarioConfig,
    pub dropout_rate: f64,
    pub mean_censoring: f64,
    pub performance: PerformanceSummary,
    pub selection: SelectionSummary,
    pub replicates: Vec<ReplicateOutcome>,
}

impl StudyResult {
    pub fn hessian_pd_count(&self) -> usize {
        self.replicates.iter().filter(|r| r.hessian_pd).count()
    }
}

/// Label used in summaries, e.g. `GHEW`.
pub fn model_label(s: &Structure) -> String {
    format!("{}EW", s.kind().label())
}

fn exclusion_reason(f: &ModelFit) -> Option<String> {
    if !f.converged {
        Some("scoring fit did not converge".into())
    } else if f.hessian.is_none() {
        Some("non-finite Hessian".into())
    } else if f.covariance.is_none() {
        Some("Hessian not positive definite".into())
    } else {
        None
    }
}

/// Generates and analyses replicate `index` (stream `index` of `cfg.seed`).
pub fn run_replicate(
    cfg: &ScenarioConfig,
    lt: &LifeTable,
    rate: f64,
    settings: &StudySettings,
    index: usize,
) -> Result<ReplicateOutcome> {
    let sim = generate_dataset_with_rate(cfg, lt, rate, &mut stream_rng(cfg.seed, index as u64))?;
    let data = &sim.dataset;
    let names = &data.covariate_names;

    let lik = Likelihood::new(data, cfg.structure.clone(), lt)?;
    let init = settings.truth_init.then_some(&sim.truth);
    let scoring = fit_prepared(&lik, names, init, &settings.fit, || default_initial_values(data, &cfg.structure, lt));
    let mut out = ReplicateOutcome {
        index,
        n_deaths: data.n_deaths(),
        censoring: data.censoring_proportion(),
        psi_hat: None,
        loglik: None,
        converged: false,
        hessian_pd: false,
        estimate: None,
        exclusion: None,
        aics: Vec::with_capacity(settings.candidates.len()),
        selected: None,
    };
    match scoring {
        Ok(f) => {
            out.psi_hat = Some(f.psi_hat.0.clone());
            out.loglik = Some(f.loglik);
            out.converged = f.converged;
            out.hessian_pd = f.covariance.is_some();
            out.exclusion = exclusion_reason(&f);
            if out.exclusion.is_none() {
                out.estimate = Some(ReplicateEstimate::from_fit(&f, settings.level)?);
            }
        }
        Err(e) => out.exclusion = Some(format!("scoring fit failed: {e}")),
    }

    let mut best: Option<(usize, f64, usize)> = None;
    for (ci, structure) in settings.candidates.iter().enumerate() {
        let lik = Likelihood::new(data, structure.clone(), lt)?;
        let fit = fit_prepared(&lik, names, None, &settings.fit, || default_initial_values(data, structure, lt));
        let aic = match fit {
            Ok(f) if f.converged && f.aic.is_finite() => Some((f.aic, f.k)),
            Ok(_) => None,
            Err(e) => {
                log::warn!("replicate {index}: {} fit failed: {e}", model_label(structure));
                None
            }
        };
        out.aics.push(aic.map(|a| a.0));
        if let Some((a, k)) = aic {
            // strict improvement, then fewer parameters, then structure order
            let better = match best {
                None => true,
                Some((bi, ba, bk)) => {
                    a < ba || (a == ba && (k, structure.kind()) < (bk, settings.candidates[bi].kind()))
                }
            };
            if better {
                best = Some((ci, a, k));
            }
        }
    }
    out.selected = best.map(|b| b.0);
    Ok(out)
}

/// Runs `cfg.replicates` replicates in parallel and aggregates them. The
/// performance summary scores the true structure on the natural scale.
pub fn run_study(cfg: &ScenarioConfig, lt: &LifeTable, settings: &StudySettings) -> Result<StudyResult> {
    cfg.validate()?;
    let rate = resolve_dropout_rate(cfg, lt)?;
    let replicates = (0..cfg.replicates)
        .into_par_iter()
        .map(|i| run_replicate(cfg, lt, rate, settings, i))
        .collect::<Result<Vec<_>>>()?;
    summarise(cfg, rate, settings, replicates)
}

/// Aggregates already computed replicate outcomes.
pub fn summarise(
    cfg: &ScenarioConfig,
    rate: f64,
    settings: &StudySettings,
    replicates: Vec<ReplicateOutcome>,
) -> Result<StudyResult> {
    let estimates: Vec<ReplicateEstimate> = replicates.iter().filter_map(|r| r.estimate.clone()).collect();
    if estimates.is_empty() {
        return Err(Error::Study(format!("all {} replicates were excluded", replicates.len())));
    }
    for r in &replicates {
        if let Some(why) = &r.exclusion {
            log::warn!("replicate {} excluded: {why}", r.index);
        }
    }
    let layout = ParamLayout::new(cfg.structure.clone(), cfg.covariate_names().len())?;
    let names = natural_param_names(&layout.names(&cfg.covariate_names()));
    let truth = natural_truth(&cfg.truth()?.0);
    let mut performance = performance_metrics(&model_label(&cfg.structure), &names, &estimates, &truth)?;
    performance.replicates_excluded = replicates.len() - estimates.len();
    let selected: Vec<Option<usize>> = replicates.iter().map(|r| r.selected).collect();
    let selection = SelectionSummary::from_selections(settings.candidates.iter().map(model_label).collect(), &selected);
    let mean_censoring = replicates.iter().map(|r| r.censoring).sum::<f64>() / replicates.len() as f64;
    Ok(StudyResult { scenario: cfg.clone(), dropout_rate: rate, mean_censoring, performance, selection, replicates })
}
