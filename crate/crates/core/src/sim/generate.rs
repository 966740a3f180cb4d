//! Dataset generation by inversion: excess times from the structure,
//! other-cause times from the life table, then administrative and optional
//! exponential dropout censoring.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::calibrate::calibrate_dropout_rate;
use super::config::{Censoring, ScenarioConfig};
use super::covariates::{generate_covariates, SimCovariates};
use crate::data::{Dataset, SubjectRecord};
use crate::error::{domain, Error, Result};
use crate::life_table::{DemographicKey, LifeTable};
use crate::likelihood::ParamVector;
use crate::netsurv::stream_rng;
use crate::structure::{clamp_time_predictor, excess_event_time_with};

/// Life-table strata for `sex = 0` and `sex = 1`.
pub const SEX_STRATA: [&str; 2] = ["male", "female"];

/// Stream index reserved for dropout calibration.
pub const CALIBRATION_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedDataset {
    pub dataset: Dataset,
    pub truth: ParamVector,
    pub dropout_rate: f64,
}

/// Uncensored draws of one sample. Dropout is kept as a unit-rate
/// exponential so that any rate `r` reuses the same draws (`E / r`).
#[derive(Debug, Clone)]
pub(crate) struct LatentSample {
    pub covariates: SimCovariates,
    pub excess: Vec<f64>,
    pub other: Vec<f64>,
    pub dropout_unit: Vec<f64>,
}

impl LatentSample {
    fn censoring_time(&self, i: usize, horizon: f64, rate: f64) -> f64 {
        let drop = if rate > 0.0 { self.dropout_unit[i] / rate } else { f64::INFINITY };
        horizon.min(drop)
    }

    /// Death wins ties with censoring.
    pub fn censoring_proportion(&self, horizon: f64, rate: f64) -> f64 {
        let n = self.excess.len();
        let censored =
            (0..n).filter(|&i| self.excess[i].min(self.other[i]) > self.censoring_time(i, horizon, rate)).count();
        censored as f64 / n as f64
    }
}

pub(crate) fn draw_latent<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    n: usize,
    lt: &LifeTable,
    rng: &mut R,
) -> Result<LatentSample> {
    let spec = cfg.model_spec()?;
    let kernel = spec.kernel();
    let coefs = spec.betas.flat();
    let strata = [lt.strata_index(SEX_STRATA[0])?, lt.strata_index(SEX_STRATA[1])?];
    let covariates = generate_covariates(n, rng);
    let mut excess = Vec::with_capacity(n);
    let mut other = Vec::with_capacity(n);
    let mut dropout_unit = Vec::with_capacity(n);
    for i in 0..n {
        let x = covariates.design_row(i, cfg.age_centre);
        let (lp_t, lp_l) = spec.structure.linear_predictors(&coefs, &x);
        let (lp_t, _) = clamp_time_predictor(lp_t);
        let v: f64 = rng.sample(Exp1);
        let t_e = match excess_event_time_with(&kernel, v, lp_t, lp_l) {
            Ok(t) => t,
            Err(Error::Saturation { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        let w: f64 = rng.sample(Exp1);
        let si = strata[usize::from(covariates.sex[i])];
        excess.push(t_e);
        other.push(lt.invert_by_index(si, covariates.age[i], cfg.diagnosis_year, w));
        dropout_unit.push(rng.sample(Exp1));
    }
    Ok(LatentSample { covariates, excess, other, dropout_unit })
}

/// Dropout rate implied by the censoring mode; `Target` is calibrated on
/// the reserved stream of `cfg.seed`, so the result is deterministic.
pub fn resolve_dropout_rate(cfg: &ScenarioConfig, lt: &LifeTable) -> Result<f64> {
    match cfg.censoring {
        Censoring::Administrative => Ok(0.0),
        Censoring::Dropout { rate } => Ok(rate),
        Censoring::Target { proportion } => {
            calibrate_dropout_rate(cfg, proportion, lt, &mut stream_rng(cfg.seed, CALIBRATION_STREAM))
        }
    }
}

/// One dataset under `cfg` with an explicit dropout rate.
pub fn generate_dataset_with_rate<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    lt: &LifeTable,
    rate: f64,
    rng: &mut R,
) -> Result<SimulatedDataset> {
    cfg.validate()?;
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(domain(format!("dropout rate must be finite and >= 0, got {rate}")));
    }
    let latent = draw_latent(cfg, cfg.n, lt, rng)?;
    let mut records = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let death = latent.excess[i].min(latent.other[i]);
        let cens = latent.censoring_time(i, cfg.admin_horizon, rate);
        let time = death.min(cens);
        if !time.is_finite() {
            return Err(domain(format!("subject {i} has no finite event or censoring time")));
        }
        let sex = latent.covariates.sex[i];
        records.push(SubjectRecord {
            time,
            status: death <= cens,
            covariates: latent.covariates.design_row(i, cfg.age_centre).to_vec(),
            demographic: DemographicKey::new(
                latent.covariates.age[i],
                cfg.diagnosis_year,
                SEX_STRATA[usize::from(sex)],
            ),
        });
    }
    Ok(SimulatedDataset {
        dataset: Dataset::new(records, cfg.covariate_names())?,
        truth: cfg.truth()?,
        dropout_rate: rate,
    })
}

/// One dataset under `cfg`, resolving the dropout rate first.
pub fn generate_dataset<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    lt: &LifeTable,
    rng: &mut R,
) -> Result<SimulatedDataset> {
    let rate = resolve_dropout_rate(cfg, lt)?;
    generate_dataset_with_rate(cfg, lt, rate, rng)
}
