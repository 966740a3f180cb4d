//! Simulation engine: scenarios, data generation, dropout calibration and
//! replicate studies.

mod calibrate;
mod config;
mod covariates;
mod generate;
mod metrics;
mod study;

pub use calibrate::{calibrate_dropout_rate, CALIBRATION_TOLERANCE, PILOT_SIZE};
pub use config::{
    Censoring, Preset, ScenarioConfig, CH_BETA1_W, CH_BETA2_W, DEFAULT_ADMIN_HORIZON, DEFAULT_AGE_CENTRE,
    DEFAULT_DIAGNOSIS_YEAR, SIM_COVARIATES,
};
pub use covariates::{generate_covariates, SimCovariates, AGE_MIXTURE};
pub use generate::{
    generate_dataset, generate_dataset_with_rate, resolve_dropout_rate, SimulatedDataset, CALIBRATION_STREAM,
    SEX_STRATA,
};
pub use metrics::{
    natural_param_names, natural_truth, performance_metrics, ParamPerformance, PerformanceSummary, ReplicateEstimate,
    SelectionSummary, NATURAL_BASELINE_NAMES, PERFORMANCE_HEADER, SELECTION_HEADER,
};
pub use study::{model_label, run_replicate, run_study, summarise, ReplicateOutcome, StudyResult, StudySettings};

use crate::ew::EwParams;
use crate::structure::{excess_hazard, net_survival_individual, ModelSpec, RegressionParams, Structure};

/// Whether `values` exceeds `margin` on both sides of zero.
fn sign_change(values: &[f64], margin: f64) -> bool {
    values.iter().any(|&v| v > margin) && values.iter().any(|&v| v < -margin)
}

/// Smallest log hazard ratio and net-survival difference counted as a crossing.
pub const CROSSING_MARGINS: (f64, f64) = (0.1, 0.01);

/// Whether hazard and net-survival curves of `W = 0` and `W = 1` (at centred
/// age 0, sex 0) cross on `(0, horizon)` by at least [`CROSSING_MARGINS`] for an HH model with `W` on the time
/// scale and every covariate on the level.
pub fn curves_cross(baseline: EwParams, level_age_sex: [f64; 2], beta1_w: f64, beta2_w: f64, horizon: f64) -> bool {
    let Ok(spec) = ModelSpec::unnamed(
        Structure::hh(vec![2], vec![0, 1, 2]),
        baseline,
        RegressionParams::new(vec![beta1_w], vec![level_age_sex[0], level_age_sex[1], beta2_w]),
        3,
    ) else {
        return false;
    };
    let grid: Vec<f64> = (1..500).map(|i| horizon * i as f64 / 500.0).collect();
    let diff = |f: &dyn Fn(f64, &[f64]) -> Option<f64>| -> Option<Vec<f64>> {
        grid.iter().map(|&t| Some(f(t, &[0.0, 0.0, 1.0])? - f(t, &[0.0, 0.0, 0.0])?)).collect()
    };
    let h = diff(&|t, x| excess_hazard(t, x, &spec).ok().map(f64::ln));
    let s = diff(&|t, x| net_survival_individual(t, x, &spec).ok());
    let (mh, ms) = CROSSING_MARGINS;
    matches!((h, s), (Some(h), Some(s)) if sign_change(&h, mh) && sign_change(&s, ms))
}

/// Grid search over `beta1_W in {0.1, ..., 3.0}` and `beta2_W in {-1.0, ..., 1.0}`
/// (step 0.1) for the first pair, ordered by `|beta1| + |beta2|`, whose curves
/// cross on `(0, horizon)`.
pub fn search_crossing_parameters(baseline: EwParams, level_age_sex: [f64; 2], horizon: f64) -> Option<(f64, f64)> {
    let mut grid: Vec<(i32, i32)> = (1..=30).flat_map(|a| (-10..=10).map(move |b| (a, b))).collect();
    grid.sort_by_key(|&(a, b)| (a.abs() + b.abs(), a, b));
    grid.into_iter()
        .map(|(a, b)| (a as f64 / 10.0, b as f64 / 10.0))
        .find(|&(b1, b2)| curves_cross(baseline, level_age_sex, b1, b2, horizon))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_fixture_is_reproduced_by_search() {
        let g = ScenarioConfig::gh();
        let found = search_crossing_parameters(g.baseline, [0.05, 0.2], 5.0).unwrap();
        assert_eq!(found, (CH_BETA1_W, CH_BETA2_W));
        assert!(curves_cross(g.baseline, [0.05, 0.2], CH_BETA1_W, CH_BETA2_W, 5.0));
    }
}
