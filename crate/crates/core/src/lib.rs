//! Excess-hazard regression under a general hazard structure with an
//! exponentiated Weibull baseline: model functions, life tables, maximum
//! likelihood fitting, net survival and a simulation engine.

pub mod data;
pub mod error;
pub mod ew;
pub mod fit;
pub mod life_table;
pub mod likelihood;
pub mod netsurv;
pub mod numdiff;
pub mod optim;
pub mod sim;
pub mod structure;

pub use data::{load_dataset, parse_dataset, Dataset, SubjectRecord};
pub use error::{Error, Result};
pub use ew::{
    classify_shape, ew_cdf, ew_cum_hazard, ew_hazard, ew_hazard_shape, ew_inverse_cum_hazard, ew_log_hazard, ew_pdf,
    ew_quantile, ew_survival, from_log_params, to_log_params, EwParams, HazardShape, LogEwParams,
};
pub use fit::{aic, confidence_intervals, default_initial_values, fit, select_model, FitSettings, ModelFit};
pub use life_table::{load_life_table, lookup_rate, parse_life_table, DemographicKey, LifeTable};
pub use likelihood::{log_likelihood, ParamLayout, ParamVector};
pub use netsurv::{marginal_net_survival, predict_net_survival, simulate_ns_ci, NetSurvivalEstimate, NsTarget};
pub use numdiff::{numeric_hessian, HessianSettings, HessianStep};
pub use structure::{
    excess_cum_hazard, excess_event_time, excess_hazard, hazard_curve, net_survival_individual, ModelSpec,
    RegressionParams, Structure, StructureKind,
};
