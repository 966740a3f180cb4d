//! Dropout-rate calibration by bisection with common random numbers.

use rand::Rng;

use super::config::ScenarioConfig;
use super::generate::draw_latent;
use crate::error::{domain, Result};
use crate::life_table::LifeTable;

pub const PILOT_SIZE: usize = 10_000;
/// Accepted distance from the target on the pilot sample.
pub const CALIBRATION_TOLERANCE: f64 = 0.01;
const BISECTION_TOLERANCE: f64 = 0.001;
const MAX_RATE: f64 = 1e6;

/// Dropout rate `r` whose pilot censoring proportion is within
/// [`CALIBRATION_TOLERANCE`] of `target`. The pilot draws are fixed across
/// candidate rates, so the proportion is nondecreasing in `r`.
///
/// A target at or within tolerance below the administrative-only proportion
/// gives `r = 0`; a target further below is an error.
pub fn calibrate_dropout_rate<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    target: f64,
    lt: &LifeTable,
    rng: &mut R,
) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(domain(format!("target censoring must lie in (0, 1), got {target}")));
    }
    cfg.validate()?;
    let pilot = draw_latent(cfg, PILOT_SIZE, lt, rng)?;
    let p = |r: f64| pilot.censoring_proportion(cfg.admin_horizon, r);
    let floor = p(0.0);
    if target <= floor + BISECTION_TOLERANCE {
        if floor - target > CALIBRATION_TOLERANCE {
            return Err(domain(format!(
                "target censoring {target} is below the administrative-only proportion {floor:.4}"
            )));
        }
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while p(hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > MAX_RATE {
            return Err(domain(format!("target censoring {target} not reached at dropout rate {MAX_RATE}")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let pm = p(mid);
        if (pm - target).abs() <= BISECTION_TOLERANCE {
            return Ok(mid);
        }
        if pm < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = 0.5 * (lo + hi);
    if (p(r) - target).abs() > CALIBRATION_TOLERANCE {
        return Err(domain(format!("dropout calibration did not reach {target} (got {:.4})", p(r))));
    }
    Ok(r)
}
