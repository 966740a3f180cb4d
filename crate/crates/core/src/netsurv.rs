//! Net survival from a fitted model: plug-in curves and simulation-based
//! percentile intervals from the asymptotic normal law of the estimate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::ew::{EwKernel, LogEwParams};
use crate::fit::{critical_value, ModelFit};
use crate::structure::{clamp_time_predictor, excess_log_hazard_and_cum, Structure};

/// Most negative covariance eigenvalue absorbed by the ridge.
pub const MAX_RIDGE: f64 = 1e-10;
pub const MIN_DRAWS: usize = 100;

/// Covariate pattern(s) whose net survival is requested. A subgroup is
/// averaged over its members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NsTarget {
    Individual(Vec<f64>),
    Subgroup(Vec<Vec<f64>>),
}

impl NsTarget {
    fn members(&self) -> &[Vec<f64>] {
        match self {
            NsTarget::Individual(x) => std::slice::from_ref(x),
            NsTarget::Subgroup(xs) => xs,
        }
    }
}

/// `lower <= upper` at every time and all values lie in `[0, 1]`; the plug-in
/// point is not required to lie inside its percentile interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSurvivalEstimate {
    pub times: Vec<f64>,
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub draws_used: usize,
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Empty("time points".into()));
    }
    if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(domain("time points must be finite and > 0"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(domain("time points must be nondecreasing"));
    }
    Ok(())
}

fn check_members(fit: &ModelFit, xs: &[Vec<f64>]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::Empty("subgroup has no members".into()));
    }
    let p = fit.covariate_names.len();
    for x in xs {
        if x.len() != p {
            return Err(Error::DimensionMismatch { expected: p, actual: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(domain("covariate values must be finite"));
        }
    }
    Ok(())
}

/// Mean net survival of `xs` at `times` under working-scale `psi`.
fn mean_curve(structure: &Structure, psi: &[f64], xs: &[Vec<f64>], times: &[f64]) -> Vec<f64> {
    let kernel = EwKernel::from_log(&LogEwParams { log_sigma: psi[0], log_kappa: psi[1], log_alpha: psi[2] });
    let coefs = &psi[3..];
    let log_times: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let mut acc = vec![0.0; times.len()];
    for x in xs {
        let (lp_t, lp_l) = structure.linear_predictors(coefs, x);
        let (lp_t, _) = clamp_time_predictor(lp_t);
        for (a, &lt) in acc.iter_mut().zip(&log_times) {
            *a += (-excess_log_hazard_and_cum(&kernel, lt, lp_t, lp_l).1).exp();
        }
    }
    let m = xs.len() as f64;
    acc.into_iter().map(|a| a / m).collect()
}

fn warn_unconverged(fit: &ModelFit) {
    if !fit.converged {
        log::warn!("net survival from a non-converged {} fit", fit.structure);
    }
}

/// `exp(-H_E(t; x))` at each time under the fitted parameters.
pub fn predict_net_survival(fit: &ModelFit, x: &[f64], times: &[f64]) -> Result<Vec<f64>> {
    marginal_net_survival(fit, std::slice::from_ref(&x.to_vec()), times)
}

/// Arithmetic mean over `subgroup` of the individual net-survival curves.
pub fn marginal_net_survival(fit: &ModelFit, subgroup: &[Vec<f64>], times: &[f64]) -> Result<Vec<f64>> {
    check_members(fit, subgroup)?;
    check_times(times)?;
    warn_unconverged(fit);
    Ok(mean_curve(&fit.structure, &fit.psi_hat.0, subgroup, times))
}

/// Factor `L` with `L L' = cov`, from the eigen decomposition. Eigenvalues in
/// `[-MAX_RIDGE, 0)` are treated as zero.
pub fn covariance_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(cov.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() || min < -MAX_RIDGE {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    let roots = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// RNG for draw `index` of a run seeded with `seed`: one ChaCha stream per index.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Type-7 empirical quantile of sorted data.
pub(crate) fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile intervals from `b` draws `psi_b ~ N(psi_hat, J^-1)` on the
/// working scale. Every time point uses the same draws, and draw `i` uses
/// [`stream_rng`]`(seed, i)`, so the result is independent of thread count.
pub fn simulate_ns_ci(
    fit: &ModelFit,
    target: &NsTarget,
    times: &[f64],
    b: usize,
    level: f64,
    seed: u64,
) -> Result<NetSurvivalEstimate> {
    if b < MIN_DRAWS {
        return Err(domain(format!("at least {MIN_DRAWS} draws are required, got {b}")));
    }
    critical_value(level)?;
    let xs = target.members();
    check_members(fit, xs)?;
    check_times(times)?;
    warn_unconverged(fit);
    let cov = fit
        .covariance_matrix()
        .ok_or_else(|| Error::NoCovariance(format!("{} fit has no valid covariance", fit.structure)))?;
    let factor = covariance_factor(&cov)?;
    let psi_hat = DVector::from_column_slice(&fit.psi_hat.0);
    let dim = psi_hat.len();

    let curves: Vec<Vec<f64>> = (0..b as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            let psi = &psi_hat + &factor * z;
            mean_curve(&fit.structure, psi.as_slice(), xs, times)
        })
        .filter(|c| c.iter().all(|v| v.is_finite()))
        .collect();
    if curves.is_empty() {
        return Err(Error::Study("no draw produced a finite net-survival curve".into()));
    }
    if curves.len() < b {
        log::warn!("{} of {b} net-survival draws were not finite and were dropped", b - curves.len());
    }

    let tau = 1.0 - level;
    let mut lower = Vec::with_capacity(times.len());
    let mut upper = Vec::with_capacity(times.len());
    let mut column = vec![0.0; curves.len()];
    for k in 0..times.len() {
        for (c, curve) in column.iter_mut().zip(&curves) {
            *c = curve[k];
        }
        column.sort_by(f64::total_cmp);
        lower.push(sorted_quantile(&column, tau / 2.0).clamp(0.0, 1.0));
        upper.push(sorted_quantile(&column, 1.0 - tau / 2.0).clamp(0.0, 1.0));
    }
    Ok(NetSurvivalEstimate {
        times: times.to_vec(),
        point: mean_curve(&fit.structure, &fit.psi_hat.0, xs, times),
        lower,
        upper,
        level,
        draws_used: curves.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::ParamVector;

    fn exp_fit(cov: Option<DMatrix<f64>>) -> ModelFit {
        // sigma = 2, kappa = alpha = 1, PH with one covariate of effect 0.5
        let psi = ParamVector(vec![2f64.ln(), 0.0, 0.0, 0.5]);
        ModelFit::new(Structure::Ph, vec!["x".into()], psi, vec![false; 4], -10.0, None, cov, true).unwrap()
    }

    #[test]
    fn exponential_baseline_closed_form() {
        let f = exp_fit(None);
        let ns = predict_net_survival(&f, &[0.0], &[0.5, 1.0, 3.0]).unwrap();
        for (s, t) in ns.iter().zip([0.5, 1.0, 3.0]) {
            assert!((s - (-t / 2.0f64).exp()).abs() < 1e-14);
        }
        let ns1 = predict_net_survival(&f, &[1.0], &[1.0]).unwrap();
        assert!((ns1[0] - (-0.5 * 0.5f64.exp()).exp()).abs() < 1e-14);
        assert!(predict_net_survival(&f, &[0.0], &[1e-12]).unwrap()[0] > 1.0 - 1e-11);
    }

    #[test]
    fn marginal_is_member_mean() {
        let f = exp_fit(None);
        let t = [0.7, 2.0];
        let a = predict_net_survival(&f, &[0.0], &t).unwrap();
        let b = predict_net_survival(&f, &[1.0], &t).unwrap();
        let m = marginal_net_survival(&f, &[vec![0.0], vec![1.0]], &t).unwrap();
        for k in 0..2 {
            assert!((m[k] - 0.5 * (a[k] + b[k])).abs() < 1e-15);
        }
        assert!(marginal_net_survival(&f, &[], &t).is_err());
        assert!(predict_net_survival(&f, &[0.0, 1.0], &t).is_err());
    }

    #[test]
    fn zero_covariance_collapses() {
        let f = exp_fit(Some(DMatrix::zeros(4, 4)));
        let est = simulate_ns_ci(&f, &NsTarget::Individual(vec![0.3]), &[1.0, 2.0], 200, 0.95, 7).unwrap();
        assert_eq!(est.lower, est.point);
        assert_eq!(est.upper, est.point);
        assert_eq!(est.draws_used, 200);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = exp_fit(Some(DMatrix::identity(4, 4) * 0.01));
        let t = NsTarget::Individual(vec![0.0]);
        assert!(simulate_ns_ci(&f, &t, &[1.0], 99, 0.95, 1).is_err());
        assert!(simulate_ns_ci(&exp_fit(None), &t, &[1.0], 100, 0.95, 1).is_err());
        let mut bad = DMatrix::identity(4, 4) * 0.01;
        bad[(0, 0)] = -1e-6;
        assert!(matches!(
            simulate_ns_ci(&exp_fit(Some(bad)), &t, &[1.0], 100, 0.95, 1),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn factor_reproduces_covariance() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let l = covariance_factor(&c).unwrap();
        assert!((&l * l.transpose() - &c).abs().max() < 1e-14);
    }
}
