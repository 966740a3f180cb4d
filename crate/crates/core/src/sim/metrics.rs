//! Replicate aggregation: bias, spread, standard errors, RMSE, coverage and
//! AIC selection frequencies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{confidence_intervals, ModelFit};
use crate::netsurv::sorted_quantile;

/// Names of the baseline parameters on the natural scale.
pub const NATURAL_BASELINE_NAMES: [&str; 3] = ["sigma", "kappa", "alpha"];

/// One replicate's estimates, standard errors and interval endpoints, on the
/// natural scale for the baseline parameters and directly for coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateEstimate {
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ReplicateEstimate {
    /// Baseline SEs by the delta method, endpoints by exponentiation.
    pub fn from_fit(fit: &ModelFit, level: f64) -> Result<Self> {
        let ci = confidence_intervals(fit, level)?;
        let mut out = Self { estimate: vec![], se: vec![], lower: vec![], upper: vec![] };
        for p in ci {
            let iv = p.natural.unwrap_or(p.working);
            out.estimate.push(iv.estimate);
            out.se.push(iv.se);
            out.lower.push(iv.lower);
            out.upper.push(iv.upper);
        }
        Ok(out)
    }
}

/// Natural-scale names: `sigma, kappa, alpha` then the coefficient names.
pub fn natural_param_names(fit_names: &[String]) -> Vec<String> {
    NATURAL_BASELINE_NAMES.iter().map(|s| s.to_string()).chain(fit_names.iter().skip(3).cloned()).collect()
}

/// Natural-scale truth from a working-scale vector.
pub fn natural_truth(psi: &[f64]) -> Vec<f64> {
    psi.iter().enumerate().map(|(i, &v)| if i < 3 { v.exp() } else { v }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPerformance {
    pub name: String,
    pub truth: f64,
    /// Mean of the estimates.
    pub mmle: f64,
    /// Median of the estimates.
    pub median: f64,
    /// Sample standard deviation (zero for one replicate).
    pub esd: f64,
    pub mean_se: f64,
    pub rmse: f64,
    pub coverage: f64,
}

impl ParamPerformance {
    pub fn bias(&self) -> f64 {
        self.mmle - self.truth
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSummary {
    pub model: String,
    pub rows: Vec<ParamPerformance>,
    pub replicates_used: usize,
    pub replicates_excluded: usize,
}

pub const PERFORMANCE_HEADER: &str = "model,parameter,truth,MMLE,mMLE,ESD,mean_SE,RMSE,coverage";

impl PerformanceSummary {
    pub fn to_csv_string(&self) -> String {
        let mut out = format!("{PERFORMANCE_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                self.model, r.name, r.truth, r.mmle, r.median, r.esd, r.mean_se, r.rmse, r.coverage
            ));
        }
        out
    }

    pub fn row(&self, name: &str) -> Option<&ParamPerformance> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Aggregates replicate estimates against `truth`; all inputs share one
/// parameter order. `RMSE^2 = bias^2 + ESD^2 (N-1)/N` holds per parameter.
pub fn performance_metrics(
    model: &str,
    names: &[String],
    estimates: &[ReplicateEstimate],
    truth: &[f64],
) -> Result<PerformanceSummary> {
    if estimates.is_empty() {
        return Err(Error::Empty("no replicate estimates".into()));
    }
    let k = truth.len();
    if names.len() != k {
        return Err(Error::DimensionMismatch { expected: k, actual: names.len() });
    }
    for e in estimates {
        for v in [&e.estimate, &e.se, &e.lower, &e.upper] {
            if v.len() != k {
                return Err(Error::DimensionMismatch { expected: k, actual: v.len() });
            }
        }
    }
    let n = estimates.len() as f64;
    let rows = (0..k)
        .map(|j| {
            let mut est: Vec<f64> = estimates.iter().map(|e| e.estimate[j]).collect();
            let mean = est.iter().sum::<f64>() / n;
            let esd = if estimates.len() > 1 {
                (est.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let rmse = (est.iter().map(|v| (v - truth[j]).powi(2)).sum::<f64>() / n).sqrt();
            est.sort_by(f64::total_cmp);
            let covered = estimates.iter().filter(|e| e.lower[j] <= truth[j] && truth[j] <= e.upper[j]).count();
            ParamPerformance {
                name: names[j].clone(),
                truth: truth[j],
                mmle: mean,
                median: sorted_quantile(&est, 0.5),
                esd,
                mean_se: estimates.iter().map(|e| e.se[j]).sum::<f64>() / n,
                rmse,
                coverage: covered as f64 / n,
            }
        })
        .collect();
    Ok(PerformanceSummary { model: model.to_string(), rows, replicates_used: estimates.len(), replicates_excluded: 0 })
}

/// Selection frequencies by minimum AIC over the candidate list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub candidates: Vec<String>,
    pub counts: Vec<usize>,
    /// Percentages over the replicates where a model was selected; they sum
    /// to 100 unless every replicate was excluded.
    pub percentages: Vec<f64>,
    pub replicates_used: usize,
    pub replicates_excluded: usize,
}

pub const SELECTION_HEADER: &str = "model,percent,count";

impl SelectionSummary {
    /// `selected[i]` is the winning candidate index of replicate `i`, or
    /// `None` when no candidate converged.
    pub fn from_selections(candidates: Vec<String>, selected: &[Option<usize>]) -> Self {
        let mut counts = vec![0; candidates.len()];
        for &i in selected.iter().flatten() {
            counts[i] += 1;
        }
        let used: usize = counts.iter().sum();
        let percentages = counts.iter().map(|&c| if used > 0 { 100.0 * c as f64 / used as f64 } else { 0.0 }).collect();
        Self { candidates, counts, percentages, replicates_used: used, replicates_excluded: selected.len() - used }
    }

    pub fn percentage(&self, label: &str) -> Option<f64> {
        self.candidates.iter().position(|c| c == label).map(|i| self.percentages[i])
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = format!("{SELECTION_HEADER}\n");
        for ((c, p), n) in self.candidates.iter().zip(&self.percentages).zip(&self.counts) {
            out.push_str(&format!("{c},{p},{n}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(est: f64, se: f64, lo: f64, hi: f64) -> ReplicateEstimate {
        ReplicateEstimate { estimate: vec![est], se: vec![se], lower: vec![lo], upper: vec![hi] }
    }

    #[test]
    fn symmetric_pair() {
        let s = performance_metrics("GH", &["b".into()], &[rep(0.8, 0.1, 0.6, 1.0), rep(1.2, 0.3, 1.05, 1.4)], &[1.0])
            .unwrap();
        let r = &s.rows[0];
        assert!((r.mmle - 1.0).abs() < 1e-15);
        assert!((r.rmse - 0.2).abs() < 1e-15);
        assert!((r.mean_se - 0.2).abs() < 1e-15);
        assert_eq!(r.coverage, 0.5);
        let n = 2.0;
        assert!((r.rmse.powi(2) - (r.bias().powi(2) + r.esd.powi(2) * (n - 1.0) / n)).abs() < 1e-15);
    }

    #[test]
    fn single_replicate_is_its_own_summary() {
        let s = performance_metrics("GH", &["b".into()], &[rep(0.7, 0.1, 0.5, 0.9)], &[1.0]).unwrap();
        let r = &s.rows[0];
        assert_eq!((r.mmle, r.median, r.esd, r.mean_se, r.coverage), (0.7, 0.7, 0.0, 0.1, 0.0));
        assert!((r.rmse - 0.3).abs() < 1e-15);
        assert!(performance_metrics("GH", &["b".into()], &[], &[1.0]).is_err());
    }

    #[test]
    fn selection_percentages() {
        let s = SelectionSummary::from_selections(vec!["PH".into(), "GH".into()], &[Some(1), Some(1), None, Some(0)]);
        assert_eq!(s.counts, vec![1, 2]);
        assert_eq!(s.replicates_excluded, 1);
        assert!((s.percentages.iter().sum::<f64>() - 100.0).abs() < 1e-12);
        assert_eq!(s.percentage("GH"), Some(200.0 / 3.0));
    }
}
