use ghew::netsurv::stream_rng;
use ghew::sim::{
    generate_covariates, generate_dataset, generate_dataset_with_rate, performance_metrics, Censoring,
    ReplicateEstimate, ScenarioConfig, SelectionSummary, AGE_MIXTURE,
};
use ghew::LifeTable;
use proptest::prelude::*;

#[test]
fn same_stream_gives_identical_data() {
    let lt = LifeTable::synthetic();
    let cfg = ScenarioConfig { n: 500, ..ScenarioConfig::gh() };
    let a = generate_dataset(&cfg, &lt, &mut stream_rng(5, 2)).unwrap();
    let b = generate_dataset(&cfg, &lt, &mut stream_rng(5, 2)).unwrap();
    let c = generate_dataset(&cfg, &lt, &mut stream_rng(5, 3)).unwrap();
    assert_eq!(a.dataset.to_csv_string(), b.dataset.to_csv_string());
    assert_ne!(a.dataset.to_csv_string(), c.dataset.to_csv_string());
}

#[test]
fn dropout_only_shortens_follow_up() {
    let lt = LifeTable::synthetic();
    let cfg = ScenarioConfig { n: 2000, ..ScenarioConfig::gh() };
    let admin = generate_dataset_with_rate(&cfg, &lt, 0.0, &mut stream_rng(9, 0)).unwrap().dataset;
    let drop = generate_dataset_with_rate(&cfg, &lt, 0.3, &mut stream_rng(9, 0)).unwrap().dataset;
    for (a, d) in admin.records.iter().zip(&drop.records) {
        assert_eq!(a.covariates, d.covariates);
        assert!(d.time <= a.time);
        assert!(!d.status || a.status);
        assert!(a.time <= cfg.admin_horizon);
    }
    assert!(drop.censoring_proportion() > admin.censoring_proportion());
}

#[test]
fn covariates_follow_the_age_mixture() {
    let cov = generate_covariates(200_000, &mut stream_rng(1, 0));
    assert!(cov.age.iter().all(|&a| (30.0..=85.0).contains(&a)));
    let n = cov.len() as f64;
    let weights = AGE_MIXTURE.map(|(w, lo, hi)| {
        let inside = cov.age.iter().filter(|&&a| a >= lo && a < hi).count() as f64 / n;
        (w, inside)
    });
    for (w, p) in weights {
        // 5 binomial standard errors
        assert!((w - p).abs() < 5.0 * (w * (1.0 - w) / n).sqrt(), "{w} vs {p}");
    }
    let sex = cov.sex.iter().map(|&s| f64::from(s)).sum::<f64>() / n;
    let w = cov.w.iter().map(|&s| f64::from(s)).sum::<f64>() / n;
    assert!((sex - 0.5).abs() < 0.005 && (w - 0.5).abs() < 0.005);
}

#[test]
fn target_censoring_is_deterministic_per_seed() {
    let lt = LifeTable::synthetic();
    let cfg = ScenarioConfig { censoring: Censoring::Target { proportion: 0.4 }, ..ScenarioConfig::gh() };
    let a = ghew::sim::resolve_dropout_rate(&cfg, &lt).unwrap();
    let b = ghew::sim::resolve_dropout_rate(&cfg, &lt).unwrap();
    assert_eq!(a, b);
    assert!(a > 0.0);
}

#[test]
fn scenario_toml_round_trips() {
    for cfg in [ScenarioConfig::gh(), ScenarioConfig::ch()] {
        let text = cfg.to_toml_string();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
    }
}

#[test]
fn single_replicate_has_zero_spread() {
    let e = ReplicateEstimate { estimate: vec![1.2], se: vec![0.1], lower: vec![1.0], upper: vec![1.4] };
    let s = performance_metrics("GH", &["b".into()], &[e], &[1.3]).unwrap();
    let r = &s.rows[0];
    assert_eq!(r.esd, 0.0);
    assert!((r.rmse - 0.1).abs() < 1e-15);
    assert_eq!(r.coverage, 1.0);
}

fn replicate() -> impl Strategy<Value = ReplicateEstimate> {
    (-3.0f64..3.0, 0.01f64..1.0).prop_map(|(est, se)| ReplicateEstimate {
        estimate: vec![est],
        se: vec![se],
        lower: vec![est - 1.96 * se],
        upper: vec![est + 1.96 * se],
    })
}

proptest! {
    #[test]
    fn prop_rmse_decomposes(reps in prop::collection::vec(replicate(), 1..40), truth in -2.0f64..2.0) {
        let s = performance_metrics("GH", &["b".into()], &reps, &[truth]).unwrap();
        let r = &s.rows[0];
        let n = reps.len() as f64;
        let lhs = r.rmse * r.rmse;
        let rhs = r.bias().powi(2) + r.esd * r.esd * (n - 1.0) / n;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs));
        prop_assert!((0.0..=1.0).contains(&r.coverage));
        let inside = reps.iter().filter(|e| e.lower[0] <= truth && truth <= e.upper[0]).count() as f64;
        prop_assert!((r.coverage - inside / n).abs() < 1e-15);
    }

    #[test]
    fn prop_selection_percentages_sum_to_hundred(sel in prop::collection::vec(prop::option::of(0usize..4), 1..60)) {
        let s = SelectionSummary::from_selections(vec!["PHEW".into(), "AHEW".into(), "AFTEW".into(), "GHEW".into()], &sel);
        let used = sel.iter().flatten().count();
        prop_assert_eq!(s.replicates_used, used);
        prop_assert_eq!(s.replicates_excluded, sel.len() - used);
        if used > 0 {
            prop_assert!((s.percentages.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        }
    }
}
