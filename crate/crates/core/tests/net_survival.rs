use std::sync::OnceLock;

use ghew::fit::{fit, FitSettings, ModelFit};
use ghew::netsurv::{covariance_factor, stream_rng};
use ghew::sim::{generate_dataset, ScenarioConfig};
use ghew::{marginal_net_survival, predict_net_survival, simulate_ns_ci, LifeTable, NsTarget, Structure};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn gh_fit() -> &'static ModelFit {
    static FIT: OnceLock<ModelFit> = OnceLock::new();
    FIT.get_or_init(|| {
        let lt = LifeTable::synthetic();
        let cfg = ScenarioConfig { n: 2000, ..ScenarioConfig::gh() };
        let data = generate_dataset(&cfg, &lt, &mut stream_rng(41, 0)).unwrap().dataset;
        let f = fit(&data, &Structure::Gh, &lt, None, &FitSettings::default()).unwrap();
        assert!(f.converged && f.covariance.is_some());
        f
    })
}

const TIMES: [f64; 6] = [0.25, 0.5, 1.0, 2.0, 3.5, 5.0];

fn nonincreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

#[test]
fn intervals_are_ordered_bounded_and_monotone() {
    let f = gh_fit();
    let est = simulate_ns_ci(f, &NsTarget::Individual(vec![5.0, 1.0, 0.0]), &TIMES, 1000, 0.95, 3).unwrap();
    assert_eq!(est.draws_used, 1000);
    for k in 0..TIMES.len() {
        assert!(0.0 <= est.lower[k] && est.lower[k] <= est.upper[k] && est.upper[k] <= 1.0);
    }
    assert!(nonincreasing(&est.point) && nonincreasing(&est.lower) && nonincreasing(&est.upper));
}

#[test]
fn narrower_level_nests_inside_wider() {
    let f = gh_fit();
    let target = NsTarget::Individual(vec![0.0, 0.0, 1.0]);
    let wide = simulate_ns_ci(f, &target, &TIMES, 500, 0.95, 8).unwrap();
    let narrow = simulate_ns_ci(f, &target, &TIMES, 500, 0.8, 8).unwrap();
    for k in 0..TIMES.len() {
        assert!(wide.lower[k] <= narrow.lower[k] && narrow.upper[k] <= wide.upper[k]);
    }
    assert_eq!(wide.point, narrow.point);
}

#[test]
fn draws_are_independent_of_thread_count() {
    let f = gh_fit();
    let target = NsTarget::Subgroup(vec![vec![-10.0, 0.0, 0.0], vec![10.0, 1.0, 1.0]]);
    let a = simulate_ns_ci(f, &target, &TIMES, 400, 0.95, 123).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| simulate_ns_ci(f, &target, &TIMES, 400, 0.95, 123).unwrap());
    assert_eq!(a, b);
    let c = simulate_ns_ci(f, &target, &TIMES, 400, 0.95, 124).unwrap();
    assert_ne!(a.lower, c.lower);
}

#[test]
fn degenerate_covariance_collapses_to_the_point() {
    let mut f = gh_fit().clone();
    f.covariance = Some(vec![vec![0.0; 9]; 9]);
    let est = simulate_ns_ci(&f, &NsTarget::Individual(vec![0.0, 1.0, 1.0]), &TIMES, 200, 0.95, 1).unwrap();
    assert_eq!(est.lower, est.point);
    assert_eq!(est.upper, est.point);
}

#[test]
fn tiny_negative_eigenvalues_are_absorbed() {
    let c = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-11]);
    let l = covariance_factor(&c).unwrap();
    assert!((&l * l.transpose() - &c).abs().max() < 1e-10);
    let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-8]);
    assert!(covariance_factor(&bad).is_err());
}

#[test]
fn point_estimate_starts_at_one() {
    let f = gh_fit();
    let s = predict_net_survival(f, &[0.0, 0.0, 0.0], &[1e-9, 1e-6]).unwrap();
    assert!(s[0] > 1.0 - 1e-6 && s[0] <= 1.0);
    assert!(s[1] <= s[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_marginal_lies_between_member_curves(
        xs in prop::collection::vec((-25.0f64..15.0, 0u8..2, 0u8..2), 1..8),
        t in 0.05f64..6.0,
    ) {
        let f = gh_fit();
        let members: Vec<Vec<f64>> = xs.iter().map(|&(a, s, w)| vec![a, f64::from(s), f64::from(w)]).collect();
        let m = marginal_net_survival(f, &members, &[t]).unwrap()[0];
        let each: Vec<f64> = members.iter().map(|x| predict_net_survival(f, x, &[t]).unwrap()[0]).collect();
        let lo = each.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = each.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo - 1e-15 <= m && m <= hi + 1e-15);
        prop_assert!((0.0..=1.0).contains(&m));
    }

    #[test]
    fn prop_net_survival_nonincreasing(age in -25.0f64..15.0, s in 0u8..2, w in 0u8..2, a in 0.01f64..8.0, b in 0.01f64..8.0) {
        let f = gh_fit();
        let (t1, t2) = if a < b { (a, b) } else { (b, a) };
        let v = predict_net_survival(f, &[age, f64::from(s), f64::from(w)], &[t1, t2]).unwrap();
        prop_assert!(v[1] <= v[0]);
    }
}
