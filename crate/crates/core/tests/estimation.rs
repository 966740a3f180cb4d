use ghew::fit::{aic, confidence_intervals, fit, select_model, FitSettings, ModelFit};
use ghew::likelihood::Likelihood;
use ghew::netsurv::stream_rng;
use ghew::numdiff::gradient;
use ghew::sim::{generate_dataset, ScenarioConfig};
use ghew::{numeric_hessian, Dataset, HessianSettings, LifeTable, ParamVector, Structure};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gh_data(n: usize, seed: u64) -> (Dataset, LifeTable) {
    let lt = LifeTable::synthetic();
    let cfg = ScenarioConfig { n, ..ScenarioConfig::gh() };
    (generate_dataset(&cfg, &lt, &mut stream_rng(seed, 0)).unwrap().dataset, lt)
}

fn random_quadratic(rng: &mut ChaCha8Rng, d: usize) -> (DMatrix<f64>, DVector<f64>, f64) {
    let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let a = &m * m.transpose() + DMatrix::identity(d, d) * 0.1;
    let b = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
    (a, b, rng.random_range(-5.0..5.0))
}

#[test]
fn hessian_of_random_quadratics() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let (a, b, c) = random_quadratic(&mut rng, 9);
        let mut f = |x: &[f64]| {
            let v = DVector::from_column_slice(x);
            0.5 * v.dot(&(&a * &v)) + b.dot(&v) + c
        };
        let x: Vec<f64> = (0..9).map(|_| rng.random_range(-2.0..2.0)).collect();
        let h = numeric_hessian(&mut f, &x, HessianSettings::default()).unwrap();
        assert!((&h - &a).abs().max() < 1e-6);
        assert_eq!(h, h.transpose());
    }
}

/// Five-point central difference, a higher-order check on the library's
/// three-point gradient.
fn five_point_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let at = |d: f64| {
                let mut y = x.to_vec();
                y[i] += d;
                f(&y)
            };
            (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h)
        })
        .collect()
}

#[test]
fn loglik_gradient_is_consistent() {
    let (data, lt) = gh_data(2000, 3);
    let lik = Likelihood::new(&data, Structure::Gh, &lt).unwrap();
    let psi = [1.6f64.ln(), 0.65f64.ln(), 2.2f64.ln(), 0.08, 0.15, 0.05, 0.06, 0.18, 0.3];
    let f = |x: &[f64]| lik.value(x);
    let g = gradient(&mut |x: &[f64]| lik.value(x), &psi, f(&psi));
    let g5 = five_point_gradient(&f, &psi, 1e-3);
    for (a, b) in g.iter().zip(&g5) {
        assert!((a - b).abs() < 1e-5 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn fixed_time_effects_reproduce_the_ph_fit() {
    let (data, lt) = gh_data(1500, 12);
    let settings = FitSettings::default();
    let ph = fit(&data, &Structure::Ph, &lt, None, &settings).unwrap();
    let fixed = FitSettings { fixed: (3..6).map(|i| (i, 0.0)).collect(), ..FitSettings::default() };
    let gh = fit(&data, &Structure::Gh, &lt, None, &fixed).unwrap();
    assert!(ph.converged && gh.converged);
    assert_eq!(gh.k, ph.k);
    assert!((gh.loglik - ph.loglik).abs() < 1e-6 * ph.loglik.abs());
    assert_eq!(gh.aic, aic(&gh));
    for (i, j) in [(0, 0), (1, 1), (2, 2), (3, 6), (4, 7), (5, 8)] {
        assert!((ph.psi_hat.0[i] - gh.psi_hat.0[j]).abs() < 1e-3);
    }
}

#[test]
fn gh_fit_gradient_vanishes_and_intervals_are_consistent() {
    let (data, lt) = gh_data(3000, 5);
    let f = fit(&data, &Structure::Gh, &lt, None, &FitSettings::default()).unwrap();
    assert!(f.converged, "{:?}", f.warnings);
    assert!(f.gradient_norm < 1e-6);
    let lik = Likelihood::new(&data, Structure::Gh, &lt).unwrap();
    assert!((lik.value(&f.psi_hat.0) - f.loglik).abs() < 1e-9 * f.loglik.abs());

    let cov = f.covariance_matrix().unwrap();
    let info = f.hessian_matrix().unwrap();
    let eye = &info * &cov;
    assert!((eye - DMatrix::identity(9, 9)).abs().max() < 1e-8);
    let ci = confidence_intervals(&f, 0.95).unwrap();
    for (i, p) in ci.iter().enumerate() {
        let w = &p.working;
        assert!((w.upper - w.lower - 2.0 * 1.959963984540054 * w.se).abs() < 1e-12 * (1.0 + w.se));
        match &p.natural {
            Some(n) => {
                assert!(i < 3);
                assert_eq!(n.lower, w.lower.exp());
                assert_eq!(n.upper, w.upper.exp());
                assert!((n.se - w.estimate.exp() * w.se).abs() < 1e-15);
            }
            None => assert!(i >= 3),
        }
    }
    let narrow = confidence_intervals(&f, 0.5).unwrap();
    for (a, b) in narrow.iter().zip(&ci) {
        assert!(a.working.lower > b.working.lower && a.working.upper < b.working.upper);
    }
}

#[test]
fn default_and_true_starts_reach_one_optimum() {
    let (data, lt) = gh_data(2500, 30);
    let truth = ScenarioConfig::gh().truth().unwrap();
    let s = FitSettings::default();
    let a = fit(&data, &Structure::Gh, &lt, None, &s).unwrap();
    let b = fit(&data, &Structure::Gh, &lt, Some(&truth), &s).unwrap();
    assert!(a.converged && b.converged);
    assert!((a.loglik - b.loglik).abs() < 1e-6);
}

fn stub(structure: Structure, loglik: f64) -> ModelFit {
    let n = match structure {
        Structure::Gh => 5,
        _ => 4,
    };
    ModelFit::new(structure, vec!["x".into()], ParamVector(vec![0.0; n]), vec![false; n], loglik, None, None, true)
        .unwrap()
}

#[test]
fn selection_ties_prefer_fewer_parameters_then_structure_order() {
    // GH has one more parameter: equal AIC needs loglik higher by one
    let fits = vec![stub(Structure::Gh, -9.0), stub(Structure::Aft, -10.0), stub(Structure::Ah, -10.0)];
    assert_eq!(fits[0].aic, fits[1].aic);
    assert_eq!(select_model(&fits).unwrap(), 2);
    let mut unconverged = stub(Structure::Ph, 0.0);
    unconverged.converged = false;
    let fits = vec![unconverged, stub(Structure::Gh, -9.0)];
    assert_eq!(select_model(&fits).unwrap(), 1);
    assert!(select_model(&[]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_hessian_of_quadratic(seed in any::<u64>(), d in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, c) = random_quadratic(&mut rng, d);
        let mut f = |x: &[f64]| {
            let v = DVector::from_column_slice(x);
            0.5 * v.dot(&(&a * &v)) + b.dot(&v) + c
        };
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let h = numeric_hessian(&mut f, &x, HessianSettings::default()).unwrap();
        prop_assert!((&h - &a).abs().max() < 1e-6);
    }

    #[test]
    fn prop_aic_definition(ll in -1e5f64..0.0, k in 1usize..20) {
        prop_assert_eq!(ghew::fit::aic_value(ll, k), -2.0 * ll + 2.0 * k as f64);
    }
}
