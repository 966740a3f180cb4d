use ghew::{ew_cdf, ew_cum_hazard, ew_hazard, ew_inverse_cum_hazard, ew_pdf, ew_quantile, ew_survival, EwParams};
use proptest::prelude::*;

mod common;
use common::{cum_hazard_by_quadrature, parameter_sets, rel, u_grid};

fn params() -> impl Strategy<Value = EwParams> {
    (-3.0f64..3.0, -1.6f64..1.6, -2.3f64..2.3).prop_map(|(s, k, a)| EwParams::new(s.exp(), k.exp(), a.exp()).unwrap())
}

#[test]
fn quantile_round_trip_on_grid() {
    for p in parameter_sets() {
        for u in u_grid() {
            let t = ew_quantile(u, &p).unwrap();
            let back = ew_cdf(t, &p).unwrap();
            assert!((back - u).abs() < 1e-12, "{p:?} u={u}: F(Q(u)) = {back}");
        }
    }
}

#[test]
fn weibull_reduction_at_unit_power() {
    for q in parameter_sets() {
        let p = EwParams { alpha: 1.0, ..q };
        for u in u_grid().step_by(7) {
            let t = ew_quantile(u, &p).unwrap();
            let z = (t / p.sigma).powf(p.kappa);
            let h = p.kappa / p.sigma * (t / p.sigma).powf(p.kappa - 1.0);
            assert!(rel(ew_cdf(t, &p).unwrap(), -(-z).exp_m1()) < 1e-12);
            assert!(rel(ew_survival(t, &p).unwrap(), (-z).exp()) < 1e-12);
            assert!(rel(ew_cum_hazard(t, &p).unwrap(), z) < 1e-12);
            assert!(rel(ew_hazard(t, &p).unwrap(), h) < 1e-12);
            assert!(rel(ew_pdf(t, &p).unwrap(), h * (-z).exp()) < 1e-12);
        }
    }
}

#[test]
fn hazard_is_density_over_survival() {
    for p in parameter_sets() {
        for u in u_grid().step_by(3) {
            let t = ew_quantile(u, &p).unwrap();
            let ratio = ew_pdf(t, &p).unwrap() / ew_survival(t, &p).unwrap();
            assert!(rel(ew_hazard(t, &p).unwrap(), ratio) < 1e-10, "{p:?} t={t}");
        }
    }
}

#[test]
fn cumulative_hazard_matches_quadrature() {
    for p in parameter_sets().into_iter().take(20) {
        for u in [0.01, 0.25, 0.5, 0.9, 0.999] {
            let t = ew_quantile(u, &p).unwrap();
            let exact = ew_cum_hazard(t, &p).unwrap();
            let quad = cum_hazard_by_quadrature(t, &p);
            assert!(rel(quad, exact) < 1e-6, "{p:?} t={t}: {quad} vs {exact}");
        }
    }
}

#[test]
fn tails_keep_relative_precision() {
    let p = EwParams::new(2.0, 1.5, 0.7).unwrap();
    // z = 1e-12: F = z^alpha to first order
    let t = p.sigma * 1e-12f64.powf(1.0 / p.kappa);
    assert!(rel(ew_cdf(t, &p).unwrap(), 1e-12f64.powf(p.alpha)) < 1e-9);
    // deep right tail: S ~ alpha e^{-z}
    let t = p.sigma * 200f64.powf(1.0 / p.kappa);
    assert!(rel(ew_survival(t, &p).unwrap(), p.alpha * (-200.0f64).exp()) < 1e-12);
    assert!(rel(ew_cum_hazard(t, &p).unwrap(), 200.0 - p.alpha.ln()) < 1e-12);
}

proptest! {
    #[test]
    fn prop_quantile_round_trip(p in params(), u in 1e-6f64..(1.0 - 1e-6)) {
        let t = ew_quantile(u, &p).unwrap();
        prop_assert!((ew_cdf(t, &p).unwrap() - u).abs() < 1e-12);
    }

    #[test]
    fn prop_inverse_cum_hazard_round_trip(p in params(), v in 1e-6f64..50.0) {
        let t = ew_inverse_cum_hazard(v, &p).unwrap();
        prop_assert!(rel(ew_cum_hazard(t, &p).unwrap(), v) < 1e-10);
    }

    #[test]
    fn prop_hazard_is_density_over_survival(p in params(), u in 1e-4f64..0.9999) {
        let t = ew_quantile(u, &p).unwrap();
        let ratio = ew_pdf(t, &p).unwrap() / ew_survival(t, &p).unwrap();
        prop_assert!(rel(ew_hazard(t, &p).unwrap(), ratio) < 1e-10);
    }

    #[test]
    fn prop_weibull_reduction(s in -3.0f64..3.0, k in -1.6f64..1.6, u in 1e-6f64..(1.0 - 1e-6)) {
        let p = EwParams::new(s.exp(), k.exp(), 1.0).unwrap();
        let t = ew_quantile(u, &p).unwrap();
        let z = (t / p.sigma).powf(p.kappa);
        prop_assert!(rel(ew_cum_hazard(t, &p).unwrap(), z) < 1e-12);
        prop_assert!(rel(ew_hazard(t, &p).unwrap(), p.kappa / p.sigma * (t / p.sigma).powf(p.kappa - 1.0)) < 1e-12);
    }

    #[test]
    fn prop_cdf_and_cum_hazard_monotone(p in params(), a in 1e-3f64..10.0, b in 1e-3f64..10.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(ew_cdf(lo, &p).unwrap() <= ew_cdf(hi, &p).unwrap());
        prop_assert!(ew_cum_hazard(lo, &p).unwrap() <= ew_cum_hazard(hi, &p).unwrap());
    }

    #[test]
    fn prop_scale_equivariance(p in params(), c in 0.1f64..10.0, u in 1e-3f64..0.999) {
        let q = EwParams { sigma: p.sigma * c, ..p };
        let t = ew_quantile(u, &p).unwrap();
        prop_assert!(rel(ew_quantile(u, &q).unwrap(), c * t) < 1e-12);
        prop_assert!(rel(ew_hazard(c * t, &q).unwrap(), ew_hazard(t, &p).unwrap() / c) < 1e-11);
    }
}
