//! Oracles shared by the integration tests.
#![allow(dead_code)]

use ghew::{ew_hazard, EwParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// 50 parameter sets spanning sigma in [0.05, 20], kappa in [0.2, 5] and
/// alpha in [0.1, 10], log-uniformly.
pub fn parameter_sets() -> Vec<EwParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    (0..50)
        .map(|_| {
            EwParams::new(
                log_uniform(&mut rng, 0.05, 20.0),
                log_uniform(&mut rng, 0.2, 5.0),
                log_uniform(&mut rng, 0.1, 10.0),
            )
            .unwrap()
        })
        .collect()
}

/// Midpoints of 1000 equal cells of (0, 1).
pub fn u_grid() -> impl Iterator<Item = f64> {
    (0..1000).map(|i| (i as f64 + 0.5) / 1000.0)
}

/// Adaptive Simpson on `[a, b]`.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `int_0^t h(s) ds` with `s = t v^m`, `m` chosen so the integrand vanishes
/// at `v = 0` whatever the behaviour of `h` near zero.
pub fn cum_hazard_by_quadrature(t: f64, p: &EwParams) -> f64 {
    let m = (2.0 / (p.kappa * p.alpha)).ceil().max(1.0);
    let g = |v: f64| {
        if v == 0.0 {
            return 0.0;
        }
        m * t * v.powf(m - 1.0) * ew_hazard(t * v.powf(m), p).unwrap()
    };
    let rough = simpson(&g, 0.0, 1.0, 1e-6);
    simpson(&g, 0.0, 1.0, 1e-12 * rough.abs().max(1e-300))
}
