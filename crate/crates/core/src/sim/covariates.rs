//! Covariates of the simulation design: age from a three-component uniform
//! mixture, sex and `W` from Bernoulli(0.5).

use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

/// Mixture components `(weight, lower, upper)` of age at diagnosis.
pub const AGE_MIXTURE: [(f64, f64, f64); 3] = [(0.25, 30.0, 65.0), (0.35, 65.0, 75.0), (0.40, 75.0, 85.0)];

/// Raw covariates; age lies in the open interval (30, 85).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCovariates {
    pub age: Vec<f64>,
    pub sex: Vec<u8>,
    pub w: Vec<u8>,
}

impl SimCovariates {
    pub fn len(&self) -> usize {
        self.age.len()
    }

    pub fn is_empty(&self) -> bool {
        self.age.is_empty()
    }

    /// Model row `(age - age_centre, sex, W)`.
    pub fn design_row(&self, i: usize, age_centre: f64) -> [f64; 3] {
        [self.age[i] - age_centre, f64::from(self.sex[i]), f64::from(self.w[i])]
    }
}

/// Draws `n` subjects. Each subject consumes four draws in a fixed order:
/// mixture component, position within it, sex, `W`.
pub fn generate_covariates<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SimCovariates {
    let mut out = SimCovariates { age: Vec::with_capacity(n), sex: Vec::with_capacity(n), w: Vec::with_capacity(n) };
    for _ in 0..n {
        let c: f64 = rng.random();
        let (_, lo, hi) = if c < AGE_MIXTURE[0].0 {
            AGE_MIXTURE[0]
        } else if c < AGE_MIXTURE[0].0 + AGE_MIXTURE[1].0 {
            AGE_MIXTURE[1]
        } else {
            AGE_MIXTURE[2]
        };
        let u: f64 = rng.sample(Open01);
        out.age.push(lo + (hi - lo) * u);
        out.sex.push(u8::from(rng.random::<f64>() < 0.5));
        out.w.push(u8::from(rng.random::<f64>() < 0.5));
    }
    out
}
