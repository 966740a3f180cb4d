//! Fit artifact: a versioned JSON envelope around a [`ModelFit`].

use anyhow::{ensure, Context, Result};
use ghew::fit::ModelFit;
use ghew::ParamLayout;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FIT_FORMAT: &str = "ghew-fit";
pub const FIT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct FitArtifact {
    pub format: String,
    pub version: u32,
    pub fit: ModelFit,
}

impl FitArtifact {
    pub fn new(fit: ModelFit) -> Self {
        Self { format: FIT_FORMAT.into(), version: FIT_VERSION, fit }
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }
}

/// Reads and checks an artifact: format tag, version and internal
/// dimensions.
pub fn read_fit(path: &Path) -> Result<ModelFit> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let a: FitArtifact =
        serde_json::from_str(&text).with_context(|| format!("{} is not a fit artifact", path.display()))?;
    ensure!(a.format == FIT_FORMAT, "{}: format `{}` is not `{FIT_FORMAT}`", path.display(), a.format);
    ensure!(a.version == FIT_VERSION, "{}: unsupported artifact version {}", path.display(), a.version);
    let fit = a.fit;
    let layout = ParamLayout::new(fit.structure.clone(), fit.covariate_names.len())?;
    let n = layout.len();
    ensure!(
        fit.psi_hat.len() == n && fit.param_names.len() == n && fit.fixed.len() == n,
        "{}: parameter vector does not match the {} structure",
        path.display(),
        fit.structure
    );
    ensure!(fit.psi_hat.0.iter().all(|v| v.is_finite()), "{}: non-finite parameter", path.display());
    for m in [&fit.covariance, &fit.hessian].into_iter().flatten() {
        ensure!(m.len() == n && m.iter().all(|r| r.len() == n), "{}: matrix is not {n}x{n}", path.display());
    }
    Ok(fit)
}
