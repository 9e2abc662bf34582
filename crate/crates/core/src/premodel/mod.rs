//! First-stage fit on the concordant pairs, producing the location and
//! scale of the informative prior over the nuisance coefficients. Also hosts
//! the LR and GEE estimators used as frequentist baselines.

mod gee;
mod irls;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use gee::{gee_fit_pairs, GeeFit, GeeOptions, GEE_MAX_ITER, RHO_LIMIT};
pub use irls::{irls_fit, irls_fit_ridge, LrFit, IRLS_MAX_ITER};

use crate::data::{concordant_rows, PairPartition, PairedDataset};
use crate::error::{Error, Result};
use crate::linalg;

/// Penalty of the ridge-stabilised fallback fit.
pub const RIDGE_LAMBDA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PremodelMethod {
    Lr,
    Gee,
}

impl std::fmt::Display for PremodelMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Lr => "lr",
            Self::Gee => "gee",
        })
    }
}

impl std::str::FromStr for PremodelMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Ok(Self::Lr),
            "gee" => Ok(Self::Gee),
            other => Err(Error::InvalidConfig(format!("unknown premodel '{other}'"))),
        }
    }
}

/// Nuisance-coefficient estimate and covariance from the concordant pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremodelFit {
    pub b_c: DVector<f64>,
    pub sigma_c: DMatrix<f64>,
    pub method: PremodelMethod,
    pub fallback_used: bool,
}

/// Fits the concordant rows (intercept plus covariates, no treatment column)
/// and keeps the covariate block. A failing GEE fit falls back to LR, and a
/// failing LR fit falls back to ridge-stabilised IRLS.
pub fn premodel_concordant(data: &PairedDataset, part: &PairPartition, method: PremodelMethod) -> Result<PremodelFit> {
    if part.n_concordant() < 2 {
        return Err(Error::InsufficientConcordant(part.n_concordant()));
    }
    let p = data.n_covariates();
    if p == 0 {
        return Ok(PremodelFit { b_c: DVector::zeros(0), sigma_c: DMatrix::zeros(0, 0), method, fallback_used: false });
    }
    let (x, y) = concordant_rows(data, part);

    let (coefficients, covariance, fallback_used) = match method {
        PremodelMethod::Gee => match gee_fit_pairs(&x, &y, &GeeOptions::default()) {
            Ok(fit) => (fit.coefficients, fit.sandwich_covariance, false),
            Err(_) => {
                let fit = lr_with_fallback(&x, &y)?;
                (fit.coefficients, fit.covariance_full, true)
            }
        },
        PremodelMethod::Lr => {
            let fit = lr_with_fallback(&x, &y)?;
            (fit.coefficients, fit.covariance_full, fit.fallback_used)
        }
    };
    let sigma_c = linalg::ensure_spd(&linalg::drop_first(&covariance))?;
    Ok(PremodelFit { b_c: DVector::from_vec(coefficients), sigma_c, method, fallback_used })
}

fn lr_with_fallback(x: &DMatrix<f64>, y: &[u8]) -> Result<LrFit> {
    match irls_fit(x, y, true) {
        Ok(fit) if fit.converged => Ok(fit),
        _ => irls_fit_ridge(x, y, true, RIDGE_LAMBDA),
    }
}
