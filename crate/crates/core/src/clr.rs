//! Conditional likelihood of discordant pairs and the classic CLR fit.
//!
//! For discordant pair `i` with covariate difference `dx_i = x_treated -
//! x_control`, the probability that the treated member is the case given
//! exactly one case in the pair is `q_i = logistic(beta_w + dx_i . beta)`.
//! Pair intercepts cancel under this conditioning.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::DiscordantDiffs;
use crate::error::{Error, Result};
use crate::math::{log_logistic, logistic, two_sided_p};
use crate::newton::{self, Evaluation, NewtonFailure, NewtonOptions};

/// Coefficient magnitude beyond which an MLE iteration is declared separated.
pub const SEPARATION_LIMIT: f64 = 15.0;
pub const CLR_MAX_ITER: usize = 50;
pub const SCORE_TOL: f64 = 1e-8;

/// Treatment effect and nuisance covariate effects, on the log-odds scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub beta_w: f64,
    pub beta: Vec<f64>,
}

impl Coefficients {
    pub fn new(beta_w: f64, beta: Vec<f64>) -> Self {
        Self { beta_w, beta }
    }

    pub fn zeros(p: usize) -> Self {
        Self { beta_w: 0.0, beta: vec![0.0; p] }
    }

    /// Unpacks a `(beta_w, beta...)` parameter vector.
    pub fn from_params(theta: &[f64]) -> Self {
        Self { beta_w: theta[0], beta: theta[1..].to_vec() }
    }

    pub fn to_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.beta.len() + 1);
        out.push(self.beta_w);
        out.extend_from_slice(&self.beta);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.beta_w.is_finite() && self.beta.iter().all(|b| b.is_finite())
    }
}

/// Frequentist CLR fit with Wald inference on the treatment effect.
#[derive(Debug, Clone, PartialEq)]
pub struct ClrMleFit {
    pub estimate: Coefficients,
    /// Inverse observed information over `(beta_w, beta)`.
    pub covariance: DMatrix<f64>,
    pub converged: bool,
    pub wald_p: f64,
}

impl ClrMleFit {
    pub fn beta_w_se(&self) -> f64 {
        self.covariance[(0, 0)].sqrt()
    }
}

fn check_dims(theta_len: usize, d: &DiscordantDiffs) -> Result<()> {
    if theta_len != d.n_covariates() + 1 {
        return Err(Error::DimensionMismatch { expected: d.n_covariates() + 1, got: theta_len });
    }
    Ok(())
}

/// Linear predictor `beta_w + dx_i . beta` of pair `i`.
#[inline]
pub(crate) fn pair_eta(theta: &[f64], d: &DiscordantDiffs, i: usize) -> f64 {
    let dx = d.delta_x();
    let mut eta = theta[0];
    for j in 0..dx.ncols() {
        eta += dx[(i, j)] * theta[j + 1];
    }
    eta
}

/// Log-likelihood and its gradient written into `grad`; no dimension checks.
pub(crate) fn loglik_grad(theta: &[f64], d: &DiscordantDiffs, grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let dx = d.delta_x();
    let mut value = 0.0;
    for (i, &z) in d.case_is_treated().iter().enumerate() {
        let eta = pair_eta(theta, d, i);
        let q = logistic(eta);
        let resid = if z == 1 {
            value += log_logistic(eta);
            1.0 - q
        } else {
            value += log_logistic(-eta);
            -q
        };
        grad[0] += resid;
        for j in 0..dx.ncols() {
            grad[j + 1] += resid * dx[(i, j)];
        }
    }
    value
}

fn evaluate(theta: &DVector<f64>, d: &DiscordantDiffs) -> Evaluation {
    let k = theta.len();
    let mut grad = vec![0.0; k];
    let value = loglik_grad(theta.as_slice(), d, &mut grad);
    let dx = d.delta_x();
    let mut h = DMatrix::zeros(k, k);
    let mut row = vec![0.0; k];
    for i in 0..d.n_pairs() {
        let q = logistic(pair_eta(theta.as_slice(), d, i));
        let w = q * (1.0 - q);
        row[0] = 1.0;
        for j in 0..dx.ncols() {
            row[j + 1] = dx[(i, j)];
        }
        for a in 0..k {
            for b in 0..=a {
                h[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            h[(b, a)] = h[(a, b)];
        }
    }
    Evaluation { value, score: DVector::from_vec(grad), neg_hessian: h }
}

/// Conditional log-likelihood of the discordant pairs.
pub fn clr_loglik(c: &Coefficients, d: &DiscordantDiffs) -> Result<f64> {
    let theta = c.to_params();
    check_dims(theta.len(), d)?;
    let mut grad = vec![0.0; theta.len()];
    Ok(loglik_grad(&theta, d, &mut grad))
}

/// Gradient of [`clr_loglik`] over `(beta_w, beta)`.
pub fn clr_grad(c: &Coefficients, d: &DiscordantDiffs) -> Result<Vec<f64>> {
    let theta = c.to_params();
    check_dims(theta.len(), d)?;
    let mut grad = vec![0.0; theta.len()];
    loglik_grad(&theta, d, &mut grad);
    Ok(grad)
}

/// Newton-Raphson maximum likelihood from the origin.
pub fn clr_fit_mle(d: &DiscordantDiffs) -> Result<ClrMleFit> {
    if d.is_empty() {
        return Err(Error::NoDiscordantPairs);
    }
    let k = d.n_covariates() + 1;
    let opts = NewtonOptions { max_iter: CLR_MAX_ITER, score_tol: SCORE_TOL, coef_limit: Some(SEPARATION_LIMIT) };
    let out = newton::maximize(|t| evaluate(t, d), DVector::zeros(k), &opts).map_err(|e| match e {
        NewtonFailure::Diverged | NewtonFailure::Singular | NewtonFailure::NonFinite => Error::SeparationDetected,
    })?;
    let se = out.covariance[(0, 0)].sqrt();
    let wald_p = two_sided_p(out.estimate[0] / se);
    Ok(ClrMleFit {
        estimate: Coefficients::from_params(out.estimate.as_slice()),
        covariance: out.covariance,
        converged: out.converged,
        wald_p,
    })
}
