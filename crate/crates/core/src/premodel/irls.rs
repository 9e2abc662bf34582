use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clr::{SCORE_TOL, SEPARATION_LIMIT};
use crate::error::{Error, Result};
use crate::math::{log_logistic, logistic};
use crate::newton::{self, Evaluation, NewtonFailure, NewtonOptions};

pub const IRLS_MAX_ITER: usize = 100;

/// Unconditional logistic regression fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrFit {
    /// Zero when fitted without an intercept.
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Inverse Fisher information over `(intercept, coefficients)`, or over
    /// `coefficients` alone when `has_intercept` is false.
    pub covariance_full: DMatrix<f64>,
    pub has_intercept: bool,
    pub converged: bool,
    pub fallback_used: bool,
}

impl LrFit {
    /// Standard error of coefficient `j` (not counting the intercept).
    pub fn coefficient_se(&self, j: usize) -> f64 {
        let k = j + usize::from(self.has_intercept);
        self.covariance_full[(k, k)].sqrt()
    }
}

pub(crate) fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::from_element(x.nrows(), x.ncols() + 1, 1.0);
    d.view_mut((0, 1), (x.nrows(), x.ncols())).copy_from(x);
    d
}

/// Penalised logistic log-likelihood; `penalty[j]` multiplies `beta_j^2 / 2`.
fn evaluate(beta: &DVector<f64>, design: &DMatrix<f64>, y: &[u8], penalty: &[f64]) -> Evaluation {
    let eta = design * beta;
    let k = design.ncols();
    let mut value = 0.0;
    let mut resid = DVector::zeros(eta.len());
    let mut weights = DVector::zeros(eta.len());
    for (i, &e) in eta.iter().enumerate() {
        let mu = logistic(e);
        value += if y[i] == 1 { log_logistic(e) } else { log_logistic(-e) };
        resid[i] = f64::from(y[i]) - mu;
        weights[i] = mu * (1.0 - mu);
    }
    let mut score = design.transpose() * resid;
    let mut neg_hessian = DMatrix::zeros(k, k);
    for i in 0..design.nrows() {
        let w = weights[i];
        for a in 0..k {
            let xa = design[(i, a)] * w;
            for b in 0..=a {
                neg_hessian[(a, b)] += xa * design[(i, b)];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            neg_hessian[(b, a)] = neg_hessian[(a, b)];
        }
        value -= 0.5 * penalty[a] * beta[a] * beta[a];
        score[a] -= penalty[a] * beta[a];
        neg_hessian[(a, a)] += penalty[a];
    }
    Evaluation { value, score, neg_hessian }
}

fn check_inputs(x: &DMatrix<f64>, y: &[u8], add_intercept: bool) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("design matrix must be finite".into()));
    }
    let k = x.ncols() + usize::from(add_intercept);
    if x.nrows() < k {
        return Err(Error::RankDeficient);
    }
    Ok(())
}

fn assemble(out: newton::NewtonOutcome, add_intercept: bool, fallback_used: bool) -> LrFit {
    let est = out.estimate;
    let (intercept, coefficients) =
        if add_intercept { (est[0], est.as_slice()[1..].to_vec()) } else { (0.0, est.as_slice().to_vec()) };
    LrFit {
        intercept,
        coefficients,
        covariance_full: out.covariance,
        has_intercept: add_intercept,
        converged: out.converged,
        fallback_used,
    }
}

/// Logistic regression by iteratively reweighted least squares.
pub fn irls_fit(x: &DMatrix<f64>, y: &[u8], add_intercept: bool) -> Result<LrFit> {
    check_inputs(x, y, add_intercept)?;
    let design = if add_intercept { with_intercept(x) } else { x.clone() };
    let k = design.ncols();
    let penalty = vec![0.0; k];
    let opts = NewtonOptions { max_iter: IRLS_MAX_ITER, score_tol: SCORE_TOL, coef_limit: Some(SEPARATION_LIMIT) };
    let out = newton::maximize(|b| evaluate(b, &design, y, &penalty), DVector::zeros(k), &opts)
        .map_err(|e| classify_failure(e, &design, y))?;
    Ok(assemble(out, add_intercept, false))
}

/// A singular information matrix with extreme fitted probabilities is a
/// separation symptom; otherwise the design itself is degenerate.
fn classify_failure(e: NewtonFailure, design: &DMatrix<f64>, y: &[u8]) -> Error {
    match e {
        NewtonFailure::Diverged | NewtonFailure::NonFinite => Error::SeparationDetected,
        NewtonFailure::Singular => {
            let all_same = y.iter().all(|&v| v == y[0]);
            let xtx = design.transpose() * design;
            if all_same || !crate::linalg::is_numerically_singular(&xtx) {
                Error::SeparationDetected
            } else {
                Error::RankDeficient
            }
        }
    }
}

/// Ridge-stabilised IRLS: penalty `lambda` on the coefficients, intercept
/// free. When the response is constant the intercept has no finite optimum,
/// so it is penalised too. Always flagged as a fallback.
pub fn irls_fit_ridge(x: &DMatrix<f64>, y: &[u8], add_intercept: bool, lambda: f64) -> Result<LrFit> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
    }
    let design = if add_intercept { with_intercept(x) } else { x.clone() };
    let k = design.ncols();
    let constant_y = y.iter().all(|&v| v == y[0]);
    let mut penalty = vec![lambda; k];
    if add_intercept && !constant_y {
        penalty[0] = 0.0;
    }
    let opts = NewtonOptions { max_iter: 200, score_tol: SCORE_TOL, coef_limit: None };
    let out = newton::maximize(|b| evaluate(b, &design, y, &penalty), DVector::zeros(k), &opts)
        .map_err(|_| Error::RankDeficient)?;
    Ok(assemble(out, add_intercept, true))
}
