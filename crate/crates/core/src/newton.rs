//! Damped Newton ascent for smooth concave objectives (CLR and logistic
//! likelihoods). IRLS is this iteration with the canonical logistic link.

use nalgebra::{DMatrix, DVector};

use crate::linalg;

/// Objective value, score, and negative Hessian at a point.
pub(crate) struct Evaluation {
    pub value: f64,
    pub score: DVector<f64>,
    pub neg_hessian: DMatrix<f64>,
}

pub(crate) struct NewtonOptions {
    pub max_iter: usize,
    pub score_tol: f64,
    /// Any coefficient exceeding this magnitude is treated as divergence.
    pub coef_limit: Option<f64>,
}

#[derive(Debug)]
pub(crate) enum NewtonFailure {
    Diverged,
    Singular,
    NonFinite,
}

pub(crate) struct NewtonOutcome {
    pub estimate: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub converged: bool,
    #[allow(dead_code)]
    pub iterations: usize,
}

pub(crate) fn maximize<F>(
    mut eval: F,
    start: DVector<f64>,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome, NewtonFailure>
where
    F: FnMut(&DVector<f64>) -> Evaluation,
{
    let mut x = start;
    let mut cur = eval(&x);
    if !cur.value.is_finite() {
        return Err(NewtonFailure::NonFinite);
    }
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it;
        if cur.score.amax() < opts.score_tol {
            converged = true;
            break;
        }
        if linalg::is_numerically_singular(&cur.neg_hessian) {
            return Err(NewtonFailure::Singular);
        }
        let step = match cur.neg_hessian.clone().cholesky() {
            Some(chol) => chol.solve(&cur.score),
            None => return Err(NewtonFailure::Singular),
        };
        let mut scale = 1.0;
        let mut next_x;
        let mut next;
        loop {
            next_x = &x + &step * scale;
            next = eval(&next_x);
            if next.value.is_finite() && next.value >= cur.value - 1e-12 * cur.value.abs().max(1.0) {
                break;
            }
            scale *= 0.5;
            if scale < 1e-10 {
                // No ascent possible along the Newton direction; accept the
                // current point and let the score test decide.
                next_x = x.clone();
                next = eval(&next_x);
                break;
            }
        }
        if next_x == x {
            iterations = it + 1;
            converged = cur.score.amax() < opts.score_tol;
            break;
        }
        x = next_x;
        cur = next;
        if let Some(limit) = opts.coef_limit {
            if x.amax() > limit {
                return Err(NewtonFailure::Diverged);
            }
        }
        iterations = it + 1;
    }
    if !converged && cur.score.amax() < opts.score_tol {
        converged = true;
    }
    if linalg::is_numerically_singular(&cur.neg_hessian) {
        return Err(NewtonFailure::Singular);
    }
    let covariance = linalg::spd_inverse(&cur.neg_hessian).ok_or(NewtonFailure::Singular)?;
    Ok(NewtonOutcome { estimate: x, covariance, converged, iterations })
}
