//! Logistic GEE for clusters of size two with an exchangeable working
//! correlation (moment estimator) and cluster-robust sandwich covariance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::irls::with_intercept;
use crate::clr::SEPARATION_LIMIT;
use crate::error::{Error, Result};
use crate::linalg;
use crate::math::logistic;

pub const GEE_MAX_ITER: usize = 100;
pub const RHO_LIMIT: f64 = 0.99;
const STEP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeeFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Over `(intercept, coefficients)`.
    pub sandwich_covariance: DMatrix<f64>,
    pub rho_hat: f64,
    pub converged: bool,
    pub fallback_used: bool,
}

impl GeeFit {
    pub fn coefficient_se(&self, j: usize) -> f64 {
        self.sandwich_covariance[(j + 1, j + 1)].sqrt()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GeeOptions {
    /// Hold the working correlation fixed instead of estimating it.
    pub fixed_rho: Option<f64>,
}

/// Per-cluster quantities at the current coefficients.
struct ClusterTerms {
    /// `D_k^T V_k^{-1}` for each cluster (q x 2).
    dv: Vec<DMatrix<f64>>,
    resid: Vec<[f64; 2]>,
}

fn cluster_terms(design: &DMatrix<f64>, y: &[u8], mu: &[f64], rho: f64) -> ClusterTerms {
    let q = design.ncols();
    let m = y.len() / 2;
    let det = 1.0 - rho * rho;
    // R^{-1} for the 2x2 exchangeable matrix
    let rinv = [[1.0 / det, -rho / det], [-rho / det, 1.0 / det]];
    let mut dv = Vec::with_capacity(m);
    let mut resid = Vec::with_capacity(m);
    for k in 0..m {
        let rows = [2 * k, 2 * k + 1];
        let sd = rows.map(|r| (mu[r] * (1.0 - mu[r])).sqrt());
        // D^T V^{-1} = X^T diag(sd) R^{-1} diag(1/sd)
        let mut block = DMatrix::zeros(q, 2);
        for a in 0..q {
            for c in 0..2 {
                let mut acc = 0.0;
                for (b, &r) in rows.iter().enumerate() {
                    acc += design[(r, a)] * sd[b] * rinv[b][c];
                }
                block[(a, c)] = acc / sd[c];
            }
        }
        dv.push(block);
        resid.push(rows.map(|r| f64::from(y[r]) - mu[r]));
    }
    ClusterTerms { dv, resid }
}

/// Moment estimate of the exchangeable correlation from Pearson residuals.
pub(crate) fn moment_rho(y: &[u8], mu: &[f64], n_coef: usize) -> f64 {
    let pearson: Vec<f64> = y.iter().zip(mu).map(|(&yi, &m)| (f64::from(yi) - m) / (m * (1.0 - m)).sqrt()).collect();
    let phi = pearson.iter().map(|r| r * r).sum::<f64>() / pearson.len() as f64;
    let m = pearson.len() / 2;
    let cross: f64 = (0..m).map(|k| pearson[2 * k] * pearson[2 * k + 1]).sum();
    let dof = m as f64 - n_coef as f64;
    if dof <= 0.0 || !(phi > 0.0) {
        return 0.0;
    }
    (cross / (dof * phi)).clamp(-RHO_LIMIT, RHO_LIMIT)
}

/// Fits `logit P(y=1) = b0 + x.b` with rows `2k`, `2k+1` forming cluster `k`.
pub fn gee_fit_pairs(x: &DMatrix<f64>, y: &[u8], opts: &GeeOptions) -> Result<GeeFit> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
    }
    if y.len() % 2 == 1 {
        return Err(Error::OddRowCount(y.len()));
    }
    if y.len() < 4 {
        return Err(Error::InvalidInput("GEE needs at least two clusters".into()));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("design matrix must be finite".into()));
    }
    let design = with_intercept(x);
    let q = design.ncols();
    let mut beta = DVector::zeros(q);
    let mut rho = opts.fixed_rho.unwrap_or(0.0).clamp(-RHO_LIMIT, RHO_LIMIT);
    let mut converged = false;

    for _ in 0..GEE_MAX_ITER {
        let mu: Vec<f64> = (&design * &beta).iter().map(|&e| logistic(e)).collect();
        if mu.iter().any(|&m| m <= 0.0 || m >= 1.0) {
            return Err(Error::SeparationDetected);
        }
        if opts.fixed_rho.is_none() {
            rho = moment_rho(y, &mu, q);
        }
        let terms = cluster_terms(&design, y, &mu, rho);
        let mut info = DMatrix::zeros(q, q);
        let mut score = DVector::zeros(q);
        for (k, block) in terms.dv.iter().enumerate() {
            let rows = [2 * k, 2 * k + 1];
            let mut d = DMatrix::zeros(2, q);
            for (b, &r) in rows.iter().enumerate() {
                let a = mu[r] * (1.0 - mu[r]);
                for j in 0..q {
                    d[(b, j)] = a * design[(r, j)];
                }
            }
            info += block * d;
            score += block * DVector::from_row_slice(&terms.resid[k]);
        }
        linalg::symmetrize(&mut info);
        let step = match linalg::spd_inverse(&info) {
            Some(inv) => inv * score,
            None => return Err(Error::SeparationDetected),
        };
        beta += &step;
        if beta.amax() > SEPARATION_LIMIT || !beta.iter().all(|b| b.is_finite()) {
            return Err(Error::SeparationDetected);
        }
        if step.amax() < STEP_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged(GEE_MAX_ITER));
    }

    let mu: Vec<f64> = (&design * &beta).iter().map(|&e| logistic(e)).collect();
    if opts.fixed_rho.is_none() {
        rho = moment_rho(y, &mu, q);
    }
    let sandwich = sandwich(&design, y, &mu, rho)?;
    Ok(GeeFit {
        intercept: beta[0],
        coefficients: beta.as_slice()[1..].to_vec(),
        sandwich_covariance: sandwich,
        rho_hat: rho,
        converged,
        fallback_used: false,
    })
}

/// `bread * meat * bread` with `bread = (sum D^T V^-1 D)^-1` and `meat` the
/// sum of cluster score outer products.
fn sandwich(design: &DMatrix<f64>, y: &[u8], mu: &[f64], rho: f64) -> Result<DMatrix<f64>> {
    let q = design.ncols();
    let terms = cluster_terms(design, y, mu, rho);
    let mut info = DMatrix::zeros(q, q);
    let mut meat = DMatrix::zeros(q, q);
    for (k, block) in terms.dv.iter().enumerate() {
        let mut d = DMatrix::zeros(2, q);
        for b in 0..2 {
            let r = 2 * k + b;
            let a = mu[r] * (1.0 - mu[r]);
            for j in 0..q {
                d[(b, j)] = a * design[(r, j)];
            }
        }
        info += block * d;
        let u = block * DVector::from_row_slice(&terms.resid[k]);
        meat += &u * u.transpose();
    }
    linalg::symmetrize(&mut info);
    let bread = linalg::spd_inverse(&info).ok_or(Error::SingularSandwich)?;
    let mut cov = &bread * meat * &bread;
    linalg::symmetrize(&mut cov);
    if !cov.iter().all(|v| v.is_finite()) || linalg::is_numerically_singular(&cov) {
        return Err(Error::SingularSandwich);
    }
    Ok(cov)
}
