//! Priors over `(beta_w, beta)` built from the concordant-pair premodel.
//!
//! * `Naive`:  N(beta; b_C, Sigma_C) x N(beta_w; 0, tau2)
//! * `G`:      N(beta; b_C, g Sigma_C) x N(beta_w; 0, tau2) x InvGamma(g; 1/2, |D|/2)
//! * `Pmp`:    sqrt(I_ww(beta_w, beta)) x N(beta; b_C, Sigma_C), flat in beta_w
//! * `Hybrid`: sqrt(I_ww(beta_w, beta)) x the `G` density
//!
//! `I_ww = sum_i w_i^2 q_i (1 - q_i)` is the treatment entry of the
//! discordant-pair Fisher information, with `w` the treatment regressor
//! residualised against the covariate differences.
//!
//! Densities involving `g` are expressed over `log g` (Jacobian included),
//! which is the coordinate the gradient refers to. InvGamma(g; a, s) has
//! density proportional to `g^(-a-1) exp(-s/g)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::clr::{pair_eta, Coefficients};
use crate::data::DiscordantDiffs;
use crate::error::{Error, Result};
use crate::linalg;
use crate::math::{log_sum_exp, logistic, softplus};
use crate::premodel::PremodelFit;

/// Prior variance of the treatment effect; effectively flat on the log-odds scale.
pub const DEFAULT_TAU2: f64 = 1e4;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// `ln Gamma(1/2) = ln(pi) / 2`
const LN_GAMMA_HALF: f64 = 0.572_364_942_924_700_1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    Naive,
    G,
    Pmp,
    Hybrid,
}

impl PriorKind {
    pub const ALL: [PriorKind; 4] = [Self::Naive, Self::G, Self::Pmp, Self::Hybrid];

    /// Carries the mixing scale `g`.
    pub fn has_g(self) -> bool {
        matches!(self, Self::G | Self::Hybrid)
    }

    /// Carries the `sqrt(I_ww)` factor.
    pub fn has_pmp(self) -> bool {
        matches!(self, Self::Pmp | Self::Hybrid)
    }
}

impl std::fmt::Display for PriorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Naive => "naive",
            Self::G => "g",
            Self::Pmp => "pmp",
            Self::Hybrid => "hybrid",
        })
    }
}

impl std::str::FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(Self::Naive),
            "g" => Ok(Self::G),
            "pmp" => Ok(Self::Pmp),
            "hybrid" => Ok(Self::Hybrid),
            other => Err(Error::InvalidConfig(format!("unknown prior '{other}'"))),
        }
    }
}

/// A fully specified prior, with `Sigma_C` pre-factorised.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    kind: PriorKind,
    b_c: DVector<f64>,
    sigma_c: DMatrix<f64>,
    sigma_c_inv: DMatrix<f64>,
    log_det_sigma_c: f64,
    tau2: f64,
    n_discordant: usize,
    w_tilde: Option<DVector<f64>>,
    diffs: Option<DiscordantDiffs>,
}

impl PriorSpec {
    /// `diffs` supplies `|D|` (the `g` hyperprior scale) and, for the
    /// PMP-bearing kinds, the design that `I_ww` is evaluated on.
    pub fn new(
        kind: PriorKind,
        b_c: DVector<f64>,
        sigma_c: DMatrix<f64>,
        tau2: f64,
        diffs: &DiscordantDiffs,
    ) -> Result<Self> {
        let p = diffs.n_covariates();
        if !(tau2 > 0.0 && tau2.is_finite()) {
            return Err(Error::InvalidPrior(format!("tau2 must be positive, got {tau2}")));
        }
        if b_c.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: b_c.len() });
        }
        if sigma_c.nrows() != p || sigma_c.ncols() != p {
            return Err(Error::DimensionMismatch { expected: p, got: sigma_c.nrows() });
        }
        if !b_c.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidPrior("b_C must be finite".into()));
        }
        let not_spd = || Error::InvalidPrior("Sigma_C must be symmetric positive definite".into());
        let sigma_c_inv = linalg::spd_inverse(&sigma_c).ok_or_else(not_spd)?;
        let log_det_sigma_c = linalg::spd_log_det(&sigma_c).ok_or_else(not_spd)?;
        if kind != PriorKind::Naive && diffs.is_empty() {
            return Err(Error::NoDiscordantPairs);
        }
        let (w_tilde, stored) =
            if kind.has_pmp() { (Some(orthogonalize_treatment(diffs)?), Some(diffs.clone())) } else { (None, None) };
        Ok(Self {
            kind,
            b_c,
            sigma_c,
            sigma_c_inv,
            log_det_sigma_c,
            tau2,
            n_discordant: diffs.n_pairs(),
            w_tilde,
            diffs: stored,
        })
    }

    pub fn from_premodel(kind: PriorKind, fit: &PremodelFit, tau2: f64, diffs: &DiscordantDiffs) -> Result<Self> {
        Self::new(kind, fit.b_c.clone(), fit.sigma_c.clone(), tau2, diffs)
    }

    /// Replaces the orthogonalised treatment vector (PMP-bearing kinds only).
    pub fn with_w_tilde(mut self, w_tilde: DVector<f64>) -> Result<Self> {
        if !self.kind.has_pmp() {
            return Err(Error::InvalidPrior(format!("{} prior has no treatment weights", self.kind)));
        }
        if w_tilde.len() != self.n_discordant {
            return Err(Error::DimensionMismatch { expected: self.n_discordant, got: w_tilde.len() });
        }
        self.w_tilde = Some(w_tilde);
        Ok(self)
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn b_c(&self) -> &DVector<f64> {
        &self.b_c
    }

    pub fn sigma_c(&self) -> &DMatrix<f64> {
        &self.sigma_c
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    pub fn n_discordant(&self) -> usize {
        self.n_discordant
    }

    pub fn n_covariates(&self) -> usize {
        self.b_c.len()
    }

    pub fn w_tilde(&self) -> Option<&DVector<f64>> {
        self.w_tilde.as_ref()
    }

    /// Number of gradient coordinates: `(beta_w, beta[, log g])`.
    pub fn n_params(&self) -> usize {
        self.n_covariates() + 1 + usize::from(self.kind.has_g())
    }

    fn mahalanobis(&self, beta: &[f64]) -> (f64, DVector<f64>) {
        let dev = DVector::from_iterator(beta.len(), beta.iter().zip(self.b_c.iter()).map(|(b, c)| b - c));
        let prec_dev = &self.sigma_c_inv * &dev;
        (dev.dot(&prec_dev), prec_dev)
    }

    /// Log density and gradient over `(beta_w, beta[, log g])`. Returns
    /// `-inf` (never NaN) when `I_ww` vanishes.
    pub(crate) fn eval(&self, theta: &[f64], g: Option<f64>, grad: &mut [f64]) -> f64 {
        let p = self.n_covariates();
        grad.iter_mut().for_each(|v| *v = 0.0);
        let beta_w = theta[0];
        let beta = &theta[1..=p];
        let (quad, prec_dev) = self.mahalanobis(beta);
        let mut value = 0.0;

        if self.kind != PriorKind::Pmp {
            value += -0.5 * (LN_2PI + self.tau2.ln()) - beta_w * beta_w / (2.0 * self.tau2);
            grad[0] -= beta_w / self.tau2;
        }

        let base = -0.5 * (p as f64 * LN_2PI + self.log_det_sigma_c);
        match (self.kind.has_g(), g) {
            (true, Some(g)) => {
                let log_g = g.ln();
                let shape = 0.5;
                let scale = self.n_discordant as f64 / 2.0;
                value += base - 0.5 * p as f64 * log_g - quad / (2.0 * g);
                value += shape * scale.ln() - LN_GAMMA_HALF - (shape + 1.0) * log_g - scale / g;
                value += log_g;
                for j in 0..p {
                    grad[1 + j] -= prec_dev[j] / g;
                }
                grad[p + 1] = -0.5 * p as f64 - shape + (quad / 2.0 + scale) / g;
            }
            _ => {
                value += base - 0.5 * quad;
                for j in 0..p {
                    grad[1 + j] -= prec_dev[j];
                }
            }
        }

        if self.kind.has_pmp() {
            let (half_log_info, info_grad) = self.half_log_info_and_grad(theta);
            if half_log_info == f64::NEG_INFINITY {
                grad.iter_mut().for_each(|v| *v = 0.0);
                return f64::NEG_INFINITY;
            }
            value += half_log_info;
            for (gj, ij) in grad.iter_mut().zip(info_grad) {
                *gj += ij;
            }
        }
        value
    }

    /// `0.5 * log I_ww` and its gradient over `(beta_w, beta)`, computed in
    /// log space so that a vanishing information stays finite until every
    /// term underflows.
    fn half_log_info_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let p = self.n_covariates();
        let (Some(w), Some(d)) = (self.w_tilde.as_ref(), self.diffs.as_ref()) else {
            return (f64::NEG_INFINITY, vec![0.0; p + 1]);
        };
        let mut terms = Vec::with_capacity(w.len());
        let mut idx = Vec::with_capacity(w.len());
        let mut qs = Vec::with_capacity(w.len());
        for i in 0..w.len() {
            if w[i] == 0.0 {
                continue;
            }
            let eta = pair_eta(theta, d, i);
            terms.push(2.0 * w[i].abs().ln() - softplus(eta) - softplus(-eta));
            idx.push(i);
            qs.push(logistic(eta));
        }
        let log_info = log_sum_exp(&terms);
        let mut grad = vec![0.0; p + 1];
        if !log_info.is_finite() {
            return (f64::NEG_INFINITY, grad);
        }
        let dx = d.delta_x();
        for ((&t, &i), &q) in terms.iter().zip(&idx).zip(&qs) {
            let weight = 0.5 * (t - log_info).exp() * (1.0 - 2.0 * q);
            grad[0] += weight;
            for j in 0..p {
                grad[1 + j] += weight * dx[(i, j)];
            }
        }
        (0.5 * log_info, grad)
    }
}

/// Point at which a prior is evaluated; `g` is present iff the kind has one.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorState {
    pub coefficients: Coefficients,
    pub g: Option<f64>,
}

/// Residual of the all-ones treatment regressor after projection onto the
/// columns of the covariate differences (minimum-norm when rank deficient).
pub fn orthogonalize_treatment(d: &DiscordantDiffs) -> Result<DVector<f64>> {
    if d.is_empty() {
        return Err(Error::NoDiscordantPairs);
    }
    let dx = d.delta_x();
    let ones = DVector::from_element(d.n_pairs(), 1.0);
    if dx.ncols() == 0 {
        return Ok(ones);
    }
    let gram = dx.transpose() * dx;
    let rhs = dx.transpose() * &ones;
    let coef = linalg::symmetric_pinv(&gram) * rhs;
    Ok(ones - dx * coef)
}

/// `sum_i w_i^2 q_i (1 - q_i)` at the given coefficients.
pub fn fisher_info_ww(c: &Coefficients, d: &DiscordantDiffs, w_tilde: &DVector<f64>) -> Result<f64> {
    let theta = c.to_params();
    if theta.len() != d.n_covariates() + 1 {
        return Err(Error::DimensionMismatch { expected: d.n_covariates() + 1, got: theta.len() });
    }
    if w_tilde.len() != d.n_pairs() {
        return Err(Error::DimensionMismatch { expected: d.n_pairs(), got: w_tilde.len() });
    }
    Ok((0..d.n_pairs())
        .map(|i| {
            let q = logistic(pair_eta(&theta, d, i));
            w_tilde[i] * w_tilde[i] * q * (1.0 - q)
        })
        .sum())
}

/// Log prior density and gradient over `(beta_w, beta[, log g])`.
pub fn log_prior_and_grad(spec: &PriorSpec, state: &PriorState) -> Result<(f64, Vec<f64>)> {
    let c = &state.coefficients;
    if c.beta.len() != spec.n_covariates() {
        return Err(Error::DimensionMismatch { expected: spec.n_covariates(), got: c.beta.len() });
    }
    if spec.kind.has_g() != state.g.is_some() {
        return Err(Error::InvalidPrior(format!(
            "{} prior {} a g coordinate",
            spec.kind,
            if spec.kind.has_g() { "requires" } else { "does not take" }
        )));
    }
    if !c.is_finite() || state.g.is_some_and(|g| !(g > 0.0 && g.is_finite())) {
        return Err(Error::NonFiniteState);
    }
    let theta = c.to_params();
    let mut grad = vec![0.0; spec.n_params()];
    let value = spec.eval(&theta, state.g, &mut grad);
    Ok((value, grad))
}

/// Exact full conditional of `g`:
/// InvGamma(1/2 + p/2, |D|/2 + (beta - b_C)' Sigma_C^-1 (beta - b_C) / 2).
pub fn g_conditional_draw<R: Rng + ?Sized>(beta: &[f64], spec: &PriorSpec, rng: &mut R) -> Result<f64> {
    if !spec.kind.has_g() {
        return Err(Error::InvalidPrior(format!("{} prior has no g", spec.kind)));
    }
    if beta.len() != spec.n_covariates() {
        return Err(Error::DimensionMismatch { expected: spec.n_covariates(), got: beta.len() });
    }
    let (quad, _) = spec.mahalanobis(beta);
    let shape = 0.5 + spec.n_covariates() as f64 / 2.0;
    let rate = spec.n_discordant as f64 / 2.0 + quad / 2.0;
    let precision = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::InvalidPrior(e.to_string()))?;
    loop {
        let x: f64 = precision.sample(rng);
        if x > 0.0 {
            return Ok(1.0 / x);
        }
    }
}
