//! Synthetic matched-pair studies: design generation, response models, the
//! BCLR flavours and frequentist baselines, and Monte Carlo summaries.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clr::clr_fit_mle;
use crate::data::{difference_discordant, partition_pairs, PairedDataset};
use crate::error::{Error, Result};
use crate::inference::{decide, IntervalMethod};
use crate::math::{logistic, z_critical};
use crate::premodel::{gee_fit_pairs, irls_fit, premodel_concordant, GeeOptions, PremodelMethod};
use crate::priors::{PriorKind, PriorSpec, DEFAULT_TAU2};
use crate::sampler::{sample_posterior, SamplerConfig};
use crate::seed::{derive_seed, rng_from, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseModel {
    Linear,
    Friedman,
}

impl std::fmt::Display for ResponseModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Linear => "linear",
            Self::Friedman => "friedman",
        })
    }
}

impl std::str::FromStr for ResponseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Self::Linear),
            "friedman" => Ok(Self::Friedman),
            other => Err(Error::InvalidConfig(format!("unknown response model '{other}'"))),
        }
    }
}

/// A BCLR flavour (premodel x prior) or a frequentist baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MethodSpec {
    Bclr {
        premodel: PremodelMethod,
        prior: PriorKind,
    },
    /// Logistic regression on all rows with a treatment column.
    Lr,
    /// Conditional logistic regression MLE.
    Clr,
    /// Exchangeable GEE over pairs with a treatment column.
    Gee,
}

impl std::fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Bclr { premodel, prior } => write!(f, "bclr-{premodel}-{prior}"),
            Self::Lr => f.write_str("lr"),
            Self::Clr => f.write_str("clr"),
            Self::Gee => f.write_str("gee"),
        }
    }
}

impl std::str::FromStr for MethodSpec {
    type Err = Error;

    /// `lr`, `clr`, `gee`, or `bclr-<premodel>-<prior>` (e.g. `bclr-lr-naive`).
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "lr" => return Ok(Self::Lr),
            "clr" => return Ok(Self::Clr),
            "gee" => return Ok(Self::Gee),
            _ => {}
        }
        let parts: Vec<&str> = lower.split('-').collect();
        match parts.as_slice() {
            ["bclr", premodel, prior] => Ok(Self::Bclr { premodel: premodel.parse()?, prior: prior.parse()? }),
            _ => Err(Error::InvalidConfig(format!(
                "unknown method '{s}'; expected lr, clr, gee or bclr-<lr|gee>-<naive|g|pmp|hybrid>"
            ))),
        }
    }
}

impl TryFrom<String> for MethodSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MethodSpec> for String {
    fn from(m: MethodSpec) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Number of observations `2n`.
    pub n_total: usize,
    /// Latent covariates driving the response.
    pub p: usize,
    /// Leading covariates exposed to the methods.
    pub covariates_observed: usize,
    pub response_model: ResponseModel,
    pub beta_w_true: f64,
    pub beta0: f64,
    pub beta_true: Vec<f64>,
    /// Standard deviation of the within-pair perturbation.
    pub noise_sd: f64,
    pub n_sim: usize,
    pub alpha: f64,
    pub methods: Vec<MethodSpec>,
    pub master_seed: u64,
    pub test_method: IntervalMethod,
    pub tau2: f64,
    /// Chain settings; the seed is replaced per iteration.
    pub sampler: SamplerConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_total: 100,
            p: 6,
            covariates_observed: 1,
            response_model: ResponseModel::Linear,
            beta_w_true: 0.5,
            beta0: -0.5,
            beta_true: vec![1.25; 6],
            noise_sd: 0.05,
            n_sim: 1000,
            alpha: 0.05,
            methods: vec![MethodSpec::Bclr { premodel: PremodelMethod::Lr, prior: PriorKind::Naive }],
            master_seed: 0,
            test_method: IntervalMethod::EqualTailed,
            tau2: DEFAULT_TAU2,
            sampler: SamplerConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn n_pairs(&self) -> usize {
        self.n_total / 2
    }

    /// Checks everything except `n_sim`, which `run_study` reports separately.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_total % 2 == 1 || self.n_total < 4 {
            return bad(format!("n_total must be even and at least 4, got {}", self.n_total));
        }
        if self.covariates_observed > self.p {
            return bad(format!("covariates_observed ({}) exceeds p ({})", self.covariates_observed, self.p));
        }
        if self.beta_true.len() != self.p {
            return bad(format!("beta_true has {} entries, p = {}", self.beta_true.len(), self.p));
        }
        if self.response_model == ResponseModel::Friedman && self.p < 5 {
            return bad("the Friedman model needs p >= 5".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd must be non-negative".into());
        }
        if !(self.tau2 > 0.0 && self.tau2.is_finite()) {
            return bad("tau2 must be positive".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        let finite = [self.beta_w_true, self.beta0].iter().chain(&self.beta_true).all(|v| v.is_finite());
        if !finite {
            return bad("coefficients must be finite".into());
        }
        self.sampler.validate()
    }
}

/// `2n x p` design: uniform rows, each followed by a slightly perturbed copy,
/// then the first column shuffled across all rows.
pub fn gen_design_matrix(n_pairs: usize, p: usize, noise_sd: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from(seed);
    let noise = Normal::new(0.0, noise_sd).expect("noise_sd is non-negative");
    let mut x = DMatrix::zeros(2 * n_pairs, p);
    for i in 0..n_pairs {
        for j in 0..p {
            let u: f64 = rng.random_range(-1.0..=1.0);
            x[(2 * i, j)] = u;
            x[(2 * i + 1, j)] = u + noise.sample(&mut rng);
        }
    }
    if p > 0 {
        let mut col: Vec<f64> = x.column(0).iter().copied().collect();
        col.shuffle(&mut rng);
        x.set_column(0, &nalgebra::DVector::from_vec(col));
    }
    x
}

/// Per pair, a fair coin picks which of rows `2k`, `2k + 1` is treated.
pub fn assign_treatment(n_pairs: usize, seed: u64) -> Vec<u8> {
    let mut rng = rng_from(seed);
    let mut w = Vec::with_capacity(2 * n_pairs);
    for _ in 0..n_pairs {
        if rng.random::<bool>() {
            w.extend_from_slice(&[1, 0]);
        } else {
            w.extend_from_slice(&[0, 1]);
        }
    }
    w
}

/// `P(y = 1 | x, w)` under the configured response model.
pub fn response_probability(x_row: &[f64], w: f64, cfg: &SimConfig) -> f64 {
    let eta = match cfg.response_model {
        ResponseModel::Linear => cfg.beta0 + x_row.iter().zip(&cfg.beta_true).map(|(x, b)| x * b).sum::<f64>(),
        ResponseModel::Friedman => {
            (std::f64::consts::PI * x_row[0] * x_row[1]).sin()
                + x_row[2].powi(3)
                + x_row[3] * x_row[3]
                + x_row[4] * x_row[4]
        }
    };
    logistic(eta + cfg.beta_w_true * w)
}

/// One method's outcome on one simulated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub reject: bool,
    pub estimate: f64,
    pub covered: bool,
}

pub type MethodOutcome = std::result::Result<MethodRecord, Error>;

/// Generates the iteration's dataset over the observed covariates.
pub fn simulate_dataset(cfg: &SimConfig, x_fixed: &DMatrix<f64>, iter_index: u64) -> Result<PairedDataset> {
    let n_pairs = cfg.n_pairs();
    let w = assign_treatment(n_pairs, derive_seed(cfg.master_seed, iter_index, stream::TREATMENT));
    let mut rng = rng_from(derive_seed(cfg.master_seed, iter_index, stream::RESPONSE));
    let y: Vec<u8> = (0..2 * n_pairs)
        .map(|r| {
            let row: Vec<f64> = x_fixed.row(r).iter().copied().collect();
            let prob = response_probability(&row, f64::from(w[r]), cfg);
            u8::from(rng.random::<f64>() < prob)
        })
        .collect();
    let observed = x_fixed.columns(0, cfg.covariates_observed).into_owned();
    PairedDataset::from_consecutive_rows(w, y, observed)
}

fn wald_record(estimate: f64, se: f64, cfg: &SimConfig) -> MethodOutcome {
    if !(estimate.is_finite() && se.is_finite() && se > 0.0) {
        return Err(Error::NonFiniteState);
    }
    let half = z_critical(cfg.alpha) * se;
    let (lo, hi) = (estimate - half, estimate + half);
    Ok(MethodRecord {
        reject: !(lo <= 0.0 && 0.0 <= hi),
        estimate,
        covered: lo <= cfg.beta_w_true && cfg.beta_w_true <= hi,
    })
}

/// `[w, X]` over all rows.
fn with_treatment(data: &PairedDataset) -> DMatrix<f64> {
    let x = data.covariates();
    let mut d = DMatrix::zeros(x.nrows(), x.ncols() + 1);
    for (r, &w) in data.treatment().iter().enumerate() {
        d[(r, 0)] = f64::from(w);
    }
    d.view_mut((0, 1), (x.nrows(), x.ncols())).copy_from(x);
    d
}

/// Fits one method and records its test decision against `beta_w = 0` and
/// whether its interval covers the true effect.
pub fn run_method(method: MethodSpec, data: &PairedDataset, cfg: &SimConfig, sampler_seed: u64) -> MethodOutcome {
    match method {
        MethodSpec::Lr => {
            let fit = irls_fit(&with_treatment(data), data.response(), true)?;
            if !fit.converged {
                return Err(Error::NotConverged(crate::premodel::IRLS_MAX_ITER));
            }
            wald_record(fit.coefficients[0], fit.coefficient_se(0), cfg)
        }
        MethodSpec::Gee => {
            let fit = gee_fit_pairs(&with_treatment(data), data.response(), &GeeOptions::default())?;
            wald_record(fit.coefficients[0], fit.coefficient_se(0), cfg)
        }
        MethodSpec::Clr => {
            let part = partition_pairs(data);
            let diffs = difference_discordant(data, &part)?;
            let fit = clr_fit_mle(&diffs)?;
            if !fit.converged {
                return Err(Error::NotConverged(crate::clr::CLR_MAX_ITER));
            }
            wald_record(fit.estimate.beta_w, fit.beta_w_se(), cfg)
        }
        MethodSpec::Bclr { premodel, prior } => {
            let part = partition_pairs(data);
            let diffs = difference_discordant(data, &part)?;
            if diffs.is_empty() {
                return Err(Error::NoDiscordantPairs);
            }
            let fit = premodel_concordant(data, &part, premodel)?;
            let spec = PriorSpec::from_premodel(prior, &fit, cfg.tau2, &diffs)?;
            let sampler = SamplerConfig { seed: sampler_seed, ..cfg.sampler.clone() };
            let samples = sample_posterior(&diffs, &spec, &sampler)?;
            let draws = samples.pooled_beta_w();
            let test = decide(&draws, cfg.alpha, 0.0, cfg.test_method)?;
            Ok(MethodRecord {
                reject: test.reject,
                estimate: test.point_estimate,
                covered: test.interval_set.contains(cfg.beta_w_true),
            })
        }
    }
}

/// Simulates iteration `iter_index` and runs every configured method on it.
/// Method failures are returned, not propagated.
pub fn run_iteration(cfg: &SimConfig, x_fixed: &DMatrix<f64>, iter_index: u64) -> Vec<MethodOutcome> {
    let data = match simulate_dataset(cfg, x_fixed, iter_index) {
        Ok(d) => d,
        Err(e) => return cfg.methods.iter().map(|_| Err(e.clone())).collect(),
    };
    let base = derive_seed(cfg.master_seed, iter_index, stream::SAMPLER);
    cfg.methods
        .iter()
        .enumerate()
        .map(|(k, &m)| run_method(m, &data, cfg, derive_seed(base, k as u64, stream::SAMPLER)))
        .collect()
}

/// Monte Carlo summary of one method. Proportions and MSE are over the
/// iterations where the method succeeded; `None` when it never did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: MethodSpec,
    pub n_sim: usize,
    pub n_failed: usize,
    pub power_or_size: Option<f64>,
    pub mse: Option<f64>,
    pub coverage: Option<f64>,
    /// Binomial standard error of `power_or_size`.
    pub mc_se: Option<f64>,
    /// Rejection proportion over all iterations, failures counted as
    /// non-rejections.
    pub power_failed_as_retain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub methods: Vec<MethodSummary>,
}

impl SimResult {
    pub fn get(&self, method: MethodSpec) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// Reduces per-iteration outcomes (in iteration order) to summaries.
pub fn summarize(cfg: &SimConfig, outcomes: &[Vec<MethodOutcome>]) -> SimResult {
    let methods = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let ok: Vec<&MethodRecord> = outcomes.iter().filter_map(|o| o[k].as_ref().ok()).collect();
            let n_ok = ok.len();
            let rejections = ok.iter().filter(|r| r.reject).count();
            let prop = |count: usize| (n_ok > 0).then(|| count as f64 / n_ok as f64);
            let power = prop(rejections);
            let sq_err: f64 = ok.iter().map(|r| (r.estimate - cfg.beta_w_true).powi(2)).sum();
            MethodSummary {
                method,
                n_sim: outcomes.len(),
                n_failed: outcomes.len() - n_ok,
                power_or_size: power,
                mse: (n_ok > 0).then(|| sq_err / n_ok as f64),
                coverage: prop(ok.iter().filter(|r| r.covered).count()),
                mc_se: power.map(|p| (p * (1.0 - p) / n_ok as f64).sqrt()),
                power_failed_as_retain: rejections as f64 / outcomes.len().max(1) as f64,
            }
        })
        .collect();
    SimResult { methods }
}

/// Runs `n_sim` iterations in parallel on the current rayon pool. Results
/// do not depend on the pool size.
pub fn run_study(cfg: &SimConfig) -> Result<SimResult> {
    if cfg.n_sim == 0 {
        return Err(Error::EmptyStudy);
    }
    cfg.validate()?;
    let x_fixed =
        gen_design_matrix(cfg.n_pairs(), cfg.p, cfg.noise_sd, derive_seed(cfg.master_seed, 0, stream::DESIGN));
    let outcomes: Vec<Vec<MethodOutcome>> =
        (0..cfg.n_sim as u64).into_par_iter().map(|i| run_iteration(cfg, &x_fixed, i)).collect();
    Ok(summarize(cfg, &outcomes))
}
