//! The `fit` pipeline: BCLR (premodel, prior, sampler, interval test) or a
//! frequentist baseline with a Wald test.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use bclr_core::math::{two_sided_p, z_critical};
use bclr_core::premodel::{gee_fit_pairs, irls_fit, GeeOptions};
use bclr_core::{
    clr_fit_mle, decide, diagnose, difference_discordant, partition_pairs, premodel_concordant, sample_posterior,
    IntervalMethod, PairedDataset, PremodelMethod, PriorKind, PriorSpec, SamplerConfig,
};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Bclr,
    Lr,
    Clr,
    Gee,
}

impl std::fmt::Display for FitMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Bclr => "bclr",
            Self::Lr => "lr",
            Self::Clr => "clr",
            Self::Gee => "gee",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitRequest {
    pub method: FitMethod,
    pub premodel: PremodelMethod,
    pub prior: PriorKind,
    pub tau2: f64,
    pub test: IntervalMethod,
    pub theta0: f64,
    pub alpha: f64,
    pub sampler: SamplerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub names: Vec<String>,
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    pub divergences: Vec<usize>,
    pub accept_rate: Vec<f64>,
    pub step_size: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    /// `bclr-<premodel>-<prior>` or the baseline name.
    pub method: String,
    /// `cr`, `hpd-contiguous`, `hpd-disjoint`, or `wald`.
    pub test: String,
    pub alpha: f64,
    pub theta0: f64,
    pub estimate: f64,
    /// Sorted credible (or confidence) set for the treatment effect.
    pub intervals: Vec<(f64, f64)>,
    pub reject: bool,
    pub std_error: Option<f64>,
    pub p_value: Option<f64>,
    pub n_concordant: usize,
    pub n_discordant: usize,
    pub diagnostics: Option<DiagnosticsReport>,
    pub fallback_used: bool,
    pub warnings: Vec<String>,
    pub wall_time_secs: f64,
}

impl InferenceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serialisable")
    }

    pub const CSV_HEADER: &'static str =
        "method,test,alpha,theta0,estimate,intervals,reject,std_error,p_value,n_concordant,n_discordant,fallback_used";

    /// One-row table; intervals as `lo:hi` joined by `;`.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        let intervals: Vec<String> = self.intervals.iter().map(|(lo, hi)| format!("{lo}:{hi}")).collect();
        format!(
            "{}\n{},{},{},{},{},{},{},{},{},{},{},{}\n",
            Self::CSV_HEADER,
            self.method,
            self.test,
            self.alpha,
            self.theta0,
            self.estimate,
            intervals.join(";"),
            self.reject,
            opt(self.std_error),
            opt(self.p_value),
            self.n_concordant,
            self.n_discordant,
            self.fallback_used
        )
    }
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

pub fn fit_command(data: &PairedDataset, req: &FitRequest, warnings: Vec<String>) -> CliResult<InferenceReport> {
    if !(req.alpha > 0.0 && req.alpha < 1.0) {
        return Err(CliError::invalid_arguments(format!("--alpha must lie in (0, 1), got {}", req.alpha)));
    }
    if !req.theta0.is_finite() {
        return Err(CliError::invalid_arguments("--theta0 must be finite"));
    }
    let start = Instant::now();
    let part = partition_pairs(data);
    let mut report = match req.method {
        FitMethod::Bclr => fit_bclr(data, req)?,
        baseline => fit_baseline(data, req, baseline)?,
    };
    report.n_concordant = part.n_concordant();
    report.n_discordant = part.n_discordant();
    report.warnings = warnings;
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

fn empty_report(method: String, test: String, req: &FitRequest) -> InferenceReport {
    InferenceReport {
        method,
        test,
        alpha: req.alpha,
        theta0: req.theta0,
        estimate: f64::NAN,
        intervals: Vec::new(),
        reject: false,
        std_error: None,
        p_value: None,
        n_concordant: 0,
        n_discordant: 0,
        diagnostics: None,
        fallback_used: false,
        warnings: Vec::new(),
        wall_time_secs: 0.0,
    }
}

fn fit_bclr(data: &PairedDataset, req: &FitRequest) -> CliResult<InferenceReport> {
    req.sampler.validate()?;
    let part = partition_pairs(data);
    let diffs = difference_discordant(data, &part)?;
    if diffs.is_empty() {
        return Err(bclr_core::Error::NoDiscordantPairs.into());
    }
    let premodel = premodel_concordant(data, &part, req.premodel)?;
    let spec = PriorSpec::from_premodel(req.prior, &premodel, req.tau2, &diffs)?;
    let samples = sample_posterior(&diffs, &spec, &req.sampler)?;
    let draws = samples.pooled_beta_w();
    let decision = decide(&draws, req.alpha, req.theta0, req.test)?;
    // R-hat needs two chains; a single-chain run reports none
    let diagnostics = diagnose(&samples).ok().map(|d| DiagnosticsReport {
        names: d.names,
        rhat: d.rhat,
        ess: d.ess,
        divergences: samples.divergence_count.clone(),
        accept_rate: samples.accept_rate.clone(),
        step_size: samples.step_size.clone(),
    });
    let mut report = empty_report(format!("bclr-{}-{}", req.premodel, req.prior), req.test.to_string(), req);
    report.estimate = decision.point_estimate;
    report.intervals = decision.interval_set.intervals;
    report.reject = decision.reject;
    report.diagnostics = diagnostics;
    report.fallback_used = premodel.fallback_used;
    Ok(report)
}

fn fit_baseline(data: &PairedDataset, req: &FitRequest, method: FitMethod) -> CliResult<InferenceReport> {
    let (estimate, se, fallback_used) = match method {
        FitMethod::Lr => {
            let fit = irls_fit(&with_treatment(data), data.response(), true)?;
            if !fit.converged {
                return Err(bclr_core::Error::NotConverged(bclr_core::premodel::IRLS_MAX_ITER).into());
            }
            (fit.coefficients[0], fit.coefficient_se(0), false)
        }
        FitMethod::Gee => {
            let fit = gee_fit_pairs(&with_treatment(data), data.response(), &GeeOptions::default())?;
            (fit.coefficients[0], fit.coefficient_se(0), false)
        }
        FitMethod::Clr => {
            let part = partition_pairs(data);
            let diffs = difference_discordant(data, &part)?;
            let fit = clr_fit_mle(&diffs)?;
            if !fit.converged {
                return Err(bclr_core::Error::NotConverged(bclr_core::clr::CLR_MAX_ITER).into());
            }
            (fit.estimate.beta_w, fit.beta_w_se(), false)
        }
        FitMethod::Bclr => unreachable!("handled by fit_bclr"),
    };
    if !(estimate.is_finite() && se.is_finite() && se > 0.0) {
        return Err(bclr_core::Error::NonSpdCovariance.into());
    }
    let half = z_critical(req.alpha) * se;
    let (lo, hi) = (estimate - half, estimate + half);
    let mut report = empty_report(method.to_string(), "wald".into(), req);
    report.estimate = estimate;
    report.intervals = vec![(lo, hi)];
    report.reject = !(lo <= req.theta0 && req.theta0 <= hi);
    report.std_error = Some(se);
    report.p_value = Some(two_sided_p((estimate - req.theta0) / se));
    report.fallback_used = fallback_used;
    Ok(report)
}
