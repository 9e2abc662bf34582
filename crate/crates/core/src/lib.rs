//! Bayesian conditional logistic regression for 1:1 matched pairs.
//!
//! Concordant pairs carry no conditional-likelihood information about the
//! treatment effect, so they are used to fit a premodel whose estimates form
//! an informative prior over the nuisance coefficients. The posterior over
//! `(beta_w, beta)` is then sampled from the discordant-pair likelihood.

pub mod clr;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod math;
mod newton;
pub mod premodel;
pub mod priors;
pub mod sampler;
pub mod seed;
pub mod sim;

pub use clr::{clr_fit_mle, clr_grad, clr_loglik, ClrMleFit, Coefficients};
pub use data::{
    concordant_rows, difference_discordant, partition_pairs, DiscordantDiffs, Pair, PairPartition, PairedDataset,
};
pub use diagnostics::{diagnose, Diagnostics};
pub use error::{Error, Result};
pub use inference::{
    decide, equal_tailed_cr, hpd_contiguous, hpd_disjoint, point_estimate, IntervalMethod, IntervalSet, TestDecision,
};
pub use premodel::{premodel_concordant, PremodelFit, PremodelMethod};
pub use priors::{g_conditional_draw, log_prior_and_grad, PriorKind, PriorSpec, PriorState};
pub use sampler::{sample_posterior, sample_target, LogDensity, PosteriorSamples, SamplerConfig};
pub use sim::{run_study, MethodSpec, ResponseModel, SimConfig, SimResult};
