//! Command-line front end: `fit` a matched-pair CSV, or `simulate` a
//! synthetic study. Reports go to stdout (or `--output`); failures go to
//! stderr as JSON with a stable error code and a distinct exit status.

pub mod error;
pub mod fit;
pub mod input;
pub mod simulate;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bclr_core::priors::DEFAULT_TAU2;
use bclr_core::sim::{run_study, MethodSpec, ResponseModel, SimConfig};
use bclr_core::{IntervalMethod, PremodelMethod, PriorKind, SamplerConfig};

pub use error::{CliError, CliResult};
pub use fit::{fit_command, FitMethod, FitRequest, InferenceReport};

#[derive(Debug, Parser)]
#[command(name = "bclr", version, about = "Bayesian conditional logistic regression for matched pairs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit BCLR or a baseline to a matched-pair CSV.
    Fit(FitArgs),
    /// Run a synthetic power/size study.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Bclr,
    Lr,
    Clr,
    Gee,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PremodelArg {
    Lr,
    Gee,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PriorArg {
    Naive,
    G,
    Pmp,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestArg {
    Cr,
    HpdContiguous,
    HpdDisjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Linear,
    Friedman,
}

impl From<PremodelArg> for PremodelMethod {
    fn from(a: PremodelArg) -> Self {
        match a {
            PremodelArg::Lr => Self::Lr,
            PremodelArg::Gee => Self::Gee,
        }
    }
}

impl From<PriorArg> for PriorKind {
    fn from(a: PriorArg) -> Self {
        match a {
            PriorArg::Naive => Self::Naive,
            PriorArg::G => Self::G,
            PriorArg::Pmp => Self::Pmp,
            PriorArg::Hybrid => Self::Hybrid,
        }
    }
}

impl From<TestArg> for IntervalMethod {
    fn from(a: TestArg) -> Self {
        match a {
            TestArg::Cr => Self::EqualTailed,
            TestArg::HpdContiguous => Self::HpdContiguous,
            TestArg::HpdDisjoint => Self::HpdDisjoint,
        }
    }
}

impl From<MethodArg> for FitMethod {
    fn from(a: MethodArg) -> Self {
        match a {
            MethodArg::Bclr => Self::Bclr,
            MethodArg::Lr => Self::Lr,
            MethodArg::Clr => Self::Clr,
            MethodArg::Gee => Self::Gee,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SamplerArgs {
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 1000)]
    pub warmup: usize,
    /// Retained draws per chain.
    #[arg(long, default_value_t = 500)]
    pub draws: usize,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// CSV with columns pair_id,treatment,response,<covariates...>.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Bclr)]
    pub method: MethodArg,
    /// Premodel for the concordant pairs [default: lr].
    #[arg(long, value_enum)]
    pub premodel: Option<PremodelArg>,
    /// Prior family [default: naive].
    #[arg(long, value_enum)]
    pub prior: Option<PriorArg>,
    /// Prior variance of the treatment effect [default: 10000].
    #[arg(long)]
    pub tau2: Option<f64>,
    /// Interval used for the BCLR test [default: cr].
    #[arg(long, value_enum)]
    pub test: Option<TestArg>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub theta0: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Number of observations (2n).
    #[arg(long, default_value_t = 100)]
    pub n_total: usize,
    #[arg(long, default_value_t = 6)]
    pub p: usize,
    #[arg(long, default_value_t = 1)]
    pub covariates_observed: usize,
    #[arg(long, value_enum, default_value_t = ModelArg::Linear)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub beta_w: f64,
    #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
    pub beta0: f64,
    /// Common value of every covariate coefficient.
    #[arg(long, default_value_t = 1.25, allow_negative_numbers = true)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 1000)]
    pub n_sim: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Comma-separated: lr, clr, gee, bclr-<lr|gee>-<naive|g|pmp|hybrid>.
    #[arg(long, value_delimiter = ',', default_value = "bclr-lr-naive")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = TestArg::Cr)]
    pub test: TestArg,
    #[arg(long, default_value_t = DEFAULT_TAU2)]
    pub tau2: f64,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Worker threads (0 = all cores). Does not affect results.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

impl SimulateArgs {
    pub fn to_config(&self) -> CliResult<SimConfig> {
        let methods = self.methods.iter().map(|m| m.parse::<MethodSpec>()).collect::<Result<Vec<_>, _>>()?;
        Ok(SimConfig {
            n_total: self.n_total,
            p: self.p,
            covariates_observed: self.covariates_observed,
            response_model: match self.model {
                ModelArg::Linear => ResponseModel::Linear,
                ModelArg::Friedman => ResponseModel::Friedman,
            },
            beta_w_true: self.beta_w,
            beta0: self.beta0,
            beta_true: vec![self.beta; self.p],
            noise_sd: self.noise_sd,
            n_sim: self.n_sim,
            alpha: self.alpha,
            methods,
            master_seed: self.seed,
            test_method: self.test.into(),
            tau2: self.tau2,
            sampler: SamplerConfig {
                chains: self.sampler.chains,
                warmup: self.sampler.warmup,
                draws_per_chain: self.sampler.draws,
                seed: 0,
                ..SamplerConfig::default()
            },
        })
    }
}

impl FitArgs {
    /// Resolves defaults; prior options given with a baseline are ignored
    /// with a warning.
    pub fn to_request(&self) -> (FitRequest, Vec<String>) {
        let mut warnings = Vec::new();
        if self.method != MethodArg::Bclr {
            let given: Vec<&str> = [
                ("--premodel", self.premodel.is_some()),
                ("--prior", self.prior.is_some()),
                ("--tau2", self.tau2.is_some()),
                ("--test", self.test.is_some()),
            ]
            .iter()
            .filter(|(_, set)| *set)
            .map(|(name, _)| *name)
            .collect();
            if !given.is_empty() {
                warnings.push(format!("{} ignored for baseline method {:?}", given.join(", "), self.method));
            }
        }
        let req = FitRequest {
            method: self.method.into(),
            premodel: self.premodel.unwrap_or(PremodelArg::Lr).into(),
            prior: self.prior.unwrap_or(PriorArg::Naive).into(),
            tau2: self.tau2.unwrap_or(DEFAULT_TAU2),
            test: self.test.unwrap_or(TestArg::Cr).into(),
            theta0: self.theta0,
            alpha: self.alpha,
            sampler: SamplerConfig {
                chains: self.sampler.chains,
                warmup: self.sampler.warmup,
                draws_per_chain: self.sampler.draws,
                seed: self.seed,
                ..SamplerConfig::default()
            },
        };
        (req, warnings)
    }
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::invalid_arguments(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn emit(text: &str, output: Option<&PathBuf>) -> CliResult<Option<String>> {
    match output {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
            Ok(None)
        }
        None => Ok(Some(text.to_string())),
    }
}

/// Executes a parsed command. Returns the text destined for stdout (none
/// when written to `--output`) and any warnings for stderr.
pub fn run(cli: &Cli) -> CliResult<(Option<String>, Vec<String>)> {
    match &cli.command {
        Command::Fit(args) => {
            let (req, warnings) = args.to_request();
            let input = input::read_path(&args.input)?;
            let report = with_threads(args.threads, || fit_command(&input.data, &req, warnings.clone()))??;
            let text = match args.format {
                Format::Json => report.to_json() + "\n",
                Format::Csv => report.to_csv(),
            };
            Ok((emit(&text, args.output.as_ref())?, warnings))
        }
        Command::Simulate(args) => {
            let cfg = args.to_config()?;
            if cfg.n_sim == 0 {
                return Err(CliError::invalid_arguments("--n-sim must be at least 1"));
            }
            cfg.validate()?;
            let result = with_threads(args.threads, || run_study(&cfg))??;
            let text = match args.format {
                Format::Csv => simulate::to_csv(&cfg, &result),
                Format::Json => simulate::to_json(&cfg, &result)? + "\n",
            };
            Ok((emit(&text, args.output.as_ref())?, Vec::new()))
        }
    }
}
