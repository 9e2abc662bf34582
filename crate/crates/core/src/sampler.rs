//! Static-trajectory HMC with dual-averaging step size adaptation, a
//! diagonal metric estimated during warmup, jittered trajectory lengths, and
//! an exact Gibbs update for the prior scale `g` when the prior has one.
//!
//! Warmup follows the usual windowed scheme: a fast initial buffer that only
//! tunes the step size, a sequence of doubling slow windows that estimate the
//! metric (the last one spans most of the second half of warmup), and a
//! terminal buffer that retunes the step size for the final metric.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clr::loglik_grad;
use crate::data::DiscordantDiffs;
use crate::error::{Error, Result};
use crate::priors::{g_conditional_draw, PriorKind, PriorSpec};
use crate::seed::{derive_seed, rng_from, stream};

/// Energy error beyond which a trajectory is divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;
/// Target integration time `step * L`.
pub const INTEGRATION_TIME: f64 = 1.5;
/// Warmup excursion of `|beta_w|` that triggers a restart under the PMP prior.
pub const DRIFT_LIMIT: f64 = 50.0;
const MAX_DIVERGENT_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws_per_chain: usize,
    pub target_accept: f64,
    pub max_leapfrog: usize,
    pub seed: u64,
    pub init_jitter: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 1000,
            draws_per_chain: 500,
            target_accept: 0.8,
            max_leapfrog: 256,
            seed: 0,
            init_jitter: 0.1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::InvalidConfig("chains must be at least 1".into()));
        }
        if self.draws_per_chain == 0 {
            return Err(Error::InvalidConfig("draws per chain must be at least 1".into()));
        }
        if self.warmup != 0 && self.warmup < 100 {
            return Err(Error::InvalidConfig("warmup must be 0 (no adaptation) or at least 100".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidConfig("target_accept must lie in (0, 1)".into()));
        }
        if self.max_leapfrog == 0 {
            return Err(Error::InvalidConfig("max_leapfrog must be at least 1".into()));
        }
        if !(self.init_jitter >= 0.0 && self.init_jitter.is_finite()) {
            return Err(Error::InvalidConfig("init_jitter must be non-negative".into()));
        }
        Ok(())
    }
}

/// Unnormalised log density with gradient, for driving the kernel directly.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    /// Writes the gradient into `grad`; may return `-inf` outside the support.
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// Retained draws of a BCLR posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    /// `[chain][draw]`
    pub beta_w_draws: Vec<Vec<f64>>,
    /// `[chain][draw][covariate]`
    pub beta_draws: Vec<Vec<Vec<f64>>>,
    pub g_draws: Option<Vec<Vec<f64>>>,
    pub accept_rate: Vec<f64>,
    pub divergence_count: Vec<usize>,
    pub step_size: Vec<f64>,
}

impl PosteriorSamples {
    pub fn n_chains(&self) -> usize {
        self.beta_w_draws.len()
    }

    pub fn n_draws(&self) -> usize {
        self.beta_w_draws.first().map_or(0, Vec::len)
    }

    pub fn n_covariates(&self) -> usize {
        self.beta_draws.first().and_then(|c| c.first()).map_or(0, Vec::len)
    }

    /// Treatment-effect draws pooled across chains in chain order.
    pub fn pooled_beta_w(&self) -> Vec<f64> {
        self.beta_w_draws.iter().flatten().copied().collect()
    }

    /// Per-chain draws of covariate `j`.
    pub fn beta_chains(&self, j: usize) -> Vec<Vec<f64>> {
        self.beta_draws.iter().map(|c| c.iter().map(|d| d[j]).collect()).collect()
    }

    pub fn total_divergences(&self) -> usize {
        self.divergence_count.iter().sum()
    }
}

/// Retained draws of an arbitrary [`LogDensity`].
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSamples {
    /// `[chain][draw][coordinate]`
    pub draws: Vec<Vec<Vec<f64>>>,
    pub accept_rate: Vec<f64>,
    pub divergence_count: Vec<usize>,
}

impl TargetSamples {
    /// Per-chain draws of one coordinate.
    pub fn coordinate(&self, k: usize) -> Vec<Vec<f64>> {
        self.draws.iter().map(|c| c.iter().map(|d| d[k]).collect()).collect()
    }
}

/// What a chain needs from the model beyond the differentiable target.
trait ChainModel: Sync {
    fn dim(&self) -> usize;
    fn logp_grad(&self, x: &[f64], g: Option<f64>, grad: &mut [f64]) -> f64;
    fn initial_g(&self) -> Option<f64> {
        None
    }
    fn draw_g<R: Rng>(&self, _x: &[f64], _rng: &mut R) -> Result<Option<f64>> {
        Ok(None)
    }
    fn guards_drift(&self) -> bool {
        false
    }
}

struct PosteriorModel<'a> {
    diffs: &'a DiscordantDiffs,
    prior: &'a PriorSpec,
    // scratch-free: gradients are accumulated into a local buffer
}

impl ChainModel for PosteriorModel<'_> {
    fn dim(&self) -> usize {
        self.diffs.n_covariates() + 1
    }

    fn logp_grad(&self, x: &[f64], g: Option<f64>, grad: &mut [f64]) -> f64 {
        let ll = loglik_grad(x, self.diffs, grad);
        let mut prior_grad = vec![0.0; self.prior.n_params()];
        let lp = self.prior.eval(x, g, &mut prior_grad);
        for (gi, pi) in grad.iter_mut().zip(&prior_grad) {
            *gi += pi;
        }
        ll + lp
    }

    fn initial_g(&self) -> Option<f64> {
        self.prior.kind().has_g().then_some(1.0)
    }

    fn draw_g<R: Rng>(&self, x: &[f64], rng: &mut R) -> Result<Option<f64>> {
        if self.prior.kind().has_g() {
            g_conditional_draw(&x[1..], self.prior, rng).map(Some)
        } else {
            Ok(None)
        }
    }

    fn guards_drift(&self) -> bool {
        self.prior.kind() == PriorKind::Pmp
    }
}

struct PlainModel<'a, T: LogDensity>(&'a T);

impl<T: LogDensity> ChainModel for PlainModel<'_, T> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn logp_grad(&self, x: &[f64], _g: Option<f64>, grad: &mut [f64]) -> f64 {
        self.0.log_density_and_grad(x, grad)
    }
}

#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    logp: f64,
    grad: Vec<f64>,
}

impl Point {
    fn at<M: ChainModel>(model: &M, x: Vec<f64>, g: Option<f64>) -> Self {
        let mut grad = vec![0.0; x.len()];
        let logp = model.logp_grad(&x, g, &mut grad);
        Self { x, logp, grad }
    }

    fn is_valid(&self) -> bool {
        self.logp.is_finite() && self.grad.iter().all(|v| v.is_finite())
    }
}

/// Dual averaging of the log step size (Nesterov; Hoffman and Gelman's
/// constants).
struct DualAverage {
    target: f64,
    mu: f64,
    hbar: f64,
    log_step: f64,
    log_step_avg: f64,
    count: f64,
}

impl DualAverage {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(target: f64, step: f64) -> Self {
        Self { target, mu: (10.0 * step).ln(), hbar: 0.0, log_step: step.ln(), log_step_avg: 0.0, count: 0.0 }
    }

    fn update(&mut self, accept: f64) {
        self.count += 1.0;
        let w = 1.0 / (self.count + Self::T0);
        self.hbar = (1.0 - w) * self.hbar + w * (self.target - accept);
        self.log_step = self.mu - self.count.sqrt() / Self::GAMMA * self.hbar;
        let eta = self.count.powf(-Self::KAPPA);
        self.log_step_avg = eta * self.log_step + (1.0 - eta) * self.log_step_avg;
    }

    fn step(&self) -> f64 {
        self.log_step.exp()
    }

    fn final_step(&self) -> f64 {
        self.log_step_avg.exp()
    }
}

/// Running mean/variance (Welford) per coordinate.
struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Self { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / self.n as f64;
            *s += delta * (v - *m);
        }
    }

    /// Variance shrunk towards a small constant, as in Stan.
    fn regularized_variance(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|s| {
                let var = s / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

/// Warmup layout: step-size-only buffers around metric-estimation windows.
struct Schedule {
    slow_start: usize,
    slow_end: usize,
    window_ends: Vec<usize>,
}

impl Schedule {
    fn new(warmup: usize) -> Self {
        if warmup == 0 {
            return Self { slow_start: 0, slow_end: 0, window_ends: Vec::new() };
        }
        let (init, term, base) = if warmup >= 150 {
            (75, 50, 25)
        } else {
            let init = warmup * 15 / 100;
            let term = warmup / 10;
            (init, term, warmup - init - term)
        };
        let slow_end = warmup - term;
        let mut ends = Vec::new();
        let (mut start, mut size) = (init, base);
        loop {
            let end = start + size;
            if end + 2 * size > slow_end {
                ends.push(slow_end);
                break;
            }
            ends.push(end);
            start = end;
            size *= 2;
        }
        Self { slow_start: init, slow_end, window_ends: ends }
    }

    fn in_slow(&self, it: usize) -> bool {
        it >= self.slow_start && it < self.slow_end
    }

    fn window_closes(&self, it: usize) -> bool {
        self.window_ends.contains(&(it + 1))
    }
}

struct Transition {
    accept_prob: f64,
    divergent: bool,
}

fn kinetic(p: &[f64], inv_mass: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_mass).map(|(pi, m)| pi * pi * m).sum::<f64>()
}

fn draw_momentum<R: Rng>(inv_mass: &[f64], rng: &mut R) -> Vec<f64> {
    inv_mass
        .iter()
        .map(|m| {
            let z: f64 = rng.sample(StandardNormal);
            z / m.sqrt()
        })
        .collect()
}

/// Leapfrog integration of `n_steps`; returns the end point and momentum.
fn leapfrog<M: ChainModel>(
    model: &M,
    g: Option<f64>,
    start: &Point,
    momentum: &[f64],
    step: f64,
    n_steps: usize,
    inv_mass: &[f64],
) -> (Point, Vec<f64>) {
    let mut x = start.x.clone();
    let mut p = momentum.to_vec();
    let mut grad = start.grad.clone();
    let mut logp = start.logp;
    for _ in 0..n_steps {
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * step * gi;
        }
        for ((xi, pi), m) in x.iter_mut().zip(&p).zip(inv_mass) {
            *xi += step * m * pi;
        }
        logp = model.logp_grad(&x, g, &mut grad);
        if !logp.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            break;
        }
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * step * gi;
        }
    }
    (Point { x, logp, grad }, p)
}

fn hmc_transition<M: ChainModel>(
    model: &M,
    g: Option<f64>,
    state: &mut Point,
    step: f64,
    n_steps: usize,
    inv_mass: &[f64],
    rng: &mut ChaCha8Rng,
) -> Transition {
    let p0 = draw_momentum(inv_mass, rng);
    let h0 = -state.logp + kinetic(&p0, inv_mass);
    let (proposal, p1) = leapfrog(model, g, state, &p0, step, n_steps, inv_mass);
    let h1 = -proposal.logp + kinetic(&p1, inv_mass);
    let energy_error = h1 - h0;
    if !proposal.is_valid() || !energy_error.is_finite() || energy_error > DIVERGENCE_THRESHOLD {
        return Transition { accept_prob: 0.0, divergent: true };
    }
    let accept_prob = (-energy_error).exp().min(1.0);
    let u: f64 = rng.random();
    if u < accept_prob {
        *state = proposal;
    }
    Transition { accept_prob, divergent: false }
}

/// Doubles or halves the step until a single leapfrog step crosses an
/// acceptance probability of 0.8.
fn initial_step<M: ChainModel>(
    model: &M,
    g: Option<f64>,
    state: &Point,
    start: f64,
    inv_mass: &[f64],
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut step = start;
    let log_target = 0.8f64.ln();
    let delta_h = |step: f64, rng: &mut ChaCha8Rng| {
        let p0 = draw_momentum(inv_mass, rng);
        let h0 = -state.logp + kinetic(&p0, inv_mass);
        let (prop, p1) = leapfrog(model, g, state, &p0, step, 1, inv_mass);
        let h1 = -prop.logp + kinetic(&p1, inv_mass);
        let d = h0 - h1;
        if d.is_nan() {
            f64::NEG_INFINITY
        } else {
            d
        }
    };
    let direction = if delta_h(step, rng) > log_target { 1.0 } else { -1.0 };
    for _ in 0..60 {
        step *= 2f64.powf(direction);
        let d = delta_h(step, rng);
        if (direction > 0.0 && !(d > log_target)) || (direction < 0.0 && !(d < log_target)) {
            break;
        }
    }
    step.clamp(1e-8, 1e3)
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    g: Vec<f64>,
    accept_rate: f64,
    divergences: usize,
    step: f64,
}

enum ChainFailure {
    Drift,
    Fatal(Error),
}

fn trajectory_cap(step: f64, max_leapfrog: usize) -> usize {
    ((INTEGRATION_TIME / step).round() as usize).clamp(1, max_leapfrog)
}

fn run_chain_once<M: ChainModel>(
    model: &M,
    cfg: &SamplerConfig,
    chain: usize,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<ChainOutput, ChainFailure> {
    let dim = model.dim();
    let mut g = model.initial_g();

    let mut state = None;
    for _ in 0..100 {
        let x: Vec<f64> = (0..dim)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                cfg.init_jitter * z
            })
            .collect();
        let candidate = Point::at(model, x, g);
        if candidate.is_valid() {
            state = Some(candidate);
            break;
        }
    }
    let mut state = state.ok_or(ChainFailure::Fatal(Error::NonFiniteState))?;

    let mut inv_mass = vec![1.0; dim];
    let mut step = initial_step(model, g, &state, 0.5, &inv_mass, rng);
    let mut dual = DualAverage::new(cfg.target_accept, step);
    let schedule = Schedule::new(cfg.warmup);
    let mut welford = Welford::new(dim);

    for it in 0..cfg.warmup {
        let cap = trajectory_cap(step, cfg.max_leapfrog);
        let n_steps = rng.random_range(1..=cap);
        let tr = hmc_transition(model, g, &mut state, step, n_steps, &inv_mass, rng);
        dual.update(tr.accept_prob);
        step = dual.step().clamp(1e-8, 1e3);

        if let Some(new_g) = model.draw_g(&state.x, rng).map_err(ChainFailure::Fatal)? {
            g = Some(new_g);
            state = Point::at(model, state.x.clone(), g);
        }
        if model.guards_drift() && state.x[0].abs() > DRIFT_LIMIT {
            return Err(ChainFailure::Drift);
        }

        if schedule.in_slow(it) {
            welford.push(&state.x);
            if schedule.window_closes(it) {
                if welford.n > 2 {
                    inv_mass = welford.regularized_variance();
                }
                welford = Welford::new(dim);
                step = initial_step(model, g, &state, step, &inv_mass, rng);
                dual = DualAverage::new(cfg.target_accept, step);
            }
        }
    }
    if cfg.warmup > 0 {
        step = dual.final_step().clamp(1e-8, 1e3);
    }

    let cap = trajectory_cap(step, cfg.max_leapfrog);
    let mut draws = Vec::with_capacity(cfg.draws_per_chain);
    let mut g_draws = Vec::new();
    let mut accept_sum = 0.0;
    let mut divergences = 0;
    for _ in 0..cfg.draws_per_chain {
        let n_steps = rng.random_range(1..=cap);
        let tr = hmc_transition(model, g, &mut state, step, n_steps, &inv_mass, rng);
        accept_sum += tr.accept_prob;
        divergences += usize::from(tr.divergent);
        if let Some(new_g) = model.draw_g(&state.x, rng).map_err(ChainFailure::Fatal)? {
            g = Some(new_g);
            state = Point::at(model, state.x.clone(), g);
            g_draws.push(new_g);
        }
        draws.push(state.x.clone());
    }
    let rate = divergences as f64 / cfg.draws_per_chain as f64;
    if rate > MAX_DIVERGENT_FRACTION {
        return Err(ChainFailure::Fatal(Error::AllDivergent { chain, rate }));
    }
    Ok(ChainOutput { draws, g: g_draws, accept_rate: accept_sum / cfg.draws_per_chain as f64, divergences, step })
}

fn run_chain<M: ChainModel>(model: &M, cfg: &SamplerConfig, chain: usize) -> Result<ChainOutput> {
    let mut rng = rng_from(derive_seed(cfg.seed, chain as u64, stream::CHAIN));
    match run_chain_once(model, cfg, chain, &mut rng) {
        Ok(out) => Ok(out),
        Err(ChainFailure::Fatal(e)) => Err(e),
        Err(ChainFailure::Drift) => {
            let mut rng = rng_from(derive_seed(cfg.seed, chain as u64, stream::RESTART));
            match run_chain_once(model, cfg, chain, &mut rng) {
                Ok(out) => Ok(out),
                Err(ChainFailure::Fatal(e)) => Err(e),
                Err(ChainFailure::Drift) => Err(Error::ChainDrift { chain }),
            }
        }
    }
}

fn run_chains<M: ChainModel>(model: &M, cfg: &SamplerConfig) -> Result<Vec<ChainOutput>> {
    cfg.validate()?;
    (0..cfg.chains).into_par_iter().map(|c| run_chain(model, cfg, c)).collect()
}

/// Samples the BCLR posterior: conditional likelihood of the discordant
/// pairs times the prior. With no discordant pairs the likelihood is
/// constant and the prior itself is sampled (naive prior only).
pub fn sample_posterior(d: &DiscordantDiffs, spec: &PriorSpec, cfg: &SamplerConfig) -> Result<PosteriorSamples> {
    if spec.n_covariates() != d.n_covariates() {
        return Err(Error::DimensionMismatch { expected: d.n_covariates(), got: spec.n_covariates() });
    }
    if spec.n_discordant() != d.n_pairs() {
        return Err(Error::DimensionMismatch { expected: d.n_pairs(), got: spec.n_discordant() });
    }
    if d.is_empty() && spec.kind() != PriorKind::Naive {
        return Err(Error::NoDiscordantPairs);
    }
    let model = PosteriorModel { diffs: d, prior: spec };
    let chains = run_chains(&model, cfg)?;
    let has_g = spec.kind().has_g();
    Ok(PosteriorSamples {
        beta_w_draws: chains.iter().map(|c| c.draws.iter().map(|x| x[0]).collect()).collect(),
        beta_draws: chains.iter().map(|c| c.draws.iter().map(|x| x[1..].to_vec()).collect()).collect(),
        g_draws: has_g.then(|| chains.iter().map(|c| c.g.clone()).collect()),
        accept_rate: chains.iter().map(|c| c.accept_rate).collect(),
        divergence_count: chains.iter().map(|c| c.divergences).collect(),
        step_size: chains.iter().map(|c| c.step).collect(),
    })
}

/// Runs the same kernel and adaptation on an arbitrary target.
pub fn sample_target<T: LogDensity>(target: &T, cfg: &SamplerConfig) -> Result<TargetSamples> {
    let chains = run_chains(&PlainModel(target), cfg)?;
    Ok(TargetSamples {
        accept_rate: chains.iter().map(|c| c.accept_rate).collect(),
        divergence_count: chains.iter().map(|c| c.divergences).collect(),
        draws: chains.into_iter().map(|c| c.draws).collect(),
    })
}
