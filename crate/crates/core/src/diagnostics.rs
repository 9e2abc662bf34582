//! Split-R-hat and multi-chain effective sample size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::PosteriorSamples;

/// Upper bound on ESS relative to the total draw count; antithetic chains
/// can legitimately exceed the draw count, but not by more than this.
pub const ESS_CAP_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `beta_w`, `beta_1..beta_p`, then `g` when sampled.
    pub names: Vec<String>,
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.ess.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn check_shape(chains: &[Vec<f64>]) -> Result<usize> {
    let n = chains.first().map_or(0, Vec::len);
    if chains.len() < 2 || n < 4 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::InsufficientDraws);
    }
    Ok(n)
}

fn is_constant(chains: &[Vec<f64>]) -> bool {
    let first = chains[0][0];
    chains.iter().flatten().all(|&v| v == first)
}

fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let half = chains[0].len() / 2;
    let n = chains[0].len();
    chains.iter().flat_map(|c| [&c[..half], &c[n - half..]]).collect()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split-R-hat: each chain is halved and the between/within variance ratio
/// is computed over the halves. Constant parameters report 1.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    check_shape(chains)?;
    if is_constant(chains) {
        return Ok(1.0);
    }
    let halves = split(chains);
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = halves.iter().map(|h| sample_var(h)).sum::<f64>() / halves.len() as f64;
    let b_over_n = sample_var(&means);
    if w <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let var_plus = (n - 1.0) / n * w + b_over_n;
    // sampling noise can push the ratio just below 1 for well-mixed chains
    Ok((var_plus / w).sqrt().max(1.0))
}

/// Biased autocovariance at `lag`.
fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64
}

/// Multi-chain ESS over split chains with Geyer's initial monotone sequence.
pub fn ess(chains: &[Vec<f64>]) -> Result<f64> {
    check_shape(chains)?;
    let halves = split(chains);
    let m = halves.len();
    let n = halves[0].len();
    let total = (m * n) as f64;
    if is_constant(chains) {
        return Ok(total);
    }
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let chain_var: Vec<f64> =
        halves.iter().zip(&means).map(|(h, &mu)| autocov(h, mu, 0) * n as f64 / (n as f64 - 1.0)).collect();
    let mean_var = mean(&chain_var);
    let var_plus = mean_var * (n as f64 - 1.0) / n as f64 + sample_var(&means);
    if !(var_plus > 0.0) {
        return Ok(total);
    }
    let rho = |lag: usize| {
        let acov = halves.iter().zip(&means).map(|(h, &mu)| autocov(h, mu, lag)).sum::<f64>() / m as f64;
        1.0 - (mean_var - acov) / var_plus
    };

    let mut rho_hat = vec![0.0; n];
    rho_hat[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho(1);
    rho_hat[1] = odd;
    let mut t = 1;
    while t + 4 < n && even + odd > 0.0 {
        even = rho(t + 1);
        odd = rho(t + 2);
        if even + odd >= 0.0 {
            rho_hat[t + 1] = even;
            rho_hat[t + 2] = odd;
        }
        t += 2;
    }
    let max_t = t;
    if even > 0.0 && max_t + 1 < n {
        rho_hat[max_t + 1] = even;
    }
    // enforce monotonically decreasing pair sums
    let mut t = 1;
    while t + 3 <= max_t {
        let prev = rho_hat[t - 1] + rho_hat[t];
        if rho_hat[t + 1] + rho_hat[t + 2] > prev {
            rho_hat[t + 1] = prev / 2.0;
            rho_hat[t + 2] = rho_hat[t + 1];
        }
        t += 2;
    }
    let tail = if max_t + 1 < n { rho_hat[max_t + 1] } else { 0.0 };
    let tau = (-1.0 + 2.0 * rho_hat[..=max_t.min(n - 1)].iter().sum::<f64>() + tail).max(1.0 / total.log10());
    Ok((total / tau).min(ESS_CAP_FACTOR * total))
}

/// R-hat and ESS for every sampled parameter.
pub fn diagnose(s: &PosteriorSamples) -> Result<Diagnostics> {
    let mut names = vec!["beta_w".to_string()];
    let mut params = vec![s.beta_w_draws.clone()];
    for j in 0..s.n_covariates() {
        names.push(format!("beta_{}", j + 1));
        params.push(s.beta_chains(j));
    }
    if let Some(g) = &s.g_draws {
        names.push("g".into());
        params.push(g.clone());
    }
    let rhat = params.iter().map(|c| split_rhat(c)).collect::<Result<Vec<_>>>()?;
    let ess = params.iter().map(|c| ess(c)).collect::<Result<Vec<_>>>()?;
    Ok(Diagnostics { names, rhat, ess })
}
