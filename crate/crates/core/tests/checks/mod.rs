//! Check routines shared between the core integration tests and the
//! acceptance suite. Unlike `common`, these drive the code under test; each
//! returns the measured discrepancy and leaves the verdict to the caller.
#![allow(dead_code)]

use bclr_core::clr::{clr_fit_mle, clr_grad, clr_loglik, Coefficients};
use bclr_core::diagnostics::ess;
use bclr_core::inference::{decide, equal_tailed_cr, hpd_contiguous, hpd_disjoint, interval_set, IntervalMethod};
use bclr_core::premodel::{gee_fit_pairs, irls_fit, GeeOptions};
use bclr_core::priors::{g_conditional_draw, log_prior_and_grad, PriorKind, PriorSpec, PriorState};
use bclr_core::sampler::{sample_posterior, SamplerConfig};
use bclr_core::{difference_discordant, partition_pairs, DiscordantDiffs};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::common::*;

/// Random draw set: normal, exponential, or a two-component mixture.
pub fn draw_set(r: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let shape = r.random_range(0..3);
    (0..m)
        .map(|_| match shape {
            0 => r.sample::<f64, _>(StandardNormal),
            1 => Exp1.sample(r),
            _ => {
                let z: f64 = r.sample(StandardNormal);
                if r.random::<bool>() {
                    z - 3.0
                } else {
                    0.5 * z + 2.0
                }
            }
        })
        .collect()
}

/// Max abs gap between `clr_loglik` and the enumerated conditional
/// probability, over `n` instances with random pair intercepts.
pub fn enumeration_max_error(seed: u64, n: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < n {
        let n_pairs = r.random_range(1..40);
        let p = r.random_range(0..4);
        let data = random_dataset(&mut r, n_pairs, p);
        let Ok(diffs) = difference_discordant(&data, &partition_pairs(&data)) else { continue };
        checked += 1;
        let beta_w = r.random_range(-3.0..3.0);
        let beta: Vec<f64> = (0..p).map(|_| r.random_range(-2.0..2.0)).collect();
        let intercepts: Vec<f64> = (0..n_pairs).map(|_| r.random_range(-5.0..5.0)).collect();
        let oracle = enumeration_loglik(&data, beta_w, &beta, &intercepts);
        let got = clr_loglik(&Coefficients::new(beta_w, beta), &diffs).unwrap();
        worst = worst.max((got - oracle).abs());
    }
    worst
}

/// Max-norm gap between an analytic and a central-difference gradient,
/// relative to the largest finite-difference component.
fn relative_gradient_error(analytic: &[f64], fd: &[f64]) -> f64 {
    let scale = fd.iter().map(|v| v.abs()).fold(1e-8, f64::max);
    analytic.iter().zip(fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

pub fn clr_gradient_max_error(seed: u64, n: usize) -> f64 {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let p = r.random_range(0..4);
            let rows = r.random_range(1..30);
            let d = random_diffs(&mut r, rows, p, 2.0);
            let theta: Vec<f64> = (0..=p).map(|_| r.random_range(-3.0..3.0)).collect();
            let fd = central_diff(|t| clr_loglik(&Coefficients::from_params(t), &d).unwrap(), &theta, 1e-5);
            relative_gradient_error(&clr_grad(&Coefficients::from_params(&theta), &d).unwrap(), &fd)
        })
        .fold(0.0, f64::max)
}

fn random_spd(r: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| r.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(p, p) * 0.5
}

pub fn random_spec(kind: PriorKind, r: &mut ChaCha8Rng, p: usize, d: &DiscordantDiffs) -> PriorSpec {
    let b_c = DVector::from_fn(p, |_, _| r.random_range(-1.0..1.0));
    PriorSpec::new(kind, b_c, random_spd(r, p), r.random_range(0.5..20.0), d).unwrap()
}

/// Prior state from the sampler's parameter vector: coefficients, then
/// `log g` for the kinds that carry `g`.
pub fn prior_state(spec: &PriorSpec, x: &[f64]) -> PriorState {
    let p = spec.n_covariates();
    PriorState { coefficients: Coefficients::from_params(&x[..=p]), g: spec.kind().has_g().then(|| x[p + 1].exp()) }
}

pub fn log_prior(spec: &PriorSpec, x: &[f64]) -> f64 {
    log_prior_and_grad(spec, &prior_state(spec, x)).unwrap().0
}

pub fn prior_gradient_max_error(seed: u64, kind: PriorKind, n: usize) -> f64 {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let p = r.random_range(1..4);
            let rows = r.random_range(2..25);
            let d = random_diffs(&mut r, rows, p, 1.5);
            let s = random_spec(kind, &mut r, p, &d);
            let mut x: Vec<f64> = (0..=p).map(|_| r.random_range(-2.0..2.0)).collect();
            if kind.has_g() {
                x.push(r.random_range(-2.0..3.0));
            }
            let fd = central_diff(|t| log_prior(&s, t), &x, 1e-5);
            relative_gradient_error(&log_prior_and_grad(&s, &prior_state(&s, &x)).unwrap().1, &fd)
        })
        .fold(0.0, f64::max)
}

/// Relative error of the sampled mean of `1/g` against log-grid
/// integration of the unnormalised conditional, for each `p`.
pub fn conjugacy_relative_errors(seed: u64, ps: &[usize], n_draws: usize) -> Vec<(usize, f64)> {
    let mut r = rng(seed);
    ps.iter()
        .map(|&p| {
            let d = random_diffs(&mut r, 10, p, 1.0);
            let s = random_spec(PriorKind::G, &mut r, p, &d);
            let beta: Vec<f64> = (0..p).map(|_| r.random_range(-2.0..2.0)).collect();
            let dev = DVector::from_iterator(p, beta.iter().zip(s.b_c().iter()).map(|(a, c)| a - c));
            let quad = dev.dot(&(s.sigma_c().clone().try_inverse().unwrap() * &dev));
            let oracle = log_grid_mean_inverse(0.5 + p as f64 / 2.0, d.n_pairs() as f64 / 2.0 + quad / 2.0);
            let inv: Vec<f64> = (0..n_draws).map(|_| 1.0 / g_conditional_draw(&beta, &s, &mut r).unwrap()).collect();
            assert!(inv.iter().all(|v| v.is_finite() && *v > 0.0));
            (p, (mean(&inv) / oracle - 1.0).abs())
        })
        .collect()
}

pub fn lr_negloglik(x: &DMatrix<f64>, y: &[u8], b: &[f64]) -> f64 {
    (0..x.nrows())
        .map(|i| {
            let eta = b[0] + (0..x.ncols()).map(|j| x[(i, j)] * b[j + 1]).sum::<f64>();
            let q = logistic(eta);
            -(if y[i] == 1 { q.ln() } else { (1.0 - q).ln() })
        })
        .sum()
}

pub fn lr_instance(r: &mut ChaCha8Rng, rows: usize, p: usize) -> (DMatrix<f64>, Vec<u8>) {
    let x = DMatrix::from_fn(rows, p, |_, _| r.random_range(-1.0..1.0));
    let coef: Vec<f64> = (0..=p).map(|_| r.random_range(-1.0..1.0)).collect();
    let y = (0..rows)
        .map(|i| {
            let eta = coef[0] + (0..p).map(|j| x[(i, j)] * coef[j + 1]).sum::<f64>();
            u8::from(r.random::<f64>() < logistic(eta))
        })
        .collect();
    (x, y)
}

fn max_abs_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Max coefficient gap between `clr_fit_mle` and Nelder-Mead on `n`
/// instances where the MLE exists.
pub fn clr_mle_vs_nelder_mead(seed: u64, n: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < n {
        let p = r.random_range(0..3);
        let beta: Vec<f64> = (0..p).map(|_| r.random_range(-1.0..1.0)).collect();
        let bw = r.random_range(-1.0..1.0);
        let d = model_diffs(&mut r, 80, bw, &beta);
        let Ok(fit) = clr_fit_mle(&d) else { continue };
        let oracle = minimize(|t| -direct_clr_loglik(&d, t[0], &t[1..]), &vec![0.0; p + 1]);
        worst = worst.max(max_abs_gap(&fit.estimate.to_params(), &oracle));
        checked += 1;
    }
    worst
}

pub fn irls_vs_nelder_mead(seed: u64, n: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < n {
        let p = r.random_range(0..4);
        let (x, y) = lr_instance(&mut r, 60, p);
        let Ok(fit) = irls_fit(&x, &y, true) else { continue };
        let oracle = minimize(|b| lr_negloglik(&x, &y, b), &vec![0.0; p + 1]);
        let mut est = vec![fit.intercept];
        est.extend(&fit.coefficients);
        worst = worst.max(max_abs_gap(&est, &oracle));
        checked += 1;
    }
    worst
}

pub fn gee_independence_vs_irls(seed: u64, n: usize) -> f64 {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let p = r.random_range(0..3);
            let (x, y) = lr_instance(&mut r, 80, p);
            let lr = irls_fit(&x, &y, true).unwrap();
            let gee = gee_fit_pairs(&x, &y, &GeeOptions { fixed_rho: Some(0.0) }).unwrap();
            let mut a = vec![lr.intercept];
            a.extend(&lr.coefficients);
            let mut b = vec![gee.intercept];
            b.extend(&gee.coefficients);
            max_abs_gap(&a, &b)
        })
        .fold(0.0, f64::max)
}

/// True when the interpolated equal-tailed interval spans at least
/// `k = ceil((1 - alpha) m)` order statistics, i.e. it is one of the windows
/// the contiguous HPD minimises over.
pub fn equal_tailed_is_candidate(m: usize, alpha: f64) -> bool {
    let x = (1.0 - alpha) * m as f64;
    x.ceil() - x <= alpha
}

/// Number of draw sets, out of `n` where the equal-tailed interval is an
/// HPD candidate, whose contiguous HPD is wider than the equal-tailed one.
pub fn hpd_wider_than_equal_tailed(seed: u64, n: usize) -> usize {
    let mut r = rng(seed);
    let mut violations = 0;
    let mut checked = 0;
    while checked < n {
        let m = r.random_range(2..300);
        let alpha = r.random_range(0.01..0.5);
        if !equal_tailed_is_candidate(m, alpha) {
            continue;
        }
        let draws = draw_set(&mut r, m);
        let hpd = hpd_contiguous(&draws, alpha).unwrap().total_width();
        let cr = equal_tailed_cr(&draws, alpha).unwrap().total_width();
        violations += usize::from(hpd > cr + 1e-12);
        checked += 1;
    }
    violations
}

/// Balanced normal mixture at -5 and 5 with sd 0.5.
pub fn bimodal_draws(seed: u64, m: usize) -> Vec<f64> {
    let mut r = rng(seed);
    (0..m)
        .map(|i| {
            let z: f64 = r.sample(StandardNormal);
            if i % 2 == 0 {
                -5.0 + 0.5 * z
            } else {
                5.0 + 0.5 * z
            }
        })
        .collect()
}

/// Disjoint HPD of the bimodal sample: interval count and whether one
/// interval holds each mode.
pub fn bimodal_hpd(seed: u64) -> (usize, bool) {
    let set = hpd_disjoint(&bimodal_draws(seed, 20_000), 0.05).unwrap();
    let holds = |c: f64| set.intervals.iter().filter(|(lo, hi)| *lo <= c && c <= *hi).count() == 1;
    (set.intervals.len(), holds(-5.0) && holds(5.0) && !set.contains(0.0))
}

/// Equal up to a few units in the last place.
pub fn within_rounding(a: f64, b: f64) -> bool {
    (a - b).abs() <= 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(1.0)
}

/// Translation check on one dyadic draw set. Dyadic draws and shifts keep
/// every intermediate quantity exact, so contiguous endpoints must shift
/// bit for bit and interpolated endpoints may differ only by the rounding
/// of their final addition. Returns a description of the first mismatch.
pub fn translation_mismatch(draws: &[f64], c: f64, theta0: f64, alpha: f64) -> Option<String> {
    let shifted: Vec<f64> = draws.iter().map(|x| x + c).collect();
    for method in IntervalMethod::ALL {
        let a = interval_set(draws, alpha, method).unwrap();
        let b = interval_set(&shifted, alpha, method).unwrap();
        if a.intervals.len() != b.intervals.len() {
            return Some(format!("{method}: {} vs {} intervals", a.intervals.len(), b.intervals.len()));
        }
        for (x, y) in a.intervals.iter().zip(&b.intervals) {
            let ok = if method == IntervalMethod::HpdContiguous {
                (x.0 + c, x.1 + c) == *y
            } else {
                within_rounding(x.0 + c, y.0) && within_rounding(x.1 + c, y.1)
            };
            if !ok {
                return Some(format!("{method}: {x:?} + {c} vs {y:?}"));
            }
        }
        if decide(draws, alpha, theta0, method).unwrap().reject
            != decide(&shifted, alpha, theta0 + c, method).unwrap().reject
        {
            return Some(format!("{method}: decision at {theta0} changed"));
        }
    }
    None
}

pub fn dyadic_draws(r: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    draw_set(r, m).iter().map(|x| (x * 1024.0).round() / 1024.0).collect()
}

/// Runs `translation_mismatch` over `n` random dyadic sets and shifts.
pub fn translation_failures(seed: u64, n: usize) -> Vec<String> {
    let mut r = rng(seed);
    (0..n)
        .filter_map(|_| {
            let draws = dyadic_draws(&mut r, 400);
            let c = f64::from(r.random_range(-64i32..64)) / 4.0;
            let theta0 = f64::from(r.random_range(-192i32..192)) / 64.0;
            translation_mismatch(&draws, c, theta0, 0.1)
        })
        .collect()
}

/// One posterior-vs-quadrature comparison of `beta_w`.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureCheck {
    pub mean: f64,
    pub quad_mean: f64,
    pub se_mean: f64,
    pub sd: f64,
    pub quad_sd: f64,
    pub se_sd: f64,
}

impl QuadratureCheck {
    pub fn z_scores(&self) -> (f64, f64) {
        ((self.mean - self.quad_mean) / self.se_mean, (self.sd - self.quad_sd) / self.se_sd)
    }

    pub fn passes(&self) -> bool {
        let (zm, zs) = self.z_scores();
        zm.abs() < 3.0 && zs.abs() < 3.0
    }
}

/// Posterior mean and sd of `beta_w` under the Naive prior against grid
/// quadrature on five instances with `p = 1`, `|D| = 20`.
pub fn quadrature_agreement(seed: u64) -> Vec<QuadratureCheck> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    while out.len() < 5 {
        let d = model_diffs(&mut r, 20, 0.5, &[1.0]);
        if clr_fit_mle(&d).is_err() {
            continue;
        }
        let (b, s2, tau2) = (0.8, 0.25, 1e4);
        let spec =
            PriorSpec::new(PriorKind::Naive, DVector::from_element(1, b), DMatrix::from_element(1, 1, s2), tau2, &d)
                .unwrap();
        let cfg = SamplerConfig { seed: seed + out.len() as u64, ..SamplerConfig::default() };
        let s = sample_posterior(&d, &spec, &cfg).unwrap();
        let draws = s.pooled_beta_w();
        let (m, sdev) = (mean(&draws), sd(&draws));
        // the sd's error follows the squared deviations, whose effective
        // sample size differs from that of the draws under HMC
        let sq: Vec<Vec<f64>> = s.beta_w_draws.iter().map(|c| c.iter().map(|x| (x - m) * (x - m)).collect()).collect();
        let fourth = sq.iter().flatten().map(|v| (v - sdev * sdev).powi(2)).sum::<f64>() / draws.len() as f64;
        let (quad_mean, quad_sd) = quadrature_posterior(&d, b, s2, tau2);
        out.push(QuadratureCheck {
            mean: m,
            quad_mean,
            se_mean: sdev / ess(&s.beta_w_draws).unwrap().sqrt(),
            sd: sdev,
            quad_sd,
            se_sd: (fourth / (4.0 * sdev * sdev * ess(&sq).unwrap())).sqrt(),
        });
    }
    out
}
