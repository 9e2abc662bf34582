//! Independent reference computations shared by the integration tests and
//! the acceptance suite. Nothing here calls into the code under test except
//! for constructing inputs.
#![allow(dead_code)]

use bclr_core::{DiscordantDiffs, PairedDataset};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Random matched-pair dataset with rows `2k`, `2k + 1` forming pair `k`.
pub fn random_dataset(r: &mut ChaCha8Rng, n_pairs: usize, p: usize) -> PairedDataset {
    let mut w = Vec::with_capacity(2 * n_pairs);
    for _ in 0..n_pairs {
        if r.random::<bool>() {
            w.extend([1, 0]);
        } else {
            w.extend([0, 1]);
        }
    }
    let y: Vec<u8> = (0..2 * n_pairs).map(|_| r.random_range(0..2u8)).collect();
    let x = DMatrix::from_fn(2 * n_pairs, p, |_, _| r.random_range(-1.5..1.5));
    PairedDataset::from_consecutive_rows(w, y, x).unwrap()
}

pub fn random_diffs(r: &mut ChaCha8Rng, n: usize, p: usize, scale: f64) -> DiscordantDiffs {
    let dx = DMatrix::from_fn(n, p, |_, _| scale * r.random_range(-1.0..1.0));
    let z = (0..n).map(|_| r.random_range(0..2u8)).collect();
    DiscordantDiffs::new(dx, z).unwrap()
}

/// Discordant differences drawn from the CLR model at `(beta_w, beta)`.
pub fn model_diffs(r: &mut ChaCha8Rng, n: usize, beta_w: f64, beta: &[f64]) -> DiscordantDiffs {
    let p = beta.len();
    let dx = DMatrix::from_fn(n, p, |_, _| r.random_range(-1.0..1.0));
    let z = (0..n)
        .map(|i| {
            let eta = beta_w + (0..p).map(|j| dx[(i, j)] * beta[j]).sum::<f64>();
            u8::from(r.random::<f64>() < logistic(eta))
        })
        .collect();
    DiscordantDiffs::new(dx, z).unwrap()
}

/// Conditional log-likelihood by enumerating the two outcome configurations
/// with one case per discordant pair, using raw rows and arbitrary pair
/// intercepts. Concordant pairs contribute zero.
pub fn enumeration_loglik(data: &PairedDataset, beta_w: f64, beta: &[f64], intercepts: &[f64]) -> f64 {
    let x = data.covariates();
    let w = data.treatment();
    let y = data.response();
    let mut total = 0.0;
    for k in 0..data.n_rows() / 2 {
        let (a, b) = (2 * k, 2 * k + 1);
        if y[a] == y[b] {
            continue;
        }
        let eta = |r: usize| {
            intercepts[k] + beta_w * f64::from(w[r]) + (0..beta.len()).map(|j| x[(r, j)] * beta[j]).sum::<f64>()
        };
        let pr = |r: usize, case: bool| {
            let q = logistic(eta(r));
            if case {
                q
            } else {
                1.0 - q
            }
        };
        let a_case = pr(a, true) * pr(b, false);
        let b_case = pr(a, false) * pr(b, true);
        let observed = if y[a] == 1 { a_case } else { b_case };
        total += (observed / (a_case + b_case)).ln();
    }
    total
}

/// Nelder-Mead minimiser (standard coefficients, shrink on failure).
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], step: f64, tol: f64, max_iter: usize) -> Vec<f64> {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let spread = (values[n] - values[0]).abs();
        let size = simplex
            .iter()
            .skip(1)
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread < tol && size < tol {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
        let towards =
            |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };
        let reflected = towards(-1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = towards(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let contracted = if fr < values[n] { towards(-0.5) } else { towards(0.5) };
            let fc = f(&contracted);
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    simplex[i] = (0..n).map(|j| best[j] + 0.5 * (simplex[i][j] - best[j])).collect();
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    simplex[best].clone()
}

/// Repeated Nelder-Mead restarts until the minimiser stops moving.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64]) -> Vec<f64> {
    let mut x = x0.to_vec();
    for _ in 0..20 {
        let next = nelder_mead(&f, &x, 0.5, 1e-13, 20_000);
        let moved = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if moved < 1e-10 {
            break;
        }
    }
    x
}

/// Central finite difference of `f` at `x`.
pub fn central_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[i] += h;
            down[i] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

/// Unnormalised log conditional likelihood over discordant differences.
pub fn direct_clr_loglik(d: &DiscordantDiffs, beta_w: f64, beta: &[f64]) -> f64 {
    let dx = d.delta_x();
    (0..d.n_pairs())
        .map(|i| {
            let eta = beta_w + (0..beta.len()).map(|j| dx[(i, j)] * beta[j]).sum::<f64>();
            let q = logistic(eta);
            if d.case_is_treated()[i] == 1 {
                q.ln()
            } else {
                (1.0 - q).ln()
            }
        })
        .sum()
}

/// Posterior mean and sd of `beta_w` for `p = 1` under
/// `N(beta_w; 0, tau2) x N(beta; b, s2)` by grid quadrature: a coarse pass
/// locates the mass, a fine pass integrates it.
pub fn quadrature_posterior(d: &DiscordantDiffs, b: f64, s2: f64, tau2: f64) -> (f64, f64) {
    let log_post =
        |bw: f64, bt: f64| direct_clr_loglik(d, bw, &[bt]) - bw * bw / (2.0 * tau2) - (bt - b) * (bt - b) / (2.0 * s2);
    let moments = |c: [f64; 2], half: [f64; 2], n: usize| {
        let mut logs = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let bw = c[0] - half[0] + 2.0 * half[0] * (i as f64 + 0.5) / n as f64;
                let bt = c[1] - half[1] + 2.0 * half[1] * (j as f64 + 0.5) / n as f64;
                logs.push((bw, bt, log_post(bw, bt)));
            }
        }
        let max = logs.iter().map(|t| t.2).fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut m1, mut m2, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(bw, bt, lp) in &logs {
            let wgt = (lp - max).exp();
            z += wgt;
            m1 += wgt * bw;
            m2 += wgt * bw * bw;
            t1 += wgt * bt;
            t2 += wgt * bt * bt;
        }
        let (mw, mt) = (m1 / z, t1 / z);
        ([mw, mt], [(m2 / z - mw * mw).sqrt(), (t2 / z - mt * mt).sqrt()])
    };
    let (c, sd) = moments([0.0, b], [25.0, 25.0], 300);
    let (c, sd) = moments(c, [12.0 * sd[0], 12.0 * sd[1]], 600);
    (c[0], sd[0])
}

/// `E[1/g]` under the density proportional to `g^(-a-1) exp(-s/g)`, by
/// trapezoidal integration over a log-spaced grid.
pub fn log_grid_mean_inverse(a: f64, s: f64) -> f64 {
    let (lo, hi, n) = (-30.0f64, 30.0f64, 200_000);
    let h = (hi - lo) / n as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..=n {
        let t = lo + k as f64 * h;
        let g = t.exp();
        // density in log g picks up a Jacobian factor g
        let log_dens = (-a - 1.0) * t - s / g + t;
        let wgt = if k == 0 || k == n { 0.5 } else { 1.0 };
        let dens = log_dens.exp() * wgt;
        num += dens / g;
        den += dens;
    }
    num / den
}

/// Two-sample-free KS statistic of `draws` against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(draws: &[f64], cdf: F) -> f64 {
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / m).abs().max(((i + 1) as f64 / m - c).abs())
        })
        .fold(0.0, f64::max)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}
