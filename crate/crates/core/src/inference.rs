//! Point estimates, credible sets, and interval-inclusion tests from pooled
//! posterior draws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum sample size for the kernel-density HPD.
pub const MIN_KDE_DRAWS: usize = 100;
/// Grid resolution of the kernel density estimate.
pub const KDE_GRID: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalMethod {
    EqualTailed,
    HpdContiguous,
    HpdDisjoint,
}

impl IntervalMethod {
    pub const ALL: [IntervalMethod; 3] = [Self::EqualTailed, Self::HpdContiguous, Self::HpdDisjoint];
}

impl std::fmt::Display for IntervalMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::EqualTailed => "cr",
            Self::HpdContiguous => "hpd-contiguous",
            Self::HpdDisjoint => "hpd-disjoint",
        })
    }
}

impl std::str::FromStr for IntervalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cr" | "equal-tailed" => Ok(Self::EqualTailed),
            "hpd-contiguous" | "hpd" => Ok(Self::HpdContiguous),
            "hpd-disjoint" => Ok(Self::HpdDisjoint),
            other => Err(Error::InvalidConfig(format!("unknown test '{other}'"))),
        }
    }
}

/// Sorted, non-overlapping closed intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet {
    pub intervals: Vec<(f64, f64)>,
    pub alpha: f64,
    pub method: IntervalMethod,
}

impl IntervalSet {
    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= x && x <= hi)
    }

    pub fn total_width(&self) -> f64 {
        self.intervals.iter().map(|(lo, hi)| hi - lo).sum()
    }

    /// Fraction of `draws` inside the set.
    pub fn coverage_of(&self, draws: &[f64]) -> f64 {
        draws.iter().filter(|&&x| self.contains(x)).count() as f64 / draws.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestDecision {
    pub theta0: f64,
    pub reject: bool,
    pub interval_set: IntervalSet,
    pub point_estimate: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn sorted(draws: &[f64]) -> Result<Vec<f64>> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    if draws.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("draws must be finite".into()));
    }
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Posterior mean.
pub fn point_estimate(draws: &[f64]) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    Ok(draws.iter().sum::<f64>() / draws.len() as f64)
}

/// Linear-interpolation quantile at rank `1 + (m - 1) u` of sorted draws.
pub fn quantile_sorted(sorted: &[f64], u: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * u;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// `[Q(alpha/2), Q(1 - alpha/2)]`.
pub fn equal_tailed_cr(draws: &[f64], alpha: f64) -> Result<IntervalSet> {
    check_alpha(alpha)?;
    let s = sorted(draws)?;
    Ok(IntervalSet {
        intervals: vec![(quantile_sorted(&s, alpha / 2.0), quantile_sorted(&s, 1.0 - alpha / 2.0))],
        alpha,
        method: IntervalMethod::EqualTailed,
    })
}

/// Shortest window holding `ceil((1 - alpha) m)` sorted draws; leftmost on
/// ties.
pub fn hpd_contiguous(draws: &[f64], alpha: f64) -> Result<IntervalSet> {
    check_alpha(alpha)?;
    let s = sorted(draws)?;
    let m = s.len();
    let k = (((1.0 - alpha) * m as f64).ceil() as usize).clamp(1, m);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for i in 0..=(m - k) {
        let width = s[i + k - 1] - s[i];
        if width < best_width {
            best_width = width;
            best = i;
        }
    }
    Ok(IntervalSet { intervals: vec![(s[best], s[best + k - 1])], alpha, method: IntervalMethod::HpdContiguous })
}

/// Silverman's rule-of-thumb bandwidth.
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let m = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / m;
    let sd = (sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)).sqrt();
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * m.powf(-0.2)
}

/// Gaussian KDE on an evenly spaced grid via linear binning.
fn kde_grid(sorted: &[f64], h: f64) -> (f64, f64, Vec<f64>) {
    let lo = sorted[0] - 3.0 * h;
    let hi = sorted[sorted.len() - 1] + 3.0 * h;
    let n = KDE_GRID;
    let delta = (hi - lo) / (n - 1) as f64;
    let mut counts = vec![0.0; n];
    for &x in sorted {
        let pos = (x - lo) / delta;
        let i = (pos.floor() as usize).min(n - 2);
        let frac = pos - i as f64;
        counts[i] += 1.0 - frac;
        counts[i + 1] += frac;
    }
    let norm = 1.0 / (sorted.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let kernel: Vec<f64> = (0..n)
        .map(|d| {
            let u = d as f64 * delta / h;
            (-0.5 * u * u).exp()
        })
        .collect();
    let density = (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (j, &c) in counts.iter().enumerate() {
                if c != 0.0 {
                    acc += c * kernel[i.abs_diff(j)];
                }
            }
            acc * norm
        })
        .collect();
    (lo, delta, density)
}

fn interpolate(lo: f64, delta: f64, density: &[f64], x: f64) -> f64 {
    let pos = (x - lo) / delta;
    let i = (pos.floor().max(0.0) as usize).min(density.len() - 2);
    let frac = (pos - i as f64).clamp(0.0, 1.0);
    density[i] + frac * (density[i + 1] - density[i])
}

/// Highest-density set of a kernel density estimate, possibly disjoint.
///
/// The threshold is the largest level whose superlevel set still holds at
/// least `ceil((1 - alpha) m)` draws (density evaluated by interpolation on
/// the grid); the set is the union of grid runs at or above it with
/// endpoints at the interpolated crossings.
pub fn hpd_disjoint(draws: &[f64], alpha: f64) -> Result<IntervalSet> {
    check_alpha(alpha)?;
    let s = sorted(draws)?;
    if s.len() < MIN_KDE_DRAWS {
        return Err(Error::TooFewDraws { needed: MIN_KDE_DRAWS, got: s.len() });
    }
    let method = IntervalMethod::HpdDisjoint;
    // work on offsets from the smallest draw so a shift of the input only
    // touches the final endpoints
    let anchor = s[0];
    let s: Vec<f64> = s.iter().map(|x| x - anchor).collect();
    let h = silverman_bandwidth(&s);
    if !(h > 0.0) {
        return Ok(IntervalSet { intervals: vec![(anchor, anchor)], alpha, method });
    }
    let (lo, delta, density) = kde_grid(&s, h);
    let m = s.len();
    let k = (((1.0 - alpha) * m as f64).ceil() as usize).clamp(1, m);
    let mut at_draws: Vec<f64> = s.iter().map(|&x| interpolate(lo, delta, &density, x)).collect();
    at_draws.sort_by(|a, b| b.total_cmp(a));
    let threshold = at_draws[k - 1];

    let grid_x = |i: usize| lo + i as f64 * delta;
    let crossing = |i: usize| {
        // density crosses the threshold between grid points i and i + 1
        let (d0, d1) = (density[i], density[i + 1]);
        grid_x(i) + (threshold - d0) / (d1 - d0) * delta
    };
    let mut intervals = Vec::new();
    let mut start: Option<f64> = None;
    for i in 0..density.len() {
        let above = density[i] >= threshold;
        match (above, start) {
            (true, None) => start = Some(if i == 0 { grid_x(0) } else { crossing(i - 1) }),
            (false, Some(a)) => {
                intervals.push((a, crossing(i - 1)));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(a) = start {
        intervals.push((a, grid_x(density.len() - 1)));
    }
    let intervals = intervals.into_iter().map(|(a, b)| (anchor + a, anchor + b)).collect();
    Ok(IntervalSet { intervals, alpha, method })
}

pub fn interval_set(draws: &[f64], alpha: f64, method: IntervalMethod) -> Result<IntervalSet> {
    match method {
        IntervalMethod::EqualTailed => equal_tailed_cr(draws, alpha),
        IntervalMethod::HpdContiguous => hpd_contiguous(draws, alpha),
        IntervalMethod::HpdDisjoint => hpd_disjoint(draws, alpha),
    }
}

/// Rejects `theta0` when it lies outside every interval of the credible set.
pub fn decide(draws: &[f64], alpha: f64, theta0: f64, method: IntervalMethod) -> Result<TestDecision> {
    let set = interval_set(draws, alpha, method)?;
    Ok(TestDecision {
        theta0,
        reject: !set.contains(theta0),
        point_estimate: point_estimate(draws)?,
        interval_set: set,
    })
}
