//! Rank statistics: tie-aware Spearman correlation, linear-interpolation
//! percentiles and the bootstrap used for metric error bars.

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::rng_from;

pub const DEFAULT_N_BOOT: usize = 100;

/// 1-based ranks; tied values share the mean of the ranks they occupy.
#[derive(Debug, Clone, PartialEq)]
pub struct RankVector(pub Vec<f64>);

pub fn rank_average_ties(x: &[f64]) -> Result<RankVector> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));

    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let shared = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = shared;
        }
        start = end;
    }
    Ok(RankVector(ranks))
}

/// Pearson product-moment correlation. Errors when either vector is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    // sqrt of the product keeps rho exactly +-1 for identical or mirrored inputs
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average-tie ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let rx = rank_average_ties(x)?;
    let ry = rank_average_ties(y)?;
    pearson(&rx.0, &ry.0)
}

/// Percentile with linear interpolation between closest ranks: position
/// `h = p/100 * (n-1)` in the sorted values.
pub fn percentile_linear(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("percentile of empty list".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "percentile {p} outside [0, 100]"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapEstimate {
    /// Statistic on the original sample.
    pub mean: f64,
    /// Standard deviation of the statistic across resamples.
    pub std: f64,
}

/// Resamples units with replacement `n_boot` times and reports the mean of
/// the original values and the standard deviation of the resampled means.
pub fn bootstrap_std_ci(values: &[f64], n_boot: usize, seed: u64) -> Result<BootstrapEstimate> {
    if values.is_empty() {
        return Err(Error::InvalidArgument(
            "bootstrap needs at least one unit".into(),
        ));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let std = bootstrap_std_with(values.len(), n_boot, seed, |idx| {
        idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64
    })?;
    Ok(BootstrapEstimate { mean, std })
}

/// Standard deviation of an arbitrary statistic over `n_boot` resamples of
/// `n_units` indices. The statistic receives the resampled unit indices.
pub fn bootstrap_std_with<F>(n_units: usize, n_boot: usize, seed: u64, stat: F) -> Result<f64>
where
    F: Fn(&[usize]) -> f64,
{
    if n_units == 0 {
        return Err(Error::InvalidArgument(
            "bootstrap needs at least one unit".into(),
        ));
    }
    if n_boot < 2 {
        return Err(Error::InvalidArgument("n_boot must be at least 2".into()));
    }
    let mut rng = rng_from(seed);
    let mut idx = vec![0usize; n_units];
    let mut stats = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        for slot in idx.iter_mut() {
            *slot = rng.gen_range(0..n_units);
        }
        stats.push(stat(&idx));
    }
    let m = stats.iter().sum::<f64>() / n_boot as f64;
    let var = stats.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (n_boot - 1) as f64;
    Ok(var.max(0.0).sqrt())
}
