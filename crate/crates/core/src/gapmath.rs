//! Estimators and statistics: reweighted utility, gap and relative gap,
//! quantiles, pass@k, correlations, histograms, variance, and the scaling fit.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;

/// Per-prompt contribution to the gap: the base expected utility and the
/// expected utility after reweighting by verifier scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptGapTerm {
    pub prompt_id: String,
    /// Mean utility over the prompt's generations.
    pub base_utility: f64,
    /// Weighted mean `Σ w·u / Σ w` (equals `base_utility` on fallback).
    pub reweighted_utility: f64,
    /// True when the weights summed to zero and the unweighted mean was used.
    pub fallback: bool,
}

/// Aggregate gap statistics over a set of prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub gap: f64,
    pub relative_gap: f64,
    pub per_prompt: Vec<PromptGapTerm>,
    /// Prompts whose weights summed to zero.
    pub n_fallback: usize,
    /// Prompts excluded from the relative gap because base utility hit u_max.
    pub n_excluded_rel: usize,
}

impl GapReport {
    /// Builds the aggregate report from per-prompt terms.
    pub fn from_terms(per_prompt: Vec<PromptGapTerm>, u_max: f64) -> Result<GapReport, GapError> {
        let gap = gap(&per_prompt)?;
        let (relative_gap, n_excluded_rel) = relative_gap(&per_prompt, u_max)?;
        let n_fallback = per_prompt.iter().filter(|t| t.fallback).count();
        Ok(GapReport {
            gap,
            relative_gap,
            per_prompt,
            n_fallback,
            n_excluded_rel,
        })
    }
}

/// Half-open histogram bin `[lo, lo + width)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// Bin index `k`, so `lo = k * width`; negative values land in negative
    /// bins.
    pub index: i64,
    pub lo: f64,
    pub count: u64,
}

/// Histogram of per-prompt gap contributions with summary moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub width: f64,
    pub bins: Vec<HistogramBin>,
    pub mean: f64,
    /// Population standard deviation of the raw values.
    pub stddev: f64,
    pub n: usize,
}

/// Ordinary least squares fit of relative gap against log10(flops).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLinearFit {
    /// Relative-gap change per decade of compute.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GapError {
    #[error("sequence lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("input sequence is empty")]
    Empty,
    #[error("input sequence shorter than {min} elements")]
    TooShort { min: usize },
    #[error("value {0} is not finite")]
    NonFinite(f64),
    #[error("negative weight {0}")]
    NegativeWeight(f64),
    #[error("quantile {0} outside [0, 1)")]
    QuantileOutOfRange(f64),
    #[error("pass@k requires 0 <= c <= n and 1 <= k <= n, got n={n}, c={c}, k={k}")]
    PassAtKArgs { n: u64, c: u64, k: u64 },
    #[error("correlation undefined: {side} sequence has zero variance")]
    ZeroVariance { side: &'static str },
    #[error("histogram width {0} must be positive")]
    BadWidth(f64),
    #[error("p_hat {0} outside [0, 1]")]
    PHatOutOfRange(f64),
    #[error("flops value {0} must be positive")]
    NonPositiveFlops(f64),
    #[error("base utility {base} exceeds u_max {u_max}")]
    BaseAboveMax { base: f64, u_max: f64 },
}

/// Weighted mean `Σ wᵢuᵢ / Σ wᵢ`. When the weights sum to zero the unweighted
/// mean is returned with the fallback flag set, so the prompt contributes a
/// gap of exactly zero instead of being dropped.
pub fn reweighted_utility(utilities: &[f64], weights: &[f64]) -> Result<(f64, bool), GapError> {
    if utilities.len() != weights.len() {
        return Err(GapError::LengthMismatch {
            left: utilities.len(),
            right: weights.len(),
        });
    }
    if utilities.is_empty() {
        return Err(GapError::Empty);
    }
    for &w in weights {
        if !w.is_finite() {
            return Err(GapError::NonFinite(w));
        }
        if w < 0.0 {
            return Err(GapError::NegativeWeight(w));
        }
    }
    let total_weight: f64 = weights.iter().sum();
    if total_weight == 0.0 {
        let mean = utilities.iter().sum::<f64>() / utilities.len() as f64;
        return Ok((mean, true));
    }
    let weighted: f64 = utilities.iter().zip(weights).map(|(u, w)| u * w).sum();
    Ok((weighted / total_weight, false))
}

/// Mean over prompts of (reweighted − base).
pub fn gap(terms: &[PromptGapTerm]) -> Result<f64, GapError> {
    if terms.is_empty() {
        return Err(GapError::Empty);
    }
    let sum: f64 = terms
        .iter()
        .map(|t| t.reweighted_utility - t.base_utility)
        .sum();
    Ok(sum / terms.len() as f64)
}

/// Mean over prompts with base < u_max of (reweighted − base)/(u_max − base).
/// Prompts already at u_max have a zero denominator; they are excluded and
/// counted. If every prompt is excluded the relative gap is reported as 0.
pub fn relative_gap(terms: &[PromptGapTerm], u_max: f64) -> Result<(f64, usize), GapError> {
    if terms.is_empty() {
        return Err(GapError::Empty);
    }
    let mut sum = 0.0;
    let mut included = 0usize;
    let mut excluded = 0usize;
    for term in terms {
        if term.base_utility > u_max {
            return Err(GapError::BaseAboveMax {
                base: term.base_utility,
                u_max,
            });
        }
        if term.base_utility == u_max {
            excluded += 1;
        } else {
            sum += (term.reweighted_utility - term.base_utility) / (u_max - term.base_utility);
            included += 1;
        }
    }
    let value = if included == 0 { 0.0 } else { sum / included as f64 };
    Ok((value, excluded))
}

/// Nearest-rank quantile: sorts ascending and returns the element at 1-based
/// index `⌈n·len⌉` clamped to `[1, len]`. Filtering keeps every score at or
/// above the returned value, so ties are kept and `n = 0` keeps everything.
pub fn nearest_rank_quantile(scores: &[f64], n: f64) -> Result<f64, GapError> {
    if scores.is_empty() {
        return Err(GapError::Empty);
    }
    if !(0.0..1.0).contains(&n) {
        return Err(GapError::QuantileOutOfRange(n));
    }
    for &s in scores {
        if !s.is_finite() {
            return Err(GapError::NonFinite(s));
        }
    }
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    let rank = math::ceil(n * sorted.len() as f64) as usize;
    let rank = rank.clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}

/// Exact binomial coefficient `C(n, k)` in `u128`, or `None` when an
/// intermediate product overflows.
fn binomial_u128(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        // acc·(n−k+i) is divisible by i at every step, so the division is
        // exact and acc stays a true binomial throughout.
        acc = acc.checked_mul((n - k + i) as u128)? / i as u128;
    }
    Some(acc)
}

/// Unbiased pass@k estimator `1 − C(n−c, k)/C(n, k)`.
///
/// Both subset counts are formed in exact integer arithmetic whenever they
/// fit in `u128`, leaving a single rounding in the final division; that makes
/// the result identical to brute-force subset enumeration at small `n`. When
/// a count overflows, the estimator falls back to the factor-by-factor
/// product `Π (n−c−i)/(n−i)`, whose terms all sit in `(0, 1]`.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, GapError> {
    if c > n || k < 1 || k > n {
        return Err(GapError::PassAtKArgs { n, c, k });
    }
    if n - c < k {
        return Ok(1.0);
    }
    if let (Some(total), Some(miss)) = (binomial_u128(n, k), binomial_u128(n - c, k)) {
        return Ok((total - miss) as f64 / total as f64);
    }
    let mut product = 1.0f64;
    for i in 0..k {
        product *= (n - c - i) as f64 / (n - i) as f64;
    }
    Ok(1.0 - product)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, GapError> {
    if xs.len() != ys.len() {
        return Err(GapError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(GapError::TooShort { min: 2 });
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 {
        return Err(GapError::ZeroVariance { side: "x" });
    }
    if syy == 0.0 {
        return Err(GapError::ZeroVariance { side: "y" });
    }
    Ok(sxy / (math::sqrt(sxx) * math::sqrt(syy)))
}

/// Histogram with half-open bins `[k·width, (k+1)·width)` plus the mean and
/// population standard deviation of the raw values. Empty input yields empty
/// bins and zero moments.
pub fn gap_histogram(values: &[f64], width: f64) -> Result<Histogram, GapError> {
    if width.is_nan() || width <= 0.0 {
        return Err(GapError::BadWidth(width));
    }
    let mut counts: alloc::collections::BTreeMap<i64, u64> = alloc::collections::BTreeMap::new();
    for &v in values {
        if !v.is_finite() {
            return Err(GapError::NonFinite(v));
        }
        let index = math::floor(v / width) as i64;
        *counts.entry(index).or_insert(0) += 1;
    }
    let n = values.len();
    let (mean, stddev) = if n == 0 {
        (0.0, 0.0)
    } else {
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        (mean, math::sqrt(var))
    };
    let bins = counts
        .into_iter()
        .map(|(index, count)| HistogramBin {
            index,
            lo: index as f64 * width,
            count,
        })
        .collect();
    Ok(Histogram {
        width,
        bins,
        mean,
        stddev,
        n,
    })
}

/// Default bin width for gap histograms.
pub const DEFAULT_HISTOGRAM_WIDTH: f64 = 0.005;

/// Bernoulli variance `p̂(1 − p̂)` of a binary verifier's acceptance rate.
pub fn verification_variance(p_hat: f64) -> Result<f64, GapError> {
    if !(0.0..=1.0).contains(&p_hat) {
        return Err(GapError::PHatOutOfRange(p_hat));
    }
    Ok(p_hat * (1.0 - p_hat))
}

/// Ordinary least squares of `rel_gaps` against `log10(flops)`. When the
/// responses are constant the fit is the horizontal line and r² is reported
/// as 1.
pub fn fit_loglinear(flops: &[f64], rel_gaps: &[f64]) -> Result<LogLinearFit, GapError> {
    if flops.len() != rel_gaps.len() {
        return Err(GapError::LengthMismatch {
            left: flops.len(),
            right: rel_gaps.len(),
        });
    }
    if flops.len() < 2 {
        return Err(GapError::TooShort { min: 2 });
    }
    let mut xs = Vec::with_capacity(flops.len());
    for &f in flops {
        if !f.is_finite() || f <= 0.0 {
            return Err(GapError::NonPositiveFlops(f));
        }
        xs.push(math::log10(f));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = rel_gaps.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(rel_gaps) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(GapError::ZeroVariance { side: "x" });
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (&x, &y) in xs.iter().zip(rel_gaps) {
        let pred = slope * x + intercept;
        ss_res += (y - pred) * (y - pred);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(LogLinearFit {
        slope,
        intercept,
        r_squared,
    })
}
