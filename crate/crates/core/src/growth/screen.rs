use alloc::vec::Vec;

use super::FitResult;
use crate::histogram::{freedman_diaconis_width, histogram, Histogram};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreenConfig {
    pub chi_lo: f64,
    pub chi_hi: f64,
    /// Upper bound on `100·|err_cagr / cagr|`.
    pub max_pct_err: f64,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        Self { chi_lo: 0.5, chi_hi: 1.5, max_pct_err: 50.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Bucket {
    /// χ²ᵣ inside the band and a precise CAGR.
    Good,
    /// χ²ᵣ outside the band but a precise CAGR.
    LargeChiPrecise,
    Rest,
}

impl Bucket {
    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::Good => "good",
            Bucket::LargeChiPrecise => "large_chi_precise",
            Bucket::Rest => "rest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScreenResult {
    pub good: Vec<u32>,
    pub large_chi_precise: Vec<u32>,
    pub rest: Vec<u32>,
}

impl ScreenResult {
    pub fn good_fraction(&self) -> f64 {
        let total = self.good.len() + self.large_chi_precise.len() + self.rest.len();
        if total == 0 {
            0.0
        } else {
            self.good.len() as f64 / total as f64
        }
    }
}

/// Percent error of CAGR; `None` when CAGR is zero or not finite.
pub fn pct_err(fit: &FitResult) -> Option<f64> {
    if fit.cagr == 0.0 || !fit.cagr.is_finite() || !fit.err_cagr.is_finite() {
        None
    } else {
        Some(100.0 * (fit.err_cagr / fit.cagr).abs())
    }
}

impl ScreenConfig {
    pub fn bucket(&self, fit: &FitResult) -> Bucket {
        let precise = fit.converged && pct_err(fit).is_some_and(|p| p < self.max_pct_err);
        if !precise {
            Bucket::Rest
        } else if fit.chi2_red > self.chi_lo && fit.chi2_red < self.chi_hi {
            Bucket::Good
        } else {
            Bucket::LargeChiPrecise
        }
    }
}

pub fn screen_good_neighborhood(fits: &[(u32, FitResult)], cfg: &ScreenConfig) -> ScreenResult {
    let mut out = ScreenResult::default();
    for (id, fit) in fits {
        match cfg.bucket(fit) {
            Bucket::Good => out.good.push(*id),
            Bucket::LargeChiPrecise => out.large_chi_precise.push(*id),
            Bucket::Rest => out.rest.push(*id),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CagrDistributionStats {
    pub mean: f64,
    pub std: f64,
    pub mean_std_err: f64,
    pub n_included: usize,
    pub n_excluded: usize,
}

const MAX_OUTLIER_PASSES: usize = 10;

/// Mean and sample standard deviation with 3σ outlier rejection, where each
/// value is tested against the mean and deviation of the *other* included
/// values. Passes repeat until nothing more is removed.
fn reject_outliers(values: &[f64]) -> Vec<bool> {
    let mut keep: Vec<bool> = values.iter().map(|v| v.is_finite()).collect();
    for _ in 0..MAX_OUTLIER_PASSES {
        let (n, sum, sumsq) = values
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .fold((0usize, 0.0, 0.0), |(n, s, q), (&v, _)| (n + 1, s + v, q + v * v));
        if n < 3 {
            break;
        }
        let mut removed = false;
        let mut next = keep.clone();
        for (i, &v) in values.iter().enumerate() {
            if !keep[i] {
                continue;
            }
            let m = (n - 1) as f64;
            let mean = (sum - v) / m;
            let var = ((sumsq - v * v) - m * mean * mean).max(0.0) / (m - 1.0);
            if (v - mean).abs() > 3.0 * libm::sqrt(var) {
                next[i] = false;
                removed = true;
            }
        }
        keep = next;
        if !removed {
            break;
        }
    }
    keep
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let n = values.clone().count();
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = if n > 1 { values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    (mean, libm::sqrt(var), n)
}

/// Distribution of fitted CAGR after outlier rejection, plus a histogram of
/// the retained values.
pub fn cagr_distribution_stats(fits: &[FitResult]) -> Result<(CagrDistributionStats, Histogram)> {
    if fits.len() < 2 {
        return Err(Error::InvalidInput("at least two fits required".into()));
    }
    let cagr: Vec<f64> = fits.iter().map(|f| f.cagr).collect();
    let keep = reject_outliers(&cagr);
    let included = || fits.iter().zip(&keep).filter(|(_, &k)| k).map(|(f, _)| f);
    if included().next().is_none() {
        return Err(Error::AllExcluded);
    }
    let (mean, std, n_included) = mean_std(included().map(|f| f.cagr));
    let mean_std_err = included().map(|f| f.err_cagr).sum::<f64>() / n_included as f64;

    let kept: Vec<f64> = included().map(|f| f.cagr).collect();
    let lo = kept.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = kept.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = freedman_diaconis_width(&kept, 0.5);
    let lo = libm::floor(lo / width) * width;
    let hist = histogram(&kept, lo, hi.max(lo + width), width);

    Ok((
        CagrDistributionStats { mean, std, mean_std_err, n_included, n_excluded: fits.len() - n_included },
        hist,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmergingCandidate {
    pub topic_id: u32,
    pub fit: FitResult,
    /// Fractional document count over the whole window.
    pub size: f64,
    /// `None` when diagnostics carried no usable coherence.
    pub coherence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankedTopic {
    pub rank: usize,
    pub topic_id: u32,
    pub cagr: f64,
    pub err_cagr: f64,
    pub size: f64,
    pub coherence: f64,
}

/// Fastest-growing coherent, non-junk topics, by CAGR descending (topic id
/// breaks ties), truncated to `top_n`.
pub fn rank_emerging(
    candidates: &[EmergingCandidate],
    top_n: usize,
    coherence_floor: f64,
    is_junk: impl Fn(u32) -> bool,
) -> Vec<RankedTopic> {
    let mut rows: Vec<&EmergingCandidate> = candidates
        .iter()
        .filter(|c| c.fit.converged && c.fit.cagr.is_finite())
        .filter(|c| c.coherence.is_some_and(|h| h >= coherence_floor))
        .filter(|c| !is_junk(c.topic_id))
        .collect();
    rows.sort_by(|a, b| b.fit.cagr.total_cmp(&a.fit.cagr).then(a.topic_id.cmp(&b.topic_id)));
    rows.into_iter()
        .take(top_n)
        .enumerate()
        .map(|(i, c)| RankedTopic {
            rank: i + 1,
            topic_id: c.topic_id,
            cagr: c.fit.cagr,
            err_cagr: c.fit.err_cagr,
            size: c.size,
            coherence: c.coherence.unwrap_or(f64::NAN),
        })
        .collect()
}
