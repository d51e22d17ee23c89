//! Per-topic growth: first-order rate kinetics `N = N0·e^(k·t)` fitted to
//! yearly fractional document counts, with CAGR, reduced chi-squared, error
//! bar calibration and emerging-topic screens.

mod calibrate;
mod fit;
mod screen;

pub use calibrate::{calibrate_error_scale, CalibrationResult, CalibrationStatus};
pub use fit::{fit_exponential, fit_exponential_with, CovarianceScaling, FitOptions, FitResult};
pub use screen::{
    cagr_distribution_stats, pct_err, rank_emerging, screen_good_neighborhood, Bucket, CagrDistributionStats,
    EmergingCandidate, RankedTopic, ScreenConfig, ScreenResult,
};

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Percent growth per year implied by a rate constant.
#[inline]
pub fn cagr_from_k(k: f64) -> f64 {
    100.0 * (libm::exp(k) - 1.0)
}

/// First-order propagation of a rate-constant error into CAGR percent.
#[inline]
pub fn cagr_error(k: f64, err_k: f64) -> f64 {
    100.0 * libm::exp(k) * err_k
}

/// Conventional endpoint-only CAGR in percent.
pub fn cagr_two_point(n0: f64, nn: f64, t0: i32, tn: i32) -> Result<f64> {
    if tn <= t0 {
        return Err(Error::InvalidInput(alloc::format!("tn ({tn}) must exceed t0 ({t0})")));
    }
    if !(n0 > 0.0) {
        return Err(Error::ZeroBaseline);
    }
    if !(nn >= 0.0) {
        return Err(Error::InvalidInput(alloc::format!("final count must be non-negative, got {nn}")));
    }
    Ok(100.0 * (libm::pow(nn / n0, 1.0 / f64::from(tn - t0)) - 1.0))
}

/// Inclusive calendar-year window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct YearWindow {
    pub first: i32,
    pub last: i32,
}

impl YearWindow {
    pub fn new(first: i32, last: i32) -> Result<Self> {
        if last < first {
            return Err(Error::InvalidInput(alloc::format!("empty year window {first}..={last}")));
        }
        Ok(Self { first, last })
    }

    pub fn len(&self) -> usize {
        (self.last - self.first + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.first..=self.last).contains(&year)
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.first..=self.last
    }
}

impl Default for YearWindow {
    fn default() -> Self {
        Self { first: 2014, last: 2018 }
    }
}

/// Raw per-year fractional counts for one topic (or super topic).
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct YearlyCounts {
    pub topic_id: u32,
    pub counts: BTreeMap<i32, f64>,
}

impl YearlyCounts {
    pub fn new(topic_id: u32, counts: impl IntoIterator<Item = (i32, f64)>) -> Self {
        Self { topic_id, counts: counts.into_iter().collect() }
    }

    pub fn total(&self) -> f64 {
        self.counts.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TopicTimeSeries {
    pub topic_id: u32,
    /// Years since the first year of the window.
    pub t: Vec<i32>,
    pub n: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl TopicTimeSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Series with `sigma = scale·max(√n, 1)`.
    pub fn with_poisson_sigma(topic_id: u32, t: Vec<i32>, n: Vec<f64>, scale: f64) -> Self {
        let sigma = n.iter().map(|&x| poisson_sigma(x, scale)).collect();
        Self { topic_id, t, n, sigma }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.len() != self.t.len() || self.sigma.len() != self.t.len() {
            return Err(Error::ShapeMismatch { expected: self.t.len(), found: self.n.len().min(self.sigma.len()) });
        }
        if self.t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("time points must be strictly increasing".into()));
        }
        if self.n.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidInput("counts must be non-negative".into()));
        }
        if self.sigma.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput("sigma must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Error bar for a count: `scale·max(√n, 1)`; the floor keeps empty years
/// from receiving unbounded weight.
#[inline]
pub fn poisson_sigma(n: f64, scale: f64) -> f64 {
    scale * libm::sqrt(n.max(0.0)).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ExclusionReason {
    /// Fewer than three years of recorded data inside the window.
    TooFewYears { observed: usize },
}

impl core::fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ExclusionReason::TooFewYears { observed } => {
                write!(f, "only {observed} year(s) of data; at least 3 required")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeriesSet {
    pub series: Vec<TopicTimeSeries>,
    pub excluded: Vec<(u32, ExclusionReason)>,
}

pub const MIN_FIT_POINTS: usize = 3;

/// Turn yearly counts into fit-ready series over the full window, filling
/// missing years with zero.
pub fn build_time_series(counts: &[YearlyCounts], window: YearWindow, scale: f64) -> Result<SeriesSet> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidInput(alloc::format!("error scale must be positive, got {scale}")));
    }
    let mut out = SeriesSet::default();
    for yc in counts {
        let observed = yc.counts.keys().filter(|y| window.contains(**y)).count();
        if observed < MIN_FIT_POINTS || window.len() < MIN_FIT_POINTS {
            out.excluded.push((yc.topic_id, ExclusionReason::TooFewYears { observed }));
            continue;
        }
        let t: Vec<i32> = window.years().map(|y| y - window.first).collect();
        let n: Vec<f64> = window.years().map(|y| yc.counts.get(&y).copied().unwrap_or(0.0)).collect();
        out.series.push(TopicTimeSeries::with_poisson_sigma(yc.topic_id, t, n, scale));
    }
    Ok(out)
}

/// Sum member topics year by year and fit the aggregate.
pub fn aggregate_supertopic_fit(
    members: &[u32],
    counts: &[YearlyCounts],
    window: YearWindow,
    scale: f64,
    opts: &FitOptions,
) -> Result<FitResult> {
    if members.is_empty() {
        return Err(Error::Empty("super topic member list"));
    }
    let mut summed = YearlyCounts { topic_id: members[0], counts: BTreeMap::new() };
    for &m in members {
        let yc = counts
            .iter()
            .find(|c| c.topic_id == m)
            .ok_or_else(|| Error::InvalidInput(alloc::format!("no yearly counts for topic {m}")))?;
        for (&y, &v) in &yc.counts {
            *summed.counts.entry(y).or_insert(0.0) += v;
        }
    }
    let set = build_time_series(core::slice::from_ref(&summed), window, scale)?;
    match set.series.first() {
        Some(ts) => fit_exponential_with(ts, opts),
        None => Err(Error::InvalidInput(alloc::format!(
            "super topic has too few years: {}",
            set.excluded[0].1
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sigma_with_zero_floor() {
        let yc = YearlyCounts::new(1, [(2014, 100.0), (2015, 0.0), (2016, 25.0)]);
        let set = build_time_series(&[yc], YearWindow::new(2014, 2016).unwrap(), 1.0).unwrap();
        assert_eq!(set.series[0].sigma, vec![10.0, 1.0, 5.0]);
    }

    #[test]
    fn sigma_scaled() {
        let yc = YearlyCounts::new(1, (2014..=2018).map(|y| (y, 4.0)));
        let set = build_time_series(&[yc], YearWindow::default(), 2.0).unwrap();
        assert_eq!(set.series[0].sigma, vec![4.0; 5]);
    }

    #[test]
    fn gap_filled_with_zero() {
        let yc = YearlyCounts::new(3, [(2014, 1.0), (2015, 2.0), (2017, 4.0), (2018, 8.0)]);
        let set = build_time_series(&[yc], YearWindow::default(), 1.0).unwrap();
        let ts = &set.series[0];
        assert_eq!(ts.t, vec![0, 1, 2, 3, 4]);
        assert_eq!(ts.n, vec![1.0, 2.0, 0.0, 4.0, 8.0]);
    }

    #[test]
    fn too_few_years_excluded_with_reason() {
        let yc = YearlyCounts::new(9, [(2014, 1.0), (2015, 2.0)]);
        let set = build_time_series(&[yc], YearWindow::default(), 1.0).unwrap();
        assert!(set.series.is_empty());
        assert_eq!(set.excluded, vec![(9, ExclusionReason::TooFewYears { observed: 2 })]);
    }

    #[test]
    fn two_point_values() {
        let v = cagr_two_point(100.0, 200.0, 0, 5).unwrap();
        assert!((v - 100.0 * (libm::pow(2.0, 0.2) - 1.0)).abs() < 1e-12);
        assert!((v - 14.87).abs() < 0.005);
        assert_eq!(cagr_two_point(50.0, 50.0, 0, 4).unwrap(), 0.0);
        assert!((cagr_two_point(100.0, 50.0, 0, 1).unwrap() + 50.0).abs() < 1e-12);
        assert_eq!(cagr_two_point(0.0, 50.0, 0, 1), Err(Error::ZeroBaseline));
        assert!(cagr_two_point(1.0, 50.0, 2, 2).is_err());
    }

    #[test]
    fn cagr_of_ln2_is_exactly_100() {
        assert_eq!(cagr_from_k(core::f64::consts::LN_2), 100.0);
        assert_eq!(cagr_from_k(0.0), 0.0);
    }

    #[test]
    fn single_member_supertopic_matches_member() {
        let yc = YearlyCounts::new(4, [(2014, 10.0), (2015, 13.0), (2016, 15.0), (2017, 21.0), (2018, 24.0)]);
        let opts = FitOptions::default();
        let agg = aggregate_supertopic_fit(&[4], core::slice::from_ref(&yc), YearWindow::default(), 1.0, &opts).unwrap();
        let set = build_time_series(&[yc], YearWindow::default(), 1.0).unwrap();
        let direct = fit_exponential_with(&set.series[0], &opts).unwrap();
        assert_eq!(agg, direct);
    }

    #[test]
    fn identical_exponential_members_sum_to_same_rate() {
        let mk = |id| YearlyCounts::new(id, (0..5).map(|t| (2014 + t, libm::exp(0.1 * t as f64))));
        let counts = [mk(1), mk(2)];
        let fit =
            aggregate_supertopic_fit(&[1, 2], &counts, YearWindow::default(), 1.0, &FitOptions::default()).unwrap();
        assert!((fit.k_hat - 0.1).abs() < 1e-9, "{}", fit.k_hat);
        assert!((fit.n0_hat - 2.0).abs() < 1e-9);
    }

    #[test]
    fn empty_or_unknown_members_rejected() {
        let opts = FitOptions::default();
        assert!(aggregate_supertopic_fit(&[], &[], YearWindow::default(), 1.0, &opts).is_err());
        assert!(aggregate_supertopic_fit(&[7], &[], YearWindow::default(), 1.0, &opts).is_err());
    }
}
