//! Fixed-range histograms with Freedman–Diaconis bin widths.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Histogram {
    /// `counts.len() + 1` bin edges, ascending.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        if self.edges.len() < 2 {
            0.0
        } else {
            self.edges[1] - self.edges[0]
        }
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1]))
    }
}

/// Linear-interpolated quantile of already sorted values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = libm::floor(pos) as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

/// `2·IQR·n^(-1/3)` over the finite values, floored at `min_width`.
pub fn freedman_diaconis_width(values: &[f64], min_width: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.len() < 2 {
        return min_width;
    }
    v.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25);
    let w = 2.0 * iqr * libm::pow(v.len() as f64, -1.0 / 3.0);
    if w.is_finite() && w > min_width {
        w
    } else {
        min_width
    }
}

/// Bins anchored at `lo`; values outside `[lo, hi]` are dropped, `hi` itself
/// lands in the last bin.
pub fn histogram(values: &[f64], lo: f64, hi: f64, width: f64) -> Histogram {
    let nbins = (libm::ceil((hi - lo) / width) as usize).max(1);
    let edges: Vec<f64> = (0..=nbins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0usize; nbins];
    for &x in values {
        if let Some(b) = bin_of(x, lo, hi, width, nbins) {
            counts[b] += 1;
        }
    }
    Histogram { edges, counts }
}

fn bin_of(x: f64, lo: f64, hi: f64, width: f64, nbins: usize) -> Option<usize> {
    if !x.is_finite() || x < lo || x > hi {
        return None;
    }
    Some(((libm::floor((x - lo) / width)) as usize).min(nbins - 1))
}

/// Histogram mode over `[lo, hi]`.
///
/// The bin width comes from all finite values (not just the in-range ones),
/// and bins are anchored at `lo`, so when `lo == 0` rescaling every value by
/// a constant rescales the returned mode by the same constant. The mode is
/// the mean of the values in the fullest bin; ties go to the lower bin.
pub fn histogram_mode(values: &[f64], lo: f64, hi: f64, min_width: f64) -> Option<f64> {
    let width = freedman_diaconis_width(values, min_width);
    let h = histogram(values, lo, hi, width);
    let nbins = h.counts.len();
    let (best, &count) = h
        .counts
        .iter()
        .enumerate()
        .fold((0, &0usize), |acc, (i, c)| if *c > *acc.1 { (i, c) } else { acc });
    if count == 0 {
        return None;
    }
    let (sum, n) = values
        .iter()
        .filter(|&&x| bin_of(x, lo, hi, width, nbins) == Some(best))
        .fold((0.0, 0usize), |(s, n), &x| (s + x, n + 1));
    Some(sum / n as f64)
}
