use alloc::vec::Vec;

use super::{build_time_series, fit_exponential_with, FitOptions, YearWindow, YearlyCounts};
use crate::histogram::histogram_mode;
use crate::{Error, Result};

/// Calibration needs a population of fits to read a mode from.
pub const MIN_CALIBRATION_TOPICS: usize = 100;
/// χ²ᵣ range inspected for the mode.
pub const MODE_RANGE: (f64, f64) = (0.0, 5.0);
pub const MIN_BIN_WIDTH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CalibrationStatus {
    Converged,
    MaxIterations,
    /// Too few fittable topics; the scale was left at 1.
    Skipped { fittable: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationResult {
    pub scale: f64,
    pub mode_chi2: f64,
    pub iterations: usize,
    pub status: CalibrationStatus,
}

/// Search for the error-bar scale `s` that centers the χ²ᵣ histogram mode
/// on 1: fit everything at `s`, read the mode `m`, set `s ← s·√m`, repeat
/// until `|m − 1| ≤ tol` or `max_iter` passes.
pub fn calibrate_error_scale(
    counts: &[YearlyCounts],
    window: YearWindow,
    tol: f64,
    max_iter: usize,
    opts: &FitOptions,
) -> Result<CalibrationResult> {
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidInput("calibration needs tol > 0 and max_iter ≥ 1".into()));
    }
    let mut scale = 1.0;
    let mut mode = f64::NAN;
    for iteration in 1..=max_iter {
        let set = build_time_series(counts, window, scale)?;
        let chi2: Vec<f64> = set
            .series
            .iter()
            .filter_map(|ts| fit_exponential_with(ts, opts).ok())
            .filter(|f| f.converged && f.chi2_red.is_finite())
            .map(|f| f.chi2_red)
            .collect();
        if chi2.len() < MIN_CALIBRATION_TOPICS {
            return Ok(CalibrationResult {
                scale: 1.0,
                mode_chi2: f64::NAN,
                iterations: 0,
                status: CalibrationStatus::Skipped { fittable: chi2.len() },
            });
        }
        if chi2.iter().all(|&c| c < 1e-12) {
            return Err(Error::DegenerateCalibration);
        }
        mode = histogram_mode(&chi2, MODE_RANGE.0, MODE_RANGE.1, MIN_BIN_WIDTH).ok_or(Error::DegenerateCalibration)?;
        if !(mode > 0.0) {
            return Err(Error::DegenerateCalibration);
        }
        if (mode - 1.0).abs() <= tol {
            return Ok(CalibrationResult { scale, mode_chi2: mode, iterations: iteration, status: CalibrationStatus::Converged });
        }
        if iteration < max_iter {
            scale *= libm::sqrt(mode);
        }
    }
    Ok(CalibrationResult { scale, mode_chi2: mode, iterations: max_iter, status: CalibrationStatus::MaxIterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::CovarianceScaling;

    /// Series whose exact-fit χ²ᵣ at unit scale is a chosen constant: a
    /// clean exponential with an alternating ±δ perturbation, δ solved so
    /// the minimized χ² is `3·target`.
    fn ensemble(target: f64, topics: usize) -> Vec<YearlyCounts> {
        (0..topics)
            .map(|i| {
                let base = 400.0 + i as f64;
                let vals: Vec<f64> = (0..5).map(|t| base * libm::exp(0.1 * t as f64)).collect();
                let fitted = |delta: f64| {
                    let yc = YearlyCounts::new(
                        i as u32,
                        vals.iter().enumerate().map(|(t, v)| {
                            let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
                            (2014 + t as i32, v + sign * delta * libm::sqrt(*v))
                        }),
                    );
                    let set = build_time_series(core::slice::from_ref(&yc), YearWindow::default(), 1.0).unwrap();
                    (yc, fit_exponential_with(&set.series[0], &FitOptions::default()).unwrap().chi2_red)
                };
                // bisection on δ
                let (mut lo, mut hi) = (0.0, 10.0);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if fitted(mid).1 < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                fitted(0.5 * (lo + hi)).0
            })
            .collect()
    }

    #[test]
    fn uniform_chi2_of_four_gives_scale_two() {
        let counts = ensemble(4.0, 120);
        let opts = FitOptions { covariance: CovarianceScaling::Reduced, ..Default::default() };
        let cal = calibrate_error_scale(&counts, YearWindow::default(), 0.05, 10, &opts).unwrap();
        assert_eq!(cal.status, CalibrationStatus::Converged);
        assert_eq!(cal.iterations, 2);
        assert!((cal.scale - 2.0).abs() < 1e-6, "{}", cal.scale);
        assert!((cal.mode_chi2 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn already_calibrated_is_fixed_point() {
        let counts = ensemble(1.0, 120);
        let cal = calibrate_error_scale(&counts, YearWindow::default(), 0.05, 10, &FitOptions::default()).unwrap();
        assert_eq!(cal.status, CalibrationStatus::Converged);
        assert_eq!(cal.iterations, 1);
        assert_eq!(cal.scale, 1.0);
    }

    #[test]
    fn small_population_skips() {
        let counts = ensemble(2.0, 20);
        let cal = calibrate_error_scale(&counts, YearWindow::default(), 0.05, 10, &FitOptions::default()).unwrap();
        assert_eq!(cal.status, CalibrationStatus::Skipped { fittable: 20 });
        assert_eq!(cal.scale, 1.0);
    }

    #[test]
    fn exact_models_are_degenerate() {
        let counts: Vec<YearlyCounts> = (0..150)
            .map(|i| YearlyCounts::new(i, (0..5).map(|t| (2014 + t, 50.0 * libm::exp(0.2 * t as f64)))))
            .collect();
        let r = calibrate_error_scale(&counts, YearWindow::default(), 0.05, 10, &FitOptions::default());
        assert_eq!(r, Err(Error::DegenerateCalibration));
    }
}
