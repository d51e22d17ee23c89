//! Weighted nonlinear least squares for `N = N0·e^(k·t)`.
//!
//! Two parameters only, so the damped normal equations are solved in closed
//! form. The damping follows Marquardt: `(A + λ·diag A)·δ = Jᵀr`, with λ
//! divided by 10 on an accepted step and multiplied by 10 on a rejected one.

use super::{cagr_error, cagr_from_k, TopicTimeSeries};
use crate::{Error, Result};

/// How parameter standard errors are derived from the inverse of the
/// weighted normal-equations matrix `C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CovarianceScaling {
    /// `C·χ²ᵣ`: error bars are treated as relative weights only.
    Reduced,
    /// `C·max(χ²ᵣ, 1)`: the error bars are taken at face value unless the
    /// residuals show them to be too small.
    #[default]
    ReducedAtLeastOne,
    /// `C` as is.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Stop when an accepted step lowers χ² by less than this fraction.
    pub chi2_rel_tol: f64,
    /// Stop when the step norm falls below this.
    pub step_tol: f64,
    pub lambda0: f64,
    pub covariance: CovarianceScaling,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 200, chi2_rel_tol: 1e-10, step_tol: 1e-12, lambda0: 1e-3, covariance: CovarianceScaling::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitResult {
    pub n0_hat: f64,
    pub k_hat: f64,
    pub err_n0: f64,
    pub err_k: f64,
    /// Percent per year, `100·(e^k − 1)`.
    pub cagr: f64,
    /// `100·e^k·err_k`.
    pub err_cagr: f64,
    pub chi2: f64,
    pub chi2_red: f64,
    pub dof: usize,
    pub converged: bool,
    pub iterations: usize,
}

const LAMBDA_MAX: f64 = 1e16;
const EXP_LIMIT: f64 = 700.0;

struct Problem<'a> {
    t: &'a [i32],
    n: &'a [f64],
    w: alloc::vec::Vec<f64>,
}

/// Normal equations at a parameter point.
struct Normal {
    a: [[f64; 2]; 2],
    g: [f64; 2],
    chi2: f64,
}

impl Problem<'_> {
    fn chi2(&self, n0: f64, k: f64) -> f64 {
        if !(n0 >= 0.0) || !n0.is_finite() || !k.is_finite() {
            return f64::INFINITY;
        }
        let mut chi2 = 0.0;
        for ((&t, &n), &w) in self.t.iter().zip(self.n).zip(&self.w) {
            let kt = k * f64::from(t);
            if kt > EXP_LIMIT {
                return f64::INFINITY;
            }
            let r = (n - n0 * libm::exp(kt)) * w;
            chi2 += r * r;
        }
        chi2
    }

    fn normal(&self, n0: f64, k: f64) -> Normal {
        let mut a = [[0.0; 2]; 2];
        let mut g = [0.0; 2];
        let mut chi2 = 0.0;
        for ((&t, &n), &w) in self.t.iter().zip(self.n).zip(&self.w) {
            let t = f64::from(t);
            let e = libm::exp(k * t);
            let r = (n - n0 * e) * w;
            let j = [e * w, n0 * t * e * w];
            for p in 0..2 {
                g[p] += j[p] * r;
                for q in 0..2 {
                    a[p][q] += j[p] * j[q];
                }
            }
            chi2 += r * r;
        }
        Normal { a, g, chi2 }
    }
}

fn solve2(a: [[f64; 2]; 2], b: [f64; 2]) -> Option<[f64; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([(b[0] * a[1][1] - b[1] * a[0][1]) / det, (a[0][0] * b[1] - a[1][0] * b[0]) / det])
}

fn invert2(a: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    Some([[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]])
}

/// Log-linear least squares on the positive points, or a flat start when
/// fewer than two points are positive.
fn initial_guess(ts: &TopicTimeSeries) -> (f64, f64) {
    let pts: alloc::vec::Vec<(f64, f64)> = ts
        .t
        .iter()
        .zip(&ts.n)
        .filter(|(_, &n)| n > 0.0)
        .map(|(&t, &n)| (f64::from(t), libm::log(n)))
        .collect();
    if pts.len() < 2 {
        let mean = ts.n.iter().sum::<f64>() / ts.n.len() as f64;
        return (mean, 0.0);
    }
    let m = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm) * (p.0 - tm)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let k = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (libm::exp(ym - k * tm), k)
}

pub fn fit_exponential(ts: &TopicTimeSeries) -> Result<FitResult> {
    fit_exponential_with(ts, &FitOptions::default())
}

pub fn fit_exponential_with(ts: &TopicTimeSeries, opts: &FitOptions) -> Result<FitResult> {
    ts.validate()?;
    if ts.len() < super::MIN_FIT_POINTS {
        return Err(Error::InvalidInput(alloc::format!(
            "at least {} points required, got {}",
            super::MIN_FIT_POINTS,
            ts.len()
        )));
    }
    if ts.n.iter().all(|&x| x == 0.0) {
        return Err(Error::Unfittable { topic_id: ts.topic_id });
    }

    let prob = Problem { t: &ts.t, n: &ts.n, w: ts.sigma.iter().map(|s| 1.0 / s).collect() };
    let (mut n0, mut k) = initial_guess(ts);
    let mut lambda = opts.lambda0;
    let mut cur = prob.normal(n0, k);
    let mut converged = cur.chi2 == 0.0;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let d = [cur.a[0][0].max(f64::MIN_POSITIVE), cur.a[1][1].max(f64::MIN_POSITIVE)];
        let damped = [[cur.a[0][0] + lambda * d[0], cur.a[0][1]], [cur.a[1][0], cur.a[1][1] + lambda * d[1]]];
        let Some(step) = solve2(damped, cur.g) else {
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                converged = true;
            }
            continue;
        };
        let trial = (n0 + step[0], k + step[1]);
        let trial_chi2 = prob.chi2(trial.0, trial.1);
        if trial_chi2 < cur.chi2 {
            let drop = (cur.chi2 - trial_chi2) / cur.chi2;
            let step_norm = libm::hypot(step[0], step[1]);
            n0 = trial.0;
            k = trial.1;
            cur = prob.normal(n0, k);
            lambda = (lambda / 10.0).max(1e-300);
            if drop < opts.chi2_rel_tol || step_norm < opts.step_tol || cur.chi2 == 0.0 {
                converged = true;
            }
        } else {
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                // no descent direction left at working precision
                converged = true;
            }
        }
    }

    // Undamped Gauss–Newton polish so the optimum is pinned to working
    // precision rather than to the stopping tolerance.
    // Steps are judged by their size, which keeps shrinking quadratically
    // near the optimum, rather than by χ², which stops resolving changes.
    if converged {
        let mut last = f64::INFINITY;
        for _ in 0..8 {
            let Some(step) = solve2(cur.a, cur.g) else { break };
            let size = (step[0] / n0.abs().max(f64::MIN_POSITIVE)).abs() + step[1].abs();
            let trial = (n0 + step[0], k + step[1]);
            let trial_chi2 = prob.chi2(trial.0, trial.1);
            if !(size < last) || !(trial_chi2 <= cur.chi2 * (1.0 + 1e-9)) || (trial.0 == n0 && trial.1 == k) {
                break;
            }
            last = size;
            n0 = trial.0;
            k = trial.1;
            cur = prob.normal(n0, k);
        }
    }

    let dof = ts.len() - 2;
    let chi2 = cur.chi2;
    let chi2_red = chi2 / dof as f64;
    let factor = match opts.covariance {
        CovarianceScaling::Reduced => chi2_red,
        CovarianceScaling::ReducedAtLeastOne => chi2_red.max(1.0),
        CovarianceScaling::Absolute => 1.0,
    };
    let (err_n0, err_k) = match invert2(cur.a) {
        Some(c) => (libm::sqrt(c[0][0].max(0.0) * factor), libm::sqrt(c[1][1].max(0.0) * factor)),
        None => (f64::INFINITY, f64::INFINITY),
    };

    Ok(FitResult {
        n0_hat: n0,
        k_hat: k,
        err_n0,
        err_k,
        cagr: cagr_from_k(k),
        err_cagr: cagr_error(k, err_k),
        chi2,
        chi2_red,
        dof,
        converged,
        iterations,
    })
}
