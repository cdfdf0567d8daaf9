//! Upper-bound estimation of the positive proportion among unlabeled cases,
//! and the classification threshold derived from it.
//!
//! The estimator works on the score scale: Gaussian kernel densities are
//! fitted to the positive and unlabeled average scores, their ratio at the
//! unlabeled scores is monotonized and smoothed, and the calibration curve
//! `D(alpha) = alpha - mean(min(alpha * r, 1))` is scanned for the upward
//! bend, located as the argmax of its second derivative. The threshold `t`
//! is then the empirical quantile at which the share of scores above `t`
//! comes closest to the estimated bound.

use serde::Serialize;
use thiserror::Error;

use crate::exec::{self, ExecMode};

/// Minimum sample size for a kernel density estimate.
pub const MIN_KDE_SCORES: usize = 5;

/// Default grid step for the D-curve.
pub const DEFAULT_GRID_STEP: f64 = 0.001;

/// Default rolling-median window (odd).
pub const DEFAULT_MEDIAN_WINDOW: usize = 9;

/// Second-derivative magnitudes below this count as a flat curve.
const FLAT_CURVE_EPS: f64 = 1e-9;

/// Ratio denominators below this trigger the sparse-tail guard.
const RATIO_DENOMINATOR_EPS: f64 = 1e-10;

/// Kernel contributions beyond this many bandwidths are dropped.
const KERNEL_CUTOFF: f64 = 8.0;

#[derive(Debug, Error)]
pub enum AlphaError {
    #[error("kernel density estimation requires at least {min} scores, got {n}")]
    TooFewScores { n: usize, min: usize },
    #[error("bandwidth must be positive")]
    NonPositiveBandwidth,
    #[error("grid step must be in (0, 0.1], got {0}")]
    InvalidGridStep(f64),
    #[error(
        "D-curve second derivative is numerically zero everywhere: positive and unlabeled \
         score distributions are indistinguishable"
    )]
    FlatCurve(Option<Box<CalibrationDiagnostics>>),
}

/// Bandwidth selection for the score KDEs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    /// Rule-of-thumb bandwidth `0.9 * min(sd, IQR/1.349) * n^(-1/5)`, with
    /// fallbacks for degenerate spreads.
    Silverman,
    Fixed(f64),
}

/// Gaussian kernel density over [0, 1] with boundary reflection at 0 and 1.
#[derive(Debug, Clone)]
pub struct DensityEstimate {
    /// Sample points, sorted ascending.
    points: Vec<f64>,
    bandwidth: f64,
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    // linear interpolation between order statistics
    let n = sorted.len();
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = (sorted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let mut lo = sd.min(iqr / 1.349);
    if lo <= 0.0 {
        // degenerate spread: fall back like R's bw.nrd0 so identical scores
        // still yield a positive bandwidth rather than NaN
        lo = if sd > 0.0 {
            sd
        } else if sorted[0].abs() > 0.0 {
            sorted[0].abs()
        } else {
            1.0
        };
    }
    0.9 * lo * n.powf(-0.2)
}

impl DensityEstimate {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    /// Windowed Gaussian sum around `center` over the sorted samples.
    fn kernel_sum(&self, center: f64) -> f64 {
        let cut = KERNEL_CUTOFF * self.bandwidth;
        let lo = self.points.partition_point(|&p| p < center - cut);
        let hi = self.points.partition_point(|&p| p <= center + cut);
        self.points[lo..hi]
            .iter()
            .map(|&p| {
                let z = (center - p) / self.bandwidth;
                (-0.5 * z * z).exp()
            })
            .sum()
    }

    /// Density at `x`, reflecting mass at both boundaries (first-order
    /// images on each side).
    pub fn evaluate(&self, x: f64) -> f64 {
        let norm = (2.0 * std::f64::consts::PI).sqrt()
            * self.points.len() as f64
            * self.bandwidth;
        let mirrors = [x, -x, 2.0 - x, x - 2.0, x + 2.0, -x - 2.0];
        mirrors.iter().map(|&m| self.kernel_sum(m)).sum::<f64>() / norm
    }

    pub fn evaluate_many(&self, xs: &[f64], mode: ExecMode) -> Vec<f64> {
        exec::map_slice(mode, xs, |&x| self.evaluate(x))
    }

    /// Simpson integral of the density over [0, 1] on `2n + 1` grid points.
    pub fn integral_on_grid(&self, n: usize, mode: ExecMode) -> f64 {
        let m = 2 * n;
        let h = 1.0 / m as f64;
        let values = self.evaluate_many(
            &(0..=m).map(|i| i as f64 * h).collect::<Vec<_>>(),
            mode,
        );
        let mut sum = values[0] + values[m];
        for (i, v) in values.iter().enumerate().take(m).skip(1) {
            sum += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        sum * h / 3.0
    }
}

/// Fit a boundary-reflected Gaussian KDE to scores in [0, 1].
pub fn estimate_kde(scores: &[f64], rule: BandwidthRule) -> Result<DensityEstimate, AlphaError> {
    if scores.len() < MIN_KDE_SCORES {
        return Err(AlphaError::TooFewScores {
            n: scores.len(),
            min: MIN_KDE_SCORES,
        });
    }
    let mut points = scores.to_vec();
    points.sort_unstable_by(f64::total_cmp);
    let bandwidth = match rule {
        BandwidthRule::Silverman => silverman_bandwidth(&points),
        BandwidthRule::Fixed(h) => h,
    };
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(AlphaError::NonPositiveBandwidth);
    }
    Ok(DensityEstimate { points, bandwidth })
}

/// The density ratio `f_p / f_u` at the sorted unlabeled scores, in its raw,
/// monotonized, and smoothed forms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityRatio {
    /// Unlabeled scores, sorted ascending.
    pub scores: Vec<f64>,
    pub raw: Vec<f64>,
    pub monotone: Vec<f64>,
    /// Final ratio: monotonized, rolling-median smoothed, re-monotonized,
    /// and scaled down to unit mean when the empirical mean exceeds 1.
    pub smoothed: Vec<f64>,
    /// The divisor applied in that last step (1.0 when no scaling).
    pub mean_divisor: f64,
}

fn running_max(values: &mut [f64]) {
    let mut hi = f64::NEG_INFINITY;
    for v in values.iter_mut() {
        hi = hi.max(*v);
        *v = hi;
    }
}

/// Centered rolling median whose window shrinks symmetrically at the edges,
/// so every window has odd length and `window = 1` is the identity.
fn rolling_median(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window % 2 == 1, "median window must be odd");
    let k = window / 2;
    let n = values.len();
    let mut out = Vec::with_capacity(n);
    let mut buf = Vec::with_capacity(window);
    for i in 0..n {
        let r = k.min(i).min(n - 1 - i);
        buf.clear();
        buf.extend_from_slice(&values[i - r..=i + r]);
        buf.sort_unstable_by(f64::total_cmp);
        out.push(buf[r]);
    }
    out
}

/// Compute the density ratio at the sorted unlabeled scores and enforce
/// partial monotonicity: running maximum, rolling median of `median_window`,
/// then a second running maximum to restore any order the median perturbed.
///
/// Where the unlabeled density falls below `1e-10` the raw ratio is replaced
/// by the largest finite ratio seen so far, which keeps sparse tails from
/// blowing up the curve. A final scaling caps the empirical mean of the
/// smoothed ratio at 1, the value it has in expectation, so the D-curve
/// stays within `[0, alpha]`.
pub fn density_ratio(
    pos: &DensityEstimate,
    unl: &DensityEstimate,
    sorted_unlabeled: &[f64],
    median_window: usize,
    mode: ExecMode,
) -> DensityRatio {
    debug_assert!(sorted_unlabeled.windows(2).all(|w| w[0] <= w[1]));
    let fp = pos.evaluate_many(sorted_unlabeled, mode);
    let fu = unl.evaluate_many(sorted_unlabeled, mode);
    let mut raw = Vec::with_capacity(sorted_unlabeled.len());
    let mut last_finite = 0.0f64;
    for (p, u) in fp.iter().zip(&fu) {
        if *u < RATIO_DENOMINATOR_EPS {
            raw.push(last_finite);
        } else {
            let r = p / u;
            last_finite = last_finite.max(r);
            raw.push(r);
        }
    }
    let mut monotone = raw.clone();
    running_max(&mut monotone);
    let mut smoothed = rolling_median(&monotone, median_window);
    running_max(&mut smoothed);
    let mean = smoothed.iter().sum::<f64>() / smoothed.len().max(1) as f64;
    let mean_divisor = if mean > 1.0 { mean } else { 1.0 };
    if mean_divisor != 1.0 {
        for v in &mut smoothed {
            *v /= mean_divisor;
        }
    }
    DensityRatio {
        scores: sorted_unlabeled.to_vec(),
        raw,
        monotone,
        smoothed,
        mean_divisor,
    }
}

/// The calibration curve `D(alpha)` on a regular grid, with its smoothed
/// second derivative (`None` where the finite-difference stencil does not
/// fit).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DCurve {
    pub alphas: Vec<f64>,
    pub d: Vec<f64>,
    pub d2: Vec<Option<f64>>,
}

/// Evaluate `D(alpha) = alpha - mean(min(alpha * r, 1))` over the grid
/// `{step, 2 step, ..., 1}` using the smoothed ratio.
pub fn build_d_curve(
    ratio: &DensityRatio,
    grid_step: f64,
    mode: ExecMode,
) -> Result<DCurve, AlphaError> {
    if !(grid_step > 0.0 && grid_step <= 0.1) {
        return Err(AlphaError::InvalidGridStep(grid_step));
    }
    let m = (1.0 / grid_step).round() as usize;
    let alphas: Vec<f64> = (1..=m).map(|j| j as f64 * grid_step).collect();
    let r = &ratio.smoothed;
    let n = r.len() as f64;
    let d = exec::map_slice(mode, &alphas, |&alpha| {
        let e: f64 = r.iter().map(|&ri| (alpha * ri).min(1.0)).sum::<f64>() / n;
        alpha - e
    });
    Ok(curve_from_d_values(alphas, d))
}

/// Attach the smoothed central-difference second derivative to given
/// D values. Stencil radius is 5 grid steps (shrunk on short grids), and a
/// 5-point moving average suppresses grid noise before the argmax.
pub fn curve_from_d_values(alphas: Vec<f64>, d: Vec<f64>) -> DCurve {
    let m = alphas.len();
    let step = if m >= 2 { alphas[1] - alphas[0] } else { 1.0 };
    let s = 5.min((m.saturating_sub(1)) / 2).max(1);
    let mut raw_d2 = vec![None; m];
    for j in s..m.saturating_sub(s) {
        let dd = (d[j + s] - 2.0 * d[j] + d[j - s]) / ((s as f64 * step) * (s as f64 * step));
        raw_d2[j] = Some(dd);
    }
    // centered moving average over the valid range, window shrunk at edges
    let k = 2usize;
    let mut d2 = vec![None; m];
    for j in 0..m {
        if raw_d2[j].is_none() {
            continue;
        }
        let lo = j.saturating_sub(k).max(s);
        let hi = (j + k).min(m.saturating_sub(s + 1));
        let mut sum = 0.0;
        let mut cnt = 0usize;
        for v in raw_d2[lo..=hi].iter().flatten() {
            sum += v;
            cnt += 1;
        }
        d2[j] = Some(sum / cnt as f64);
    }
    DCurve { alphas, d, d2 }
}

/// The grid point maximizing the smoothed second derivative of D; ties go
/// to the smallest alpha. A numerically flat curve is an error the caller
/// must handle.
pub fn find_alpha_star(curve: &DCurve) -> Result<f64, AlphaError> {
    let mut best: Option<(f64, f64)> = None; // (d2, alpha)
    for (alpha, d2) in curve.alphas.iter().zip(&curve.d2) {
        if let Some(v) = d2 {
            if best.map_or(true, |(b, _)| *v > b) {
                best = Some((*v, *alpha));
            }
        }
    }
    let flat = curve
        .d2
        .iter()
        .flatten()
        .all(|v| v.abs() <= FLAT_CURVE_EPS);
    match best {
        Some((_, alpha)) if !flat => Ok(alpha),
        _ => Err(AlphaError::FlatCurve(None)),
    }
}

/// The threshold `t` whose positive-prediction share `#{score > t}/N` is
/// closest to `alpha_star` among achievable counts; exact ties prefer the
/// smaller count (the larger threshold).
pub fn threshold_from_alpha(alpha_star: f64, all_avg_scores: &[f64]) -> f64 {
    assert!(!all_avg_scores.is_empty(), "scores must be non-empty");
    let mut sorted = all_avg_scores.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a)); // descending
    let n = sorted.len();
    let target = alpha_star * n as f64;

    // candidate thresholds: each distinct score value v yields the count
    // #{score > v}; t = 0 additionally yields #{score > 0}
    let mut best: Option<(f64, usize, f64)> = None; // (|count-target|, count, t)
    let mut consider = |count: usize, t: f64| {
        let dist = (count as f64 - target).abs();
        if best.map_or(true, |(bd, bc, _)| dist < bd || (dist == bd && count < bc)) {
            best = Some((dist, count, t));
        }
    };
    let mut i = 0usize;
    while i < n {
        let v = sorted[i];
        consider(i, v); // i values are strictly greater than v
        while i < n && sorted[i] == v {
            i += 1;
        }
    }
    if sorted[n - 1] > 0.0 {
        consider(n, 0.0);
    }
    best.expect("at least one candidate").2
}

/// Estimation metadata recorded alongside the result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationMeta {
    pub bandwidth_positive: f64,
    pub bandwidth_unlabeled: f64,
    pub grid_step: f64,
    pub median_window: usize,
    pub ratio_mean_divisor: f64,
    pub n_positive: usize,
    pub n_unlabeled: usize,
    pub n_scored: usize,
}

/// Everything the calibration produced, kept for the diagnostics file even
/// when the bend search fails.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationDiagnostics {
    pub curve: DCurve,
    pub meta: CalibrationMeta,
}

/// Estimated upper bound and derived threshold, with all intermediates.
#[derive(Debug, Clone, Serialize)]
pub struct AlphaCalibration {
    pub alpha_star: f64,
    pub threshold: f64,
    pub curve: DCurve,
    #[serde(skip)]
    pub ratio: DensityRatio,
    pub meta: CalibrationMeta,
}

/// Tuning knobs for the calibration.
#[derive(Debug, Clone, Copy)]
pub struct AlphaConfig {
    pub bandwidth: BandwidthRule,
    pub grid_step: f64,
    pub median_window: usize,
    pub exec: ExecMode,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        AlphaConfig {
            bandwidth: BandwidthRule::Silverman,
            grid_step: DEFAULT_GRID_STEP,
            median_window: DEFAULT_MEDIAN_WINDOW,
            exec: ExecMode::default(),
        }
    }
}

/// Full calibration: KDEs of the positive and unlabeled average scores,
/// density ratio, D-curve, bend search, and threshold over all scored
/// cases. On a flat curve the error carries the diagnostics so callers can
/// persist them.
pub fn calibrate(
    positive_scores: &[f64],
    unlabeled_scores: &[f64],
    all_avg_scores: &[f64],
    config: &AlphaConfig,
) -> Result<AlphaCalibration, AlphaError> {
    let kde_pos = estimate_kde(positive_scores, config.bandwidth)?;
    let kde_unl = estimate_kde(unlabeled_scores, config.bandwidth)?;
    let mut y_u = unlabeled_scores.to_vec();
    y_u.sort_unstable_by(f64::total_cmp);
    let ratio = density_ratio(&kde_pos, &kde_unl, &y_u, config.median_window, config.exec);
    let curve = build_d_curve(&ratio, config.grid_step, config.exec)?;
    let meta = CalibrationMeta {
        bandwidth_positive: kde_pos.bandwidth(),
        bandwidth_unlabeled: kde_unl.bandwidth(),
        grid_step: config.grid_step,
        median_window: config.median_window,
        ratio_mean_divisor: ratio.mean_divisor,
        n_positive: positive_scores.len(),
        n_unlabeled: unlabeled_scores.len(),
        n_scored: all_avg_scores.len(),
    };
    let alpha_star = match find_alpha_star(&curve) {
        Ok(a) => a,
        Err(AlphaError::FlatCurve(_)) => {
            return Err(AlphaError::FlatCurve(Some(Box::new(
                CalibrationDiagnostics { curve, meta },
            ))))
        }
        Err(e) => return Err(e),
    };
    let threshold = threshold_from_alpha(alpha_star, all_avg_scores);
    Ok(AlphaCalibration {
        alpha_star,
        threshold,
        curve,
        ratio,
        meta,
    })
}
