//! ROI statistics, SNR and its boost accounting, and Michelson visibility.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Raster2D, Roi};

/// Sample mean, unbiased standard deviation and pixel count of a ROI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn roi_stats(img: &Raster2D, roi: &Roi) -> Result<RoiStats> {
    roi.check_within(img)?;
    let n = roi.area();
    if n < 2 {
        return Err(Error::invariant("roi", format!("area {n} is below 2 pixels")));
    }
    let mean = roi.values(img).sum::<f64>() / n as f64;
    let var = roi.values(img).map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(RoiStats {
        mean,
        std: var.sqrt(),
        n,
    })
}

/// How SNR is estimated from the ROIs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrEstimator {
    /// `|mean(signal) − mean(background)| / std(background)`.
    #[default]
    DifferenceOfMeans,
    /// `|mean(signal)| / std(signal)`; the background ROI is ignored.
    MeanOverStd,
}

/// SNR with the default difference-of-means estimator.
pub fn snr(img: &Raster2D, signal: &Roi, background: &Roi) -> Result<f64> {
    snr_with(img, signal, background, SnrEstimator::default())
}

pub fn snr_with(
    img: &Raster2D,
    signal: &Roi,
    background: &Roi,
    estimator: SnrEstimator,
) -> Result<f64> {
    Ok(snr_parts(img, signal, background, estimator)?.value)
}

struct SnrParts {
    value: f64,
    signal: RoiStats,
    background: RoiStats,
}

fn snr_parts(
    img: &Raster2D,
    signal: &Roi,
    background: &Roi,
    estimator: SnrEstimator,
) -> Result<SnrParts> {
    if signal.overlaps(background) {
        return Err(Error::invariant("roi", "signal and background ROIs overlap"));
    }
    let s = roi_stats(img, signal)?;
    let b = roi_stats(img, background)?;
    let value = match estimator {
        SnrEstimator::DifferenceOfMeans => {
            if b.std == 0.0 {
                return Err(Error::ZeroBackgroundStd);
            }
            (s.mean - b.mean).abs() / b.std
        }
        SnrEstimator::MeanOverStd => {
            if s.std == 0.0 {
                return Err(Error::ZeroBackgroundStd);
            }
            s.mean.abs() / s.std
        }
    };
    Ok(SnrParts {
        value,
        signal: s,
        background: b,
    })
}

/// Pre/post SNR comparison with collimation accounting. Serializes with its
/// inputs for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrReport {
    pub snr_pre: f64,
    pub snr_post: f64,
    pub snr_boost: f64,
    pub collimation_penalty_f: f64,
    pub net_boost: f64,
    pub brilliance_boost: f64,
    pub theta_used: f64,
    pub theta0: f64,
    pub estimator: SnrEstimator,
    pub roi_signal: Option<Roi>,
    pub roi_background: Option<Roi>,
    pub pre_signal: Option<RoiStats>,
    pub pre_background: Option<RoiStats>,
    pub post_signal: Option<RoiStats>,
    pub post_background: Option<RoiStats>,
}

impl SnrReport {
    /// Accounting from already measured SNR values.
    pub fn from_snr(snr_pre: f64, snr_post: f64, theta_used: f64, theta0: f64) -> Result<Self> {
        if !(theta_used.is_finite() && theta_used > 0.0 && theta0.is_finite() && theta0 >= theta_used) {
            return Err(Error::invariant(
                "theta",
                format!("need theta0 >= theta_used > 0, got {theta0} and {theta_used}"),
            ));
        }
        if !(snr_pre.is_finite() && snr_pre > 0.0 && snr_post.is_finite()) {
            return Err(Error::invariant(
                "snr",
                format!("pre-retrieval SNR must be positive, got {snr_pre}"),
            ));
        }
        let snr_boost = snr_post / snr_pre;
        let f = theta_used / theta0;
        let net_boost = snr_boost * f;
        Ok(Self {
            snr_pre,
            snr_post,
            snr_boost,
            collimation_penalty_f: f,
            net_boost,
            brilliance_boost: net_boost * net_boost,
            theta_used,
            theta0,
            estimator: SnrEstimator::default(),
            roi_signal: None,
            roi_background: None,
            pre_signal: None,
            pre_background: None,
            post_signal: None,
            post_background: None,
        })
    }
}

/// Measure SNR before and after retrieval on the same ROIs and account for
/// the collimation penalty `f = Θ_used / Θ₀`.
pub fn snr_boost_report(
    pre: &Raster2D,
    post: &Raster2D,
    signal: &Roi,
    background: &Roi,
    theta_used: f64,
    theta0: f64,
    estimator: SnrEstimator,
) -> Result<SnrReport> {
    let a = snr_parts(pre, signal, background, estimator)?;
    let b = snr_parts(post, signal, background, estimator)?;
    let mut report = SnrReport::from_snr(a.value, b.value, theta_used, theta0)?;
    report.estimator = estimator;
    report.roi_signal = Some(*signal);
    report.roi_background = Some(*background);
    report.pre_signal = Some(a.signal);
    report.pre_background = Some(a.background);
    report.post_signal = Some(b.signal);
    report.post_background = Some(b.background);
    Ok(report)
}

/// `(max − min) / (max + min)` over the ROI.
pub fn michelson_visibility(img: &Raster2D, roi: &Roi) -> Result<f64> {
    visibility_from(img, roi, None)
}

/// Visibility with the extremes replaced by the `clip` and `1 − clip`
/// quantiles, e.g. `0.005` to ignore noise spikes.
pub fn michelson_visibility_clipped(img: &Raster2D, roi: &Roi, clip: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&clip) {
        return Err(Error::invariant("clip", format!("{clip} must be in [0, 0.5)")));
    }
    visibility_from(img, roi, Some(clip))
}

fn visibility_from(img: &Raster2D, roi: &Roi, clip: Option<f64>) -> Result<f64> {
    roi.check_within(img)?;
    let (min, max) = match clip {
        None => roi
            .values(img)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v))),
        Some(c) => {
            let mut v: Vec<f64> = roi.values(img).collect();
            v.sort_by(f64::total_cmp);
            let last = v.len() - 1;
            let lo = (c * last as f64).round() as usize;
            let hi = last - lo;
            (v[lo], v[hi])
        }
    };
    let sum = max + min;
    if !(sum > 0.0) {
        return Err(Error::VisibilityUndefined(sum));
    }
    Ok((max - min) / sum)
}
