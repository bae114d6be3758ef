//! Closed-form experiment-design formulas: refractive decrement and
//! attenuation, the retrieval filter width `τ`, collimation limits, SNR gain
//! and effective-brilliance accounting, near-field validity, and grating
//! visibility.
//!
//! Every function is pure. Where a material carries a dispersion table its
//! coefficients are taken at the geometry's wavelength.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BeamGeometry;
use crate::material::{Coefficients, Material};

/// Near-field validity threshold for the Fresnel number.
pub const FRESNEL_VALID_MIN: f64 = 10.0;

/// Attenuation level above which the weak-attenuation grating formulas are
/// flagged as degraded.
pub const WEAK_ATTENUATION_LIMIT: f64 = 0.1;

/// Refractive index decrement `δ = b ρ λ² / (2π)`.
pub fn refractive_decrement(mat: &Material, rho: f64, lambda: f64) -> Result<f64> {
    let c = mat.coefficients_at(lambda)?;
    Ok(c.b * rho * lambda * lambda / (2.0 * PI))
}

/// Linear attenuation coefficient `μ = σ ρ` using the nominal cross section.
pub fn attenuation_coefficient(mat: &Material, rho: f64) -> f64 {
    mat.cross_section() * rho
}

fn coefficients(mat: &Material, geom: &BeamGeometry) -> Result<Coefficients> {
    mat.coefficients_at(geom.wavelength())
}

/// Phase-contrast strength `λ² b Δ_eff / (2π σ)` before blur correction.
pub fn phase_contrast_strength(mat: &Material, geom: &BeamGeometry) -> Result<f64> {
    let c = coefficients(mat, geom)?;
    let lambda = geom.wavelength();
    Ok(lambda * lambda * c.b * geom.effective_distance() / (2.0 * PI * c.sigma))
}

/// Retrieval filter parameter `τ = λ² b Δ_eff / (2π σ) − 𝒜/8` in m².
///
/// A non-positive result is returned as is; callers that build a filter from
/// it reject it, the design report flags it.
pub fn tau(mat: &Material, geom: &BeamGeometry) -> Result<f64> {
    Ok(phase_contrast_strength(mat, geom)? - geom.blur_area() / 8.0)
}

/// Largest divergence keeping `τ > 0`: `Θ_c = 2λ √(b / (π σ Δ_eff))`.
pub fn theta_critical(mat: &Material, geom: &BeamGeometry) -> Result<f64> {
    let c = coefficients(mat, geom)?;
    if c.b <= 0.0 {
        return Err(Error::NonPositiveScatteringLength(c.b));
    }
    let delta = geom.effective_distance();
    if delta <= 0.0 {
        return Err(Error::ZeroPropagationDistance);
    }
    Ok(2.0 * geom.wavelength() * (c.b / (PI * c.sigma * delta)).sqrt())
}

/// Divergence maximizing `τ(Θ)·Θ`: `Θ_c / √3`.
pub fn theta_optimum(mat: &Material, geom: &BeamGeometry) -> Result<f64> {
    Ok(theta_critical(mat, geom)? / 3f64.sqrt())
}

/// Which prefactor to use for the tomographic SNR gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainApproximation {
    /// `0.3 × 4 ≈ 1`, giving `b λ / (2σ)`.
    #[default]
    Simplified,
    /// Keep the 0.3 prefactor on `δ/β`, i.e. 1.2 times the simplified form.
    ThreeTenths,
}

/// Maximum tomographic SNR gain `b λ / (2σ) − π 𝒜 / (8 λ Δ_eff)`.
pub fn snr_gain_max(mat: &Material, geom: &BeamGeometry) -> Result<f64> {
    snr_gain_max_with(mat, geom, GainApproximation::Simplified)
}

pub fn snr_gain_max_with(
    mat: &Material,
    geom: &BeamGeometry,
    approx: GainApproximation,
) -> Result<f64> {
    let c = coefficients(mat, geom)?;
    let lambda = geom.wavelength();
    let delta = geom.effective_distance();
    if delta <= 0.0 {
        return Err(Error::ZeroPropagationDistance);
    }
    let gain = c.b * lambda / (2.0 * c.sigma) - PI * geom.blur_area() / (8.0 * lambda * delta);
    if !(gain > 0.0) {
        return Err(Error::NoRetrievalGain(gain));
    }
    Ok(match approx {
        GainApproximation::Simplified => gain,
        GainApproximation::ThreeTenths => 1.2 * gain,
    })
}

/// Net effective-brilliance accounting against an attenuation-imaging
/// divergence `Θ₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrillianceBoost {
    /// General form at the geometry's own blur area.
    pub value: f64,
    /// Closed form at the optimum divergence, `4 b³ λ⁴ / (9π σ³ Δ_eff Θ₀²)`.
    pub at_optimum: f64,
    /// `value > 1`.
    pub boosts: bool,
    /// Largest `Θ₀` for which the optimum-divergence boost exceeds one.
    pub theta0_boundary: f64,
}

pub fn brilliance_boost_max(
    mat: &Material,
    geom: &BeamGeometry,
    theta0: f64,
) -> Result<BrillianceBoost> {
    if !(theta0.is_finite() && theta0 > 0.0) {
        return Err(Error::invariant("theta0", format!("{theta0} must be positive")));
    }
    let c = coefficients(mat, geom)?;
    if c.b <= 0.0 {
        return Err(Error::NonPositiveScatteringLength(c.b));
    }
    let lambda = geom.wavelength();
    let delta = geom.effective_distance();
    if delta <= 0.0 {
        return Err(Error::ZeroPropagationDistance);
    }
    let (b, sigma) = (c.b, c.sigma);
    let bracket = b * lambda / sigma - PI * geom.blur_area() / (4.0 * lambda * delta);
    let value = b * lambda * lambda / (PI * sigma * delta * theta0 * theta0) * bracket * bracket;
    let optimum_numerator = 4.0 * b.powi(3) * lambda.powi(4) / (9.0 * PI * sigma.powi(3) * delta);
    Ok(BrillianceBoost {
        value,
        at_optimum: optimum_numerator / (theta0 * theta0),
        boosts: value > 1.0,
        theta0_boundary: optimum_numerator.sqrt(),
    })
}

/// Penumbral-blur resolution `R = d Δ_eff / L`.
pub fn penumbral_resolution(geom: &BeamGeometry) -> f64 {
    geom.pinhole_d() * geom.effective_distance() / geom.source_to_sample_l()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FresnelNumber {
    pub value: f64,
    /// `N_F >= 10`.
    pub valid: bool,
    /// `1 < N_F < 10`: near-field model usable with caution.
    pub marginal: bool,
}

/// `N_F = R² / (λ Δ_eff)` with the near-field validity flags.
pub fn fresnel_number(geom: &BeamGeometry) -> Result<FresnelNumber> {
    let delta = geom.effective_distance();
    if delta <= 0.0 {
        return Err(Error::ZeroPropagationDistance);
    }
    let r = penumbral_resolution(geom);
    let value = r * r / (geom.wavelength() * delta);
    Ok(FresnelNumber {
        value,
        valid: value >= FRESNEL_VALID_MIN,
        marginal: value > 1.0 && value < FRESNEL_VALID_MIN,
    })
}

/// Transverse length `ℓ = √τ` of the propagation sharpening.
pub fn sharpening_length(mat: &Material, geom: &BeamGeometry) -> Result<f64> {
    let t = tau(mat, geom)?;
    if t <= 0.0 {
        return Err(Error::NonPositiveTau(t));
    }
    Ok(t.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityPrediction {
    /// Weak-attenuation contact visibility `σ ρ₀`.
    pub v_abs: f64,
    /// Exact contact visibility `tanh(σ ρ₀)`.
    pub v_abs_exact: f64,
    /// Propagated visibility `σ ρ₀ (1 + 4π² τ / p²)`.
    pub v_prop: f64,
    /// `1 + 4π² τ / p²`.
    pub ratio: f64,
    /// `σ ρ₀ > 0.1`.
    pub weak_attenuation_degraded: bool,
}

/// Michelson visibilities of a sinusoidal grating `ρ⊥ = ρ₀ (sin(2πx/p) + 1)`
/// in contact and after propagation.
pub fn visibility_prediction(
    rho0: f64,
    sigma: f64,
    tau: f64,
    period: f64,
) -> Result<VisibilityPrediction> {
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::invariant("period", format!("{period} must be positive")));
    }
    if !(rho0.is_finite() && rho0 >= 0.0) {
        return Err(Error::invariant("rho0", format!("{rho0} must be non-negative")));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invariant("sigma", format!("{sigma} must be positive")));
    }
    let attenuation = rho0 * sigma;
    let ratio = 1.0 + 4.0 * PI * PI * tau / (period * period);
    if attenuation > WEAK_ATTENUATION_LIMIT {
        log::warn!("grating attenuation {attenuation:.3} exceeds weak-attenuation limit");
    }
    Ok(VisibilityPrediction {
        v_abs: attenuation,
        v_abs_exact: attenuation.tanh(),
        v_prop: attenuation * ratio,
        ratio,
        weak_attenuation_degraded: attenuation > WEAK_ATTENUATION_LIMIT,
    })
}

/// Validity findings attached to a design report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finding {
    /// `τ <= 0`: the retrieval filter would be singular or amplifying.
    TauNonPositive,
    /// The actual divergence exceeds `Θ_critical`.
    DivergenceAboveCritical,
    /// Blur removes all retrieval gain.
    NoRetrievalGain,
    /// `1 < N_F < 10`.
    FresnelMarginal,
    /// `N_F <= 1`: outside the near-field regime.
    FresnelInvalid,
    /// `B_max <= 1`: phase contrast yields no net brilliance gain.
    NoNetBrillianceBoost,
}

/// Everything the design calculator reports for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub divergence: f64,
    pub effective_distance: f64,
    pub blur_area: f64,
    pub theta_critical: f64,
    pub theta_optimum: f64,
    pub tau: f64,
    pub sharpening_length_ell: Option<f64>,
    pub resolution_r: f64,
    pub fresnel_number: f64,
    pub g_max: Option<f64>,
    pub g_max_three_tenths: Option<f64>,
    pub theta0: f64,
    pub b_max: f64,
    pub b_max_at_optimum: f64,
    pub theta0_boundary: f64,
    pub flags: Vec<Finding>,
}

/// Evaluate the full design calculator. Fails only when the collimation
/// condition itself is undefined (`b <= 0` or `Δ_eff = 0`) or the
/// material table does not cover the wavelength.
pub fn design_report(mat: &Material, geom: &BeamGeometry, theta0: f64) -> Result<DesignReport> {
    let theta_c = theta_critical(mat, geom)?;
    let theta_o = theta_optimum(mat, geom)?;
    let t = tau(mat, geom)?;
    let fresnel = fresnel_number(geom)?;
    let boost = brilliance_boost_max(mat, geom, theta0)?;
    let mut flags = Vec::new();
    if t <= 0.0 {
        flags.push(Finding::TauNonPositive);
    }
    if geom.divergence() >= theta_c {
        flags.push(Finding::DivergenceAboveCritical);
    }
    let g_max = match snr_gain_max(mat, geom) {
        Ok(g) => Some(g),
        Err(Error::NoRetrievalGain(_)) => {
            flags.push(Finding::NoRetrievalGain);
            None
        }
        Err(e) => return Err(e),
    };
    if fresnel.marginal {
        flags.push(Finding::FresnelMarginal);
    } else if !fresnel.valid {
        flags.push(Finding::FresnelInvalid);
    }
    if !boost.boosts {
        flags.push(Finding::NoNetBrillianceBoost);
    }
    Ok(DesignReport {
        divergence: geom.divergence(),
        effective_distance: geom.effective_distance(),
        blur_area: geom.blur_area(),
        theta_critical: theta_c,
        theta_optimum: theta_o,
        tau: t,
        sharpening_length_ell: (t > 0.0).then(|| t.sqrt()),
        resolution_r: penumbral_resolution(geom),
        fresnel_number: fresnel.value,
        g_max,
        g_max_three_tenths: g_max.map(|g| 1.2 * g),
        theta0,
        b_max: boost.value,
        b_max_at_optimum: boost.at_optimum,
        theta0_boundary: boost.theta0_boundary,
        flags,
    })
}
