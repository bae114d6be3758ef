//! Pinhole-collimated beam geometry.

use serde::Serialize;

use crate::error::{Error, Result};

/// Pinhole diameter `d`, pinhole-to-sample distance `L`, sample-to-detector
/// distance `Δ`, geometric magnification `M` and wavelength `λ`, all SI.
///
/// With `M > 1` the point-projection geometry is folded into an effective
/// parallel-beam propagation distance `Δ/M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeamGeometry {
    pinhole_d: f64,
    source_to_sample_l: f64,
    sample_to_detector_delta: f64,
    magnification_m: f64,
    wavelength_lambda: f64,
}

impl BeamGeometry {
    pub fn new(
        pinhole_d: f64,
        source_to_sample_l: f64,
        sample_to_detector_delta: f64,
        magnification_m: f64,
        wavelength_lambda: f64,
    ) -> Result<Self> {
        let g = Self {
            pinhole_d,
            source_to_sample_l,
            sample_to_detector_delta,
            magnification_m,
            wavelength_lambda,
        };
        g.validate()?;
        Ok(g)
    }

    /// Parallel-beam geometry (`M = 1`).
    pub fn parallel(d: f64, l: f64, delta: f64, lambda: f64) -> Result<Self> {
        Self::new(d, l, delta, 1.0, lambda)
    }

    /// Reference pinhole geometry: d = 40 mm, L = 10 m, Δ = 30 mm,
    /// λ = 5.919 Å.
    pub fn reference() -> Self {
        Self {
            pinhole_d: 0.04,
            source_to_sample_l: 10.0,
            sample_to_detector_delta: 0.03,
            magnification_m: 1.0,
            wavelength_lambda: 5.919e-10,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        positive("pinhole_d", self.pinhole_d)?;
        positive("source_to_sample_l", self.source_to_sample_l)?;
        positive("wavelength_lambda", self.wavelength_lambda)?;
        if !(self.sample_to_detector_delta.is_finite() && self.sample_to_detector_delta >= 0.0) {
            return Err(Error::invariant(
                "sample_to_detector_delta",
                format!("{} must be non-negative", self.sample_to_detector_delta),
            ));
        }
        if !(self.magnification_m.is_finite() && self.magnification_m >= 1.0) {
            return Err(Error::invariant(
                "magnification_m",
                format!("{} must be at least 1", self.magnification_m),
            ));
        }
        Ok(())
    }

    pub fn pinhole_d(&self) -> f64 {
        self.pinhole_d
    }

    pub fn source_to_sample_l(&self) -> f64 {
        self.source_to_sample_l
    }

    pub fn sample_to_detector_delta(&self) -> f64 {
        self.sample_to_detector_delta
    }

    pub fn magnification(&self) -> f64 {
        self.magnification_m
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength_lambda
    }

    /// Beam divergence `Θ = d/L` in radians.
    pub fn divergence(&self) -> f64 {
        self.pinhole_d / self.source_to_sample_l
    }

    /// Fresnel-scaled propagation distance `Δ/M`.
    pub fn effective_distance(&self) -> f64 {
        if self.magnification_m == 1.0 {
            self.sample_to_detector_delta
        } else {
            self.sample_to_detector_delta / self.magnification_m
        }
    }

    /// Penumbral blur area `(Θ Δ_eff)²` referred to the detector plane.
    pub fn blur_area(&self) -> f64 {
        let w = self.divergence() * self.effective_distance();
        w * w
    }

    pub fn with_wavelength(&self, wavelength: f64) -> Result<Self> {
        Self::new(
            self.pinhole_d,
            self.source_to_sample_l,
            self.sample_to_detector_delta,
            self.magnification_m,
            wavelength,
        )
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(
            self.pinhole_d,
            self.source_to_sample_l,
            delta,
            self.magnification_m,
            self.wavelength_lambda,
        )
    }

    pub fn with_pinhole(&self, pinhole_d: f64) -> Result<Self> {
        Self::new(
            pinhole_d,
            self.source_to_sample_l,
            self.sample_to_detector_delta,
            self.magnification_m,
            self.wavelength_lambda,
        )
    }

    /// Same geometry with the pinhole resized so that `d/L = theta`.
    pub fn with_divergence(&self, theta: f64) -> Result<Self> {
        self.with_pinhole(theta * self.source_to_sample_l)
    }
}

/// `Θ = d/L`.
pub fn divergence(geom: &BeamGeometry) -> f64 {
    geom.divergence()
}

/// `(Θ Δ_eff)²`.
pub fn blur_area(geom: &BeamGeometry) -> f64 {
    geom.blur_area()
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invariant(field, format!("{v} must be positive")))
    }
}
