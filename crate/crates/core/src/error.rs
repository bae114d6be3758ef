use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// A pixel that failed the positivity requirement of the log step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BadPixel {
    pub x: usize,
    pub y: usize,
    pub value: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Invariant { field: &'static str, reason: String },

    #[error("collimation condition undefined: scattering length b = {0:e} m must be positive")]
    NonPositiveScatteringLength(f64),

    #[error("filter parameter tau = {0:e} m^2 must be positive")]
    NonPositiveTau(f64),

    #[error("no retrieval gain at this blur: blur-corrected gain {0:e} is not positive")]
    NoRetrievalGain(f64),

    #[error("Fresnel number undefined for zero effective propagation distance")]
    ZeroPropagationDistance,

    #[error("wavelength {wavelength:e} m outside dispersion table [{min:e}, {max:e}] m")]
    OutsideDispersionTable { wavelength: f64, min: f64, max: f64 },

    #[error("material has no dispersion table but the spectrum has {bins} bins")]
    MissingDispersionTable { bins: usize },

    #[error("{count} pixel(s) non-positive after filtering, first offenders: {}", format_pixels(.pixels))]
    NonPositiveFiltered { count: usize, pixels: Vec<BadPixel> },

    #[error("{count} pixel(s) of the simulated intensity are negative (min {min:e})")]
    NegativeIntensity { count: usize, min: f64 },

    #[error("angles are not uniformly spaced (step {expected:e} rad, found {found:e} rad at index {index})")]
    NonUniformAngles { index: usize, expected: f64, found: f64 },

    #[error("angles do not cover the requested {span} span: {reason}")]
    AngleSpanMismatch { span: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("projection {index}: {source}")]
    Projection {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("background standard deviation is zero; SNR undefined")]
    ZeroBackgroundStd,

    #[error("Michelson visibility undefined: max + min = {0:e}")]
    VisibilityUndefined(f64),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn invariant(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invariant {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a projection index to an error raised while processing a stack.
    pub fn at_projection(self, index: usize) -> Self {
        Error::Projection {
            index,
            source: Box::new(self),
        }
    }

    /// True for errors caused by physically inadmissible parameters rather
    /// than malformed input.
    pub fn is_physics(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveScatteringLength(_)
                | Error::NonPositiveTau(_)
                | Error::NoRetrievalGain(_)
                | Error::ZeroPropagationDistance
        )
    }
}

fn format_pixels(pixels: &[BadPixel]) -> String {
    pixels
        .iter()
        .map(|p| format!("({}, {})={:e}", p.x, p.y, p.value))
        .collect::<Vec<_>>()
        .join(", ")
}
