//! Weighted wavelength bins for poly-energetic illumination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralBin {
    /// Bin-centre wavelength in meters.
    pub wavelength: f64,
    /// Relative incident intensity.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    bins: Vec<SpectralBin>,
}

impl Spectrum {
    pub fn new(bins: Vec<SpectralBin>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::invariant("spectrum", "at least one bin is required"));
        }
        let mut total = 0.0;
        for (i, bin) in bins.iter().enumerate() {
            if !(bin.wavelength.is_finite() && bin.wavelength > 0.0) {
                return Err(Error::invariant(
                    "spectrum",
                    format!("bin {i}: wavelength {} must be positive", bin.wavelength),
                ));
            }
            if !(bin.weight.is_finite() && bin.weight >= 0.0) {
                return Err(Error::invariant(
                    "spectrum",
                    format!("bin {i}: weight {} must be non-negative", bin.weight),
                ));
            }
            if i > 0 && bin.wavelength <= bins[i - 1].wavelength {
                return Err(Error::invariant(
                    "spectrum",
                    format!("bin {i}: wavelengths must be strictly increasing"),
                ));
            }
            total += bin.weight;
        }
        if total <= 0.0 {
            return Err(Error::invariant("spectrum", "total weight must be positive"));
        }
        Ok(Self { bins })
    }

    /// A delta spectrum at one wavelength.
    pub fn monochromatic(wavelength: f64) -> Result<Self> {
        Self::new(vec![SpectralBin {
            wavelength,
            weight: 1.0,
        }])
    }

    /// `n` equal-width bins covering `[min, max]`, each represented by its
    /// centre wavelength, weighted by `weight(centre)`.
    pub fn equal_width(
        min: f64,
        max: f64,
        n: usize,
        weight: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        if n == 0 || !(max > min) {
            return Err(Error::invariant(
                "spectrum",
                format!("need n >= 1 and max > min (n={n}, range [{min}, {max}])"),
            ));
        }
        let width = (max - min) / n as f64;
        let bins = (0..n)
            .map(|i| {
                let wavelength = min + (i as f64 + 0.5) * width;
                SpectralBin {
                    wavelength,
                    weight: weight(wavelength),
                }
            })
            .collect();
        Self::new(bins)
    }

    pub fn bins(&self) -> &[SpectralBin] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.bins.iter().map(|b| b.weight).sum()
    }

    /// Weights divided by their sum. A single bin gets exactly 1.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let total = self.total_weight();
        self.bins.iter().map(|b| b.weight / total).collect()
    }
}
