//! Single-material nuclear properties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of a dispersion table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionPoint {
    /// Wavelength in meters.
    pub wavelength: f64,
    /// Bound scattering length in meters.
    pub b: f64,
    /// Total cross section in m².
    pub sigma: f64,
}

/// Scattering length and cross section evaluated at one wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub b: f64,
    pub sigma: f64,
}

/// A single-material sample: bound scattering length `b` (m) and total
/// cross section `sigma` (m²), optionally wavelength dependent.
///
/// `b` may be of either sign here; operations that need the collimation
/// condition reject `b <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    b: f64,
    sigma: f64,
    dispersion: Option<Vec<DispersionPoint>>,
}

impl Material {
    pub fn new(scattering_length_b: f64, total_cross_section_sigma: f64) -> Result<Self> {
        if !scattering_length_b.is_finite() {
            return Err(Error::invariant("scattering_length_b", "must be finite"));
        }
        check_sigma("total_cross_section_sigma", total_cross_section_sigma)?;
        Ok(Self {
            b: scattering_length_b,
            sigma: total_cross_section_sigma,
            dispersion: None,
        })
    }

    /// Attach a per-wavelength table. Wavelengths must be strictly increasing.
    pub fn with_dispersion(mut self, table: Vec<DispersionPoint>) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::invariant("dispersion", "table is empty"));
        }
        for (i, p) in table.iter().enumerate() {
            if !(p.wavelength.is_finite() && p.wavelength > 0.0) {
                return Err(Error::invariant(
                    "dispersion",
                    format!("row {i}: wavelength {} must be positive", p.wavelength),
                ));
            }
            if !p.b.is_finite() {
                return Err(Error::invariant(
                    "dispersion",
                    format!("row {i}: b must be finite"),
                ));
            }
            check_sigma("dispersion", p.sigma)?;
            if i > 0 && p.wavelength <= table[i - 1].wavelength {
                return Err(Error::invariant(
                    "dispersion",
                    format!("row {i}: wavelengths must be strictly increasing"),
                ));
            }
        }
        self.dispersion = Some(table);
        Ok(self)
    }

    /// Amorphous carbon-12.
    pub fn carbon12() -> Self {
        Self {
            b: 6.65e-15,
            sigma: 5.55e-28,
            dispersion: None,
        }
    }

    pub fn scattering_length(&self) -> f64 {
        self.b
    }

    pub fn cross_section(&self) -> f64 {
        self.sigma
    }

    pub fn dispersion(&self) -> Option<&[DispersionPoint]> {
        self.dispersion.as_deref()
    }

    /// `b` and `sigma` at `wavelength`. Without a table the nominal values
    /// apply at every wavelength; with one, they are linearly interpolated
    /// and extrapolation is refused.
    pub fn coefficients_at(&self, wavelength: f64) -> Result<Coefficients> {
        let Some(table) = &self.dispersion else {
            return Ok(Coefficients {
                b: self.b,
                sigma: self.sigma,
            });
        };
        let first = table[0];
        let last = table[table.len() - 1];
        if !(wavelength >= first.wavelength && wavelength <= last.wavelength) {
            return Err(Error::OutsideDispersionTable {
                wavelength,
                min: first.wavelength,
                max: last.wavelength,
            });
        }
        let hi = table.partition_point(|p| p.wavelength < wavelength);
        if table[hi].wavelength == wavelength {
            return Ok(Coefficients {
                b: table[hi].b,
                sigma: table[hi].sigma,
            });
        }
        let (p0, p1) = (table[hi - 1], table[hi]);
        let t = (wavelength - p0.wavelength) / (p1.wavelength - p0.wavelength);
        Ok(Coefficients {
            b: p0.b + t * (p1.b - p0.b),
            sigma: p0.sigma + t * (p1.sigma - p0.sigma),
        })
    }
}

fn check_sigma(field: &'static str, sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::invariant(
            field,
            format!("cross section {sigma} must be positive"),
        ))
    }
}
