//! Single-image phase retrieval: Lorentzian low-pass filtering followed by
//! the logarithmic inversion of the contact law, plus the spectrally
//! averaged variant.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{BadPixel, Error, Result};
use crate::fourier::{apply_symbol, fft2, Grid, Padding};
use crate::geometry::BeamGeometry;
use crate::material::Material;
use crate::physics;
use crate::raster::{Raster2D, RasterKind};
use crate::spectrum::Spectrum;

/// How many offending pixels a [`Error::NonPositiveFiltered`] lists.
const REPORTED_PIXELS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalConfig {
    tau: f64,
    sigma: f64,
    i0: f64,
    padding: Padding,
    skip_log_step: bool,
    flat_field: Option<Raster2D>,
    clamp_epsilon: Option<f64>,
}

impl RetrievalConfig {
    pub fn new(tau: f64, sigma: f64, i0: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::NonPositiveTau(tau));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invariant("sigma", format!("{sigma} must be positive")));
        }
        if !(i0.is_finite() && i0 > 0.0) {
            return Err(Error::invariant("i0", format!("{i0} must be positive")));
        }
        Ok(Self {
            tau,
            sigma,
            i0,
            padding: Padding::default(),
            skip_log_step: false,
            flat_field: None,
            clamp_epsilon: None,
        })
    }

    /// `τ` and `σ` evaluated for `mat` at the geometry's wavelength.
    pub fn from_physics(mat: &Material, geom: &BeamGeometry, i0: f64) -> Result<Self> {
        let sigma = mat.coefficients_at(geom.wavelength())?.sigma;
        Self::new(physics::tau(mat, geom)?, sigma, i0)
    }

    /// Replace `τ` by a hand-tuned value.
    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::NonPositiveTau(tau));
        }
        self.tau = tau;
        Ok(self)
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    /// Return the filtered normalized image instead of `ρ⊥`.
    pub fn with_skip_log_step(mut self, skip: bool) -> Self {
        self.skip_log_step = skip;
        self
    }

    /// Per-pixel detector gain; the image is divided by `I₀ · gain`.
    pub fn with_flat_field(mut self, gain: Raster2D) -> Result<Self> {
        if let Some(i) = gain.values().iter().position(|&g| g <= 0.0) {
            return Err(Error::invariant(
                "flat_field",
                format!("gain must be positive, pixel {i} is {}", gain.values()[i]),
            ));
        }
        self.flat_field = Some(gain);
        Ok(self)
    }

    /// Clamp filtered values below `eps` to `eps` instead of failing.
    pub fn with_clamp_epsilon(mut self, eps: Option<f64>) -> Result<Self> {
        if let Some(e) = eps {
            if !(e.is_finite() && e > 0.0) {
                return Err(Error::invariant("clamp_epsilon", format!("{e} must be positive")));
            }
        }
        self.clamp_epsilon = eps;
        Ok(self)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn i0(&self) -> f64 {
        self.i0
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    pub fn skip_log_step(&self) -> bool {
        self.skip_log_step
    }

    pub fn clamp_epsilon(&self) -> Option<f64> {
        self.clamp_epsilon
    }
}

fn grid_of(img: &Raster2D) -> Grid {
    Grid {
        width: img.width(),
        height: img.height(),
        pitch_x: img.pitch_x(),
        pitch_y: img.pitch_y(),
    }
}

fn lorentzian(values: &[f64], grid: Grid, tau: f64, padding: Padding) -> Result<Vec<f64>> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::NonPositiveTau(tau));
    }
    apply_symbol(values, grid, padding, |kx, ky| 1.0 / (1.0 + tau * (kx * kx + ky * ky)))
}

/// `F⁻¹{ F[img] / (1 + τ k²) }`.
pub fn lorentzian_filter(img: &Raster2D, tau: f64, padding: Padding) -> Result<Raster2D> {
    let out = lorentzian(img.values(), grid_of(img), tau, padding)?;
    img.with_values(RasterKind::Generic, out)
}

/// Result of a retrieval with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    /// `ρ⊥`, or the filtered normalized image when the log step is skipped.
    pub image: Raster2D,
    /// Pixels raised to the clamp floor.
    pub clamped: usize,
    /// High-frequency energy fraction of `image`.
    pub fringe_residual: f64,
}

/// `ρ⊥ = −ln(lorentzian_filter(img / I₀, τ)) / σ`.
pub fn retrieve_density(img: &Raster2D, cfg: &RetrievalConfig) -> Result<Raster2D> {
    Ok(retrieve_with(img, cfg, false)?.image)
}

/// Like [`retrieve_density`], also reporting the clamp count and the
/// fringe-residual metric.
pub fn retrieve_density_detailed(img: &Raster2D, cfg: &RetrievalConfig) -> Result<Retrieval> {
    retrieve_with(img, cfg, true)
}

fn retrieve_with(img: &Raster2D, cfg: &RetrievalConfig, diagnostics: bool) -> Result<Retrieval> {
    if img.kind() != RasterKind::Intensity {
        return Err(Error::invariant(
            "raster kind",
            format!("retrieval expects intensity, got {}", img.kind().as_str()),
        ));
    }
    let normalized = normalize(img, cfg)?;
    let mut filtered = lorentzian(&normalized, grid_of(img), cfg.tau, cfg.padding)?;
    if cfg.skip_log_step {
        let image = img.with_values(RasterKind::Generic, filtered)?;
        let fringe_residual = if diagnostics { fringe_residual(&image)? } else { 0.0 };
        return Ok(Retrieval {
            image,
            clamped: 0,
            fringe_residual,
        });
    }
    let clamped = enforce_positive(&mut filtered, img.width(), cfg.clamp_epsilon)?;
    let inv_sigma = 1.0 / cfg.sigma;
    let rho: Vec<f64> = filtered.iter().map(|&f| -f.ln() * inv_sigma).collect();
    let image = img.with_values(RasterKind::ProjectedDensity, rho)?;
    let fringe_residual = if diagnostics { fringe_residual(&image)? } else { 0.0 };
    Ok(Retrieval {
        image,
        clamped,
        fringe_residual,
    })
}

/// `img / (I₀ · gain)`.
pub(crate) fn normalize(img: &Raster2D, cfg: &RetrievalConfig) -> Result<Vec<f64>> {
    Ok(match &cfg.flat_field {
        None => img.values().iter().map(|&v| v / cfg.i0).collect(),
        Some(gain) => {
            gain.ensure_same_grid(img, "flat_field")?;
            img.values()
                .iter()
                .zip(gain.values())
                .map(|(&v, &g)| v / (cfg.i0 * g))
                .collect()
        }
    })
}

/// Raise values below `eps` to `eps` and return how many were raised, or
/// without a floor fail on any value `<= 0`.
pub(crate) fn enforce_positive(values: &mut [f64], width: usize, eps: Option<f64>) -> Result<usize> {
    match eps {
        Some(eps) => {
            let mut clamped = 0;
            for v in values.iter_mut().filter(|v| **v < eps) {
                *v = eps;
                clamped += 1;
            }
            if clamped > 0 {
                log::debug!("clamped {clamped} pixels to {eps:e}");
            }
            Ok(clamped)
        }
        None => check_positive(values, width).map(|_| 0),
    }
}

fn check_positive(filtered: &[f64], width: usize) -> Result<()> {
    let bad: Vec<usize> = (0..filtered.len()).filter(|&i| !(filtered[i] > 0.0)).collect();
    if bad.is_empty() {
        return Ok(());
    }
    let pixels = bad
        .iter()
        .take(REPORTED_PIXELS)
        .map(|&i| BadPixel {
            x: i % width,
            y: i / width,
            value: filtered[i],
        })
        .collect();
    Err(Error::NonPositiveFiltered {
        count: bad.len(),
        pixels,
    })
}

/// Fraction of the non-DC spectral energy above half the Nyquist frequency.
/// Residual propagation fringes from an underestimated `τ` show up here.
pub fn fringe_residual(img: &Raster2D) -> Result<f64> {
    let (w, h) = (img.width(), img.height());
    let mean = img.mean();
    let mut buf: Vec<Complex64> = img.values().iter().map(|&v| Complex64::new(v - mean, 0.0)).collect();
    fft2(&mut buf, w, h);
    let (mut high, mut total) = (0.0, 0.0);
    for y in 0..h {
        let fy = signed_fraction(y, h);
        for x in 0..w {
            let fx = signed_fraction(x, w);
            let p = buf[y * w + x].norm_sqr();
            total += p;
            if fx * fx + fy * fy > 0.25 {
                high += p;
            }
        }
    }
    Ok(if total > 0.0 { high / total } else { 0.0 })
}

/// Frequency index as a fraction of Nyquist, in `[−1, 1]`.
fn signed_fraction(i: usize, n: usize) -> f64 {
    let s = if i <= (n - 1) / 2 { i as f64 } else { i as f64 - n as f64 };
    2.0 * s / n as f64
}

/// Spectrally weighted material averages for poly-energetic retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralAverages {
    /// `Σ w σ / Σ w`.
    pub sigma_av: f64,
    /// `Σ w σ τ / Σ w`.
    pub sigma_tau_av: f64,
    /// `(στ)_av / σ_av`, the filter width used for retrieval.
    pub tau_eff: f64,
}

/// Weighted averages of `σ_E` and `σ_E τ_E` over `spectrum`. The weights are
/// taken as detected intensities per bin.
pub fn spectral_averages(
    spectrum: &Spectrum,
    mat: &Material,
    geom: &BeamGeometry,
) -> Result<SpectralAverages> {
    if spectrum.len() > 1 && mat.dispersion().is_none() {
        return Err(Error::MissingDispersionTable {
            bins: spectrum.len(),
        });
    }
    let weights = spectrum.normalized_weights();
    let mut sigmas = Vec::with_capacity(spectrum.len());
    let mut taus = Vec::with_capacity(spectrum.len());
    for bin in spectrum.bins() {
        let sigma = mat.coefficients_at(bin.wavelength)?.sigma;
        let tau = physics::tau(mat, &geom.with_wavelength(bin.wavelength)?)?;
        if tau <= 0.0 {
            return Err(Error::NonPositiveTau(tau));
        }
        sigmas.push(sigma);
        taus.push(tau);
    }
    let sigma_av: f64 = weights.iter().zip(&sigmas).map(|(w, s)| w * s).sum();
    let sigma_tau_av: f64 = weights
        .iter()
        .zip(sigmas.iter().zip(&taus))
        .map(|(w, (s, t))| w * s * t)
        .sum();
    // Normalizing the σ-weights first keeps a single bin exact: τ_eff = 1·τ.
    let tau_eff: f64 = weights
        .iter()
        .zip(sigmas.iter().zip(&taus))
        .map(|(w, (s, t))| (w * s / sigma_av) * t)
        .sum();
    Ok(SpectralAverages {
        sigma_av,
        sigma_tau_av,
        tau_eff,
    })
}

/// Poly-energetic retrieval: the monochromatic filter with `σ → σ_av` and
/// `τ → (στ)_av / σ_av`, applied to an already normalized averaged image.
pub fn retrieve_density_poly(
    img_av: &Raster2D,
    averages: &SpectralAverages,
    padding: Padding,
) -> Result<Raster2D> {
    let cfg = RetrievalConfig::new(averages.tau_eff, averages.sigma_av, 1.0)?.with_padding(padding);
    retrieve_density(img_av, &cfg)
}
