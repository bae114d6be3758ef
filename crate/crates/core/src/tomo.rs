//! Parallel-beam tomography about the vertical axis: sinogram synthesis and
//! filtered backprojection, and the per-projection retrieval pipeline.
//!
//! A reconstructed slice uses the same centred `(x, z)` grid as the
//! projector, with `nz = nx` and the detector pitch as voxel pitch.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::project_with_table;
use crate::fourier::{fft1, ifft1};
use crate::projector::RayTable;
use crate::raster::{Raster2D, RasterKind};
use crate::retrieve::{enforce_positive, normalize, retrieve_density_detailed, RetrievalConfig};
use crate::volume::{Volume3D, VolumeKind};

/// Relative tolerance on angular spacing and span checks.
const ANGLE_TOL: f64 = 1e-9;

/// A stack of parallel projections: for every angle, `rows × detector_pixels`
/// values stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    angles: Vec<f64>,
    rows: usize,
    detector_pixels: usize,
    pitch: f64,
    data: Vec<f64>,
}

impl Sinogram {
    pub fn new(
        angles: Vec<f64>,
        rows: usize,
        detector_pixels: usize,
        pitch: f64,
        data: Vec<f64>,
    ) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::invariant("angles", "at least one angle is required"));
        }
        for (i, &a) in angles.iter().enumerate() {
            // The closed endpoint 2π is accepted for scans that repeat the
            // first view.
            if !(0.0..=2.0 * PI * (1.0 + ANGLE_TOL)).contains(&a) {
                return Err(Error::invariant(
                    "angles",
                    format!("angle {i} = {a} outside [0, 2π]"),
                ));
            }
            if i > 0 && a <= angles[i - 1] {
                return Err(Error::invariant(
                    "angles",
                    format!("angle {i} not strictly increasing"),
                ));
            }
        }
        if rows == 0 || detector_pixels == 0 {
            return Err(Error::invariant("sinogram shape", "rows and detector_pixels must be >= 1"));
        }
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(Error::invariant("pitch", format!("{pitch} must be positive")));
        }
        let expected = angles.len() * rows * detector_pixels;
        if data.len() != expected {
            return Err(Error::invariant(
                "sinogram data",
                format!("expected {expected} values, got {}", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invariant("sinogram data", format!("non-finite value at {i}")));
        }
        Ok(Self {
            angles,
            rows,
            detector_pixels,
            pitch,
            data,
        })
    }

    /// Stack equally shaped projection rasters.
    pub fn from_projections(angles: Vec<f64>, projections: &[Raster2D]) -> Result<Self> {
        let first = projections
            .first()
            .ok_or_else(|| Error::invariant("projections", "at least one projection is required"))?;
        if projections.len() != angles.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} projections but {} angles",
                projections.len(),
                angles.len()
            )));
        }
        for (i, p) in projections.iter().enumerate() {
            if !p.same_grid(first) {
                return Err(Error::ShapeMismatch(format!(
                    "projection {i} is {}x{} at pitch {}, expected {}x{} at {}",
                    p.width(),
                    p.height(),
                    p.pitch_x(),
                    first.width(),
                    first.height(),
                    first.pitch_x()
                )));
            }
        }
        if first.pitch_x() != first.pitch_y() {
            return Err(Error::ShapeMismatch(format!(
                "tomography needs square pixels, got {} x {}",
                first.pitch_x(),
                first.pitch_y()
            )));
        }
        let data = projections.iter().flat_map(|p| p.values().iter().copied()).collect();
        Self::new(angles, first.height(), first.width(), first.pitch_x(), data)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn detector_pixels(&self) -> usize {
        self.detector_pixels
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Detector row `row` at angle index `angle`.
    pub fn row(&self, angle: usize, row: usize) -> &[f64] {
        let n = self.detector_pixels;
        let start = (angle * self.rows + row) * n;
        &self.data[start..start + n]
    }

    /// The projection at angle index `angle` as a raster.
    pub fn projection(&self, angle: usize, kind: RasterKind) -> Result<Raster2D> {
        let n = self.rows * self.detector_pixels;
        Raster2D::new(
            self.detector_pixels,
            self.rows,
            self.pitch,
            self.pitch,
            kind,
            self.data[angle * n..(angle + 1) * n].to_vec(),
        )
    }

    /// `a·self + b·other` on identical geometry.
    pub fn combine(&self, a: f64, other: &Sinogram, b: f64) -> Result<Sinogram> {
        if self.angles != other.angles
            || self.rows != other.rows
            || self.detector_pixels != other.detector_pixels
            || self.pitch != other.pitch
        {
            return Err(Error::ShapeMismatch("sinograms differ in geometry".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        Self::new(self.angles.clone(), self.rows, self.detector_pixels, self.pitch, data)
    }
}

/// Projections of `vol` at every angle, one detector row per slice.
pub fn make_sinogram(vol: &Volume3D, angles: &[f64]) -> Result<Sinogram> {
    let projections = angles
        .par_iter()
        .map(|&phi| project_with_table(vol, &RayTable::new(vol.nx(), vol.nz(), vol.pitch(), phi)))
        .collect::<Result<Vec<_>>>()?;
    Sinogram::from_projections(angles.to_vec(), &projections)
}

/// `n` equally spaced angles starting at 0 with step `span/(n-1)` when
/// `closed`, else `span/n`.
pub fn uniform_angles(n: usize, span: AngularSpan, closed: bool) -> Vec<f64> {
    let total = span.radians();
    let step = if closed && n > 1 { total / (n - 1) as f64 } else { total / n as f64 };
    (0..n).map(|i| i as f64 * step).collect()
}

/// Apodization applied on top of the ramp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampFilter {
    #[default]
    RamLak,
    SheppLogan,
    Cosine,
}

impl RampFilter {
    /// Window value at `u = f / f_nyquist` in `[0, 1]`.
    fn window(self, u: f64) -> f64 {
        match self {
            RampFilter::RamLak => 1.0,
            RampFilter::SheppLogan => {
                if u == 0.0 {
                    1.0
                } else {
                    let x = PI * u / 2.0;
                    x.sin() / x
                }
            }
            RampFilter::Cosine => (PI * u / 2.0).cos(),
        }
    }
}

/// Angular coverage of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AngularSpan {
    #[serde(rename = "half_0_180")]
    #[default]
    Half0To180,
    #[serde(rename = "full_0_360")]
    Full0To360,
}

impl AngularSpan {
    pub fn radians(self) -> f64 {
        match self {
            AngularSpan::Half0To180 => PI,
            AngularSpan::Full0To360 => 2.0 * PI,
        }
    }

    fn name(self) -> &'static str {
        match self {
            AngularSpan::Half0To180 => "half_0_180",
            AngularSpan::Full0To360 => "full_0_360",
        }
    }
}

/// Quadrature weight per angle for the backprojection integral
/// `∫₀^π Q dφ` (full scans average the two halves). Scans whose last angle
/// repeats the first view `span` later use trapezoid end weights.
fn angle_weights(angles: &[f64], span: AngularSpan) -> Result<Vec<f64>> {
    let n = angles.len();
    let total = span.radians();
    if n < 2 {
        return Err(Error::AngleSpanMismatch {
            span: span.name(),
            reason: "at least two angles are required".into(),
        });
    }
    let first = angles[1] - angles[0];
    for i in 2..n {
        let found = angles[i] - angles[i - 1];
        if (found - first).abs() > ANGLE_TOL * first.max(1.0) {
            return Err(Error::NonUniformAngles {
                index: i,
                expected: first,
                found,
            });
        }
    }
    let step = (angles[n - 1] - angles[0]) / (n - 1) as f64;
    let tol = 1e-6 * total;
    let open = (n as f64 * step - total).abs() <= tol;
    let closed = ((n - 1) as f64 * step - total).abs() <= tol;
    let scale = PI / total;
    if closed {
        let mut w = vec![step * scale; n];
        w[0] *= 0.5;
        w[n - 1] *= 0.5;
        Ok(w)
    } else if open {
        Ok(vec![step * scale; n])
    } else {
        Err(Error::AngleSpanMismatch {
            span: span.name(),
            reason: format!(
                "{n} angles with step {step:.6e} rad cover neither {total:.6} (open) nor closed"
            ),
        })
    }
}

/// Frequency response of the band-limited ramp (spatial Ram-Lak kernel) on
/// a zero-padded grid of `len` samples, apodized. The small DC term of the
/// truncated kernel is kept; zeroing it offsets the whole slice.
fn ramp_response(len: usize, pitch: f64, filter: RampFilter) -> Vec<f64> {
    let half = len / 2;
    let mut kernel = vec![Complex64::default(); len];
    for (k, v) in kernel.iter_mut().enumerate() {
        let n = if k <= half { k as i64 } else { k as i64 - len as i64 };
        let h = if n == 0 {
            1.0 / (4.0 * pitch * pitch)
        } else if n % 2 == 0 {
            0.0
        } else {
            -1.0 / ((n * n) as f64 * PI * PI * pitch * pitch)
        };
        // The convolution sum carries a factor `pitch`.
        *v = Complex64::new(h * pitch, 0.0);
    }
    fft1(&mut kernel);
    kernel
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let f = if k <= half { k } else { len - k };
            c.re * filter.window(f as f64 / half as f64)
        })
        .collect()
}

/// Ramp-filter every detector row of `sino`.
fn filter_rows(sino: &Sinogram, filter: RampFilter) -> Vec<f64> {
    let n = sino.detector_pixels;
    let len = (2 * n).next_power_of_two();
    let response = ramp_response(len, sino.pitch, filter);
    let mut out = vec![0.0; sino.data.len()];
    out.par_chunks_mut(n)
        .zip(sino.data.par_chunks(n))
        .for_each_init(
            || vec![Complex64::default(); len],
            |buf, (dst, src)| {
                buf.iter_mut().for_each(|v| *v = Complex64::default());
                for (b, &s) in buf.iter_mut().zip(src) {
                    b.re = s;
                }
                fft1(buf);
                for (b, &r) in buf.iter_mut().zip(&response) {
                    *b *= r;
                }
                ifft1(buf);
                for (d, b) in dst.iter_mut().zip(buf.iter()) {
                    *d = b.re;
                }
            },
        );
    out
}

/// Backproject one row of filtered data into an `n × n` slice.
fn backproject_row(
    filtered: &[f64],
    sino: &Sinogram,
    row: usize,
    trig: &[(f64, f64)],
    weights: &[f64],
    out: &mut [f64],
) {
    let n = sino.detector_pixels;
    let c = (n as f64 - 1.0) / 2.0;
    out.iter_mut().for_each(|v| *v = 0.0);
    for (a, (&(sin, cos), &w)) in trig.iter().zip(weights).enumerate() {
        let start = (a * sino.rows + row) * n;
        let q = &filtered[start..start + n];
        for k in 0..n {
            let z = k as f64 - c;
            let line = &mut out[k * n..(k + 1) * n];
            let u0 = -c * cos + z * sin + c;
            for (i, v) in line.iter_mut().enumerate() {
                let u = u0 + i as f64 * cos;
                // Samples beyond the detector are zero; interpolating toward
                // them keeps conjugate views symmetric at the edges.
                if u <= -1.0 || u >= n as f64 {
                    continue;
                }
                let fl = u.floor();
                let f = u - fl;
                let j = fl as isize;
                let at = |i: isize| if i >= 0 && (i as usize) < n { q[i as usize] } else { 0.0 };
                *v += w * (at(j) * (1.0 - f) + at(j + 1) * f);
            }
        }
    }
}

fn reconstruct(sino: &Sinogram, filter: RampFilter, span: AngularSpan) -> Result<Vec<f64>> {
    let weights = angle_weights(&sino.angles, span)?;
    let trig: Vec<(f64, f64)> = sino.angles.iter().map(|a| a.sin_cos()).collect();
    let filtered = filter_rows(sino, filter);
    let n = sino.detector_pixels;
    let mut out = vec![0.0; sino.rows * n * n];
    out.par_chunks_mut(n * n).enumerate().for_each(|(row, slice)| {
        backproject_row(&filtered, sino, row, &trig, &weights, slice);
    });
    Ok(out)
}

/// Filtered backprojection of a single-row sinogram into an `n × n` slice
/// (rows `z`, columns `x`).
pub fn fbp(sino: &Sinogram, filter: RampFilter, span: AngularSpan) -> Result<Raster2D> {
    if sino.rows != 1 {
        return Err(Error::ShapeMismatch(format!(
            "fbp expects a single-row sinogram, got {} rows; use fbp_volume",
            sino.rows
        )));
    }
    let n = sino.detector_pixels;
    let values = reconstruct(sino, filter, span)?;
    Raster2D::new(n, n, sino.pitch, sino.pitch, RasterKind::Generic, values)
}

/// Slice-by-slice filtered backprojection of a projection stack.
pub fn fbp_volume(sino: &Sinogram, filter: RampFilter, span: AngularSpan) -> Result<Volume3D> {
    let n = sino.detector_pixels;
    let values = reconstruct(sino, filter, span)?;
    Volume3D::new(n, sino.rows, n, sino.pitch, VolumeKind::Reconstruction, values)
}

/// What the per-projection preprocessing produces before FBP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconMode {
    /// `−ln(I/I₀)` of the raw projections.
    AttenuationOnly,
    /// Lorentzian-filtered retrieval of every projection.
    #[default]
    PhaseRetrieved,
}

/// Quantity reconstructed by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconUnits {
    /// Number density `ρ` in nuclei/m³.
    #[default]
    Density,
    /// Linear attenuation `σρ` in 1/m.
    LinearAttenuation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FbpOptions {
    pub filter: RampFilter,
    pub span: AngularSpan,
}

/// Contact-law projected attenuation `−ln(I/(I₀ g))` under the retrieval
/// config's normalization and positivity policy.
fn attenuation_projection(img: &Raster2D, cfg: &RetrievalConfig) -> Result<(Vec<f64>, usize)> {
    let mut normalized = normalize(img, cfg)?;
    let clamped = enforce_positive(&mut normalized, img.width(), cfg.clamp_epsilon())?;
    Ok((normalized.into_iter().map(|v| -v.ln()).collect(), clamped))
}

/// Line-integral sinogram ready for FBP.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSinogram {
    pub sinogram: Sinogram,
    /// Pixels raised to the clamp floor, summed over all projections.
    pub clamped_pixels: usize,
}

/// Preprocess every projection per `mode` into a line-integral sinogram.
///
/// Projections are processed in parallel; any failure is reported with the
/// index of the offending projection.
pub fn preprocess_projections(
    projections: &[Raster2D],
    angles: &[f64],
    cfg: &RetrievalConfig,
    mode: ReconMode,
    units: ReconUnits,
) -> Result<PreparedSinogram> {
    let sigma = cfg.sigma();
    let prepared = projections
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            let (values, clamped) = match mode {
                ReconMode::AttenuationOnly => {
                    let (mu, clamped) =
                        attenuation_projection(img, cfg).map_err(|e| e.at_projection(i))?;
                    let values = match units {
                        ReconUnits::Density => mu.into_iter().map(|m| m / sigma).collect(),
                        ReconUnits::LinearAttenuation => mu,
                    };
                    (values, clamped)
                }
                ReconMode::PhaseRetrieved => {
                    let r = retrieve_density_detailed(img, cfg).map_err(|e| e.at_projection(i))?;
                    let values = match units {
                        ReconUnits::Density => r.image.values().to_vec(),
                        ReconUnits::LinearAttenuation => {
                            r.image.values().iter().map(|v| v * sigma).collect()
                        }
                    };
                    (values, r.clamped)
                }
            };
            Ok((img.with_values(RasterKind::Generic, values)?, clamped))
        })
        .collect::<Result<Vec<_>>>()?;
    let clamped_pixels = prepared.iter().map(|(_, c)| c).sum();
    let rasters: Vec<Raster2D> = prepared.into_iter().map(|(r, _)| r).collect();
    Ok(PreparedSinogram {
        sinogram: Sinogram::from_projections(angles.to_vec(), &rasters)?,
        clamped_pixels,
    })
}

/// [`preprocess_projections`] followed by [`fbp_volume`].
pub fn tomo_pipeline(
    projections: &[Raster2D],
    angles: &[f64],
    cfg: &RetrievalConfig,
    mode: ReconMode,
    units: ReconUnits,
    options: FbpOptions,
) -> Result<Volume3D> {
    let prepared = preprocess_projections(projections, angles, cfg, mode, units)?;
    fbp_volume(&prepared.sinogram, options.filter, options.span)
}
