//! File formats: raw little-endian `f32` payloads with JSON sidecars for
//! rasters, volumes and sinograms; a strict JSON run configuration; spectrum
//! CSV; deterministic JSON reports; and a 16-bit PGM preview.
//!
//! Payload files use the `.r32` extension and the sidecar sits next to them
//! with `.json`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::forward::{BlurModel, ForwardConfig, LaplacianMode};
use crate::fourier::Padding;
use crate::geometry::BeamGeometry;
use crate::material::{DispersionPoint, Material};
use crate::metrics::SnrEstimator;
use crate::raster::{Raster2D, RasterKind, Roi};
use crate::retrieve::RetrievalConfig;
use crate::spectrum::{SpectralBin, Spectrum};
use crate::tomo::{uniform_angles, AngularSpan, FbpOptions, RampFilter, ReconMode, ReconUnits, Sinogram};
use crate::volume::{Cylinder, Volume3D, VolumeKind};

pub const SCHEMA_VERSION: u32 = 1;

/// Sidecar path for a payload path.
pub fn sidecar_path(payload: &Path) -> PathBuf {
    payload.with_extension("json")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })
}

/// Serialize with stable field order and every float at 17 significant
/// digits.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloat::default());
    value.serialize(&mut ser).map_err(|source| Error::Json {
        context: "serializing report".into(),
        source,
    })?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Write `value` as deterministic pretty JSON.
pub fn write_report<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = to_json_string(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Pretty JSON formatter that prints floats as `{:.16e}`.
#[derive(Default)]
struct FixedFloat<'a> {
    inner: PrettyFormatter<'a>,
}

impl Formatter for FixedFloat<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object_value(w)
    }
}

fn encode_f32(values: &[f64], path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::with_capacity(4 * values.len());
    for (i, &v) in values.iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::format(path, format!("value {v:e} at index {i} does not fit in f32")));
        }
        bytes.extend_from_slice(&f.to_le_bytes());
    }
    Ok(bytes)
}

fn decode_f32(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != 4 * expected {
        return Err(Error::format(
            path,
            format!("payload length mismatch: expected {} bytes, found {}", 4 * expected, bytes.len()),
        ));
    }
    bytes
        .chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if v.is_finite() {
                Ok(v as f64)
            } else {
                Err(Error::format(path, format!("non-finite value at index {i}")))
            }
        })
        .collect()
}

fn check_encoding(path: &Path, version: u32, endianness: &str, dtype: &str) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(Error::format(path, format!("unsupported schema_version {version}")));
    }
    if endianness != "little" || dtype != "f32" {
        return Err(Error::format(
            path,
            format!("unsupported encoding {endianness}/{dtype}, expected little/f32"),
        ));
    }
    Ok(())
}

fn write_payload(bytes: &[u8], path: &Path) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterHeader {
    pub schema_version: u32,
    pub width: usize,
    pub height: usize,
    pub pitch_x_m: f64,
    pub pitch_y_m: f64,
    pub kind: RasterKind,
    pub endianness: String,
    pub dtype: String,
}

/// Write `<path>` (payload) and its `.json` sidecar.
pub fn write_raster(raster: &Raster2D, path: &Path) -> Result<()> {
    let bytes = encode_f32(raster.values(), path)?;
    let header = RasterHeader {
        schema_version: SCHEMA_VERSION,
        width: raster.width(),
        height: raster.height(),
        pitch_x_m: raster.pitch_x(),
        pitch_y_m: raster.pitch_y(),
        kind: raster.kind(),
        endianness: "little".into(),
        dtype: "f32".into(),
    };
    write_payload(&bytes, path)?;
    write_report(&header, &sidecar_path(path))
}

pub fn read_raster(path: &Path) -> Result<Raster2D> {
    let header: RasterHeader = read_json(&sidecar_path(path))?;
    check_encoding(path, header.schema_version, &header.endianness, &header.dtype)?;
    let values = decode_f32(path, header.width * header.height)?;
    Raster2D::new(
        header.width,
        header.height,
        header.pitch_x_m,
        header.pitch_y_m,
        header.kind,
        values,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub schema_version: u32,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub voxel_pitch_m: f64,
    pub kind: VolumeKind,
    /// Always `"y,z,x"`, slowest first.
    pub axis_order: String,
    pub endianness: String,
    pub dtype: String,
}

const VOLUME_AXES: &str = "y,z,x";

pub fn write_volume(vol: &Volume3D, path: &Path) -> Result<()> {
    let bytes = encode_f32(vol.density(), path)?;
    let header = VolumeHeader {
        schema_version: SCHEMA_VERSION,
        nx: vol.nx(),
        ny: vol.ny(),
        nz: vol.nz(),
        voxel_pitch_m: vol.pitch(),
        kind: vol.kind(),
        axis_order: VOLUME_AXES.into(),
        endianness: "little".into(),
        dtype: "f32".into(),
    };
    write_payload(&bytes, path)?;
    write_report(&header, &sidecar_path(path))
}

pub fn read_volume(path: &Path) -> Result<Volume3D> {
    let header: VolumeHeader = read_json(&sidecar_path(path))?;
    check_encoding(path, header.schema_version, &header.endianness, &header.dtype)?;
    if header.axis_order != VOLUME_AXES {
        return Err(Error::format(path, format!("unsupported axis_order {}", header.axis_order)));
    }
    let values = decode_f32(path, header.nx * header.ny * header.nz)?;
    Volume3D::new(header.nx, header.ny, header.nz, header.voxel_pitch_m, header.kind, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinogramHeader {
    pub schema_version: u32,
    pub rows: usize,
    pub detector_pixels: usize,
    pub pitch_m: f64,
    pub angles_rad: Vec<f64>,
    /// Always `"angle,row,detector"`, slowest first.
    pub axis_order: String,
    pub endianness: String,
    pub dtype: String,
}

const SINOGRAM_AXES: &str = "angle,row,detector";

pub fn write_sinogram(sino: &Sinogram, path: &Path) -> Result<()> {
    let bytes = encode_f32(sino.data(), path)?;
    let header = SinogramHeader {
        schema_version: SCHEMA_VERSION,
        rows: sino.rows(),
        detector_pixels: sino.detector_pixels(),
        pitch_m: sino.pitch(),
        angles_rad: sino.angles().to_vec(),
        axis_order: SINOGRAM_AXES.into(),
        endianness: "little".into(),
        dtype: "f32".into(),
    };
    write_payload(&bytes, path)?;
    write_report(&header, &sidecar_path(path))
}

pub fn read_sinogram(path: &Path) -> Result<Sinogram> {
    let header: SinogramHeader = read_json(&sidecar_path(path))?;
    check_encoding(path, header.schema_version, &header.endianness, &header.dtype)?;
    if header.axis_order != SINOGRAM_AXES {
        return Err(Error::format(path, format!("unsupported axis_order {}", header.axis_order)));
    }
    let n = header.angles_rad.len() * header.rows * header.detector_pixels;
    let values = decode_f32(path, n)?;
    Sinogram::new(header.angles_rad, header.rows, header.detector_pixels, header.pitch_m, values)
}

/// 16-bit binary PGM preview, linearly scaled between the raster's min and
/// max, which are recorded in a header comment.
pub fn write_pgm(raster: &Raster2D, path: &Path) -> Result<()> {
    let (min, max) = (raster.min(), raster.max());
    let range = max - min;
    let mut out = format!(
        "P5\n# min={min:.16e} max={max:.16e}\n{} {}\n65535\n",
        raster.width(),
        raster.height()
    )
    .into_bytes();
    for &v in raster.values() {
        let level = if range > 0.0 { ((v - min) / range * 65535.0).round() as u16 } else { 0 };
        out.extend_from_slice(&level.to_be_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Two-column `wavelength_m,weight` CSV; an optional header line and `#`
/// comments are allowed.
pub fn read_spectrum_csv(path: &Path) -> Result<Spectrum> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let mut bins: Vec<SpectralBin> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        if record.len() != 2 {
            return Err(Error::format(
                path,
                format!("line {line}: expected 2 columns (wavelength_m, weight), found {}", record.len()),
            ));
        }
        let parse = |s: &str| s.parse::<f64>();
        match (parse(&record[0]), parse(&record[1])) {
            (Ok(wavelength), Ok(weight)) => {
                if let Some(prev) = bins.last() {
                    if wavelength <= prev.wavelength {
                        return Err(Error::format(
                            path,
                            format!("line {line}: wavelengths must be strictly increasing"),
                        ));
                    }
                }
                bins.push(SpectralBin { wavelength, weight });
            }
            _ if bins.is_empty() && i == 0 => continue,
            _ => {
                return Err(Error::format(
                    path,
                    format!("line {line}: cannot parse '{}', '{}' as numbers", &record[0], &record[1]),
                ))
            }
        }
    }
    if bins.is_empty() {
        return Err(Error::format(path, "no spectral bins"));
    }
    Spectrum::new(bins).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_spectrum_csv(spectrum: &Spectrum, path: &Path) -> Result<()> {
    let mut out = String::from("wavelength_m,weight\n");
    for b in spectrum.bins() {
        out.push_str(&format!("{:.16e},{:.16e}\n", b.wavelength, b.weight));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn four() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub scattering_length_b: f64,
    pub total_cross_section_sigma: f64,
    #[serde(default)]
    pub dispersion: Option<Vec<DispersionPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub pinhole_d: f64,
    pub source_to_sample_l: f64,
    pub sample_to_detector_delta: f64,
    #[serde(default = "one")]
    pub magnification_m: f64,
    pub wavelength_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumSpec {
    Bins(Vec<SpectralBin>),
    /// CSV path, relative paths resolved against the config file.
    Csv(PathBuf),
    EqualWidth { min_m: f64, max_m: f64, n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardSpec {
    pub i0: f64,
    #[serde(default)]
    pub laplacian_mode: LaplacianMode,
    #[serde(default)]
    pub padding: Padding,
    #[serde(default)]
    pub blur_model: BlurModel,
    /// Poisson noise is drawn at `value × exposure_scale` counts.
    #[serde(default = "one")]
    pub exposure_scale: f64,
    #[serde(default = "yes")]
    pub noise: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalSpec {
    #[serde(default)]
    pub tau_override: Option<f64>,
    #[serde(default)]
    pub padding: Padding,
    #[serde(default)]
    pub skip_log_step: bool,
    #[serde(default)]
    pub clamp_epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographySpec {
    pub n_angles: usize,
    #[serde(default)]
    pub span: AngularSpan,
    /// Whether the last angle repeats the first view one span later.
    #[serde(default)]
    pub closed: bool,
    #[serde(default)]
    pub filter: RampFilter,
    #[serde(default)]
    pub mode: ReconMode,
    #[serde(default)]
    pub units: ReconUnits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub voxel_pitch: f64,
    #[serde(default = "four")]
    pub supersample: usize,
    pub cylinders: Vec<Cylinder>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    /// Attenuation-imaging divergence the phase-contrast run is compared to.
    pub theta0: f64,
    pub roi_signal: Roi,
    pub roi_background: Roi,
    #[serde(default)]
    pub estimator: SnrEstimator,
    /// Optional ROIs on the first projection for a 2-D comparison.
    #[serde(default)]
    pub projection_roi_signal: Option<Roi>,
    #[serde(default)]
    pub projection_roi_background: Option<Roi>,
}

/// The whole run configuration. Unknown keys anywhere are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: u64,
    pub material: MaterialSpec,
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub spectrum: Option<SpectrumSpec>,
    pub forward: ForwardSpec,
    #[serde(default)]
    pub retrieval: RetrievalSpec,
    #[serde(default)]
    pub tomography: Option<TomographySpec>,
    #[serde(default)]
    pub phantom: Option<PhantomSpec>,
    #[serde(default)]
    pub analysis: Option<AnalysisSpec>,
}

impl ConfigFile {
    pub fn material(&self) -> Result<Material> {
        let m = Material::new(self.material.scattering_length_b, self.material.total_cross_section_sigma)?;
        match &self.material.dispersion {
            Some(table) => m.with_dispersion(table.clone()),
            None => Ok(m),
        }
    }

    pub fn geometry(&self) -> Result<BeamGeometry> {
        let g = &self.geometry;
        BeamGeometry::new(
            g.pinhole_d,
            g.source_to_sample_l,
            g.sample_to_detector_delta,
            g.magnification_m,
            g.wavelength_lambda,
        )
    }

    /// The configured spectrum; CSV paths are resolved against `base_dir`.
    pub fn spectrum(&self, base_dir: &Path) -> Result<Option<Spectrum>> {
        Ok(match &self.spectrum {
            None => None,
            Some(SpectrumSpec::Bins(bins)) => Some(Spectrum::new(bins.clone())?),
            Some(SpectrumSpec::Csv(p)) => Some(read_spectrum_csv(&base_dir.join(p))?),
            Some(SpectrumSpec::EqualWidth { min_m, max_m, n }) => {
                Some(Spectrum::equal_width(*min_m, *max_m, *n, |_| 1.0)?)
            }
        })
    }

    pub fn forward_config(&self) -> Result<ForwardConfig> {
        if !(self.forward.exposure_scale.is_finite() && self.forward.exposure_scale > 0.0) {
            return Err(Error::invariant(
                "exposure_scale",
                format!("{} must be positive", self.forward.exposure_scale),
            ));
        }
        Ok(ForwardConfig::new(self.material()?, self.geometry()?, self.forward.i0)?
            .with_laplacian(self.forward.laplacian_mode)
            .with_padding(self.forward.padding)
            .with_blur_model(self.forward.blur_model))
    }

    /// Retrieval settings. With a spectrum present, `τ` and `σ` are the
    /// spectral averages; otherwise they follow from the nominal wavelength.
    pub fn retrieval_config(&self, spectrum: Option<&Spectrum>) -> Result<RetrievalConfig> {
        let (mat, geom) = (self.material()?, self.geometry()?);
        let base = match spectrum {
            Some(s) => {
                let a = crate::retrieve::spectral_averages(s, &mat, &geom)?;
                RetrievalConfig::new(a.tau_eff, a.sigma_av, self.forward.i0)?
            }
            None => RetrievalConfig::from_physics(&mat, &geom, self.forward.i0)?,
        };
        let cfg = match self.retrieval.tau_override {
            Some(t) => base.with_tau(t)?,
            None => base,
        };
        cfg.with_padding(self.retrieval.padding)
            .with_skip_log_step(self.retrieval.skip_log_step)
            .with_clamp_epsilon(self.retrieval.clamp_epsilon)
    }

    pub fn angles(&self) -> Result<Vec<f64>> {
        let t = self.tomography()?;
        if t.n_angles < 2 {
            return Err(Error::invariant("n_angles", "at least two angles are required"));
        }
        Ok(uniform_angles(t.n_angles, t.span, t.closed))
    }

    pub fn tomography(&self) -> Result<&TomographySpec> {
        self.tomography
            .as_ref()
            .ok_or_else(|| Error::invariant("tomography", "section missing from config"))
    }

    pub fn fbp_options(&self) -> Result<FbpOptions> {
        let t = self.tomography()?;
        Ok(FbpOptions {
            filter: t.filter,
            span: t.span,
        })
    }

    pub fn phantom(&self) -> Result<Volume3D> {
        let p = self
            .phantom
            .as_ref()
            .ok_or_else(|| Error::invariant("phantom", "section missing from config"))?;
        Volume3D::from_cylinders(p.nx, p.ny, p.nz, p.voxel_pitch, &p.cylinders, p.supersample)
    }

    /// Build every configured object once so errors surface at load time.
    pub fn validate(&self, base_dir: &Path) -> Result<()> {
        self.forward_config()?;
        let spectrum = self.spectrum(base_dir)?;
        self.retrieval_config(spectrum.as_ref())?;
        if self.tomography.is_some() {
            self.angles()?;
        }
        if let Some(p) = &self.phantom {
            if p.supersample == 0 {
                return Err(Error::invariant("supersample", "must be at least 1"));
            }
        }
        if let Some(a) = &self.analysis {
            let rois = [Some(a.roi_signal), Some(a.roi_background), a.projection_roi_signal, a.projection_roi_background];
            for r in rois.iter().flatten() {
                Roi::new(r.x0, r.y0, r.x1, r.y1)?;
            }
            if !(a.theta0.is_finite() && a.theta0 > 0.0) {
                return Err(Error::invariant("theta0", format!("{} must be positive", a.theta0)));
            }
        }
        Ok(())
    }
}

/// Parse and validate a configuration file.
pub fn read_config(path: &Path) -> Result<ConfigFile> {
    let cfg: ConfigFile = read_json(path)?;
    cfg.validate(path.parent().unwrap_or(Path::new(".")))?;
    Ok(cfg)
}
