//! End-to-end simulation: phantom, projections, phase-contrast intensities
//! with Poisson noise, both reconstruction modes, and the SNR comparison.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use phasebeam::forward::{add_poisson_noise, phase_contrast_forward, polychromatic_forward, project_density, ForwardConfig};
use phasebeam::io::{self, ConfigFile};
use phasebeam::metrics::{snr_boost_report, snr_with, SnrReport};
use phasebeam::tomo::{fbp_volume, preprocess_projections, PreparedSinogram, ReconMode, ReconUnits, Sinogram};
use phasebeam::{Raster2D, RasterKind, Spectrum, Volume3D};
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::RunRecorder;

/// Independent per-projection noise seed derived from the run seed.
pub fn projection_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise-free detector image of one projected-density raster.
pub fn forward_image(rho_perp: &Raster2D, fcfg: &ForwardConfig, spectrum: Option<&Spectrum>) -> phasebeam::Result<Raster2D> {
    match spectrum {
        Some(s) if s.len() > 1 => {
            let i0 = fcfg.i0();
            polychromatic_forward(rho_perp, s, fcfg)?.map(RasterKind::Intensity, |v| v * i0)
        }
        _ => phase_contrast_forward(rho_perp, fcfg),
    }
}

/// Detector images for every projection, with Poisson noise when enabled.
pub fn simulate_intensities(
    cfg: &ConfigFile,
    projected: &[Raster2D],
    spectrum: Option<&Spectrum>,
    noise: bool,
) -> Result<Vec<Raster2D>> {
    let fcfg = cfg.forward_config()?;
    let images = projected
        .par_iter()
        .enumerate()
        .map(|(i, rho)| {
            let clean = forward_image(rho, &fcfg, spectrum)?;
            if noise {
                add_poisson_noise(&clean, cfg.forward.exposure_scale, projection_seed(cfg.seed, i))
            } else {
                Ok(clean)
            }
            .map_err(|e| e.at_projection(i))
        })
        .collect::<phasebeam::Result<Vec<_>>>()?;
    Ok(images)
}

pub fn project_all(vol: &Volume3D, angles: &[f64]) -> Result<Vec<Raster2D>> {
    Ok(angles
        .par_iter()
        .map(|&phi| project_density(vol, phi))
        .collect::<phasebeam::Result<Vec<_>>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub mode: ReconMode,
    pub units: ReconUnits,
    pub seed: u64,
    pub tau: f64,
    pub sigma: f64,
    pub slice_index: usize,
    pub clamped_pixels_attenuation: usize,
    pub clamped_pixels_retrieved: Option<usize>,
    /// Attenuation-only reconstruction SNR on the analysis slice.
    pub snr_attenuation: Option<f64>,
    /// Slice comparison of the two reconstructions.
    pub tomography: Option<SnrReport>,
    /// First projection: attenuation-only `ρ⊥` against retrieved `ρ⊥`.
    pub projection: Option<SnrReport>,
    /// First projection: raw detector counts against retrieved `ρ⊥`.
    pub projection_raw: Option<SnrReport>,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub report: PipelineReport,
    pub phantom: Volume3D,
    pub projected: Sinogram,
    pub intensity: Sinogram,
    pub attenuation: PreparedSinogram,
    pub retrieved: Option<PreparedSinogram>,
    pub volume_attenuation: Volume3D,
    pub volume_retrieved: Option<Volume3D>,
}

/// Run the whole simulation in memory. `attenuation_only` skips every
/// retrieval stage; otherwise both reconstructions are produced so they can
/// be compared.
pub fn run_pipeline(cfg: &ConfigFile, base_dir: &Path, mode: ReconMode) -> Result<PipelineResult> {
    let tomo = cfg.tomography()?.clone();
    let phantom = cfg.phantom().context("building phantom")?;
    let angles = cfg.angles()?;
    let spectrum = cfg.spectrum(base_dir)?;
    let rcfg = cfg.retrieval_config(spectrum.as_ref())?;
    let options = cfg.fbp_options()?;

    log::info!("projecting {} angles", angles.len());
    let projected = project_all(&phantom, &angles)?;
    let intensities = simulate_intensities(cfg, &projected, spectrum.as_ref(), cfg.forward.noise)?;

    log::info!("reconstructing");
    let attenuation = preprocess_projections(&intensities, &angles, &rcfg, ReconMode::AttenuationOnly, tomo.units)
        .context("attenuation-only preprocessing")?;
    let volume_attenuation = fbp_volume(&attenuation.sinogram, options.filter, options.span)?;
    let (retrieved, volume_retrieved) = match mode {
        ReconMode::AttenuationOnly => (None, None),
        ReconMode::PhaseRetrieved => {
            let r = preprocess_projections(&intensities, &angles, &rcfg, ReconMode::PhaseRetrieved, tomo.units)
                .context("phase retrieval")?;
            let v = fbp_volume(&r.sinogram, options.filter, options.span)?;
            (Some(r), Some(v))
        }
    };

    let slice_index = phantom.ny() / 2;
    let theta_used = cfg.geometry()?.divergence();
    let mut snr_attenuation = None;
    let mut tomography = None;
    let mut projection = None;
    let mut projection_raw = None;
    if let Some(a) = &cfg.analysis {
        let pre = volume_attenuation.slice_raster(slice_index)?;
        snr_attenuation = Some(snr_with(&pre, &a.roi_signal, &a.roi_background, a.estimator)?);
        if let Some(v) = &volume_retrieved {
            let post = v.slice_raster(slice_index)?;
            tomography = Some(snr_boost_report(
                &pre,
                &post,
                &a.roi_signal,
                &a.roi_background,
                theta_used,
                a.theta0,
                a.estimator,
            )?);
        }
        if let (Some(sig), Some(bg), Some(r)) = (a.projection_roi_signal, a.projection_roi_background, &retrieved) {
            let post = r.sinogram.projection(0, RasterKind::Generic)?;
            let pre = attenuation.sinogram.projection(0, RasterKind::Generic)?;
            projection = Some(snr_boost_report(&pre, &post, &sig, &bg, theta_used, a.theta0, a.estimator)?);
            projection_raw =
                Some(snr_boost_report(&intensities[0], &post, &sig, &bg, theta_used, a.theta0, a.estimator)?);
        }
    }

    let report = PipelineReport {
        mode,
        units: tomo.units,
        seed: cfg.seed,
        tau: rcfg.tau(),
        sigma: rcfg.sigma(),
        slice_index,
        clamped_pixels_attenuation: attenuation.clamped_pixels,
        clamped_pixels_retrieved: retrieved.as_ref().map(|r| r.clamped_pixels),
        snr_attenuation,
        tomography,
        projection,
        projection_raw,
    };
    Ok(PipelineResult {
        report,
        phantom,
        projected: Sinogram::from_projections(angles.clone(), &projected)?,
        intensity: Sinogram::from_projections(angles, &intensities)?,
        attenuation,
        retrieved,
        volume_attenuation,
        volume_retrieved,
    })
}

/// Line profiles through the analysis slice: one row of `x` values at the
/// signal ROI's centre row (the middle row without an analysis section).
pub fn profiles_csv(result: &PipelineResult, cfg: &ConfigFile) -> Result<String> {
    let y = result.report.slice_index;
    let truth = result.phantom.slice_raster(y)?;
    let pre = result.volume_attenuation.slice_raster(y)?;
    let post = result.volume_retrieved.as_ref().map(|v| v.slice_raster(y)).transpose()?;
    let row = cfg
        .analysis
        .as_ref()
        .map_or(truth.height() / 2, |a| (a.roi_signal.y0 + a.roi_signal.y1) / 2);
    let scale = match result.report.units {
        ReconUnits::Density => 1.0,
        ReconUnits::LinearAttenuation => result.report.sigma,
    };
    let mut out = String::from("x_m,truth,attenuation_only,phase_retrieved\n");
    for x in 0..truth.width() {
        let xm = result.phantom.coordinate(x, truth.width());
        let retrieved = post.as_ref().map_or(String::new(), |p| format!("{:.9e}", p.get(x, row)));
        writeln!(
            out,
            "{xm:.9e},{:.9e},{:.9e},{retrieved}",
            truth.get(x, row) * scale,
            pre.get(x, row)
        )?;
    }
    Ok(out)
}

/// Write every artifact of a pipeline run.
pub fn write_pipeline(result: &PipelineResult, cfg: &ConfigFile, rec: &mut RunRecorder) -> Result<()> {
    io::write_report(cfg, &rec.output("config.json"))?;
    io::write_volume(&result.phantom, &rec.output("phantom.r32"))?;
    io::write_sinogram(&result.projected, &rec.output("projected_density.r32"))?;
    io::write_sinogram(&result.intensity, &rec.output("intensity.r32"))?;
    io::write_sinogram(&result.attenuation.sinogram, &rec.output("sinogram_attenuation.r32"))?;
    io::write_volume(&result.volume_attenuation, &rec.output("volume_attenuation.r32"))?;
    let y = result.report.slice_index;
    io::write_pgm(&result.phantom.slice_raster(y)?, &rec.output("slice_truth.pgm"))?;
    io::write_pgm(&result.volume_attenuation.slice_raster(y)?, &rec.output("slice_attenuation.pgm"))?;
    if let (Some(r), Some(v)) = (&result.retrieved, &result.volume_retrieved) {
        io::write_sinogram(&r.sinogram, &rec.output("sinogram_retrieved.r32"))?;
        io::write_volume(v, &rec.output("volume_retrieved.r32"))?;
        io::write_pgm(&v.slice_raster(y)?, &rec.output("slice_retrieved.pgm"))?;
    }
    let csv = profiles_csv(result, cfg)?;
    let path = rec.output("profiles.csv");
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    io::write_report(&result.report, &rec.output("report.json"))?;
    Ok(())
}
