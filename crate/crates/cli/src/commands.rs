//! One function per subcommand. Each writes its artifacts plus a manifest
//! into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use phasebeam::io::{self, ConfigFile};
use phasebeam::metrics::snr_boost_report;
use phasebeam::physics::{design_report, DesignReport};
use phasebeam::retrieve::retrieve_density_detailed;
use phasebeam::tomo::{fbp_volume, preprocess_projections, ReconMode};
use phasebeam::{Raster2D, RasterKind};
use serde::Serialize;

use crate::args::{Cli, Command, GlobalArgs};
use crate::exit::UsageError;
use crate::manifest::{Manifest, RunRecorder};
use crate::pipeline::{project_all, run_pipeline, simulate_intensities, write_pipeline};

/// Parsed configuration with overrides applied, plus where it came from.
pub struct LoadedConfig {
    pub config: ConfigFile,
    pub path: PathBuf,
    pub base_dir: PathBuf,
}

pub fn load_config(global: &GlobalArgs) -> Result<LoadedConfig> {
    let Some(path) = &global.config else {
        return Err(UsageError("--config is required".into()).into());
    };
    let mut config = io::read_config(path)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    global.apply(&mut config);
    config.validate(&base_dir)?;
    Ok(LoadedConfig {
        config,
        path: path.clone(),
        base_dir,
    })
}

/// Execute a parsed command line and return the manifest it wrote.
pub fn run(cli: &Cli) -> Result<Manifest> {
    let g = &cli.global;
    let loaded = load_config(g)?;
    let cfg = &loaded.config;
    let mut rec = RunRecorder::new(&g.out, cli.command.name(), Some(cfg.seed))?;
    rec.input(&loaded.path)?;
    match &cli.command {
        Command::Design { sweep_delta, theta0 } => design(cfg, sweep_delta, *theta0, &mut rec)?,
        Command::Phantom => {
            let vol = cfg.phantom()?;
            io::write_volume(&vol, &rec.output("phantom.r32"))?;
        }
        Command::Project { volume } => {
            let vol = match volume {
                Some(p) => {
                    rec.input(p)?;
                    io::read_volume(p)?
                }
                None => cfg.phantom()?,
            };
            let angles = cfg.angles()?;
            let projected = project_all(&vol, &angles)?;
            let sino = phasebeam::tomo::Sinogram::from_projections(angles, &projected)?;
            io::write_sinogram(&sino, &rec.output("projected_density.r32"))?;
        }
        Command::Forward { input, no_noise } => {
            rec.input(input)?;
            let sino = io::read_sinogram(input)?;
            let projected = (0..sino.angles().len())
                .map(|a| sino.projection(a, RasterKind::ProjectedDensity))
                .collect::<phasebeam::Result<Vec<_>>>()?;
            let spectrum = cfg.spectrum(&loaded.base_dir)?;
            let images = simulate_intensities(cfg, &projected, spectrum.as_ref(), cfg.forward.noise && !no_noise)?;
            let out = phasebeam::tomo::Sinogram::from_projections(sino.angles().to_vec(), &images)?;
            io::write_sinogram(&out, &rec.output("intensity.r32"))?;
        }
        Command::Retrieve { input } => {
            rec.input(input)?;
            retrieve(cfg, g.mode(cfg), &loaded.base_dir, input, &mut rec)?;
        }
        Command::Fbp { input } => {
            rec.input(input)?;
            let sino = io::read_sinogram(input)?;
            let options = cfg.fbp_options()?;
            let vol = fbp_volume(&sino, options.filter, options.span)?;
            io::write_volume(&vol, &rec.output("volume.r32"))?;
        }
        Command::Metrics { pre, post, slice } => {
            rec.input(pre)?;
            rec.input(post)?;
            let a = cfg
                .analysis
                .as_ref()
                .context("metrics needs an analysis section in the config")?;
            let pre = load_image(pre, *slice)?;
            let post = load_image(post, *slice)?;
            let theta_used = cfg.geometry()?.divergence();
            let report =
                snr_boost_report(&pre, &post, &a.roi_signal, &a.roi_background, theta_used, a.theta0, a.estimator)?;
            println!(
                "snr_pre {:.4}  snr_post {:.4}  boost {:.4}  f {:.4}  net {:.4}  brilliance {:.4}",
                report.snr_pre,
                report.snr_post,
                report.snr_boost,
                report.collimation_penalty_f,
                report.net_boost,
                report.brilliance_boost
            );
            io::write_report(&report, &rec.output("snr_report.json"))?;
        }
        Command::Pipeline => {
            let mode = g.mode(cfg);
            let result = run_pipeline(cfg, &loaded.base_dir, mode)?;
            write_pipeline(&result, cfg, &mut rec)?;
            if let Some(t) = &result.report.tomography {
                println!(
                    "tomography: snr_pre {:.4}  snr_post {:.4}  boost {:.4}  net_boost {:.4}  brilliance {:.4}",
                    t.snr_pre, t.snr_post, t.snr_boost, t.net_boost, t.brilliance_boost
                );
            }
            if let Some(p) = &result.report.projection {
                println!("projection: snr_pre {:.4}  snr_post {:.4}  boost {:.4}", p.snr_pre, p.snr_post, p.snr_boost);
            }
            if let Some(p) = &result.report.projection_raw {
                println!("projection (raw counts): snr_pre {:.4}  boost {:.4}", p.snr_pre, p.snr_boost);
            }
        }
    }
    rec.finish()
}

#[derive(Debug, Serialize)]
struct DesignRow {
    sample_to_detector_delta: f64,
    report: DesignReport,
}

fn design(cfg: &ConfigFile, sweep: &[f64], theta0: Option<f64>, rec: &mut RunRecorder) -> Result<()> {
    let mat = cfg.material()?;
    let geom = cfg.geometry()?;
    let theta0 = theta0
        .or(cfg.analysis.as_ref().map(|a| a.theta0))
        .unwrap_or_else(|| geom.divergence());
    let deltas = if sweep.is_empty() {
        vec![geom.sample_to_detector_delta()]
    } else {
        sweep.to_vec()
    };
    let rows = deltas
        .iter()
        .map(|&delta| {
            let report = design_report(&mat, &geom.with_delta(delta)?, theta0)?;
            Ok(DesignRow {
                sample_to_detector_delta: delta,
                report,
            })
        })
        .collect::<phasebeam::Result<Vec<_>>>()?;
    print!("{}", design_table(&rows));
    if sweep.is_empty() {
        io::write_report(&rows[0].report, &rec.output("design.json"))?;
    } else {
        io::write_report(&rows, &rec.output("design_sweep.json"))?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4e}"))
}

fn design_table(rows: &[DesignRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>10} {:>11} {:>11} {:>11} {:>11} {:>11} {:>10} {:>11} {:>11}  flags",
        "delta_m", "theta_crit", "theta_opt", "tau_m2", "ell_m", "R_m", "N_F", "G_max", "B_max"
    );
    for r in rows {
        let d = &r.report;
        let flags: Vec<String> = d
            .flags
            .iter()
            .map(|f| serde_json::to_value(f).map_or_else(|_| "?".into(), |v| v.as_str().unwrap_or("?").to_string()))
            .collect();
        let _ = writeln!(
            s,
            "{:>10.4} {:>11.4e} {:>11.4e} {:>11.4e} {:>11} {:>11.4e} {:>10.2} {:>11} {:>11.4e}  {}",
            r.sample_to_detector_delta,
            d.theta_critical,
            d.theta_optimum,
            d.tau,
            opt(d.sharpening_length_ell),
            d.resolution_r,
            d.fresnel_number,
            opt(d.g_max),
            d.b_max,
            flags.join(",")
        );
    }
    if let Some(r) = rows.first() {
        let _ = writeln!(
            s,
            "theta0 = {:.4e} rad; brilliance boost > 1 requires theta0 < {:.4} rad",
            r.report.theta0, r.report.theta0_boundary
        );
    }
    s
}

/// True when the sidecar describes a sinogram rather than a single raster.
fn is_sinogram(path: &Path) -> Result<bool> {
    let side = io::sidecar_path(path);
    let text = fs::read_to_string(&side).with_context(|| format!("reading {}", side.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", side.display()))?;
    Ok(v.get("angles_rad").is_some())
}

fn is_volume(path: &Path) -> Result<bool> {
    let side = io::sidecar_path(path);
    let text = fs::read_to_string(&side).with_context(|| format!("reading {}", side.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", side.display()))?;
    Ok(v.get("nz").is_some())
}

/// A raster, or one horizontal slice of a volume (middle by default).
fn load_image(path: &Path, slice: Option<usize>) -> Result<Raster2D> {
    if is_volume(path)? {
        let v = io::read_volume(path)?;
        let y = slice.unwrap_or(v.ny() / 2);
        if y >= v.ny() {
            bail!("slice {y} outside volume with {} rows", v.ny());
        }
        Ok(v.slice_raster(y)?)
    } else {
        Ok(io::read_raster(path)?)
    }
}

#[derive(Debug, Serialize)]
struct RetrievalSummary {
    mode: ReconMode,
    tau: f64,
    sigma: f64,
    clamped_pixels: usize,
    fringe_residual: Option<f64>,
}

fn retrieve(cfg: &ConfigFile, mode: ReconMode, base_dir: &Path, input: &Path, rec: &mut RunRecorder) -> Result<()> {
    let spectrum = cfg.spectrum(base_dir)?;
    let rcfg = cfg.retrieval_config(spectrum.as_ref())?;
    let summary = if is_sinogram(input)? {
        let sino = io::read_sinogram(input)?;
        let images = (0..sino.angles().len())
            .map(|a| sino.projection(a, RasterKind::Intensity))
            .collect::<phasebeam::Result<Vec<_>>>()?;
        let units = cfg.tomography.as_ref().map(|t| t.units).unwrap_or_default();
        let prepared = preprocess_projections(&images, sino.angles(), &rcfg, mode, units)?;
        let name = match mode {
            ReconMode::AttenuationOnly => "sinogram_attenuation.r32",
            ReconMode::PhaseRetrieved => "sinogram_retrieved.r32",
        };
        io::write_sinogram(&prepared.sinogram, &rec.output(name))?;
        RetrievalSummary {
            mode,
            tau: rcfg.tau(),
            sigma: rcfg.sigma(),
            clamped_pixels: prepared.clamped_pixels,
            fringe_residual: None,
        }
    } else {
        let img = io::read_raster(input)?.relabel(RasterKind::Intensity)?;
        let r = retrieve_density_detailed(&img, &rcfg)?;
        io::write_raster(&r.image, &rec.output("retrieved.r32"))?;
        io::write_pgm(&r.image, &rec.output("retrieved.pgm"))?;
        RetrievalSummary {
            mode: ReconMode::PhaseRetrieved,
            tau: rcfg.tau(),
            sigma: rcfg.sigma(),
            clamped_pixels: r.clamped,
            fringe_residual: Some(r.fringe_residual),
        }
    };
    io::write_report(&summary, &rec.output("retrieval.json"))?;
    Ok(())
}
