use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use phasebeam::forward::LaplacianMode;
use phasebeam::io::ConfigFile;
use phasebeam::tomo::ReconMode;
use phasebeam::Padding;

#[derive(Debug, Parser)]
#[command(name = "phasebeam", version, about = "Neutron phase-contrast design, simulation, retrieval and tomography")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured RNG seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "PHASEBEAM_THREADS")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "phasebeam-out")]
    pub out: PathBuf,
    /// Retrieval filter parameter in m², replacing the physical value.
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    /// Floor for normalized intensities before taking logarithms.
    #[arg(long = "clamp-epsilon", global = true)]
    pub clamp_epsilon: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub laplacian: Option<LaplacianArg>,
    #[arg(long, global = true, value_enum)]
    pub padding: Option<PaddingArg>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    #[value(name = "attenuation_only")]
    AttenuationOnly,
    #[value(name = "phase_retrieved")]
    PhaseRetrieved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LaplacianArg {
    Fourier,
    Fd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PaddingArg {
    Mirror2x,
    None,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Collimation and resolution calculator.
    Design {
        /// Comma-separated sample-to-detector distances (m) to tabulate.
        #[arg(long, value_delimiter = ',')]
        sweep_delta: Vec<f64>,
        /// Reference divergence for the brilliance boost (rad).
        #[arg(long)]
        theta0: Option<f64>,
    },
    /// Voxelize the configured cylinder phantom.
    Phantom,
    /// Projected-density sinogram of a volume (the configured phantom by default).
    Project {
        #[arg(long)]
        volume: Option<PathBuf>,
    },
    /// Phase-contrast intensities from a projected-density sinogram.
    Forward {
        #[arg(long)]
        input: PathBuf,
        /// Skip Poisson noise even if the config enables it.
        #[arg(long)]
        no_noise: bool,
    },
    /// Retrieve a single intensity raster or preprocess an intensity sinogram.
    Retrieve {
        #[arg(long)]
        input: PathBuf,
    },
    /// Filtered backprojection of a line-integral sinogram.
    Fbp {
        #[arg(long)]
        input: PathBuf,
    },
    /// ROI SNR comparison of two rasters or volume slices.
    Metrics {
        #[arg(long)]
        pre: PathBuf,
        #[arg(long)]
        post: PathBuf,
        /// Slice index used when an input is a volume (default: middle).
        #[arg(long)]
        slice: Option<usize>,
    },
    /// Phantom to reconstruction and SNR report, end to end.
    Pipeline,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Design { .. } => "design",
            Command::Phantom => "phantom",
            Command::Project { .. } => "project",
            Command::Forward { .. } => "forward",
            Command::Retrieve { .. } => "retrieve",
            Command::Fbp { .. } => "fbp",
            Command::Metrics { .. } => "metrics",
            Command::Pipeline => "pipeline",
        }
    }
}

impl GlobalArgs {
    /// Fold command-line overrides into a parsed configuration.
    pub fn apply(&self, cfg: &mut ConfigFile) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(tau) = self.tau {
            cfg.retrieval.tau_override = Some(tau);
        }
        if let Some(eps) = self.clamp_epsilon {
            cfg.retrieval.clamp_epsilon = Some(eps);
        }
        if let (Some(mode), Some(t)) = (self.mode, cfg.tomography.as_mut()) {
            t.mode = match mode {
                ModeArg::AttenuationOnly => ReconMode::AttenuationOnly,
                ModeArg::PhaseRetrieved => ReconMode::PhaseRetrieved,
            };
        }
        if let Some(l) = self.laplacian {
            cfg.forward.laplacian_mode = match l {
                LaplacianArg::Fourier => LaplacianMode::FourierSymbol,
                LaplacianArg::Fd => LaplacianMode::FiniteDifference5pt,
            };
        }
        if let Some(p) = self.padding {
            let padding = match p {
                PaddingArg::Mirror2x => Padding::Mirror2x,
                PaddingArg::None => Padding::None,
            };
            cfg.forward.padding = padding;
            cfg.retrieval.padding = padding;
        }
    }

    /// `--mode` if given, else the configured tomography mode.
    pub fn mode(&self, cfg: &ConfigFile) -> ReconMode {
        match self.mode {
            Some(ModeArg::AttenuationOnly) => ReconMode::AttenuationOnly,
            Some(ModeArg::PhaseRetrieved) => ReconMode::PhaseRetrieved,
            None => cfg.tomography.as_ref().map(|t| t.mode).unwrap_or_default(),
        }
    }
}
