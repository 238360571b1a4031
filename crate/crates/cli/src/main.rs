//! `widefov`: ray fitting, evaluation, augmentation, view sampling and
//! synthetic data generation on top of `widefov-core`.
//!
//! Exit codes: 0 on success, 2 for invalid input, 3 when a numerical
//! procedure fails.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "widefov", version, about = "Wide field-of-view geometry toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file (reports) or directory (augment, synth). Reports go to
    /// stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit spherical-harmonics coefficients to a camera's ray field.
    FitRays(FitRaysArgs),
    /// Pose metrics between two TUM trajectories.
    EvalPose(EvalPoseArgs),
    /// Accuracy, completion and normal consistency of aligned point clouds.
    EvalPoints(EvalPointsArgs),
    /// Depth metrics between two radial-distance maps.
    EvalDepth(EvalDepthArgs),
    /// Loss breakdown for a multi-view prediction.
    EvalLoss(EvalLossArgs),
    /// Wide-FoV augmentations.
    #[command(subcommand)]
    Augment(AugmentCommand),
    /// Distance-softmax view sampling.
    Sample(SampleArgs),
    /// Render a box scene along a camera trajectory.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct FitRaysArgs {
    /// Camera JSON file.
    #[arg(long, conflicts_with = "rays", required_unless_present = "rays")]
    pub camera: Option<PathBuf>,
    /// Three-channel PFM ray field, fitted on the equirectangular chart.
    #[arg(long)]
    pub rays: Option<PathBuf>,
    /// Camera class recorded with coefficients fitted from `--rays`.
    #[arg(long, value_enum, default_value_t = ClassArg::Sphere)]
    pub class: ClassArg,
    /// Harmonic degree L.
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ClassArg {
    Pinhole,
    Fisheye,
    Sphere,
}

#[derive(Args, Debug)]
pub struct EvalPoseArgs {
    /// Predicted trajectory (TUM text).
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth trajectory (TUM text).
    #[arg(long)]
    pub gt: PathBuf,
    /// Threshold in degrees for RRA, RTA and AUC.
    #[arg(long, default_value_t = 30)]
    pub tau: u32,
}

#[derive(Args, Debug)]
pub struct EvalPointsArgs {
    /// Predicted cloud (PLY), index-paired with the ground truth.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth cloud (PLY).
    #[arg(long)]
    pub gt: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalDepthArgs {
    /// Predicted radial map (single-channel PFM).
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth radial map (single-channel PFM).
    #[arg(long)]
    pub gt: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalLossArgs {
    /// Loss manifest JSON listing per-view maps and trajectories.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Loss-weight JSON applied over the manifest's weights.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Single weight override such as `normal=5`; repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum AugmentCommand {
    /// Rotate an equirectangular image, radial map and pose.
    ErpRotate(ErpRotateArgs),
    /// Reproject a pinhole view into a Kannala-Brandt camera.
    PinholeToFisheye(PinholeToFisheyeArgs),
}

#[derive(Args, Debug)]
pub struct ViewInput {
    /// Image (PFM or PNG).
    #[arg(long)]
    pub image: PathBuf,
    /// Radial distance map (single-channel PFM).
    #[arg(long)]
    pub radial: PathBuf,
    /// Camera-to-world pose as a one-line TUM file; identity when omitted.
    #[arg(long)]
    pub pose: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ErpRotateArgs {
    #[command(flatten)]
    pub view: ViewInput,
    /// Azimuth in radians; drawn uniformly from [0, 2π) with `--seed` when
    /// omitted.
    #[arg(long, allow_negative_numbers = true)]
    pub azimuth: Option<f64>,
    /// Elevation in radians.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub elevation: f64,
}

#[derive(Args, Debug)]
pub struct PinholeToFisheyeArgs {
    #[command(flatten)]
    pub view: ViewInput,
    /// Source pinhole camera JSON.
    #[arg(long)]
    pub camera: PathBuf,
    /// Target Kannala-Brandt camera JSON.
    #[arg(long)]
    pub target: PathBuf,
    /// Splatting sharpness per unit of inverse radial distance.
    #[arg(long, default_value_t = widefov_core::augment::DEFAULT_ALPHA)]
    pub alpha: f64,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// JSON array of `[x, y, z]` camera centers.
    #[arg(long, group = "source")]
    pub positions: Option<PathBuf>,
    /// TUM trajectory whose camera centers are used.
    #[arg(long, group = "source")]
    pub trajectory: Option<PathBuf>,
    /// JSON square matrix of pairwise distances.
    #[arg(long, group = "source")]
    pub distances: Option<PathBuf>,
    /// Number of views to draw.
    #[arg(long)]
    pub k: usize,
    /// Softmax temperature in meters.
    #[arg(long, default_value_t = widefov_core::sampler::DEFAULT_TEMPERATURE)]
    pub temperature: f64,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Scene JSON; a 4 x 3 x 5 m checkered box when omitted.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Camera JSON; a 128 x 64 equirectangular camera when omitted.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    /// Number of views; ignored when the scene's own trajectory is used.
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    /// Trajectory shape; defaults to the scene's trajectory if it has one,
    /// otherwise a circle.
    #[arg(long, value_enum)]
    pub pattern: Option<PatternArg>,
    /// Circle radius in meters.
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Line length in meters.
    #[arg(long, default_value_t = 2.0)]
    pub length: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PatternArg {
    Circle,
    Line,
    Random,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
