use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "reframe", version, about = "Depth-based reprojection toolkit for camera-trajectory editing")]
pub struct Cli {
    /// Seed for every stochastic step (RANSAC sampling).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a procedural scene into a scene directory.
    Synth(SynthArgs),
    /// Lift depth maps to per-pixel 3-D pointmaps (CAMT).
    Lift(LiftArgs),
    /// Camera-induced flow for every frame (.flo + target depth CAMT).
    Flow(FlowArgs),
    /// Forward-warp frames to target cameras.
    Warp(WarpArgs),
    /// Recover a target camera pose from 2-D matches and source depth.
    Pose(PoseArgs),
    /// Build a target trajectory from a preset or keyframes.
    Traj(TrajArgs),
    /// Positional-encoding and coordinate maps re-aligned by the flow.
    Pe(PeArgs),
    /// Image-quality report over a set of frames.
    Eval(EvalArgs),
    /// HTTP preview service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// checker_plane | two_planes | textured_sphere | moving_box
    #[arg(long)]
    pub scene: String,
    #[arg(long, default_value_t = 12)]
    pub frames: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Camera translation per frame along +x (world units).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub pan: f64,
    /// Scene parameter override, repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    #[arg(long, default_value_t = 96)]
    pub height: usize,
    /// Focal length in pixels (fx = fy).
    #[arg(long, default_value_t = 100.0)]
    pub focal: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Space {
    Camera,
    World,
}

#[derive(Debug, Args)]
pub struct LiftArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Space::World)]
    pub space: Space,
}

/// Where each frame's camera goes.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct TargetSource {
    /// Camera JSON with one target pose per frame (or a single pose).
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// JSON `{"R": [[..]], "t": [..]}` relative transform applied to every frame.
    #[arg(long)]
    pub rel: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Source cameras (defaults to the scene's cameras.json).
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[command(flatten)]
    pub target: TargetSource,
    /// Use pointmaps written by `lift` instead of lifting the scene depth.
    #[arg(long)]
    pub pointmaps: Option<PathBuf>,
    /// Frame space of `--pointmaps`.
    #[arg(long, value_enum, default_value_t = Space::World, requires = "pointmaps")]
    pub space: Space,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write colour-wheel PNGs.
    #[arg(long)]
    pub vis: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    PerFrame,
    AllFrame,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplatArg {
    Nearest,
    Bilinear,
}

#[derive(Debug, Args)]
#[group(id = "warp_target", required = true, multiple = false)]
pub struct WarpTarget {
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub rel: Option<PathBuf>,
    /// Directory of flow_NNNN.flo (+ target_depth_NNNN.camt) from `flow`.
    #[arg(long)]
    pub flow: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WarpArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::PerFrame)]
    pub mode: ModeArg,
    #[command(flatten)]
    pub target: WarpTarget,
    /// Warp only this frame.
    #[arg(long)]
    pub frame: Option<usize>,
    #[arg(long, value_enum, default_value_t = SplatArg::Nearest)]
    pub splat: SplatArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PoseArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Source frame whose depth anchors the matches.
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// JSON list of {"src": [u, v], "tgt": [u, v]}.
    #[arg(long)]
    pub matches: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0.999)]
    pub confidence: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Orbit,
    Dolly,
    Truck,
    Arc,
    Static,
}

#[derive(Debug, Args)]
#[group(id = "traj_source", required = true, multiple = false)]
pub struct TrajSource {
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    /// Camera JSON whose frames are keyframes (index = frame number).
    #[arg(long)]
    pub keyframes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrajArgs {
    #[command(flatten)]
    pub source: TrajSource,
    /// Base cameras the preset moves (scene directory).
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Base cameras the preset moves (camera JSON); overrides --scene.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    /// Frame count (defaults to the base trajectory length).
    #[arg(long)]
    pub frames: Option<usize>,
    /// Preset parameter, repeatable (e.g. total_offset=0.3).
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PeArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[command(flatten)]
    pub target: WarpTarget,
    #[arg(long, default_value_t = 64)]
    pub channels: usize,
    #[arg(long, default_value_t = 10_000.0)]
    pub base: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of predicted PNG frames (sorted by name).
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of reference PNG frames.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value = "psnr,ssim", value_delimiter = ',')]
    pub metrics: Vec<String>,
    /// full | covisible | occluded
    #[arg(long, default_value = "full")]
    pub mask: String,
    /// Hole-mask PNGs (from `warp`) defining the occluded region.
    #[arg(long)]
    pub holes: Option<PathBuf>,
    /// Input frames; enables the difficulty/distortion curve.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 10, requires = "input")]
    pub bins: usize,
    /// 1-ssim | mse | mae
    #[arg(long, default_value = "1-ssim", requires = "input")]
    pub distance: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Allowed CORS origin (any when omitted).
    #[arg(long)]
    pub allow_origin: Option<String>,
}
