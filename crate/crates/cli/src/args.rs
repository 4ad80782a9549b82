use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use viderex_core::imgproc::{DEFAULT_WORKING_HEIGHT, DEFAULT_WORKING_WIDTH};
use viderex_core::nav::{
    CalibrationMode, FeedbackSettings, HapticRule, DEFAULT_HAPTIC_FRACTION, DEFAULT_TONE_MAX_HZ, DEFAULT_TONE_MIN_HZ,
};
use viderex_core::route::{CaptureParams, DEFAULT_FOV_DEG};

#[derive(Debug, Parser)]
#[command(name = "viderex", version, about = "Record, follow, evaluate and serve familiarity-based visual routes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a directory of frames as a route.
    Record(RecordArgs),
    /// Replay frames against a stored route; prints updates and the heading estimate as CSV.
    Follow(FollowArgs),
    /// Evaluate a sweep dataset against a stored route and write plot CSVs.
    Eval(EvalArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Generate a synthetic route and sweep dataset.
    Synth(SynthArgs),
    /// Exchange routes with a remote service.
    #[command(subcommand)]
    Sync(SyncCommand),
}

#[derive(Debug, Args)]
pub struct StoreArg {
    /// Root directory of the local route store.
    #[arg(long, env = "VIDEREX_STORE", default_value = "routes")]
    pub store: PathBuf,
}

#[derive(Debug, Args)]
pub struct ResolutionArgs {
    /// Working width in pixels.
    #[arg(long, default_value_t = DEFAULT_WORKING_WIDTH)]
    pub width: usize,
    /// Working height in pixels.
    #[arg(long, default_value_t = DEFAULT_WORKING_HEIGHT)]
    pub height: usize,
    /// Camera horizontal field of view in degrees.
    #[arg(long, default_value_t = DEFAULT_FOV_DEG)]
    pub fov: f64,
}

impl ResolutionArgs {
    pub fn params(&self, stride: usize) -> CaptureParams {
        CaptureParams {
            width: self.width,
            height: self.height,
            fov_deg: self.fov,
            stride,
        }
    }
}

#[derive(Debug, Args)]
pub struct FeedbackArgs {
    /// Calibration of the difference range: fixed or running.
    #[arg(long, default_value = "fixed")]
    pub calib: CalibrationMode,
    #[arg(long, default_value_t = DEFAULT_TONE_MIN_HZ)]
    pub tone_min: f64,
    #[arg(long, default_value_t = DEFAULT_TONE_MAX_HZ)]
    pub tone_max: f64,
    /// Absolute difference below which the haptic cue fires.
    #[arg(long, conflicts_with = "haptic_fraction")]
    pub haptic_threshold: Option<f64>,
    /// Haptic threshold as a fraction of the calibrated range.
    #[arg(long, default_value_t = DEFAULT_HAPTIC_FRACTION)]
    pub haptic_fraction: f64,
}

impl FeedbackArgs {
    pub fn settings(&self) -> FeedbackSettings {
        FeedbackSettings {
            mode: self.calib,
            tone_min_hz: self.tone_min,
            tone_max_hz: self.tone_max,
            haptic: match self.haptic_threshold {
                Some(t) => HapticRule::Absolute(t),
                None => HapticRule::Fraction(self.haptic_fraction),
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    /// Directory of frame images, taken in lexicographic order.
    pub source_dir: PathBuf,
    /// Route name.
    pub name: String,
    /// Keep every n-th frame.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[command(flatten)]
    pub resolution: ResolutionArgs,
    #[command(flatten)]
    pub store: StoreArg,
    /// Replace an existing route of the same name.
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct FollowArgs {
    pub route: String,
    /// Frames to replay. Files named `a<tenths of a degree>.<ext>` are taken
    /// in angle order with those angles; otherwise in name order with angles
    /// from --angle-start and --angle-step.
    pub frames_dir: PathBuf,
    #[command(flatten)]
    pub feedback: FeedbackArgs,
    #[command(flatten)]
    pub store: StoreArg,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub angle_start: f64,
    #[arg(long, default_value_t = 1.0)]
    pub angle_step: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub dataset_dir: PathBuf,
    pub route: String,
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub store: StoreArg,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "VIDEREX_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: std::net::IpAddr,
    #[command(flatten)]
    pub store: StoreArg,
    /// Seconds of inactivity after which a session is dropped.
    #[arg(long, default_value_t = 600)]
    pub idle_timeout: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Where to write the sweep dataset.
    pub dataset_dir: PathBuf,
    /// Name of the training route saved into the store.
    pub name: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub positions: usize,
    #[command(flatten)]
    pub store: StoreArg,
}

#[derive(Debug, Subcommand)]
pub enum SyncCommand {
    /// List the remote catalog.
    List {
        #[arg(long)]
        remote: String,
    },
    /// Upload a stored route.
    Push {
        name: String,
        #[arg(long)]
        remote: String,
        #[command(flatten)]
        store: StoreArg,
    },
    /// Download a route into the store.
    Pull {
        name: String,
        #[arg(long)]
        remote: String,
        #[command(flatten)]
        store: StoreArg,
    },
}
