use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("incompatible dimensions: {left_w}x{left_h} vs {right_w}x{right_h}")]
    IncompatibleDimensions {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },
    #[error("target exceeds source: {target_w}x{target_h} requested from {source_w}x{source_h}")]
    TargetExceedsSource {
        target_w: usize,
        target_h: usize,
        source_w: usize,
        source_h: usize,
    },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("empty route")]
    EmptyRoute,
    #[error("inconsistent capture: {0}")]
    InconsistentCapture(String),
    #[error("empty sweep")]
    EmptySweep,
    #[error("angles must be strictly increasing (at sample {index}: {angle} after {previous})")]
    AnglesNotIncreasing {
        index: usize,
        previous: f64,
        angle: f64,
    },
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("invalid route name {0:?}: use letters, digits, dash or underscore")]
    InvalidName(String),
    #[error("no frames in {}", .0.display())]
    NoFrames(PathBuf),
    #[error("cannot decode {}: {reason}", path.display())]
    Decode { path: PathBuf, reason: String },
    #[error("not a route: {} has no manifest.json", .0.display())]
    NotARoute(PathBuf),
    #[error("corrupt route {name}: checksum {actual} does not match manifest {expected}")]
    CorruptRoute {
        name: String,
        expected: String,
        actual: String,
    },
    #[error("missing frame file {}", .0.display())]
    MissingFrame(PathBuf),
    #[error("route {0:?} already exists")]
    NameCollision(String),
    #[error("malformed dataset entry {}: {reason}", path.display())]
    MalformedDataset { path: PathBuf, reason: String },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
