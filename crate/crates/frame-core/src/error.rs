use std::path::PathBuf;

use thiserror::Error;

/// Error type shared across the library.
#[derive(Debug, Error)]
pub enum FrameError {
    /// A point with a NaN or infinite coordinate reached a stage that
    /// requires finite geometry.
    #[error("non-finite point coordinate at index {index}")]
    NonFinitePoint { index: usize },

    /// A rotation matrix failed the orthonormality / determinant check.
    #[error("rotation matrix is not orthonormal (residual {residual:.3e})")]
    NonOrthonormalRotation { residual: f64 },

    /// Orientation descriptor carries no signal, so no yaw can be regressed.
    #[error("degenerate orientation descriptor")]
    DegenerateOrientationDescriptor,

    /// A descriptor vector violated its construction contract.
    #[error("descriptor values invalid: {reason}")]
    InvalidDescriptor { reason: &'static str },

    /// A depth image had the wrong shape for descriptor extraction.
    #[error("depth image is {height}x{width}, expected {expected_height}x{expected_width}")]
    ImageShape {
        height: usize,
        width: usize,
        expected_height: usize,
        expected_width: usize,
    },

    /// An index was requested over an empty record set.
    #[error("empty descriptor record set")]
    EmptyRecordSet,

    /// Every candidate pairing is degenerate; there is nothing to match on.
    #[error("no discriminative overlap")]
    NoDiscriminativeOverlap,

    /// The initial alignment leaves no correspondences within the gate.
    #[error("initial guess outside capture range")]
    CaptureRange,

    /// A cloud is too small for the requested neighborhood size.
    #[error("point cloud has {len} points, need at least {need}")]
    CloudTooSmall { len: usize, need: usize },

    /// An operation that requires points received none.
    #[error("empty point cloud")]
    EmptyCloud,

    /// The corridor graph does not form a single connected component.
    #[error("corridor graph is not connected")]
    DisconnectedWorld,

    /// A corridor edge has a non-positive width, height, or length.
    #[error("corridor edge {index} has invalid dimensions")]
    InvalidCorridor { index: usize },

    /// A trajectory waypoint lies outside the world's free space.
    #[error("waypoint {index} lies outside the world free space")]
    WaypointOutsideWorld { index: usize },

    /// Runs passed to ground-truth extraction came from different worlds.
    #[error("runs were simulated in different worlds")]
    WorldMismatch,

    /// A descriptor record references a timestep missing from the trajectory.
    #[error("record timestep {timestep} is missing from the trajectory")]
    OrphanRecord { timestep: u32 },

    /// Merging needs at least two runs.
    #[error("need at least {need} runs, got {got}")]
    TooFewRuns { got: usize, need: usize },

    /// A pipeline stage failed; the stage name is preserved for reporting.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<FrameError>,
    },

    /// Malformed input file. The offset is a byte position into the file.
    #[error("parse error in {path} at byte {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FrameError {
    /// Wrap an error with the name of the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> FrameError {
        FrameError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The stage name if this error was tagged with one.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            FrameError::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// True for malformed-input errors (as opposed to pipeline failures).
    pub fn is_parse(&self) -> bool {
        match self {
            FrameError::Parse { .. } => true,
            FrameError::Stage { source, .. } => source.is_parse(),
            _ => false,
        }
    }

    /// True for errors attributable to input files, whether unreadable
    /// (i/o) or malformed (parse); pipeline failures return false.
    pub fn is_input(&self) -> bool {
        match self {
            FrameError::Parse { .. } | FrameError::Io { .. } => true,
            FrameError::Stage { source, .. } => source.is_input(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, FrameError>;
