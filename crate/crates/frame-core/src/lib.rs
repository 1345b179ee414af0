//! Multi-robot LiDAR map merging.
//!
//! The pipeline takes two point-cloud maps built by different robots in
//! unknown relative frames and produces one merged map: descriptor search
//! finds where the maps overlap, circular correlation of orientation
//! histograms regresses the relative yaw, the matched keyframe pair anchors
//! an initial rigid transform, and a sphere-constrained plane-to-plane
//! registration refines it. A procedural tunnel simulator with an exact ray
//! caster provides ground-truthed data to exercise all of it.
//!
//! Modules, bottom to top:
//! - [`geometry`]: points, clouds, rigid transforms, trajectories, metrics.
//! - [`projection`]: spherical depth images from sensor-frame scans.
//! - [`descriptor`]: rotation-invariant place descriptors plus orientation
//!   histograms, and yaw regression between them.
//! - [`kdtree`]: exact nearest-neighbor search shared by the descriptor
//!   index and registration.
//! - [`overlap`]: descriptor index, best-pair queries, initial transforms.
//! - [`voxel`]: voxel-grid downsampling.
//! - [`registration`]: sphere sampling, surface covariances, and the
//!   plane-to-plane refinement loop.
//! - [`pipeline`]: end-to-end pairwise and recursive map merging.
//! - [`sim`]: tunnel worlds, the scan simulator, bundled scenarios.
//! - [`io`]: on-disk formats for clouds, trajectories, descriptors, depth
//!   images, meshes, and reports.

pub mod descriptor;
pub mod error;
pub mod geometry;
pub mod io;
pub mod kdtree;
pub mod overlap;
pub mod pipeline;
pub mod projection;
pub mod registration;
pub mod sim;
pub mod voxel;

pub use descriptor::{
    estimate_yaw, extract_descriptors, DescriptorRecord, OrientDescriptor, QueryDescriptor,
    DESCRIPTOR_LEN,
};
pub use error::{FrameError, Result};
pub use geometry::{
    rotation_error, transform_error, translation_error, wrap_angle, ErrorPair, Point3, PointCloud,
    RotationErrorMetrics, Trajectory, TrajectoryPose, TransformSE3,
};
pub use overlap::{build_index, initial_transform, query_best_pair, DescriptorIndex, OverlapMatch};
pub use pipeline::{
    compute_overlap_percent, merge_pair, merge_pair_with, merge_recursive, MergeReport, RobotRun,
    StageTimings,
};
pub use projection::{spherical_project, DepthImage, ProjectionConfig};
pub use registration::{
    estimate_covariances, gicp_register, prepare_cloud, sample_sphere, RegistrationParams,
    RegistrationResult, SphereRegion,
};
pub use voxel::{voxel_downsample, voxel_key};
