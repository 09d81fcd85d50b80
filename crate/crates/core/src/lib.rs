//! Iterative corner-walk object localization.
//!
//! A detection window is shrunk step by step: a direction oracle looks at the
//! window and emits one of five quantized decisions per corner (top-left and
//! bottom-right). Move decisions pull the corner inward by a fixed step
//! measured in the warped input frame; `Stop` holds the corner in place and
//! `Reject` votes to abandon the window. A detection is reported once both
//! corners agree on `Stop`, and a window is discarded once both agree on
//! `Reject`.
//!
//! The crate provides the full simulation pipeline around that loop:
//!
//! * [`geometry`]: axis-aligned boxes, IoU, the corner step rule.
//! * [`labeling`]: scenes and the ground-truth corner labeler.
//! * [`oracle`]: pluggable direction oracles (exact, noisy, grid replay).
//! * [`detector`]: the iterative loop and its termination rules.
//! * [`proposals`]: multi-scale sliding-window proposal generation.
//! * [`merge`]: clustering, merging and the rescale-and-redetect pass.
//! * [`augment`]: training-region sampling with balanced batches.
//! * [`eval`]: synthetic scene generation, PR/AP scoring, benchmark runs.
//!
//! Everything is deterministic: all randomness flows from caller-provided
//! seeds, and every operation is a pure function of its inputs, so runs can
//! be reproduced byte for byte.

pub mod augment;
pub mod detector;
pub mod eval;
pub mod geometry;
pub mod labeling;
pub mod merge;
pub mod oracle;
pub mod proposals;

mod hashing;

pub use augment::{compose_batch, sample_negative, sample_positive, AugmentedRegion, SampleError};
pub use detector::{
    detect_from, detection_score, DetectError, Detection, DetectionOutcome, DetectionStatus,
    DetectorConfig, TraceStep,
};
pub use eval::{
    average_precision, evaluate_detections, generate_scenes, match_detections, run_benchmark,
    ApMode, BenchmarkOutput, BenchmarkReport, IterStats, PrPoint, SceneDetectionRecord, SceneLaw,
};
pub use geometry::{
    apply_directions, clamp_to_image, enlarged_frame, iou, rescale_about_center, BBox,
    GeometryError, ImageSize, WarpFrame,
};
pub use labeling::{label_corners, select_target, BrDecision, Instance, Scene, TlDecision};
pub use merge::{
    detect_scene, detect_scene_detailed, merge_cluster, single_linkage, RunPhase, RunRecord,
    SceneDetections,
};
pub use oracle::{
    build_oracle, CornerActivations, DirectionOracle, GridOracle, GroundTruthOracle, NoisyOracle,
    OracleError, OracleKind, OracleSpec,
};
pub use proposals::{canvas_sizes, grid_windows, propose, Canvas, ProposalError, PyramidSpec};
