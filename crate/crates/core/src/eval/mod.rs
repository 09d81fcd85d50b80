//! Evaluation toolkit: greedy detection matching, precision/recall and
//! average precision, a deterministic synthetic-scene generator, and the
//! end-to-end benchmark runner that ties them together.

mod ap;
mod bench;
mod scenes;

pub use ap::{average_precision, match_detections, pr_curve, ApMode, PrPoint};
pub use bench::{
    evaluate_detections, mean_best_iou, run_benchmark, BenchError, BenchmarkOutput,
    BenchmarkReport, EvalError, IterStats, SceneDetectionRecord, MATCH_IOU,
};
pub use scenes::{generate_scenes, LawError, SceneLaw};
