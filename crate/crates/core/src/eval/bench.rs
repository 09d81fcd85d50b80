//! End-to-end benchmark runs and report assembly.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ap::{average_precision, match_detections, pr_curve, ApMode, PrPoint};
use crate::detector::{DetectError, DetectorConfig};
use crate::geometry::{iou, BBox};
use crate::labeling::Scene;
use crate::merge::detect_scene_detailed;
use crate::oracle::DirectionOracle;
use crate::proposals::PyramidSpec;

/// Matching threshold for scoring detections against ground truth.
pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("detection references unknown scene {0}")]
    UnknownScene(u64),
    #[error("duplicate scene id {0}")]
    DuplicateScene(u64),
    #[error("non-finite detection score in scene {0}")]
    NonFiniteScore(u64),
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Walk-length statistics over every detection run of a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct IterStats {
    pub mean: f64,
    pub max: usize,
}

impl IterStats {
    pub fn from_counts(counts: &[usize]) -> Self {
        if counts.is_empty() {
            return IterStats::default();
        }
        IterStats {
            mean: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
            max: *counts.iter().max().expect("non-empty"),
        }
    }
}

/// Aggregate scores of a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub ap: f64,
    /// Total detections emitted across all scenes.
    pub n_boxes: usize,
    pub pr: Vec<PrPoint>,
    pub iters: IterStats,
}

/// One emitted detection, tagged with its scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneDetectionRecord {
    pub scene_id: u64,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
}

/// Report plus the detections it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutput {
    pub report: BenchmarkReport,
    pub detections: Vec<SceneDetectionRecord>,
}

/// Scores detections against the scenes' target-class ground truth.
///
/// Detections are ranked globally by descending score (scene id, then
/// coordinate order, break ties), matched greedily per scene at
/// [`MATCH_IOU`], and reduced to a precision/recall curve and average
/// precision. `iters` is carried through into the report.
pub fn evaluate_detections(
    scenes: &[Scene],
    detections: &[SceneDetectionRecord],
    iters: IterStats,
    mode: ApMode,
) -> Result<BenchmarkReport, EvalError> {
    let mut gts: HashMap<u64, Vec<BBox>> = HashMap::with_capacity(scenes.len());
    for scene in scenes {
        let boxes = scene.target_instances().map(|(_, i)| i.bbox).collect();
        if gts.insert(scene.id(), boxes).is_some() {
            return Err(EvalError::DuplicateScene(scene.id()));
        }
    }

    let mut by_scene: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, det) in detections.iter().enumerate() {
        if !det.score.is_finite() {
            return Err(EvalError::NonFiniteScore(det.scene_id));
        }
        if !gts.contains_key(&det.scene_id) {
            return Err(EvalError::UnknownScene(det.scene_id));
        }
        by_scene.entry(det.scene_id).or_default().push(i);
    }

    // Matching is independent per scene, so map iteration order does not
    // affect the result: each flag lands at its detection's own index.
    let mut flags = vec![false; detections.len()];
    for (scene_id, indices) in &by_scene {
        let pairs: Vec<(BBox, f64)> = indices
            .iter()
            .map(|&i| (detections[i].bbox, detections[i].score))
            .collect();
        for (&i, hit) in indices
            .iter()
            .zip(match_detections(&pairs, &gts[scene_id], MATCH_IOU))
        {
            flags[i] = hit;
        }
    }

    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (&detections[a], &detections[b]);
        db.score
            .partial_cmp(&da.score)
            .expect("scores checked finite above")
            .then_with(|| da.scene_id.cmp(&db.scene_id))
            .then_with(|| da.bbox.lex_cmp(&db.bbox))
    });
    let ranked: Vec<bool> = order.iter().map(|&i| flags[i]).collect();

    let n_gt: usize = gts.values().map(Vec::len).sum();
    Ok(BenchmarkReport {
        ap: average_precision(&ranked, n_gt, mode),
        n_boxes: detections.len(),
        pr: pr_curve(&ranked, n_gt),
        iters,
    })
}

/// Runs the full detection pipeline over every scene and scores the
/// result. Iteration statistics cover every walk, including the rescale
/// passes.
pub fn run_benchmark(
    scenes: &[Scene],
    oracle: &dyn DirectionOracle,
    pyramid: &PyramidSpec,
    cfg: &DetectorConfig,
    mode: ApMode,
) -> Result<BenchmarkOutput, BenchError> {
    let mut detections = Vec::new();
    let mut counts = Vec::new();
    for scene in scenes {
        let result = detect_scene_detailed(scene, oracle, pyramid, cfg)?;
        counts.extend(result.runs.iter().map(|r| r.outcome.iterations));
        detections.extend(result.detections.iter().map(|d| SceneDetectionRecord {
            scene_id: scene.id(),
            bbox: d.bbox,
            score: d.score,
        }));
    }
    let report = evaluate_detections(scenes, &detections, IterStats::from_counts(&counts), mode)?;
    Ok(BenchmarkOutput { report, detections })
}

/// Mean over scenes of the best IoU any detection achieves against any
/// target instance; scenes without detections contribute zero. A scale-up
/// companion metric to AP for comparing pipeline variants.
pub fn mean_best_iou(scenes: &[Scene], detections: &[SceneDetectionRecord]) -> f64 {
    if scenes.is_empty() {
        return 0.0;
    }
    let total: f64 = scenes
        .iter()
        .map(|scene| {
            detections
                .iter()
                .filter(|d| d.scene_id == scene.id())
                .flat_map(|d| {
                    scene
                        .target_instances()
                        .map(move |(_, inst)| iou(&d.bbox, &inst.bbox))
                })
                .fold(0.0, f64::max)
        })
        .sum();
    total / scenes.len() as f64
}
