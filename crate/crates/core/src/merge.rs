//! Clustering and merging of raw detections, plus the full per-scene
//! pipeline: propose, detect, merge, rescale-and-redetect, merge again.
//!
//! Many proposal windows converge onto the same instance from different
//! directions, each with its own quantization error. Averaging a cluster of
//! agreeing detections cancels most of that error, and re-running detection
//! from an enlarged version of each merged box gives the oracle one more
//! chance to reject false positives while averaging a second ensemble.

use serde::Serialize;

use crate::detector::{
    detect_from, DetectError, Detection, DetectionOutcome, DetectionStatus, DetectorConfig,
};
use crate::geometry::{iou, rescale_about_center, BBox};
use crate::labeling::Scene;
use crate::oracle::DirectionOracle;
use crate::proposals::{propose, PyramidSpec};

/// Groups detections into single-linkage clusters: two detections belong to
/// the same cluster when a chain of pairwise IoU >= `t` links them. Clusters
/// are ordered by their smallest member index, and members are ascending, so
/// the partition is deterministic.
pub fn single_linkage(dets: &[Detection], t: f64) -> Vec<Vec<usize>> {
    let n = dets.len();
    let mut assigned = vec![false; n];
    let mut clusters = Vec::new();
    for seed in 0..n {
        if assigned[seed] {
            continue;
        }
        // Breadth-first flood over the IoU graph.
        let mut members = vec![seed];
        assigned[seed] = true;
        let mut cursor = 0;
        while cursor < members.len() {
            let current = members[cursor];
            cursor += 1;
            for other in 0..n {
                if !assigned[other] && iou(&dets[current].bbox, &dets[other].bbox) >= t {
                    assigned[other] = true;
                    members.push(other);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    clusters
}

/// Collapses a non-empty cluster to one detection: the coordinate-wise mean
/// of the boxes, carrying the maximum score of the members.
pub fn merge_cluster(members: &[Detection]) -> Detection {
    assert!(!members.is_empty(), "cannot merge an empty cluster");
    let n = members.len() as f64;
    let mut sums = [0.0f64; 4];
    let mut score = f64::NEG_INFINITY;
    for d in members {
        for (s, c) in sums.iter_mut().zip(d.bbox.coords()) {
            *s += c;
        }
        score = score.max(d.score);
    }
    let bbox = BBox::new(sums[0] / n, sums[1] / n, sums[2] / n, sums[3] / n)
        .expect("mean of valid boxes is valid");
    Detection { bbox, score }
}

/// Which pass of the pipeline a detection run belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunPhase {
    /// Run started from a proposal window.
    Initial,
    /// Run started from an enlarged merged box.
    Refine,
}

/// One detection run within a scene pipeline, with its full outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub phase: RunPhase,
    pub start: BBox,
    pub outcome: DetectionOutcome,
}

/// Detections for one scene along with every run that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneDetections {
    /// Final merged detections, sorted by descending score with coordinate
    /// order breaking ties.
    pub detections: Vec<Detection>,
    pub runs: Vec<RunRecord>,
}

fn merge_at(dets: &[Detection], t: f64) -> Vec<Detection> {
    single_linkage(dets, t)
        .iter()
        .map(|cluster| {
            let members: Vec<Detection> = cluster.iter().map(|&i| dets[i]).collect();
            merge_cluster(&members)
        })
        .collect()
}

/// Full detection pipeline for one scene, keeping per-run records.
///
/// Steps: generate proposals, walk each to a verdict, merge detections at
/// `alpha0`, then (with refinement on) rescale each merged box by `beta`,
/// re-detect from it, drop runs that do not end in a detection, and merge
/// the survivors at `alpha1`. With refinement off the `alpha0` merge is
/// final; callers typically lower `alpha0` to
/// [`DetectorConfig::ALPHA0_NO_REFINE`] in that case.
pub fn detect_scene_detailed(
    scene: &Scene,
    oracle: &dyn DirectionOracle,
    pyramid: &PyramidSpec,
    cfg: &DetectorConfig,
) -> Result<SceneDetections, DetectError> {
    cfg.validate()?;
    pyramid.validate().map_err(DetectError::Proposal)?;

    let mut runs = Vec::new();
    let mut raw = Vec::new();
    for start in propose(scene, oracle, pyramid)? {
        let outcome = detect_from(&start, scene, oracle, cfg)?;
        if let DetectionStatus::Detected(d) = &outcome.status {
            raw.push(*d);
        }
        runs.push(RunRecord {
            phase: RunPhase::Initial,
            start,
            outcome,
        });
    }

    let merged = merge_at(&raw, cfg.alpha0);

    let mut detections = if cfg.refine {
        let mut survivors = Vec::new();
        for m in &merged {
            let start = rescale_about_center(&m.bbox, cfg.beta);
            let outcome = detect_from(&start, scene, oracle, cfg)?;
            if let DetectionStatus::Detected(d) = &outcome.status {
                survivors.push(*d);
            }
            runs.push(RunRecord {
                phase: RunPhase::Refine,
                start,
                outcome,
            });
        }
        merge_at(&survivors, cfg.alpha1)
    } else {
        merged
    };

    detections.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then_with(|| a.bbox.lex_cmp(&b.bbox))
    });

    Ok(SceneDetections { detections, runs })
}

/// [`detect_scene_detailed`] without the run records.
pub fn detect_scene(
    scene: &Scene,
    oracle: &dyn DirectionOracle,
    pyramid: &PyramidSpec,
    cfg: &DetectorConfig,
) -> Result<Vec<Detection>, DetectError> {
    Ok(detect_scene_detailed(scene, oracle, pyramid, cfg)?.detections)
}
