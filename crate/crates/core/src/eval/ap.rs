//! Greedy detection matching and average precision.

use serde::{Deserialize, Serialize};

use crate::geometry::{iou, BBox};

/// Interpolation rule for average precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApMode {
    /// Mean of the interpolated precision at recalls 0.0, 0.1, ..., 1.0,
    /// the VOC 2007 protocol. The default.
    #[default]
    ElevenPoint,
    /// Exact area under the monotone precision envelope.
    AllPoint,
}

/// One point of the precision/recall curve, taken after each ranked
/// detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Marks each detection as true or false positive against `ground_truth`.
///
/// Detections are ranked by descending score (coordinate order breaks
/// ties) and greedily matched: a detection claims the highest-IoU ground
/// truth still unmatched, provided the IoU reaches `iou_threshold`. Each
/// ground truth matches at most once; later duplicates are false
/// positives. Flags are returned in input order.
pub fn match_detections(
    detections: &[(BBox, f64)],
    ground_truth: &[BBox],
    iou_threshold: f64,
) -> Vec<bool> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .1
            .partial_cmp(&detections[a].1)
            .expect("scores are finite")
            .then_with(|| detections[a].0.lex_cmp(&detections[b].0))
    });

    let mut taken = vec![false; ground_truth.len()];
    let mut hits = vec![false; detections.len()];
    for &idx in &order {
        let window = &detections[idx].0;
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in ground_truth.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let overlap = iou(window, gt);
            // Strict improvement keeps the lowest index on equal IoU.
            if overlap >= iou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((g, overlap));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            hits[idx] = true;
        }
    }
    hits
}

/// Precision/recall staircase for hit flags already in rank order.
pub fn pr_curve(ranked_hits: &[bool], n_gt: usize) -> Vec<PrPoint> {
    if n_gt == 0 {
        return Vec::new();
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut out = Vec::with_capacity(ranked_hits.len());
    for &hit in ranked_hits {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        out.push(PrPoint {
            recall: tp as f64 / n_gt as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    out
}

fn interpolated_precision(pr: &[PrPoint], recall: f64) -> f64 {
    pr.iter()
        .filter(|p| p.recall >= recall)
        .map(|p| p.precision)
        .fold(0.0, f64::max)
}

/// Average precision from hit flags in rank order. `n_gt = 0` yields 0.
pub fn average_precision(ranked_hits: &[bool], n_gt: usize, mode: ApMode) -> f64 {
    let pr = pr_curve(ranked_hits, n_gt);
    if pr.is_empty() {
        return 0.0;
    }
    match mode {
        ApMode::ElevenPoint => {
            let sum: f64 = (0..=10)
                .map(|i| interpolated_precision(&pr, i as f64 / 10.0))
                .sum();
            sum / 11.0
        }
        ApMode::AllPoint => {
            // Monotone envelope: precision at each point becomes the max of
            // everything at equal or higher recall, then integrate the
            // staircase over recall.
            let mut envelope: Vec<f64> = pr.iter().map(|p| p.precision).collect();
            for i in (0..envelope.len() - 1).rev() {
                envelope[i] = envelope[i].max(envelope[i + 1]);
            }
            let mut area = 0.0;
            let mut prev = 0.0;
            for (point, &precision) in pr.iter().zip(&envelope) {
                if point.recall > prev {
                    area += (point.recall - prev) * precision;
                    prev = point.recall;
                }
            }
            area
        }
    }
}
