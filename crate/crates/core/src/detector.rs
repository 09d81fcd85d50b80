//! The iterative detection loop.
//!
//! Starting from a window, the detector repeatedly asks the oracle for a
//! decision pair and moves the corners inward until both corners agree:
//! `(Stop, Stop)` reports a detection, `(Reject, Reject)` abandons the
//! window. A lone `Stop` or `Reject` holds its corner while the other keeps
//! moving. Windows only ever shrink, so every run terminates within the
//! iteration cap.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    apply_directions, clamp_to_frame, clamp_to_image, enlarged_frame, BBox, WarpFrame,
};
use crate::labeling::{BrDecision, Scene, TlDecision};
use crate::oracle::{CornerActivations, DirectionOracle, OracleError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid detector config: {0}")]
pub struct ConfigError(pub &'static str);

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("start window lies outside the padded working frame")]
    StartOutsideFrame,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Proposal(#[from] crate::proposals::ProposalError),
}

/// Tunable parameters of the detection pipeline.
///
/// `l` and `tau` are measured in warped pixels: their effect in image
/// coordinates scales with the window. `alpha0` merges raw detections,
/// `beta` rescales merged boxes for the refinement pass, and `alpha1` merges
/// the refined survivors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Corner step length in the warped frame.
    pub l: f64,
    /// Stop margin in the warped frame.
    pub tau: f64,
    /// Maximum oracle queries per run.
    pub max_iters: usize,
    /// Square frame windows are warped to.
    pub warp: WarpFrame,
    /// IoU threshold for the initial merge.
    pub alpha0: f64,
    /// IoU threshold for the final merge after refinement.
    pub alpha1: f64,
    /// Rescale factor applied to merged boxes before re-detection.
    pub beta: f64,
    /// Whether the rescale-and-redetect pass runs.
    pub refine: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            l: 30.0,
            tau: 15.0,
            max_iters: 50,
            warp: WarpFrame::default(),
            alpha0: 0.8,
            alpha1: 0.5,
            beta: 2.5,
            refine: true,
        }
    }
}

impl DetectorConfig {
    /// The initial merge threshold drops to 0.6 when refinement is off, so
    /// nearby raw detections still collapse without the second pass.
    pub const ALPHA0_NO_REFINE: f64 = 0.6;

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.l <= 0.0 || !self.l.is_finite() {
            return Err(ConfigError("step length l must be positive"));
        }
        if self.tau < 0.0 || !self.tau.is_finite() {
            return Err(ConfigError("tau must be non-negative"));
        }
        if self.max_iters == 0 {
            return Err(ConfigError("max_iters must be at least 1"));
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return Err(ConfigError("alpha0 must lie in (0, 1]"));
        }
        if !(self.alpha1 > 0.0 && self.alpha1 <= 1.0) {
            return Err(ConfigError("alpha1 must lie in (0, 1]"));
        }
        if self.beta < 1.0 || !self.beta.is_finite() {
            return Err(ConfigError("beta must be at least 1"));
        }
        Ok(())
    }
}

/// A localized box with its confidence score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
}

/// One step of a detection run: the window the oracle saw and the decisions
/// it returned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceStep {
    pub window: BBox,
    pub tl: TlDecision,
    pub br: BrDecision,
}

/// How a detection run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectionStatus {
    /// Both corners agreed on `Stop`; the reported box is the final window
    /// clamped to the image.
    Detected(Detection),
    /// Both corners agreed on `Reject`.
    Rejected,
    /// The run failed to converge: either the iteration cap was reached, or
    /// the corners locked into a mixed stop/reject disagreement that a
    /// deterministic oracle would repeat forever.
    MaxIters,
    /// The window collapsed, or the final window had no overlap with the
    /// image left to report.
    Degenerate,
}

impl DetectionStatus {
    pub fn name(&self) -> &'static str {
        match self {
            DetectionStatus::Detected(_) => "detected",
            DetectionStatus::Rejected => "rejected",
            DetectionStatus::MaxIters => "max_iters",
            DetectionStatus::Degenerate => "degenerate",
        }
    }
}

/// Result of a full detection run.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionOutcome {
    pub status: DetectionStatus,
    /// Oracle queries performed; equals `trace.len()` and never exceeds the
    /// configured cap.
    pub iterations: usize,
    pub trace: Vec<TraceStep>,
}

impl DetectionOutcome {
    pub fn detection(&self) -> Option<&Detection> {
        match &self.status {
            DetectionStatus::Detected(d) => Some(d),
            _ => None,
        }
    }
}

/// Confidence that a window frames an instance exactly: the margin of each
/// corner's stop activation over its four competing activations, summed over
/// both corners. One-hot stop pairs score 2, and for uniformly softened
/// one-hot vectors the score is strictly maximized by the stop/stop pair as
/// long as the softening mass stays below 0.8.
pub fn detection_score(tl: &CornerActivations, br: &CornerActivations) -> f64 {
    let a = tl.values();
    let b = br.values();
    (a[3] - (a[0] + a[1] + a[2] + a[4])) + (b[3] - (b[0] + b[1] + b[2] + b[4]))
}

/// Runs the detection loop from `start` until the corners agree or the
/// iteration cap is reached.
///
/// The start window is clamped to the padded working frame (image plus half
/// its extent on every side); a start with no overlap there is an error.
/// Detected boxes are clamped to the image itself before being reported.
pub fn detect_from(
    start: &BBox,
    scene: &Scene,
    oracle: &dyn DirectionOracle,
    cfg: &DetectorConfig,
) -> Result<DetectionOutcome, DetectError> {
    cfg.validate()?;
    let frame = enlarged_frame(scene.image());
    let mut window = clamp_to_frame(start, &frame).map_err(|_| DetectError::StartOutsideFrame)?;
    let mut trace = Vec::new();

    let done = |status, iterations, trace| {
        Ok(DetectionOutcome {
            status,
            iterations,
            trace,
        })
    };

    for iteration in 1..=cfg.max_iters {
        let (ya, yb) = oracle.predict(scene, &window)?;
        let tl = TlDecision::from_index(ya.argmax()).expect("index < 5");
        let br = BrDecision::from_index(yb.argmax()).expect("index < 5");
        trace.push(TraceStep { window, tl, br });

        if tl == TlDecision::Reject && br == BrDecision::Reject {
            return done(DetectionStatus::Rejected, iteration, trace);
        }
        if tl == TlDecision::Stop && br == BrDecision::Stop {
            let status = match clamp_to_image(&window, scene.image()) {
                Ok(bbox) => DetectionStatus::Detected(Detection {
                    bbox,
                    score: detection_score(&ya, &yb),
                }),
                Err(_) => DetectionStatus::Degenerate,
            };
            return done(status, iteration, trace);
        }
        if tl.holds() && br.holds() {
            // Mixed stop/reject: neither corner moves, and a pure oracle
            // would answer the same way every remaining iteration. Report
            // the non-convergence immediately instead of spinning.
            return done(DetectionStatus::MaxIters, iteration, trace);
        }

        // A lone reject holds its corner like a stop while the other corner
        // keeps walking.
        let tl_move = if tl == TlDecision::Reject {
            TlDecision::Stop
        } else {
            tl
        };
        let br_move = if br == BrDecision::Reject {
            BrDecision::Stop
        } else {
            br
        };
        match apply_directions(&window, tl_move, br_move, cfg.l, cfg.warp) {
            Ok(next) => window = next,
            Err(_) => return done(DetectionStatus::Degenerate, iteration, trace),
        }
    }
    done(DetectionStatus::MaxIters, cfg.max_iters, trace)
}
