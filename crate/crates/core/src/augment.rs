//! Training-region sampling.
//!
//! Detector training needs windows labeled with every decision pair, in
//! balanced proportions: each of the 16 move/stop combinations gets an equal
//! share, and half of every batch is negatives labeled reject/reject. A
//! combination is sampled by drawing a window size around the anchor
//! instance, solving the per-axis placement interval that yields the wanted
//! decisions, drawing a placement, and re-verifying through the real labeler
//! (other instances can still interfere, in which case the draw retries).

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::DetectorConfig;
use crate::geometry::{enlarged_frame, BBox};
use crate::hashing::mix64;
use crate::labeling::{label_corners, select_target, BrDecision, Scene, TlDecision};

/// All 16 positive decision pairs: both corners either move or stop, never
/// reject. Ordered top-left-major for reproducible batch layouts.
pub const POSITIVE_COMBOS: [(TlDecision, BrDecision); 16] = {
    let tl = [
        TlDecision::Right,
        TlDecision::RightDown,
        TlDecision::Down,
        TlDecision::Stop,
    ];
    let br = [
        BrDecision::Left,
        BrDecision::LeftUp,
        BrDecision::Up,
        BrDecision::Stop,
    ];
    let mut out = [(TlDecision::Stop, BrDecision::Stop); 16];
    let mut i = 0;
    while i < 16 {
        out[i] = (tl[i / 4], br[i % 4]);
        i += 1;
    }
    out
};

/// Attempts per sample before giving up.
pub const ATTEMPT_BUDGET: usize = 10_000;

const SCALE_RANGE: (f64, f64) = (0.3, 1.5);
const ASPECT_RANGE: (f64, f64) = (0.5, 2.0);
const SCENE_PICK_SALT: u64 = 0x0005_ce7e_91c4;
const SHUFFLE_SALT: u64 = 0x5f1e_1d2b;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SampleError {
    #[error("combo decisions must not contain reject")]
    InvalidCombo,
    #[error("scene has no instance of the target class")]
    NoTargetInstance,
    #[error("cannot compose a batch from zero scenes")]
    NoScenes,
    #[error("batch size {0} must be a positive multiple of 32")]
    IndivisibleBatch(usize),
    #[error("no qualifying region found after {attempts} attempts")]
    Unsatisfiable { attempts: usize },
}

/// One sampled training region: a window over a scene with its decision
/// labels. `target_index` is the responsible instance, `None` for
/// negatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentedRegion {
    pub scene_id: u64,
    pub window: BBox,
    pub tl: TlDecision,
    pub br: BrDecision,
    pub target_index: Option<usize>,
}

/// Placement interval for one window edge so that the corner decisions on
/// this axis come out as requested. `extent` is the instance span on the
/// axis, `len` the window length, `band` the stop band in image pixels, and
/// `frame` the allowed frame span. Returns the interval for the window's
/// low edge, or `None` when the constraints are incompatible.
fn axis_interval(
    tl_moves: bool,
    br_moves: bool,
    extent: (f64, f64),
    len: f64,
    band: f64,
    frame: (f64, f64),
) -> Option<(f64, f64)> {
    let (g1, g2) = extent;
    let (frame1, frame2) = frame;
    // Strict inequalities in the labeler get a small safety margin.
    const DELTA: f64 = 1e-6;
    let (tl_lo, tl_hi) = if tl_moves {
        (f64::NEG_INFINITY, g1 - band - DELTA)
    } else {
        // Stop side: the edge stays within the band around the instance
        // edge, which also keeps truncation small.
        (g1 - band, g1 + band)
    };
    let (br_lo, br_hi) = if br_moves {
        (g2 + band + DELTA - len, f64::INFINITY)
    } else {
        (g2 - band - len, g2 + band - len)
    };
    let lo = tl_lo.max(br_lo).max(frame1);
    let hi = tl_hi.min(br_hi).min(frame2 - len);
    (lo <= hi).then_some((lo, hi))
}

fn draw_window_size(rng: &mut ChaCha8Rng, gw: f64, gh: f64) -> (f64, f64) {
    let sigma = rng.gen_range(SCALE_RANGE.0.ln()..=SCALE_RANGE.1.ln()).exp();
    let alpha = rng.gen_range(ASPECT_RANGE.0..=ASPECT_RANGE.1);
    // `alpha` multiplies the window's aspect ratio relative to the anchor:
    // the geometric-mean extent stays sigma times the anchor's.
    (sigma * gw / alpha.sqrt(), sigma * gh * alpha.sqrt())
}

/// Samples a window whose labels equal `combo`, anchored on a target-class
/// instance of `scene`. Deterministic in `seed`.
pub fn sample_positive(
    scene: &Scene,
    combo: (TlDecision, BrDecision),
    seed: u64,
    cfg: &DetectorConfig,
) -> Result<AugmentedRegion, SampleError> {
    let (tl_want, br_want) = combo;
    if tl_want == TlDecision::Reject || br_want == BrDecision::Reject {
        return Err(SampleError::InvalidCombo);
    }
    let anchors: Vec<usize> = scene.target_instances().map(|(i, _)| i).collect();
    if anchors.is_empty() {
        return Err(SampleError::NoTargetInstance);
    }

    let frame = enlarged_frame(scene.image());
    let (tl_mx, tl_my) = tl_want.moves();
    let (br_mx, br_my) = br_want.moves();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..ATTEMPT_BUDGET {
        let anchor = anchors[rng.gen_range(0..anchors.len())];
        let g = scene.instances()[anchor].bbox;
        let (w, h) = draw_window_size(&mut rng, g.width(), g.height());
        let band_x = cfg.tau * w / cfg.warp.sidef();
        let band_y = cfg.tau * h / cfg.warp.sidef();

        let x_span = (g.x1(), g.x2());
        let y_span = (g.y1(), g.y2());
        let x_frame = (frame.x1(), frame.x2());
        let y_frame = (frame.y1(), frame.y2());
        let Some((x_lo, x_hi)) = axis_interval(tl_mx, br_mx, x_span, w, band_x, x_frame) else {
            continue;
        };
        let Some((y_lo, y_hi)) = axis_interval(tl_my, br_my, y_span, h, band_y, y_frame) else {
            continue;
        };

        let x1 = rng.gen_range(x_lo..=x_hi);
        let y1 = rng.gen_range(y_lo..=y_hi);
        let Ok(window) = BBox::new(x1, y1, x1 + w, y1 + h) else {
            continue;
        };

        // The interval solve ignores other instances; the real labeler has
        // the final word.
        if select_target(&window, scene) != Some(anchor) {
            continue;
        }
        if label_corners(&window, scene, cfg.tau, cfg.warp) != combo {
            continue;
        }
        return Ok(AugmentedRegion {
            scene_id: scene.id(),
            window,
            tl: tl_want,
            br: br_want,
            target_index: Some(anchor),
        });
    }
    Err(SampleError::Unsatisfiable {
        attempts: ATTEMPT_BUDGET,
    })
}

/// Samples a window over `scene` that no instance qualifies for, labeled
/// reject/reject. Sizes follow the same law as positives, anchored on a
/// random instance when one exists. Deterministic in `seed`.
pub fn sample_negative(
    scene: &Scene,
    seed: u64,
    cfg: &DetectorConfig,
) -> Result<AugmentedRegion, SampleError> {
    let frame = enlarged_frame(scene.image());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..ATTEMPT_BUDGET {
        let (gw, gh) = if scene.instances().is_empty() {
            let quarter = 0.25 * scene.image().wf().min(scene.image().hf());
            (quarter, quarter)
        } else {
            let g = scene.instances()[rng.gen_range(0..scene.instances().len())].bbox;
            (g.width(), g.height())
        };
        let (w, h) = draw_window_size(&mut rng, gw, gh);
        if w > frame.width() || h > frame.height() {
            continue;
        }
        let x1 = rng.gen_range(frame.x1()..=frame.x2() - w);
        let y1 = rng.gen_range(frame.y1()..=frame.y2() - h);
        let Ok(window) = BBox::new(x1, y1, x1 + w, y1 + h) else {
            continue;
        };
        if select_target(&window, scene).is_some() {
            continue;
        }
        debug_assert_eq!(
            label_corners(&window, scene, cfg.tau, cfg.warp),
            (TlDecision::Reject, BrDecision::Reject)
        );
        return Ok(AugmentedRegion {
            scene_id: scene.id(),
            window,
            tl: TlDecision::Reject,
            br: BrDecision::Reject,
            target_index: None,
        });
    }
    Err(SampleError::Unsatisfiable {
        attempts: ATTEMPT_BUDGET,
    })
}

/// Composes a balanced training batch over a scene pool.
///
/// `batch_size` must be a positive multiple of 32: every one of the 16
/// positive decision pairs fills `batch_size / 32` slots and negatives fill
/// the remaining half. The batch is shuffled deterministically, and each
/// sample derives its own seed from `seed` and its position, so the result
/// is reproducible.
pub fn compose_batch(
    scenes: &[Scene],
    batch_size: usize,
    seed: u64,
    cfg: &DetectorConfig,
) -> Result<Vec<AugmentedRegion>, SampleError> {
    if batch_size == 0 || !batch_size.is_multiple_of(32) {
        return Err(SampleError::IndivisibleBatch(batch_size));
    }
    if scenes.is_empty() {
        return Err(SampleError::NoScenes);
    }
    let with_targets: Vec<usize> = scenes
        .iter()
        .enumerate()
        .filter(|(_, s)| s.target_instances().next().is_some())
        .map(|(i, _)| i)
        .collect();
    if with_targets.is_empty() {
        return Err(SampleError::NoTargetInstance);
    }

    let per_combo = batch_size / 32;
    let negatives = batch_size / 2;
    let mut picker = ChaCha8Rng::seed_from_u64(mix64(seed, SCENE_PICK_SALT));
    let mut out = Vec::with_capacity(batch_size);
    let mut counter: u64 = 0;

    for combo in POSITIVE_COMBOS {
        for _ in 0..per_combo {
            let scene = &scenes[with_targets[picker.gen_range(0..with_targets.len())]];
            out.push(sample_positive(scene, combo, mix64(seed, counter), cfg)?);
            counter += 1;
        }
    }
    for _ in 0..negatives {
        let scene = &scenes[picker.gen_range(0..scenes.len())];
        out.push(sample_negative(scene, mix64(seed, counter), cfg)?);
        counter += 1;
    }
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(mix64(seed, SHUFFLE_SALT)));
    Ok(out)
}
