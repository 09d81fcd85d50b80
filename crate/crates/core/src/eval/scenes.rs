//! Deterministic synthetic-scene generation.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, BBox, ImageSize};
use crate::hashing::mix64;
use crate::labeling::{Instance, Scene};

/// Distribution law for synthetic scenes. Ranges are inclusive.
///
/// Instance extents are drawn as a minimum side length plus an aspect
/// ratio; the longer side is `min_side * aspect` (or the reciprocal for
/// aspects below one). Instances are placed fully inside the image by
/// rejection sampling until all pairwise IoUs stay within `max_overlap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneLaw {
    pub image_width: (u32, u32),
    pub image_height: (u32, u32),
    /// Instances per scene.
    pub instances: (usize, usize),
    /// Minimum side length of an instance, in pixels.
    pub extent: (f64, f64),
    /// Height/width ratio.
    pub aspect: (f64, f64),
    /// Largest allowed pairwise IoU between instances.
    pub max_overlap: f64,
    /// Probability that an instance belongs to a non-target class.
    pub distractor_rate: f64,
    pub target_class: u32,
    /// Distractors draw their class uniformly from the next this many
    /// class ids after `target_class`.
    pub distractor_classes: u32,
}

impl Default for SceneLaw {
    fn default() -> Self {
        SceneLaw {
            image_width: (500, 500),
            image_height: (500, 500),
            instances: (1, 1),
            extent: (40.0, 300.0),
            aspect: (0.5, 2.0),
            max_overlap: 0.3,
            distractor_rate: 0.0,
            target_class: 0,
            distractor_classes: 1,
        }
    }
}

/// Placement attempts per instance before the law counts as unsatisfiable.
pub const PLACEMENT_ATTEMPTS: usize = 1_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LawError {
    #[error("invalid scene law: {0}")]
    InvalidLaw(&'static str),
    #[error("could not place instance {instance} of scene {scene} after {attempts} attempts")]
    Unsatisfiable {
        scene: u64,
        instance: usize,
        attempts: usize,
    },
}

impl SceneLaw {
    pub fn validate(&self) -> Result<(), LawError> {
        let ordered_u32 = |r: (u32, u32)| r.0 <= r.1;
        let ordered_f64 = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 <= r.1;
        if self.image_width.0 == 0 || !ordered_u32(self.image_width) {
            return Err(LawError::InvalidLaw("image width range is empty"));
        }
        if self.image_height.0 == 0 || !ordered_u32(self.image_height) {
            return Err(LawError::InvalidLaw("image height range is empty"));
        }
        if self.instances.0 > self.instances.1 {
            return Err(LawError::InvalidLaw("instance count range is empty"));
        }
        if self.extent.0 <= 0.0 || !ordered_f64(self.extent) {
            return Err(LawError::InvalidLaw(
                "extent range is empty or non-positive",
            ));
        }
        if self.aspect.0 <= 0.0 || !ordered_f64(self.aspect) {
            return Err(LawError::InvalidLaw(
                "aspect range is empty or non-positive",
            ));
        }
        if !(0.0..=1.0).contains(&self.max_overlap) {
            return Err(LawError::InvalidLaw("max_overlap must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.distractor_rate) {
            return Err(LawError::InvalidLaw("distractor_rate must lie in [0, 1]"));
        }
        if self.distractor_rate > 0.0 && self.distractor_classes == 0 {
            return Err(LawError::InvalidLaw(
                "distractor_rate > 0 needs at least one distractor class",
            ));
        }
        Ok(())
    }
}

fn range_u32(rng: &mut ChaCha8Rng, (lo, hi): (u32, u32)) -> u32 {
    rng.gen_range(lo..=hi)
}

fn build_scene(id: u64, law: &SceneLaw, rng: &mut ChaCha8Rng) -> Result<Scene, LawError> {
    let image = ImageSize::new(
        range_u32(rng, law.image_width),
        range_u32(rng, law.image_height),
    )
    .expect("validated law produces positive sizes");
    let count = rng.gen_range(law.instances.0..=law.instances.1);

    let mut instances: Vec<Instance> = Vec::with_capacity(count);
    'placing: for index in 0..count {
        for _ in 0..PLACEMENT_ATTEMPTS {
            let side = rng.gen_range(law.extent.0..=law.extent.1);
            let aspect = rng.gen_range(law.aspect.0..=law.aspect.1);
            let (w, h) = if aspect >= 1.0 {
                (side, side * aspect)
            } else {
                (side / aspect, side)
            };
            if w > image.wf() || h > image.hf() {
                continue;
            }
            let x1 = rng.gen_range(0.0..=image.wf() - w);
            let y1 = rng.gen_range(0.0..=image.hf() - h);
            let bbox = BBox::new(x1, y1, x1 + w, y1 + h).expect("positive extents");
            if instances
                .iter()
                .any(|other| iou(&bbox, &other.bbox) > law.max_overlap)
            {
                continue;
            }
            let class_id = if law.distractor_rate > 0.0 && rng.gen_bool(law.distractor_rate) {
                law.target_class + 1 + rng.gen_range(0..law.distractor_classes)
            } else {
                law.target_class
            };
            instances.push(Instance { class_id, bbox });
            continue 'placing;
        }
        return Err(LawError::Unsatisfiable {
            scene: id,
            instance: index,
            attempts: PLACEMENT_ATTEMPTS,
        });
    }

    Ok(Scene::new(id, image, law.target_class, instances)
        .expect("generated instances lie inside the image"))
}

/// Generates `n` scenes with ids `0..n`. Each scene derives its own stream
/// from `seed` and its id, so scene `i` is the same for every `n >= i`.
pub fn generate_scenes(n: usize, law: &SceneLaw, seed: u64) -> Result<Vec<Scene>, LawError> {
    law.validate()?;
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed, i as u64));
            build_scene(i as u64, law, &mut rng)
        })
        .collect()
}
