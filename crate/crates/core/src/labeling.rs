//! Scenes and the ground-truth corner labeler.
//!
//! Given a window and a scene, the labeler picks the instance the window is
//! responsible for (if any) and turns the geometric offset between window and
//! instance into one quantized decision per corner.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{clamp_to_image, BBox, ImageSize, WarpFrame};

/// Decision for the top-left corner. Move decisions pull the corner inward,
/// `Stop` holds it, `Reject` votes to abandon the window.
///
/// The activation-vector layout is fixed: `Right`, `RightDown`, `Down`,
/// `Stop`, `Reject` occupy indices 0 through 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TlDecision {
    Right,
    RightDown,
    Down,
    Stop,
    Reject,
}

/// Decision for the bottom-right corner, mirroring [`TlDecision`]: `Left`,
/// `LeftUp`, `Up`, `Stop`, `Reject` occupy indices 0 through 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrDecision {
    Left,
    LeftUp,
    Up,
    Stop,
    Reject,
}

impl TlDecision {
    pub const ALL: [TlDecision; 5] = [
        TlDecision::Right,
        TlDecision::RightDown,
        TlDecision::Down,
        TlDecision::Stop,
        TlDecision::Reject,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|d| *d == self).expect("member")
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Which axes a step moves: `(x, y)`.
    pub fn moves(self) -> (bool, bool) {
        match self {
            TlDecision::Right => (true, false),
            TlDecision::RightDown => (true, true),
            TlDecision::Down => (false, true),
            TlDecision::Stop | TlDecision::Reject => (false, false),
        }
    }

    pub fn holds(self) -> bool {
        matches!(self, TlDecision::Stop | TlDecision::Reject)
    }
}

impl BrDecision {
    pub const ALL: [BrDecision; 5] = [
        BrDecision::Left,
        BrDecision::LeftUp,
        BrDecision::Up,
        BrDecision::Stop,
        BrDecision::Reject,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|d| *d == self).expect("member")
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Which axes a step moves: `(x, y)`.
    pub fn moves(self) -> (bool, bool) {
        match self {
            BrDecision::Left => (true, false),
            BrDecision::LeftUp => (true, true),
            BrDecision::Up => (false, true),
            BrDecision::Stop | BrDecision::Reject => (false, false),
        }
    }

    pub fn holds(self) -> bool {
        matches!(self, BrDecision::Stop | BrDecision::Reject)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("instance {index} lies entirely outside the image")]
    InstanceOutsideImage { index: usize },
    #[error("invalid scene geometry: {0}")]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// One labeled object in a scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    #[serde(rename = "class")]
    pub class_id: u32,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

#[derive(Serialize, Deserialize)]
struct RawScene {
    id: u64,
    image: ImageSize,
    target_class: u32,
    instances: Vec<Instance>,
}

/// An image extent with labeled instances and a designated target class.
/// Instance boxes are clamped to the image on construction, so they always
/// lie inside it.
///
/// Serialized as
/// `{"id", "image": {"w", "h"}, "target_class", "instances": [{"class", "box"}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScene", into = "RawScene")]
pub struct Scene {
    id: u64,
    image: ImageSize,
    target_class: u32,
    instances: Vec<Instance>,
}

impl Scene {
    pub fn new(
        id: u64,
        image: ImageSize,
        target_class: u32,
        instances: Vec<Instance>,
    ) -> Result<Self, SceneError> {
        let instances = instances
            .into_iter()
            .enumerate()
            .map(|(index, inst)| {
                clamp_to_image(&inst.bbox, image)
                    .map(|bbox| Instance { bbox, ..inst })
                    .map_err(|_| SceneError::InstanceOutsideImage { index })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            id,
            image,
            target_class,
            instances,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn image(&self) -> ImageSize {
        self.image
    }

    pub fn target_class(&self) -> u32 {
        self.target_class
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    /// Indices and instances of the target class, in instance order.
    pub fn target_instances(&self) -> impl Iterator<Item = (usize, &Instance)> {
        self.instances
            .iter()
            .enumerate()
            .filter(|(_, inst)| inst.class_id == self.target_class)
    }
}

impl TryFrom<RawScene> for Scene {
    type Error = SceneError;

    fn try_from(raw: RawScene) -> Result<Self, Self::Error> {
        Scene::new(raw.id, raw.image, raw.target_class, raw.instances)
    }
}

impl From<Scene> for RawScene {
    fn from(s: Scene) -> Self {
        RawScene {
            id: s.id,
            image: s.image,
            target_class: s.target_class,
            instances: s.instances,
        }
    }
}

/// Picks the instance a window is responsible for.
///
/// The candidate is the target-class instance with the largest in-window
/// area (ties go to the lowest index). It qualifies only when the window
/// retains at least half of the candidate's area and the candidate's
/// in-window area is at least 1.5 times that of every other instance of any
/// class. Returns the instance index, or `None` when no instance qualifies.
pub fn select_target(window: &BBox, scene: &Scene) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, inst) in scene.target_instances() {
        let a = window.intersection_area(&inst.bbox);
        if best.is_none_or(|(_, best_a)| a > best_a) {
            best = Some((i, a));
        }
    }
    let (idx, area) = best?;
    let inst = &scene.instances[idx];
    if area < 0.5 * inst.bbox.area() {
        return None;
    }
    for (j, other) in scene.instances.iter().enumerate() {
        if j == idx {
            continue;
        }
        if area < 1.5 * window.intersection_area(&other.bbox) {
            return None;
        }
    }
    Some(idx)
}

/// Ground-truth corner decisions for a window over a scene.
///
/// With no responsible instance, both corners read `Reject`. Otherwise each
/// corner looks at its inward deficits toward the instance corner, measured
/// in warped pixels (original deficit divided by the per-axis window scale).
/// Deficits pointing outward clamp to zero. An axis moves when its warped
/// deficit exceeds `tau`; when both of a corner's deficits are within `tau`
/// the corner reads `Stop`.
pub fn label_corners(
    window: &BBox,
    scene: &Scene,
    tau: f64,
    warp: WarpFrame,
) -> (TlDecision, BrDecision) {
    let Some(idx) = select_target(window, scene) else {
        return (TlDecision::Reject, BrDecision::Reject);
    };
    let target = &scene.instances()[idx].bbox;
    let sx = window.width() / warp.sidef();
    let sy = window.height() / warp.sidef();

    let tl_dx = (target.x1() - window.x1()).max(0.0) / sx;
    let tl_dy = (target.y1() - window.y1()).max(0.0) / sy;
    let tl = match (tl_dx > tau, tl_dy > tau) {
        (true, true) => TlDecision::RightDown,
        (true, false) => TlDecision::Right,
        (false, true) => TlDecision::Down,
        (false, false) => TlDecision::Stop,
    };

    let br_dx = (window.x2() - target.x2()).max(0.0) / sx;
    let br_dy = (window.y2() - target.y2()).max(0.0) / sy;
    let br = match (br_dx > tau, br_dy > tau) {
        (true, true) => BrDecision::LeftUp,
        (true, false) => BrDecision::Left,
        (false, true) => BrDecision::Up,
        (false, false) => BrDecision::Stop,
    };

    (tl, br)
}
