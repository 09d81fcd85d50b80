//! Direction oracles: the pluggable source of per-corner decisions.
//!
//! An oracle maps `(scene, window)` to two activation vectors, one per
//! corner, laid out as `[move, diagonal, other move, stop, reject]`. The
//! detector only ever looks at the argmax and at the stop margin, so an
//! oracle is free to emit any non-negative activations. Three
//! implementations are provided: the exact ground-truth labeler, a seeded
//! noisy wrapper around it, and a replay oracle backed by a precomputed grid
//! file.

use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, ImageSize, WarpFrame};
use crate::hashing::{mix64, splitmix64, unit_f64};
use crate::labeling::{label_corners, Scene};
use crate::proposals::{canvas_dims, map_to_original};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("activations must be finite and non-negative")]
    InvalidActivations,
    #[error("epsilon must lie in [0, 1)")]
    InvalidEpsilon,
    #[error("noise probability must lie in [0, 1]")]
    InvalidNoise,
    #[error("grid oracle requires a grid file path")]
    MissingGridPath,
    #[error("grid cell {index} does not fit its declared pyramid placement")]
    InvalidGridCell { index: usize },
    #[error("no grid cell near the queried window: {reason}")]
    GridMiss { reason: String },
    #[error("failed to read grid file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse grid file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Non-negative activation strengths for one corner's five decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 5]", into = "[f64; 5]")]
pub struct CornerActivations([f64; 5]);

impl CornerActivations {
    pub fn new(values: [f64; 5]) -> Result<Self, OracleError> {
        if values.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(Self(values))
        } else {
            Err(OracleError::InvalidActivations)
        }
    }

    /// A one-hot vector at `index`, softened by spreading `epsilon` over the
    /// other four entries. With `epsilon = 0` the vector is exactly one-hot;
    /// for any `epsilon < 0.8` the argmax stays at `index`.
    pub fn softened_one_hot(index: usize, epsilon: f64) -> Self {
        debug_assert!(index < 5 && (0.0..1.0).contains(&epsilon));
        let mut v = [epsilon / 4.0; 5];
        v[index] = 1.0 - epsilon;
        Self(v)
    }

    pub fn values(&self) -> &[f64; 5] {
        &self.0
    }

    /// Index of the strongest activation; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..5 {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        best
    }
}

impl TryFrom<[f64; 5]> for CornerActivations {
    type Error = OracleError;

    fn try_from(v: [f64; 5]) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<CornerActivations> for [f64; 5] {
    fn from(a: CornerActivations) -> Self {
        a.0
    }
}

/// Source of corner decisions for the detector.
///
/// Implementations must be pure: repeated queries with the same scene and
/// window return identical activations. All provided oracles are `Send +
/// Sync` and can be shared across threads freely.
pub trait DirectionOracle: Send + Sync {
    fn predict(
        &self,
        scene: &Scene,
        window: &BBox,
    ) -> Result<(CornerActivations, CornerActivations), OracleError>;
}

/// Emits the exact ground-truth labels, softened by `epsilon`.
#[derive(Debug, Clone)]
pub struct GroundTruthOracle {
    epsilon: f64,
    tau: f64,
    warp: WarpFrame,
}

impl GroundTruthOracle {
    pub fn new(epsilon: f64, tau: f64, warp: WarpFrame) -> Result<Self, OracleError> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(OracleError::InvalidEpsilon);
        }
        Ok(Self { epsilon, tau, warp })
    }
}

impl DirectionOracle for GroundTruthOracle {
    fn predict(
        &self,
        scene: &Scene,
        window: &BBox,
    ) -> Result<(CornerActivations, CornerActivations), OracleError> {
        let (tl, br) = label_corners(window, scene, self.tau, self.warp);
        Ok((
            CornerActivations::softened_one_hot(tl.index(), self.epsilon),
            CornerActivations::softened_one_hot(br.index(), self.epsilon),
        ))
    }
}

const TL_TAG: u64 = 0x544c;
const BR_TAG: u64 = 0x4252;
const PICK_SALT: u64 = 0x9e3779b9;

/// Ground truth with seeded label corruption.
///
/// Each corner of each `(scene, window)` query flips with probability
/// `noise_p` to one of the other four decisions, chosen uniformly. The flip
/// is a pure function of `(seed, scene id, window coordinates, corner)`, so
/// repeated queries agree and whole runs replay exactly. The flip draw
/// compares one uniform variate against `noise_p`, so the flip set at a
/// lower probability is a subset of the flip set at a higher one under the
/// same seed.
#[derive(Debug, Clone)]
pub struct NoisyOracle {
    inner: GroundTruthOracle,
    noise_p: f64,
    seed: u64,
}

impl NoisyOracle {
    pub fn new(
        epsilon: f64,
        noise_p: f64,
        seed: u64,
        tau: f64,
        warp: WarpFrame,
    ) -> Result<Self, OracleError> {
        if !(0.0..=1.0).contains(&noise_p) {
            return Err(OracleError::InvalidNoise);
        }
        Ok(Self {
            inner: GroundTruthOracle::new(epsilon, tau, warp)?,
            noise_p,
            seed,
        })
    }

    fn corrupt(&self, scene: &Scene, window: &BBox, tag: u64, label: usize) -> usize {
        let mut h = mix64(self.seed, scene.id());
        for c in window.coords() {
            h = mix64(h, c.to_bits());
        }
        h = mix64(h, tag);
        if unit_f64(h) >= self.noise_p {
            return label;
        }
        let pick = (splitmix64(h ^ PICK_SALT) % 4) as usize;
        // The four non-label indices in ascending order; `pick` selects one.
        (0..5).filter(|i| *i != label).nth(pick).expect("4 choices")
    }
}

impl DirectionOracle for NoisyOracle {
    fn predict(
        &self,
        scene: &Scene,
        window: &BBox,
    ) -> Result<(CornerActivations, CornerActivations), OracleError> {
        let (tl, br) = label_corners(window, scene, self.inner.tau, self.inner.warp);
        let tl_idx = self.corrupt(scene, window, TL_TAG, tl.index());
        let br_idx = self.corrupt(scene, window, BR_TAG, br.index());
        Ok((
            CornerActivations::softened_one_hot(tl_idx, self.inner.epsilon),
            CornerActivations::softened_one_hot(br_idx, self.inner.epsilon),
        ))
    }
}

/// One precomputed activation pair in a grid file, keyed by its placement in
/// the proposal pyramid: canvas offset `(x, y)` at a given `scale` ratio and
/// `aspect` multiplier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    pub aspect: f64,
    pub tl: CornerActivations,
    pub br: CornerActivations,
}

/// On-disk grid oracle format: precomputed activations for sliding windows
/// over one image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridFile {
    pub image: ImageSize,
    pub stride: u32,
    pub window: u32,
    pub cells: Vec<GridCell>,
}

/// Replays precomputed activations from a [`GridFile`].
///
/// Each cell's window is reconstructed in image coordinates from its pyramid
/// placement. A query returns the activations of the nearest cell window
/// (smallest summed squared coordinate distance, ties to the first cell).
/// Queries fail with [`OracleError::GridMiss`] when the grid is empty, the
/// scene's image size differs from the grid's, or the nearest cell does not
/// even overlap the query.
pub struct GridOracle {
    image: ImageSize,
    cells: Vec<(BBox, CornerActivations, CornerActivations)>,
}

impl GridOracle {
    pub fn new(file: GridFile) -> Result<Self, OracleError> {
        let mut cells = Vec::with_capacity(file.cells.len());
        for (index, cell) in file.cells.into_iter().enumerate() {
            let canvas = canvas_dims(file.image, file.window, cell.scale, cell.aspect)
                .ok_or(OracleError::InvalidGridCell { index })?;
            let side = f64::from(file.window);
            let window = BBox::new(cell.x, cell.y, cell.x + side, cell.y + side)
                .map_err(|_| OracleError::InvalidGridCell { index })?;
            if window.x2() > canvas.wf() + 1e-9 || window.y2() > canvas.hf() + 1e-9 {
                return Err(OracleError::InvalidGridCell { index });
            }
            cells.push((
                map_to_original(file.image, canvas, &window),
                cell.tl,
                cell.br,
            ));
        }
        Ok(Self {
            image: file.image,
            cells,
        })
    }

    pub fn from_reader(reader: impl Read) -> Result<Self, OracleError> {
        Self::new(serde_json::from_reader(reader)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, OracleError> {
        Self::from_reader(std::fs::File::open(path)?)
    }
}

impl DirectionOracle for GridOracle {
    fn predict(
        &self,
        scene: &Scene,
        window: &BBox,
    ) -> Result<(CornerActivations, CornerActivations), OracleError> {
        if scene.image() != self.image {
            return Err(OracleError::GridMiss {
                reason: format!(
                    "grid was computed for a {}x{} image, scene is {}x{}",
                    self.image.width(),
                    self.image.height(),
                    scene.image().width(),
                    scene.image().height()
                ),
            });
        }
        let mut best: Option<(f64, usize)> = None;
        for (i, (cell_window, _, _)) in self.cells.iter().enumerate() {
            let d: f64 = window
                .coords()
                .iter()
                .zip(cell_window.coords().iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        let Some((_, i)) = best else {
            return Err(OracleError::GridMiss {
                reason: "grid has no cells".to_string(),
            });
        };
        let (cell_window, tl, br) = &self.cells[i];
        if window.intersection_area(cell_window) == 0.0 {
            return Err(OracleError::GridMiss {
                reason: format!(
                    "nearest cell window {:?} does not overlap query {:?}",
                    cell_window.coords(),
                    window.coords()
                ),
            });
        }
        Ok((*tl, *br))
    }
}

/// Which oracle implementation to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    GroundTruth,
    Noisy,
    Grid,
}

/// Declarative oracle description, as found in config files. Missing
/// fields fall back to their defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    pub kind: OracleKind,
    /// Softening mass spread over non-argmax activations.
    pub epsilon: f64,
    /// Per-corner flip probability for the noisy oracle.
    pub noise_p: f64,
    /// Seed for the noisy oracle's flips.
    pub seed: u64,
    /// Grid file path for the replay oracle.
    pub grid: Option<PathBuf>,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            kind: OracleKind::GroundTruth,
            epsilon: 0.1,
            noise_p: 0.0,
            seed: 0,
            grid: None,
        }
    }
}

/// Builds the oracle described by `spec`. The ground-truth and noisy oracles
/// label with the given `tau` and `warp`; the grid oracle replays its file
/// and ignores them.
pub fn build_oracle(
    spec: &OracleSpec,
    tau: f64,
    warp: WarpFrame,
) -> Result<Box<dyn DirectionOracle>, OracleError> {
    match spec.kind {
        OracleKind::GroundTruth => Ok(Box::new(GroundTruthOracle::new(spec.epsilon, tau, warp)?)),
        OracleKind::Noisy => Ok(Box::new(NoisyOracle::new(
            spec.epsilon,
            spec.noise_p,
            spec.seed,
            tau,
            warp,
        )?)),
        OracleKind::Grid => {
            let path = spec.grid.as_ref().ok_or(OracleError::MissingGridPath)?;
            Ok(Box::new(GridOracle::from_path(path)?))
        }
    }
}
