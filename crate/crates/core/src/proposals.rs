//! Multi-scale sliding-window proposal generation.
//!
//! The image is embedded in a padded frame twice its size, and the padded
//! frame is notionally resized to a pyramid of canvases. At scale `k` the
//! canvas's smaller side equals `window * scale_step^k`, so the coarsest
//! scale sees the whole padded frame in a single window and each further
//! scale halves the region a window covers. Aspect multipliers stretch the
//! canvas so that elongated instances become square in some canvas. A fixed
//! square window slides over every canvas; windows whose oracle decision
//! pair is `(RightDown, LeftUp)`, meaning the window surrounds an instance
//! with margin on all sides, are kept as detection starting points.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, ImageSize};
use crate::labeling::{BrDecision, Scene, TlDecision};
use crate::oracle::{DirectionOracle, OracleError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProposalError {
    #[error("canvas {width}x{height} is smaller than the {window} px window")]
    CanvasTooSmall {
        width: u32,
        height: u32,
        window: u32,
    },
    #[error("invalid pyramid: {0}")]
    InvalidSpec(String),
}

/// Pyramid layout for proposal generation. Missing fields in serialized
/// form fall back to their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PyramidSpec {
    /// Number of scales; scale `k` has ratio `scale_step^k`.
    pub n_scales: usize,
    /// Multiplier between consecutive scales.
    pub scale_step: f64,
    /// Height multipliers applied to the canvas aspect ratio.
    pub aspects: Vec<f64>,
    /// Side of the square sliding window, in canvas pixels.
    pub window: u32,
    /// Sliding stride, in canvas pixels.
    pub stride: u32,
}

impl Default for PyramidSpec {
    fn default() -> Self {
        Self {
            n_scales: 7,
            scale_step: 2.0,
            aspects: vec![1.0, 1.5, 2.0],
            window: 227,
            stride: 32,
        }
    }
}

impl PyramidSpec {
    pub fn validate(&self) -> Result<(), ProposalError> {
        if self.n_scales == 0 {
            return Err(ProposalError::InvalidSpec("n_scales must be >= 1".into()));
        }
        if self.scale_step <= 1.0 || !self.scale_step.is_finite() {
            return Err(ProposalError::InvalidSpec(
                "scale_step must exceed 1".into(),
            ));
        }
        if self.aspects.is_empty() || self.aspects.iter().any(|a| *a <= 0.0 || !a.is_finite()) {
            return Err(ProposalError::InvalidSpec(
                "aspects must be non-empty and positive".into(),
            ));
        }
        if self.window == 0 {
            return Err(ProposalError::InvalidSpec("window must be positive".into()));
        }
        if self.stride == 0 {
            return Err(ProposalError::InvalidSpec("stride must be positive".into()));
        }
        Ok(())
    }
}

/// One resized view of the padded frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Canvas {
    pub size: ImageSize,
    /// Scale ratio `scale_step^k`.
    pub scale: f64,
    /// Aspect multiplier this canvas was stretched by.
    pub aspect: f64,
}

/// Canvas dimensions for one `(scale, aspect)` cell of the pyramid over
/// `image`'s padded frame. The smaller side equals `window * scale` before
/// rounding. `None` when the parameters are not positive or the rounded
/// canvas cannot hold a single window.
pub fn canvas_dims(image: ImageSize, window: u32, scale: f64, aspect: f64) -> Option<ImageSize> {
    if scale <= 0.0 || aspect <= 0.0 || !scale.is_finite() || !aspect.is_finite() {
        return None;
    }
    let pw = 2.0 * image.wf();
    let ph = 2.0 * image.hf();
    let target = f64::from(window) * scale;
    let r = target / pw.min(aspect * ph);
    let cw = (r * pw).round();
    let ch = (r * aspect * ph).round();
    if cw < f64::from(window)
        || ch < f64::from(window)
        || cw > f64::from(u32::MAX)
        || ch > f64::from(u32::MAX)
    {
        return None;
    }
    ImageSize::new(cw as u32, ch as u32).ok()
}

/// All canvases of the pyramid, scale-major and then in `aspects` order.
/// Canvases too small to hold one window are dropped.
pub fn canvas_sizes(image: ImageSize, spec: &PyramidSpec) -> Vec<Canvas> {
    let mut out = Vec::with_capacity(spec.n_scales * spec.aspects.len());
    for k in 0..spec.n_scales {
        let scale = spec.scale_step.powi(k as i32);
        for &aspect in &spec.aspects {
            if let Some(size) = canvas_dims(image, spec.window, scale, aspect) {
                out.push(Canvas {
                    size,
                    scale,
                    aspect,
                });
            }
        }
    }
    out
}

/// Maps a canvas-frame box back to image coordinates. The canvas represents
/// the padded frame, so results may extend up to half the image size beyond
/// the image on every side.
pub fn map_to_original(image: ImageSize, canvas: ImageSize, b: &BBox) -> BBox {
    let fx = 2.0 * image.wf() / canvas.wf();
    let fy = 2.0 * image.hf() / canvas.hf();
    let ox = 0.5 * image.wf();
    let oy = 0.5 * image.hf();
    BBox::new(
        b.x1() * fx - ox,
        b.y1() * fy - oy,
        b.x2() * fx - ox,
        b.y2() * fy - oy,
    )
    .expect("affine map preserves ordering")
}

/// Sliding-window grid over one canvas, in canvas coordinates. Rows are
/// enumerated top to bottom and columns left to right within each row. The
/// number of windows per axis is `floor((side - window) / stride) + 1`.
pub fn grid_windows(canvas: ImageSize, spec: &PyramidSpec) -> Result<Vec<BBox>, ProposalError> {
    if canvas.width() < spec.window || canvas.height() < spec.window {
        return Err(ProposalError::CanvasTooSmall {
            width: canvas.width(),
            height: canvas.height(),
            window: spec.window,
        });
    }
    let nx = (canvas.width() - spec.window) / spec.stride + 1;
    let ny = (canvas.height() - spec.window) / spec.stride + 1;
    let side = f64::from(spec.window);
    let mut out = Vec::with_capacity((nx as usize) * (ny as usize));
    for row in 0..ny {
        let y = f64::from(row * spec.stride);
        for col in 0..nx {
            let x = f64::from(col * spec.stride);
            out.push(BBox::new(x, y, x + side, y + side).expect("positive window"));
        }
    }
    Ok(out)
}

/// Runs the oracle over every pyramid window and keeps those predicted as
/// surrounding an instance: top-left `RightDown` and bottom-right `LeftUp`.
/// Returned windows are in image coordinates, ordered scale-major, then by
/// aspect, row, and column, which makes the output deterministic for a
/// deterministic oracle.
pub fn propose(
    scene: &Scene,
    oracle: &dyn DirectionOracle,
    spec: &PyramidSpec,
) -> Result<Vec<BBox>, OracleError> {
    let mut kept = Vec::new();
    for canvas in canvas_sizes(scene.image(), spec) {
        let windows = grid_windows(canvas.size, spec).expect("canvas fits window");
        for w in windows {
            let orig = map_to_original(scene.image(), canvas.size, &w);
            let (tl, br) = oracle.predict(scene, &orig)?;
            if tl.argmax() == TlDecision::RightDown.index()
                && br.argmax() == BrDecision::LeftUp.index()
            {
                kept.push(orig);
            }
        }
    }
    Ok(kept)
}
