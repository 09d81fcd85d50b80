//! Axis-aligned box geometry: IoU, clamping, rescaling, and the quantized
//! corner step rule that drives the detection loop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::{BrDecision, TlDecision};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("box coordinates must be finite")]
    NonFinite,
    #[error("box is degenerate: x1 < x2 and y1 < y2 required")]
    Degenerate,
    #[error("box does not overlap the clamp region")]
    NoOverlap,
    #[error("image dimensions must be positive")]
    EmptyImage,
    #[error("warp side must be positive")]
    EmptyWarp,
}

/// Axis-aligned box with `x1 < x2` and `y1 < y2`, in continuous pixel
/// coordinates. Construction validates, so a `BBox` is never degenerate.
///
/// Serialized as the 4-array `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(GeometryError::Degenerate);
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Area of the overlap with `other`, zero when disjoint.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }

    /// True when `other` lies inside this box (boundaries may touch).
    pub fn contains(&self, other: &BBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Total order used to break score ties deterministically: ascending on
    /// `(x1, y1, x2, y2)`. Coordinates are finite by construction, so the
    /// comparison is total.
    pub fn lex_cmp(&self, other: &BBox) -> std::cmp::Ordering {
        self.coords()
            .iter()
            .zip(other.coords().iter())
            .map(|(a, b)| a.partial_cmp(b).expect("finite coords"))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.coords()
    }
}

#[derive(Serialize, Deserialize)]
struct ImageSizeRepr {
    w: u32,
    h: u32,
}

/// Integer image dimensions, both positive.
///
/// Serialized as `{"w": ..., "h": ...}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ImageSizeRepr", into = "ImageSizeRepr")]
pub struct ImageSize {
    width: u32,
    height: u32,
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyImage);
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn wf(&self) -> f64 {
        f64::from(self.width)
    }

    pub fn hf(&self) -> f64 {
        f64::from(self.height)
    }

    /// The image extent as a box anchored at the origin.
    pub fn frame(&self) -> BBox {
        BBox::new(0.0, 0.0, self.wf(), self.hf()).expect("positive dims")
    }
}

impl TryFrom<ImageSizeRepr> for ImageSize {
    type Error = GeometryError;

    fn try_from(r: ImageSizeRepr) -> Result<Self, Self::Error> {
        ImageSize::new(r.w, r.h)
    }
}

impl From<ImageSize> for ImageSizeRepr {
    fn from(s: ImageSize) -> Self {
        ImageSizeRepr {
            w: s.width,
            h: s.height,
        }
    }
}

/// Side length of the square frame every window is notionally warped to
/// before the oracle looks at it. Step lengths and stop margins are measured
/// in this frame, so their effect in image coordinates shrinks together with
/// the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WarpFrame {
    side: u32,
}

impl WarpFrame {
    pub fn new(side: u32) -> Result<Self, GeometryError> {
        if side == 0 {
            return Err(GeometryError::EmptyWarp);
        }
        Ok(Self { side })
    }

    pub fn side(&self) -> u32 {
        self.side
    }

    pub fn sidef(&self) -> f64 {
        f64::from(self.side)
    }
}

impl Default for WarpFrame {
    fn default() -> Self {
        Self { side: 227 }
    }
}

/// Intersection over union of two boxes, in `[0, 1]`. Zero when disjoint.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Moves the window corners one quantized step inward.
///
/// A step has length `l` in the warped frame and is back-projected per axis:
/// the displacement along x is `l * width / warp.side` and along y
/// `l * height / warp.side`. `Stop` contributes no displacement; lone
/// `Reject` decisions must be mapped to `Stop` by the caller before the step
/// is applied. Fails with [`GeometryError::Degenerate`] when the moved
/// corners cross.
pub fn apply_directions(
    window: &BBox,
    tl: TlDecision,
    br: BrDecision,
    l: f64,
    warp: WarpFrame,
) -> Result<BBox, GeometryError> {
    debug_assert!(tl != TlDecision::Reject && br != BrDecision::Reject);
    let step_x = l * window.width() / warp.sidef();
    let step_y = l * window.height() / warp.sidef();
    let (tl_x, tl_y) = tl.moves();
    let (br_x, br_y) = br.moves();
    BBox::new(
        window.x1 + if tl_x { step_x } else { 0.0 },
        window.y1 + if tl_y { step_y } else { 0.0 },
        window.x2 - if br_x { step_x } else { 0.0 },
        window.y2 - if br_y { step_y } else { 0.0 },
    )
}

/// Clamps a box to an arbitrary frame. Fails with
/// [`GeometryError::NoOverlap`] when the result would be empty.
pub fn clamp_to_frame(bbox: &BBox, frame: &BBox) -> Result<BBox, GeometryError> {
    BBox::new(
        bbox.x1.max(frame.x1),
        bbox.y1.max(frame.y1),
        bbox.x2.min(frame.x2),
        bbox.y2.min(frame.y2),
    )
    .map_err(|_| GeometryError::NoOverlap)
}

/// Clamps a box to the image extent `[0, w] x [0, h]`.
pub fn clamp_to_image(bbox: &BBox, img: ImageSize) -> Result<BBox, GeometryError> {
    clamp_to_frame(bbox, &img.frame())
}

/// The padded working frame: the image extent enlarged by half its size on
/// every side. Detection windows may roam this frame so that instances
/// touching the image border still leave room for a surrounding window.
pub fn enlarged_frame(img: ImageSize) -> BBox {
    BBox::new(
        -0.5 * img.wf(),
        -0.5 * img.hf(),
        1.5 * img.wf(),
        1.5 * img.hf(),
    )
    .expect("positive dims")
}

/// Scales a box by `beta` about its own center.
pub fn rescale_about_center(bbox: &BBox, beta: f64) -> BBox {
    let (cx, cy) = bbox.center();
    let hw = bbox.width() * beta / 2.0;
    let hh = bbox.height() * beta / 2.0;
    BBox::new(cx - hw, cy - hh, cx + hw, cy + hh).expect("positive extent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    /// Independent IoU reference: count unit cells on an integer grid. Only
    /// valid for integer-coordinate boxes.
    fn rasterized_iou(a: &BBox, b: &BBox, grid: i64) -> f64 {
        let covered = |bb: &BBox, x: i64, y: i64| {
            (x as f64) >= bb.x1()
                && ((x + 1) as f64) <= bb.x2()
                && (y as f64) >= bb.y1()
                && ((y + 1) as f64) <= bb.y2()
        };
        let mut inter = 0u64;
        let mut union = 0u64;
        for x in -grid..grid {
            for y in -grid..grid {
                let in_a = covered(a, x, y);
                let in_b = covered(b, x, y);
                if in_a && in_b {
                    inter += 1;
                }
                if in_a || in_b {
                    union += 1;
                }
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn new_rejects_degenerate_and_non_finite() {
        assert_eq!(
            BBox::new(0.0, 0.0, 0.0, 1.0),
            Err(GeometryError::Degenerate)
        );
        assert_eq!(
            BBox::new(0.0, 2.0, 1.0, 2.0),
            Err(GeometryError::Degenerate)
        );
        assert_eq!(
            BBox::new(5.0, 0.0, 1.0, 1.0),
            Err(GeometryError::Degenerate)
        );
        assert_eq!(
            BBox::new(f64::NAN, 0.0, 1.0, 1.0),
            Err(GeometryError::NonFinite)
        );
        assert_eq!(
            BBox::new(0.0, 0.0, f64::INFINITY, 1.0),
            Err(GeometryError::NonFinite)
        );
        assert!(BBox::new(0.0, 0.0, 0.1, 0.1).is_ok());
    }

    #[test]
    fn iou_half_overlap() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let b = bx(5.0, 0.0, 15.0, 10.0);
        let expected = rasterized_iou(&a, &b, 20);
        assert!((expected - 1.0 / 3.0).abs() < 1e-12);
        assert!((iou(&a, &b) - expected).abs() < 1e-12);
    }

    #[test]
    fn iou_matches_rasterized_reference() {
        // Deterministic integer boxes exercise disjoint, nested and partial
        // overlap configurations against the cell-counting reference.
        let cases = [
            (bx(0.0, 0.0, 4.0, 4.0), bx(8.0, 8.0, 12.0, 12.0)),
            (bx(0.0, 0.0, 10.0, 10.0), bx(2.0, 2.0, 5.0, 5.0)),
            (bx(-6.0, -3.0, 4.0, 5.0), bx(-2.0, 0.0, 9.0, 7.0)),
            (bx(0.0, 0.0, 3.0, 9.0), bx(1.0, 4.0, 7.0, 6.0)),
            (bx(-5.0, -5.0, 5.0, 5.0), bx(-5.0, -5.0, 5.0, 5.0)),
        ];
        for (a, b) in cases {
            let expected = rasterized_iou(&a, &b, 16);
            assert!(
                (iou(&a, &b) - expected).abs() < 1e-12,
                "a={a:?} b={b:?} got={} want={}",
                iou(&a, &b),
                expected
            );
        }
    }

    #[test]
    fn apply_directions_moves_both_corners() {
        let w = bx(0.0, 0.0, 454.0, 454.0);
        let next = apply_directions(
            &w,
            TlDecision::RightDown,
            BrDecision::LeftUp,
            30.0,
            WarpFrame::default(),
        )
        .unwrap();
        // Step back-projects to 30 * 454 / 227 = 60 pixels on each axis.
        assert_eq!(next.coords(), [60.0, 60.0, 394.0, 394.0]);
    }

    #[test]
    fn apply_directions_single_axis_moves() {
        let w = bx(0.0, 0.0, 454.0, 454.0);
        let next = apply_directions(
            &w,
            TlDecision::Right,
            BrDecision::Up,
            30.0,
            WarpFrame::default(),
        )
        .unwrap();
        assert_eq!(next.coords(), [60.0, 0.0, 454.0, 394.0]);
    }

    #[test]
    fn apply_directions_stop_is_identity() {
        let w = bx(3.0, 4.0, 100.0, 90.0);
        let next = apply_directions(
            &w,
            TlDecision::Stop,
            BrDecision::Stop,
            30.0,
            WarpFrame::default(),
        )
        .unwrap();
        assert_eq!(next.coords(), w.coords());
    }

    #[test]
    fn apply_directions_detects_crossing() {
        // Width 100 and step 30 * 100 / 227 = 13.2 per corner leaves room,
        // but a narrow window collapses.
        let narrow = bx(0.0, 0.0, 10.0, 200.0);
        let r = apply_directions(
            &narrow,
            TlDecision::Right,
            BrDecision::Left,
            200.0,
            WarpFrame::default(),
        );
        assert_eq!(r, Err(GeometryError::Degenerate));
    }

    #[test]
    fn clamp_truncates_and_reports_no_overlap() {
        let img = ImageSize::new(200, 200).unwrap();
        let clamped = clamp_to_image(&bx(25.0, 25.0, 275.0, 275.0), img).unwrap();
        assert_eq!(clamped.coords(), [25.0, 25.0, 200.0, 200.0]);
        assert_eq!(
            clamp_to_image(&bx(300.0, 300.0, 400.0, 400.0), img),
            Err(GeometryError::NoOverlap)
        );
        // Touching the border without area is still empty.
        assert_eq!(
            clamp_to_image(&bx(200.0, 0.0, 300.0, 100.0), img),
            Err(GeometryError::NoOverlap)
        );
    }

    #[test]
    fn rescale_examples() {
        let b = rescale_about_center(&bx(100.0, 100.0, 200.0, 200.0), 2.5);
        assert_eq!(b.coords(), [25.0, 25.0, 275.0, 275.0]);
        let b = rescale_about_center(&bx(0.0, 0.0, 10.0, 20.0), 2.0);
        assert_eq!(b.coords(), [-5.0, -10.0, 15.0, 30.0]);
    }

    #[test]
    fn enlarged_frame_pads_half_extent_per_side() {
        let img = ImageSize::new(500, 300).unwrap();
        assert_eq!(enlarged_frame(img).coords(), [-250.0, -150.0, 750.0, 450.0]);
    }

    #[test]
    fn bbox_serde_roundtrip_is_flat_array() {
        let b = bx(1.5, 2.0, 3.25, 4.0);
        let json = serde_json::to_string(&b).unwrap();
        assert_eq!(json, "[1.5,2.0,3.25,4.0]");
        let back: BBox = serde_json::from_str(&json).unwrap();
        assert_eq!(back, b);
        let bad: Result<BBox, _> = serde_json::from_str("[1.0,1.0,1.0,2.0]");
        assert!(bad.is_err());
    }

    #[test]
    fn lex_cmp_orders_by_coordinates() {
        use std::cmp::Ordering;
        let a = bx(0.0, 0.0, 5.0, 5.0);
        let b = bx(0.0, 1.0, 2.0, 2.0);
        assert_eq!(a.lex_cmp(&b), Ordering::Less);
        assert_eq!(b.lex_cmp(&a), Ordering::Greater);
        assert_eq!(a.lex_cmp(&a), Ordering::Equal);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (
            -500.0..500.0f64,
            -500.0..500.0f64,
            1e-3..400.0f64,
            1e-3..400.0f64,
        )
            .prop_map(|(x, y, w, h)| bx(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            let ba = iou(&b, &a);
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        }

        #[test]
        fn iou_self_is_one(a in arb_box()) {
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn nested_box_iou_is_area_ratio(a in arb_box(), f in 0.1..0.9f64) {
            let inner = rescale_about_center(&a, f);
            prop_assert!((iou(&a, &inner) - f * f).abs() < 1e-9);
        }

        #[test]
        fn steps_shrink_windows(
            a in arb_box(),
            tl_idx in 0usize..4,
            br_idx in 0usize..4,
            l in 0.5..40.0f64,
        ) {
            let tl = TlDecision::ALL[tl_idx];
            let br = BrDecision::ALL[br_idx];
            if let Ok(next) = apply_directions(&a, tl, br, l, WarpFrame::default()) {
                prop_assert!(a.contains(&next));
                prop_assert!(next.area() <= a.area() + 1e-12);
                if tl != TlDecision::Stop || br != BrDecision::Stop {
                    prop_assert!(next.area() < a.area());
                }
            }
        }

        #[test]
        fn rescale_scales_area_quadratically(a in arb_box(), beta in 0.2..4.0f64) {
            let scaled = rescale_about_center(&a, beta);
            prop_assert!((scaled.area() - a.area() * beta * beta).abs() < 1e-6 * a.area().max(1.0));
            let (cx0, cy0) = a.center();
            let (cx1, cy1) = scaled.center();
            prop_assert!((cx0 - cx1).abs() < 1e-9 && (cy0 - cy1).abs() < 1e-9);
        }

        #[test]
        fn clamp_is_idempotent(a in arb_box()) {
            let img = ImageSize::new(400, 300).unwrap();
            if let Ok(c) = clamp_to_image(&a, img) {
                let again = clamp_to_image(&c, img).unwrap();
                prop_assert_eq!(again.coords(), c.coords());
                prop_assert!(img.frame().contains(&c));
            }
        }
    }
}
