//! Axis-aligned box geometry shared by grouping, scheduling and scoring.

use serde::{Deserialize, Serialize};

use crate::types::Tube;

/// One axis-aligned detection at one source frame.
///
/// Coordinates are integer pixels; `frame` is 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub frame: u32,
    pub left: u32,
    pub top: u32,
    pub width: u32,
    pub height: u32,
}

impl BoundingBox {
    /// Panics on a zero-sized box.
    pub fn new(frame: u32, left: u32, top: u32, width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "bounding box must have positive size");
        BoundingBox {
            frame,
            left,
            top,
            width,
            height,
        }
    }

    pub fn right(&self) -> u32 {
        self.left + self.width
    }

    pub fn bottom(&self) -> u32 {
        self.top + self.height
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.left as f64 + self.width as f64 / 2.0,
            self.top as f64 + self.height as f64 / 2.0,
        )
    }

    /// Same rectangle at another frame.
    pub fn at_frame(&self, frame: u32) -> Self {
        BoundingBox { frame, ..*self }
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.right() <= width && self.bottom() <= height
    }
}

/// Pixel area of the rectangle intersection, 0 when disjoint.
pub fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> u64 {
    let w = a.right().min(b.right()).saturating_sub(a.left.max(b.left));
    let h = a.bottom().min(b.bottom()).saturating_sub(a.top.max(b.top));
    w as u64 * h as u64
}

/// Intersection over the area of the smaller box.
pub fn iom(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = intersection_area(a, b);
    if inter == 0 {
        return 0.0;
    }
    inter as f64 / a.area().min(b.area()) as f64
}

/// Euclidean distance between box centers.
pub fn center_distance(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

/// Frames at which both tubes carry a box, ascending.
pub fn common_frames(t1: &Tube, t2: &Tube) -> Vec<u32> {
    common_box_pairs(t1, t2).map(|(a, _)| a.frame).collect()
}

/// Box pairs of two tubes at their shared frames, ascending by frame.
pub fn common_box_pairs<'a>(
    t1: &'a Tube,
    t2: &'a Tube,
) -> impl Iterator<Item = (&'a BoundingBox, &'a BoundingBox)> + 'a {
    let (a, b) = (t1.boxes(), t2.boxes());
    let (mut i, mut j) = (0usize, 0usize);
    // Jump straight to the overlap when both tubes are gapless.
    if t1.is_gapless() && t2.is_gapless() {
        let lo = t1.start().max(t2.start());
        i = lo.saturating_sub(t1.start()) as usize;
        j = lo.saturating_sub(t2.start()) as usize;
    }
    std::iter::from_fn(move || {
        while i < a.len() && j < b.len() {
            let (fa, fb) = (a[i].frame, b[j].frame);
            if fa == fb {
                i += 1;
                j += 1;
                return Some((&a[i - 1], &b[j - 1]));
            } else if fa < fb {
                i += 1;
            } else {
                j += 1;
            }
        }
        None
    })
}

/// Box linearly interpolated between `a` and `b` at `frame`, coordinates
/// rounded to the nearest pixel.
pub fn interpolate_box(a: &BoundingBox, b: &BoundingBox, frame: u32) -> BoundingBox {
    debug_assert!(a.frame < b.frame && (a.frame..=b.frame).contains(&frame));
    let t = (frame - a.frame) as f64 / (b.frame - a.frame) as f64;
    let lerp = |x: u32, y: u32| (x as f64 + (y as f64 - x as f64) * t).round() as u32;
    BoundingBox {
        frame,
        left: lerp(a.left, b.left),
        top: lerp(a.top, b.top),
        width: lerp(a.width, b.width).max(1),
        height: lerp(a.height, b.height).max(1),
    }
}
