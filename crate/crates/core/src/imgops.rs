//! Small pixel kernels used by the empty-frame detector and segmentation.

use std::collections::VecDeque;

use image::{GrayImage, Luma, RgbImage};
use imageproc::distance_transform::Norm;
use imageproc::region_labelling::{connected_components, Connectivity};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub const FOREGROUND: u8 = 255;

pub(crate) fn ensure_same_size(a: (u32, u32), b: (u32, u32)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { left: a, right: b });
    }
    Ok(())
}

/// Per-pixel |a - b| averaged over the three channels.
pub fn abs_diff_gray(a: &RgbImage, b: &RgbImage) -> Result<GrayImage> {
    ensure_same_size(a.dimensions(), b.dimensions())?;
    let data = a
        .as_raw()
        .chunks_exact(3)
        .zip(b.as_raw().chunks_exact(3))
        .map(|(p, q)| {
            let s: u32 = p.iter().zip(q).map(|(&x, &y)| x.abs_diff(y) as u32).sum();
            ((s + 1) / 3) as u8
        })
        .collect();
    Ok(GrayImage::from_raw(a.width(), a.height(), data).expect("buffer size matches"))
}

/// Pixels strictly above `threshold` become foreground.
pub fn binarize(img: &GrayImage, threshold: u8) -> GrayImage {
    let data = img
        .as_raw()
        .iter()
        .map(|&v| if v > threshold { FOREGROUND } else { 0 })
        .collect();
    GrayImage::from_raw(img.width(), img.height(), data).expect("buffer size matches")
}

pub fn foreground_count(mask: &GrayImage) -> usize {
    mask.as_raw().iter().filter(|&&v| v != 0).count()
}

/// Erosion followed by dilation with a square element of the given radius.
pub fn open(mask: &GrayImage, radius: u8) -> GrayImage {
    if radius == 0 {
        return mask.clone();
    }
    imageproc::morphology::open(mask, Norm::LInf, radius)
}

/// Dilation followed by erosion with a square element of the given radius.
pub fn close(mask: &GrayImage, radius: u8) -> GrayImage {
    if radius == 0 {
        return mask.clone();
    }
    imageproc::morphology::close(mask, Norm::LInf, radius)
}

/// Bounding rectangle and pixel count of one 8-connected foreground region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Component {
    pub label: u32,
    pub left: u32,
    pub top: u32,
    pub width: u32,
    pub height: u32,
    pub pixels: u64,
}

impl Component {
    pub fn box_area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn aspect(&self) -> f64 {
        self.height as f64 / self.width as f64
    }
}

type LabelImage = image::ImageBuffer<Luma<u32>, Vec<u32>>;

fn label_components(mask: &GrayImage) -> (LabelImage, Vec<Component>) {
    let labels = connected_components(mask, Connectivity::Eight, Luma([0u8]));
    let mut extents: Vec<Option<(u32, u32, u32, u32, u64)>> = Vec::new();
    for (x, y, p) in labels.enumerate_pixels() {
        let l = p[0];
        if l == 0 {
            continue;
        }
        let i = l as usize - 1;
        if extents.len() <= i {
            extents.resize(i + 1, None);
        }
        let e = extents[i].get_or_insert((x, y, x, y, 0));
        e.0 = e.0.min(x);
        e.1 = e.1.min(y);
        e.2 = e.2.max(x);
        e.3 = e.3.max(y);
        e.4 += 1;
    }
    let comps = extents
        .into_iter()
        .enumerate()
        .filter_map(|(i, e)| {
            e.map(|(x0, y0, x1, y1, n)| Component {
                label: i as u32 + 1,
                left: x0,
                top: y0,
                width: x1 - x0 + 1,
                height: y1 - y0 + 1,
                pixels: n,
            })
        })
        .collect();
    (labels, comps)
}

/// All 8-connected foreground regions, ordered by label.
pub fn components(mask: &GrayImage) -> Vec<Component> {
    label_components(mask).1
}

/// The largest region (by pixel count, lowest label on ties) with its holes filled,
/// i.e. the interior of its outer contour. `None` when the mask is empty.
pub fn largest_component_filled(mask: &GrayImage) -> Option<GrayImage> {
    let (labels, comps) = label_components(mask);
    let best = comps
        .iter()
        .max_by(|a, b| a.pixels.cmp(&b.pixels).then(b.label.cmp(&a.label)))?;
    let (w, h) = mask.dimensions();
    let inside = |x: u32, y: u32| labels.get_pixel(x, y)[0] == best.label;

    // Flood the complement from the border; whatever stays unreached is the region or a hole.
    let mut outside = vec![false; (w * h) as usize];
    let mut queue = VecDeque::new();
    let seed = |x: u32, y: u32, outside: &mut Vec<bool>, queue: &mut VecDeque<(u32, u32)>| {
        let i = (y * w + x) as usize;
        if !outside[i] && !inside(x, y) {
            outside[i] = true;
            queue.push_back((x, y));
        }
    };
    for x in 0..w {
        seed(x, 0, &mut outside, &mut queue);
        seed(x, h - 1, &mut outside, &mut queue);
    }
    for y in 0..h {
        seed(0, y, &mut outside, &mut queue);
        seed(w - 1, y, &mut outside, &mut queue);
    }
    while let Some((x, y)) = queue.pop_front() {
        if x > 0 {
            seed(x - 1, y, &mut outside, &mut queue);
        }
        if x + 1 < w {
            seed(x + 1, y, &mut outside, &mut queue);
        }
        if y > 0 {
            seed(x, y - 1, &mut outside, &mut queue);
        }
        if y + 1 < h {
            seed(x, y + 1, &mut outside, &mut queue);
        }
    }
    let data = outside
        .into_iter()
        .map(|o| if o { 0 } else { FOREGROUND })
        .collect();
    Some(GrayImage::from_raw(w, h, data).expect("buffer size matches"))
}

/// Copy of the image region covered by `bbox`; the box must lie inside the image.
pub fn crop(img: &RgbImage, bbox: &BoundingBox) -> Result<RgbImage> {
    if !bbox.fits_within(img.width(), img.height()) {
        return Err(Error::OutOfBounds {
            left: bbox.left,
            top: bbox.top,
            width: bbox.width,
            height: bbox.height,
            frame_width: img.width(),
            frame_height: img.height(),
        });
    }
    Ok(image::imageops::crop_imm(img, bbox.left, bbox.top, bbox.width, bbox.height).to_image())
}
