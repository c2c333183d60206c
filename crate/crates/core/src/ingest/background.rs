//! Background sample FIFO and the validity-aware pixel-wise median.

use std::collections::VecDeque;
use std::path::Path;

use image::{GrayImage, Luma, RgbImage};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::imgops::{ensure_same_size, FOREGROUND};

/// One background sample. Pixels where `valid` is zero are ignored by the median.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundSample {
    pub pixels: RgbImage,
    pub valid: Option<GrayImage>,
}

impl BackgroundSample {
    pub fn clean(pixels: RgbImage) -> Self {
        BackgroundSample {
            pixels,
            valid: None,
        }
    }

    /// A frame whose object boxes are marked invalid.
    pub fn masked(pixels: RgbImage, objects: &[BoundingBox]) -> Self {
        let (w, h) = pixels.dimensions();
        let mut valid = GrayImage::from_pixel(w, h, Luma([FOREGROUND]));
        for b in objects {
            for y in b.top.min(h)..b.bottom().min(h) {
                for x in b.left.min(w)..b.right().min(w) {
                    valid.put_pixel(x, y, Luma([0]));
                }
            }
        }
        BackgroundSample {
            pixels,
            valid: Some(valid),
        }
    }

    fn is_valid(&self, x: u32, y: u32) -> bool {
        self.valid.as_ref().is_none_or(|m| m.get_pixel(x, y)[0] != 0)
    }
}

/// Fixed-capacity FIFO; pushing into a full store evicts the oldest sample.
#[derive(Debug, Clone)]
pub struct BackgroundSampleStore {
    samples: VecDeque<BackgroundSample>,
    capacity: usize,
}

impl BackgroundSampleStore {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "store capacity must be positive");
        BackgroundSampleStore {
            samples: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, sample: BackgroundSample) -> Result<()> {
        if let Some(first) = self.samples.front() {
            ensure_same_size(first.pixels.dimensions(), sample.pixels.dimensions())?;
        }
        if let Some(valid) = &sample.valid {
            ensure_same_size(sample.pixels.dimensions(), valid.dimensions())?;
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Oldest first.
    pub fn samples(&self) -> impl Iterator<Item = &BackgroundSample> {
        self.samples.iter()
    }

    /// Writes `sample_NN.png` (and `valid_NN.png` for masked samples) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (i, s) in self.samples.iter().enumerate() {
            s.pixels.save(dir.join(format!("sample_{i:02}.png")))?;
            if let Some(v) = &s.valid {
                v.save(dir.join(format!("valid_{i:02}.png")))?;
            }
        }
        Ok(())
    }

    /// Reads a directory written by [`save`](Self::save).
    pub fn load(dir: &Path, capacity: usize) -> Result<Self> {
        let mut names: Vec<String> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.starts_with("sample_") && n.ends_with(".png"))
            .collect();
        names.sort();
        let mut store = BackgroundSampleStore::new(capacity.max(names.len()).max(1));
        for name in names {
            let pixels = image::open(dir.join(&name))?.to_rgb8();
            let valid_path = dir.join(name.replacen("sample_", "valid_", 1));
            let valid = if valid_path.exists() {
                Some(image::open(valid_path)?.to_luma8())
            } else {
                None
            };
            store.push(BackgroundSample { pixels, valid })?;
        }
        Ok(store)
    }
}

/// Median of a non-empty slice; an even count takes the rounded mean of the
/// two middle values.
pub fn median_u8(values: &mut [u8]) -> u8 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] as u16 + values[n / 2] as u16).div_ceil(2) as u8
    }
}

/// Per-pixel, per-channel median over the samples that are valid at that
/// pixel, falling back to all samples where none is valid.
pub fn median_background(store: &BackgroundSampleStore) -> Result<RgbImage> {
    let samples: Vec<&BackgroundSample> = store.samples().collect();
    let first = samples.first().ok_or(Error::EmptyStore)?;
    let (w, h) = first.pixels.dimensions();
    let mut out = RgbImage::new(w, h);
    out.par_chunks_mut(w as usize * 3)
        .enumerate()
        .for_each(|(y, row)| {
            let y = y as u32;
            let mut vals: [Vec<u8>; 3] = Default::default();
            for x in 0..w {
                for v in vals.iter_mut() {
                    v.clear();
                }
                let any_valid = samples.iter().any(|s| s.is_valid(x, y));
                for s in samples.iter().filter(|s| !any_valid || s.is_valid(x, y)) {
                    let p = s.pixels.get_pixel(x, y);
                    for c in 0..3 {
                        vals[c].push(p[c]);
                    }
                }
                for c in 0..3 {
                    row[x as usize * 3 + c] = median_u8(&mut vals[c]);
                }
            }
        });
    Ok(out)
}
