//! Synopsis frame synthesis: object segmentation inside boxes and stitching
//! onto the generated background.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use image::{GrayImage, Luma, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::imgops::{self, ensure_same_size, FOREGROUND};
use crate::ingest::background::{median_background, BackgroundSampleStore};
use crate::ingest::sources::FrameSource;
use crate::types::{expand_schedule, SynopsisSchedule, Tube, TubeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub initial_threshold: u8,
    /// Minimum fraction of the box a mask must cover to be trusted.
    pub min_foreground_ratio: f64,
    pub threshold_decrement: u8,
    pub threshold_floor: u8,
    /// Radius of the square element for open and close.
    pub morphology_kernel: u8,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            initial_threshold: 80,
            min_foreground_ratio: 0.15,
            threshold_decrement: 10,
            threshold_floor: 20,
            morphology_kernel: 2,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_threshold > self.threshold_floor && self.threshold_floor >= 1) {
            return Err(Error::config("need initial_threshold > threshold_floor >= 1"));
        }
        if !(self.min_foreground_ratio > 0.0 && self.min_foreground_ratio < 1.0) {
            return Err(Error::config("min_foreground_ratio must lie in (0, 1)"));
        }
        if self.threshold_decrement == 0 {
            return Err(Error::config("threshold_decrement must be positive"));
        }
        Ok(())
    }
}

/// Crop-sized object mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMask {
    pub mask: GrayImage,
    /// Threshold the binary mask was taken at.
    pub threshold: u8,
    /// Segmentation failed and the whole box is used.
    pub fallback: bool,
}

impl ObjectMask {
    pub fn full(width: u32, height: u32) -> Self {
        ObjectMask {
            mask: GrayImage::from_pixel(width, height, Luma([FOREGROUND])),
            threshold: 0,
            fallback: true,
        }
    }

    pub fn foreground_ratio(&self) -> f64 {
        imgops::foreground_count(&self.mask) as f64 / (self.mask.width() * self.mask.height()) as f64
    }
}

fn ratio(mask: &GrayImage) -> f64 {
    imgops::foreground_count(mask) as f64 / (mask.width() as f64 * mask.height() as f64)
}

/// Separates the object from the background inside one box.
///
/// `previous` is the same image region one frame earlier; its difference
/// adds the moving parts that happen to match the background color.
pub fn segment(
    crop: &RgbImage,
    background: &RgbImage,
    previous: Option<&RgbImage>,
    cfg: &SegmentationConfig,
) -> Result<ObjectMask> {
    let (w, h) = crop.dimensions();
    let mut combined = imgops::abs_diff_gray(crop, background)?;
    if let Some(prev) = previous {
        let motion = imgops::abs_diff_gray(crop, prev)?;
        for (c, m) in combined.iter_mut().zip(motion.iter()) {
            *c = c.saturating_add(*m);
        }
    }
    let mut threshold = cfg.initial_threshold;
    let mut binary = imgops::binarize(&combined, threshold);
    while ratio(&binary) < cfg.min_foreground_ratio && threshold > cfg.threshold_floor {
        threshold = threshold.saturating_sub(cfg.threshold_decrement).max(cfg.threshold_floor);
        binary = imgops::binarize(&combined, threshold);
    }
    let cleaned = imgops::close(&imgops::open(&binary, cfg.morphology_kernel), cfg.morphology_kernel);
    match imgops::largest_component_filled(&cleaned) {
        Some(mask) if ratio(&mask) >= cfg.min_foreground_ratio => Ok(ObjectMask {
            mask,
            threshold,
            fallback: false,
        }),
        _ => Ok(ObjectMask::full(w, h)),
    }
}

/// An object ready to paint: crop pixels, mask and top-left position.
#[derive(Debug, Clone)]
pub struct PlacedObject {
    pub crop: RgbImage,
    pub mask: ObjectMask,
    pub left: u32,
    pub top: u32,
}

/// Paints objects in order over a copy of the background; later objects win.
pub fn stitch_frame(background: &RgbImage, objects: &[PlacedObject]) -> Result<RgbImage> {
    let mut out = background.clone();
    for o in objects {
        ensure_same_size(o.crop.dimensions(), o.mask.mask.dimensions())?;
        let (w, h) = o.crop.dimensions();
        let b = BoundingBox::new(0, o.left, o.top, w, h);
        if !b.fits_within(out.width(), out.height()) {
            return Err(Error::OutOfBounds {
                left: o.left,
                top: o.top,
                width: w,
                height: h,
                frame_width: out.width(),
                frame_height: out.height(),
            });
        }
        for (x, y, m) in o.mask.mask.enumerate_pixels() {
            if m[0] != 0 {
                out.put_pixel(o.left + x, o.top + y, *o.crop.get_pixel(x, y));
            }
        }
    }
    Ok(out)
}

pub fn generate_background(store: &BackgroundSampleStore) -> Result<RgbImage> {
    median_background(store)
}

/// Small least-recently-used cache of source frames.
struct FrameCache<'a> {
    source: &'a dyn FrameSource,
    capacity: usize,
    entries: VecDeque<(u32, RgbImage)>,
}

impl<'a> FrameCache<'a> {
    fn new(source: &'a dyn FrameSource, capacity: usize) -> Self {
        FrameCache {
            source,
            capacity: capacity.max(1),
            entries: VecDeque::new(),
        }
    }

    fn get(&mut self, frame: u32, tube_id: TubeId) -> Result<&RgbImage> {
        if let Some(pos) = self.entries.iter().position(|(f, _)| *f == frame) {
            let entry = self.entries.remove(pos).expect("position is valid");
            self.entries.push_back(entry);
        } else {
            if frame >= self.source.frame_count() {
                return Err(Error::MissingFrame { frame, tube_id });
            }
            let image = self
                .source
                .frame(frame)
                .map_err(|_| Error::MissingFrame { frame, tube_id })?;
            if self.entries.len() == self.capacity {
                self.entries.pop_front();
            }
            self.entries.push_back((frame, image));
        }
        Ok(&self.entries.back().expect("just inserted").1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contribution {
    pub tube_id: TubeId,
    pub source_frame: u32,
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct SynopsisFrame {
    pub index: u32,
    pub image: RgbImage,
    /// Objects in paint order.
    pub contributions: Vec<Contribution>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub synopsis_frame: u32,
    pub objects: Vec<Contribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    #[serde(flatten)]
    pub segmentation: SegmentationConfig,
    /// Source frames kept in memory while rendering.
    pub frame_cache: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            segmentation: SegmentationConfig::default(),
            frame_cache: 32,
        }
    }
}

struct Job {
    tube_id: TubeId,
    bbox: BoundingBox,
    paint_key: (u32, TubeId),
    previous_frame: Option<u32>,
}

/// Lazily renders synopsis frames in order.
pub struct SynopsisRenderer<'a> {
    jobs: std::vec::IntoIter<Vec<Job>>,
    next: u32,
    cache: FrameCache<'a>,
    background: &'a RgbImage,
    cfg: SegmentationConfig,
}

impl Iterator for SynopsisRenderer<'_> {
    type Item = Result<SynopsisFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        let jobs = self.jobs.next()?;
        let index = self.next;
        self.next += 1;
        Some(self.render(index, jobs))
    }
}

impl SynopsisRenderer<'_> {
    fn render(&mut self, index: u32, jobs: Vec<Job>) -> Result<SynopsisFrame> {
        let mut inputs = Vec::with_capacity(jobs.len());
        for job in &jobs {
            let crop = imgops::crop(self.cache.get(job.bbox.frame, job.tube_id)?, &job.bbox)?;
            let previous = match job.previous_frame {
                Some(f) => Some(imgops::crop(self.cache.get(f, job.tube_id)?, &job.bbox)?),
                None => None,
            };
            let background = imgops::crop(self.background, &job.bbox)?;
            inputs.push((crop, background, previous));
        }
        let cfg = &self.cfg;
        let masks: Vec<ObjectMask> = inputs
            .par_iter()
            .map(|(crop, bg, prev)| segment(crop, bg, prev.as_ref(), cfg))
            .collect::<Result<_>>()?;
        let mut contributions = Vec::with_capacity(jobs.len());
        let objects: Vec<PlacedObject> = inputs
            .into_iter()
            .zip(masks)
            .zip(&jobs)
            .map(|(((crop, _, _), mask), job)| {
                contributions.push(Contribution {
                    tube_id: job.tube_id,
                    source_frame: job.bbox.frame,
                    fallback: mask.fallback,
                });
                PlacedObject {
                    crop,
                    mask,
                    left: job.bbox.left,
                    top: job.bbox.top,
                }
            })
            .collect();
        Ok(SynopsisFrame {
            index,
            image: stitch_frame(self.background, &objects)?,
            contributions,
        })
    }
}

/// Frame stream of the synopsis. Each object is painted in ascending order of
/// its group's synopsis start, ties by tube id.
pub fn render_synopsis<'a>(
    schedule: &SynopsisSchedule,
    tubes: &BTreeMap<TubeId, &Tube>,
    frames: &'a dyn FrameSource,
    background: &'a RgbImage,
    cfg: &RenderConfig,
) -> Result<SynopsisRenderer<'a>> {
    cfg.segmentation.validate()?;
    let expanded = expand_schedule(schedule, tubes)?;
    let placements = schedule.placements();
    let jobs: Vec<Vec<Job>> = expanded
        .into_iter()
        .map(|boxes| {
            let mut jobs: Vec<Job> = boxes
                .into_iter()
                .map(|sb| {
                    let tube = tubes[&sb.tube_id];
                    let previous_frame = tube
                        .boxes()
                        .binary_search_by_key(&sb.bbox.frame, |b| b.frame)
                        .ok()
                        .filter(|&i| i > 0)
                        .map(|_| sb.bbox.frame - 1);
                    Job {
                        tube_id: sb.tube_id,
                        bbox: sb.bbox,
                        paint_key: (placements[sb.placement].synopsis_start, sb.tube_id),
                        previous_frame,
                    }
                })
                .collect();
            jobs.sort_by_key(|j| j.paint_key);
            jobs
        })
        .collect();
    Ok(SynopsisRenderer {
        jobs: jobs.into_iter(),
        next: 0,
        cache: FrameCache::new(frames, cfg.frame_cache),
        background,
        cfg: cfg.segmentation.clone(),
    })
}

/// Writes `frame_NNNNNN.png` files, `background.png` and `manifest.json` into
/// `dir`; returns the number of frames written.
pub fn render_to_dir(
    schedule: &SynopsisSchedule,
    tubes: &BTreeMap<TubeId, &Tube>,
    frames: &dyn FrameSource,
    background: &RgbImage,
    cfg: &RenderConfig,
    dir: &Path,
) -> Result<u32> {
    fs::create_dir_all(dir)?;
    background.save(dir.join("background.png"))?;
    let mut manifest = Vec::with_capacity(schedule.synopsis_length() as usize);
    for frame in render_synopsis(schedule, tubes, frames, background, cfg)? {
        let frame = frame?;
        frame.image.save(dir.join(format!("frame_{:06}.png", frame.index)))?;
        manifest.push(ManifestEntry {
            synopsis_frame: frame.index,
            objects: frame.contributions,
        });
    }
    let out = BufWriter::new(fs::File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(out, &manifest)?;
    Ok(manifest.len() as u32)
}
