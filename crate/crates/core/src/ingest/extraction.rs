//! Tube extraction with switching between the detector and the empty-frame gate.
//!
//! In deep mode every processed frame is sent to the detection source. The
//! first frame with no detections becomes a background sample and the
//! controller falls back to the empty-frame gate, which runs on each frame
//! until it sees a candidate object; that frame is then handed back to the
//! detector.

use std::collections::BTreeMap;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::ingest::annotations::assemble_tubes;
use crate::ingest::background::{median_background, BackgroundSample, BackgroundSampleStore};
use crate::ingest::empty::{is_frame_empty, EmptyFrameConfig};
use crate::ingest::sources::{DetectionSource, FrameSource};
use crate::ingest::stride::{interpolate_between, TrackedBox};
use crate::types::{Tube, TubeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    #[serde(flatten)]
    pub empty_frame: EmptyFrameConfig,
    /// Detector runs on every `detection_stride`-th frame in deep mode;
    /// frames in between are interpolated.
    pub detection_stride: u32,
    /// Deep-mode frames between object-masked background samples.
    pub masked_sample_period: u32,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            empty_frame: EmptyFrameConfig::default(),
            detection_stride: 1,
            masked_sample_period: 150,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        self.empty_frame.validate()?;
        if self.detection_stride == 0 || self.masked_sample_period == 0 {
            return Err(Error::config("detection_stride and masked_sample_period must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Deep,
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLogEntry {
    pub frame: u32,
    pub mode: Mode,
    /// The detection source was called for this frame.
    pub queried: bool,
    /// Verdict of the empty-frame gate, when it ran on this frame.
    pub gate_empty: Option<bool>,
    /// Boxes recorded for this frame (detected or interpolated).
    pub boxes: usize,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub tubes: Vec<Tube>,
    pub store: BackgroundSampleStore,
    pub log: Vec<FrameLogEntry>,
}

impl Extraction {
    pub fn detector_queries(&self) -> usize {
        self.log.iter().filter(|e| e.queried).count()
    }

    /// Frames the gate declared empty; objects in them are never seen by the detector.
    pub fn skipped_frames(&self) -> impl Iterator<Item = u32> + '_ {
        self.log
            .iter()
            .filter(|e| e.mode == Mode::Empty && e.gate_empty == Some(true))
            .map(|e| e.frame)
    }

    pub fn mode_switches(&self) -> usize {
        self.log.windows(2).filter(|w| w[0].mode != w[1].mode).count()
    }
}

#[derive(Default)]
struct TubeCollector {
    per_id: BTreeMap<TubeId, (Option<i32>, Vec<BoundingBox>)>,
}

impl TubeCollector {
    fn record(&mut self, boxes: &[TrackedBox]) {
        for b in boxes {
            self.per_id
                .entry(b.id)
                .or_insert((b.class_label, Vec::new()))
                .1
                .push(b.bbox);
        }
    }
}

/// Runs the switching controller over every frame of `frames`.
pub fn run_extraction(
    frames: &dyn FrameSource,
    detections: &mut dyn DetectionSource,
    cfg: &ExtractionConfig,
) -> Result<Extraction> {
    cfg.validate()?;
    let ecfg = &cfg.empty_frame;
    let n = frames.frame_count();
    let mut store = BackgroundSampleStore::new(ecfg.fifo_capacity);
    let mut collector = TubeCollector::default();
    let mut log = Vec::with_capacity(n as usize);

    let mut mode = Mode::Deep;
    let mut background: Option<RgbImage> = None;
    let mut since_refresh = 0u32;
    let mut since_sample = 0u32;
    let mut since_masked = 0u32;
    // Detections fetched ahead of time by the strided detector.
    let mut lookahead: Option<(u32, Vec<TrackedBox>)> = None;
    // The gate flagged this frame and handed it back to the detector.
    let mut woken_at: Option<u32> = None;

    let mut held: Option<RgbImage> = None;
    let mut f = 0u32;
    while f < n {
        let image = match held.take() {
            Some(image) => image,
            None => frames.frame(f)?,
        };
        match mode {
            Mode::Deep => {
                let dets = match lookahead.take() {
                    // already queried ahead by the strided detector
                    Some((frame, dets)) if frame == f => dets,
                    _ => detections.detect(f, &image)?,
                };
                let gate_empty = woken_at.take().filter(|&w| w == f).map(|_| false);
                log.push(FrameLogEntry {
                    frame: f,
                    mode,
                    queried: true,
                    gate_empty,
                    boxes: dets.len(),
                });
                if dets.is_empty() {
                    store.push(BackgroundSample::clean(image))?;
                    background = Some(median_background(&store)?);
                    mode = Mode::Empty;
                    since_refresh = 0;
                    since_sample = 0;
                    f += 1;
                    continue;
                }
                collector.record(&dets);
                since_masked += 1;
                if since_masked >= cfg.masked_sample_period {
                    let boxes: Vec<BoundingBox> = dets.iter().map(|d| d.bbox).collect();
                    store.push(BackgroundSample::masked(image, &boxes))?;
                    since_masked = 0;
                }
                let next = (f + cfg.detection_stride).min(n - 1);
                if next > f + 1 {
                    let next_image = frames.frame(next)?;
                    let next_dets = detections.detect(next, &next_image)?;
                    for (k, boxes) in interpolate_between(f, &dets, next, &next_dets)
                        .into_iter()
                        .enumerate()
                    {
                        collector.record(&boxes);
                        log.push(FrameLogEntry {
                            frame: f + 1 + k as u32,
                            mode,
                            queried: false,
                            gate_empty: None,
                            boxes: boxes.len(),
                        });
                    }
                    lookahead = Some((next, next_dets));
                    f = next;
                    continue;
                }
                f += 1;
            }
            Mode::Empty => {
                since_refresh += 1;
                if since_refresh >= ecfg.background_refresh_period {
                    background = Some(median_background(&store)?);
                    since_refresh = 0;
                }
                let bg = background.as_ref().expect("background exists in empty mode");
                if is_frame_empty(&image, bg, ecfg)? {
                    log.push(FrameLogEntry {
                        frame: f,
                        mode,
                        queried: false,
                        gate_empty: Some(true),
                        boxes: 0,
                    });
                    since_sample += 1;
                    if since_sample >= ecfg.sample_period {
                        store.push(BackgroundSample::clean(image))?;
                        since_sample = 0;
                    }
                    f += 1;
                } else {
                    mode = Mode::Deep;
                    woken_at = Some(f);
                    held = Some(image);
                }
            }
        }
    }

    Ok(Extraction {
        tubes: assemble_tubes(collector.per_id)?,
        store,
        log,
    })
}
