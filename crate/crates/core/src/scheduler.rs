//! Greedy group rearrangement.
//!
//! Groups are taken in source order, in batches. Each new group starts at the
//! batch's StartFrame and is compared with every already placed group in
//! ascending synopsis-start order; while the weighted collision cost against
//! the current opponent exceeds the threshold, the group moves forward. A
//! group that pushes the synopsis past its running length has its collision
//! weight decayed, so late groups stop paying for long shifts.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iom, BoundingBox};
use crate::types::{index_tubes, Placement, SynopsisSchedule, Tube, TubeGroup};

/// Larger shift applied while the weighted cost stays above `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftRule {
    pub threshold: f64,
    pub step: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    /// Groups placed per StartFrame epoch.
    pub batch_size: usize,
    /// Size of the first epoch; `None` means `max(batch_size, 10)`.
    pub first_batch_size: Option<usize>,
    pub decay_rate: f64,
    pub collision_threshold: f64,
    pub shift_step: u32,
    /// Optional coarse shifts for heavy collisions. Thresholds must exceed
    /// `collision_threshold` and steps must be multiples of `shift_step`.
    pub coarse_shifts: Vec<ShiftRule>,
    pub startframe_skip_fraction: f64,
    pub startframe_back_off: u32,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            batch_size: 10,
            first_batch_size: None,
            decay_rate: 0.8,
            collision_threshold: 0.2,
            shift_step: 3,
            coarse_shifts: Vec::new(),
            startframe_skip_fraction: 0.15,
            startframe_back_off: 30,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.first_batch_size == Some(0) {
            return Err(Error::config("batch sizes must be at least 1"));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return Err(Error::config("decay_rate must lie in (0, 1]"));
        }
        if !(self.collision_threshold > 0.0) {
            return Err(Error::config("collision_threshold must be positive"));
        }
        if self.shift_step == 0 {
            return Err(Error::config("shift_step must be at least 1"));
        }
        for r in &self.coarse_shifts {
            if !(r.threshold > self.collision_threshold) || r.step == 0 || r.step % self.shift_step != 0 {
                return Err(Error::config(
                    "coarse shift thresholds must exceed collision_threshold with steps that are multiples of shift_step",
                ));
            }
        }
        if !(0.0..1.0).contains(&self.startframe_skip_fraction) {
            return Err(Error::config("startframe_skip_fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn effective_first_batch(&self) -> usize {
        self.first_batch_size.unwrap_or(self.batch_size.max(10))
    }

    fn step_for(&self, weighted_cost: f64) -> u32 {
        self.coarse_shifts
            .iter()
            .filter(|r| weighted_cost > r.threshold)
            .max_by(|a, b| a.threshold.total_cmp(&b.threshold))
            .map_or(self.shift_step, |r| r.step)
    }
}

/// Boxes of a group laid out by frame offset from the group's start.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupFootprint {
    frames: Vec<Vec<BoundingBox>>,
    box_count: usize,
}

impl GroupFootprint {
    pub fn new(group: &TubeGroup, tubes: &BTreeMap<u64, &Tube>) -> Result<Self> {
        let mut frames = vec![Vec::new(); group.extent() as usize];
        let mut box_count = 0;
        for m in group.members() {
            let tube = tubes.get(&m.tube_id).ok_or(Error::UnknownTube(m.tube_id))?;
            for b in tube.boxes() {
                frames[(m.offset + b.frame - tube.start()) as usize].push(*b);
                box_count += 1;
            }
        }
        Ok(GroupFootprint { frames, box_count })
    }

    pub fn extent(&self) -> u32 {
        self.frames.len() as u32
    }

    pub fn box_count(&self) -> usize {
        self.box_count
    }

    /// Boxes shown `offset` frames after the group's start.
    pub fn at(&self, offset: u32) -> &[BoundingBox] {
        self.frames.get(offset as usize).map_or(&[], Vec::as_slice)
    }
}

/// Sum of box-pair IoM over synopsis frames where both groups are present,
/// divided by the larger group's box count.
pub fn group_collision(a: &GroupFootprint, a_start: u32, b: &GroupFootprint, b_start: u32) -> f64 {
    let lo = a_start.max(b_start);
    let hi = (a_start + a.extent()).min(b_start + b.extent());
    if lo >= hi {
        return 0.0;
    }
    let mut sum = 0.0;
    for s in lo..hi {
        for p in a.at(s - a_start) {
            for q in b.at(s - b_start) {
                sum += iom(p, q);
            }
        }
    }
    sum / a.box_count().max(b.box_count()) as f64
}

/// Boxes per synopsis frame over `[0, max end)`.
pub fn box_count_histogram(placed: &[(&GroupFootprint, u32)]) -> Vec<u32> {
    let len = placed.iter().map(|(fp, s)| s + fp.extent()).max().unwrap_or(0);
    let mut hist = vec![0u32; len as usize];
    for (fp, start) in placed {
        for (k, boxes) in fp.frames.iter().enumerate() {
            hist[*start as usize + k] += boxes.len() as u32;
        }
    }
    hist
}

/// First frame after the skipped prefix whose count falls below
/// `(max + mean) / 2`, moved back by `back_off`.
pub fn calculate_start_from_histogram(hist: &[u32], skip_fraction: f64, back_off: u32) -> u32 {
    if hist.is_empty() {
        return 0;
    }
    let len = hist.len();
    let max = *hist.iter().max().expect("nonempty") as f64;
    let mean = hist.iter().map(|&c| c as u64).sum::<u64>() as f64 / len as f64;
    let tau = (max + mean) / 2.0;
    let skip = (skip_fraction * len as f64).ceil() as usize;
    let frame = hist
        .iter()
        .enumerate()
        .skip(skip)
        .find(|(_, &c)| (c as f64) < tau)
        .map_or(len, |(i, _)| i);
    (frame as u32).saturating_sub(back_off)
}

pub fn calculate_start(placed: &[(&GroupFootprint, u32)], cfg: &SchedulerConfig) -> u32 {
    calculate_start_from_histogram(
        &box_count_histogram(placed),
        cfg.startframe_skip_fraction,
        cfg.startframe_back_off,
    )
}

/// Final state of one placed group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlacedGroup {
    pub group_index: usize,
    pub synopsis_start: u32,
    pub weight: f64,
    /// Times this group extended the running synopsis length.
    pub extensions: u32,
    pub batch: usize,
}

/// One collision evaluation of the greedy loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub group_index: usize,
    pub opponent_index: usize,
    pub start: u32,
    pub cost: f64,
    pub weight: f64,
    pub shifted_by: u32,
}

/// Cost against one opponent at the moment that opponent was cleared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AcceptanceCheck {
    pub group_index: usize,
    pub opponent_index: usize,
    pub opponent_start: u32,
    pub start: u32,
    pub cost: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScheduleTrace {
    pub evaluations: Vec<Evaluation>,
    pub checks: Vec<AcceptanceCheck>,
    /// StartFrame of each batch.
    pub batch_starts: Vec<u32>,
    /// Placements in processing order.
    pub placed: Vec<PlacedGroup>,
    /// Running synopsis length after each placement.
    pub video_lengths: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct Rearrangement {
    pub schedule: SynopsisSchedule,
    pub trace: ScheduleTrace,
}

/// Places every group; `groups` should be sorted by source start.
pub fn rearrange(groups: &[TubeGroup], tubes: &[Tube], cfg: &SchedulerConfig) -> Result<Rearrangement> {
    cfg.validate()?;
    let index = index_tubes(tubes)?;
    let footprints: Vec<GroupFootprint> = groups
        .par_iter()
        .map(|g| GroupFootprint::new(g, &index))
        .collect::<Result<_>>()?;
    let mut trace = ScheduleTrace::default();
    if groups.is_empty() {
        return Ok(Rearrangement {
            schedule: SynopsisSchedule::empty(),
            trace,
        });
    }

    let mut video_length = footprints.iter().map(GroupFootprint::extent).max().unwrap_or(0);
    // (group index, synopsis start), kept sorted by start
    let mut placed: Vec<(usize, u32)> = Vec::with_capacity(groups.len());
    let mut start_frame = 0u32;
    let mut next = 0usize;
    let mut batch_len = cfg.effective_first_batch();
    let mut batch = 0usize;

    while next < groups.len() {
        trace.batch_starts.push(start_frame);
        let batch_end = (next + batch_len).min(groups.len());
        for gi in next..batch_end {
            let fp = &footprints[gi];
            let mut start = start_frame;
            let mut weight = 1.0f64;
            let mut extensions = 0u32;
            let extend = |start: u32, weight: &mut f64, extensions: &mut u32, video_length: &mut u32| {
                let end = start + fp.extent();
                if end > *video_length {
                    *video_length = end;
                    *weight *= cfg.decay_rate;
                    *extensions += 1;
                }
            };
            for &(oi, ostart) in &placed {
                let ofp = &footprints[oi];
                loop {
                    let cost = group_collision(fp, start, ofp, ostart);
                    let weighted = cost * weight;
                    let shift = if weighted > cfg.collision_threshold {
                        cfg.step_for(weighted)
                    } else {
                        0
                    };
                    trace.evaluations.push(Evaluation {
                        group_index: gi,
                        opponent_index: oi,
                        start,
                        cost,
                        weight,
                        shifted_by: shift,
                    });
                    if shift == 0 {
                        trace.checks.push(AcceptanceCheck {
                            group_index: gi,
                            opponent_index: oi,
                            opponent_start: ostart,
                            start,
                            cost,
                            weight,
                        });
                        break;
                    }
                    start += shift;
                    extend(start, &mut weight, &mut extensions, &mut video_length);
                }
                extend(start, &mut weight, &mut extensions, &mut video_length);
            }
            let at = placed.partition_point(|&(_, s)| s <= start);
            placed.insert(at, (gi, start));
            trace.placed.push(PlacedGroup {
                group_index: gi,
                synopsis_start: start,
                weight,
                extensions,
                batch,
            });
            trace.video_lengths.push(video_length);
        }
        next = batch_end;
        batch_len = cfg.batch_size;
        batch += 1;
        let view: Vec<(&GroupFootprint, u32)> = placed.iter().map(|&(i, s)| (&footprints[i], s)).collect();
        start_frame = calculate_start(&view, cfg);
    }

    let placements = placed
        .into_iter()
        .map(|(gi, s)| Placement {
            group_index: gi,
            group: groups[gi].clone(),
            synopsis_start: s,
        })
        .collect();
    Ok(Rearrangement {
        schedule: SynopsisSchedule::new(placements),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn still(id: u64, first: u32, len: u32, left: u32, top: u32, side: u32) -> Tube {
        let boxes = (first..first + len)
            .map(|f| BoundingBox::new(f, left, top, side, side))
            .collect();
        Tube::new(id, None, boxes).unwrap()
    }

    fn singletons(tubes: &[Tube]) -> Vec<TubeGroup> {
        tubes.iter().map(|t| TubeGroup::from_tubes([t])).collect()
    }

    fn footprint(tubes: &[Tube]) -> GroupFootprint {
        let index = index_tubes(tubes).unwrap();
        GroupFootprint::new(&TubeGroup::from_tubes(tubes), &index).unwrap()
    }

    fn two_group_cfg(threshold: f64) -> SchedulerConfig {
        SchedulerConfig {
            batch_size: 1,
            first_batch_size: Some(2),
            decay_rate: 0.5,
            collision_threshold: threshold,
            shift_step: 3,
            ..Default::default()
        }
    }

    #[test]
    fn group_collision_cases() {
        let a = footprint(&[still(1, 0, 2, 0, 0, 10)]);
        let b = footprint(&[still(2, 7, 2, 0, 0, 10)]);
        assert_eq!(group_collision(&a, 0, &b, 0), 1.0);
        assert_eq!(group_collision(&a, 0, &b, 2), 0.0);
        assert_eq!(group_collision(&a, 5, &b, 0), 0.0);
        // 4 common frames of IoM 0.25 over 4 boxes
        let c = footprint(&[still(3, 0, 4, 0, 0, 10)]);
        let d = footprint(&[still(4, 0, 4, 5, 5, 10)]);
        assert_eq!(group_collision(&c, 0, &d, 0), 0.25);
        // larger box count normalizes
        let e = footprint(&[still(5, 0, 8, 0, 0, 10)]);
        assert_eq!(group_collision(&c, 0, &e, 0), 0.5);
    }

    #[test]
    fn histogram_counts_boxes() {
        let a = footprint(&[still(1, 0, 5, 0, 0, 4)]);
        assert_eq!(box_count_histogram(&[(&a, 0)]), vec![1; 5]);
        assert_eq!(box_count_histogram(&[(&a, 0), (&a, 0)]), vec![2; 5]);
        assert_eq!(box_count_histogram(&[(&a, 2)]), vec![0, 0, 1, 1, 1, 1, 1]);
        assert!(box_count_histogram(&[]).is_empty());
    }

    #[test]
    fn start_frame_scan() {
        let mut hist = vec![4u32; 100];
        hist[80] = 1;
        assert_eq!(calculate_start_from_histogram(&hist, 0.15, 10), 70);
        // a dip inside the skipped prefix is ignored
        hist[10] = 0;
        assert_eq!(calculate_start_from_histogram(&hist, 0.15, 10), 70);
        // no frame under the threshold
        assert_eq!(calculate_start_from_histogram(&[3; 50], 0.15, 10), 40);
        assert_eq!(calculate_start_from_histogram(&[3; 5], 0.15, 10), 0);
        assert_eq!(calculate_start_from_histogram(&[], 0.15, 10), 0);
    }

    #[test]
    fn single_group_at_zero() {
        let tubes = [still(1, 40, 25, 0, 0, 10)];
        let r = rearrange(&singletons(&tubes), &tubes, &SchedulerConfig::default()).unwrap();
        assert_eq!(r.schedule.placements()[0].synopsis_start, 0);
        assert_eq!(r.schedule.synopsis_length(), 25);
    }

    #[test]
    fn empty_input_gives_empty_schedule() {
        let r = rearrange(&[], &[], &SchedulerConfig::default()).unwrap();
        assert_eq!(r.schedule.synopsis_length(), 0);
        assert!(r.schedule.placements().is_empty());
    }

    #[test]
    fn two_group_trace() {
        let tubes = [still(1, 0, 10, 0, 0, 10), still(2, 50, 10, 0, 0, 10)];
        let r = rearrange(&singletons(&tubes), &tubes, &two_group_cfg(0.1)).unwrap();
        let steps: Vec<(u32, f64, f64)> = r
            .trace
            .evaluations
            .iter()
            .filter(|e| e.group_index == 1)
            .map(|e| (e.start, e.cost, e.weight))
            .collect();
        assert_eq!(steps, vec![(0, 1.0, 1.0), (3, 0.7, 0.5), (6, 0.4, 0.25)]);
        assert_eq!(r.trace.placed[1].synopsis_start, 6);
        assert_eq!(r.trace.placed[1].extensions, 2);
        assert_eq!(r.schedule.synopsis_length(), 16);

        let r = rearrange(&singletons(&tubes), &tubes, &two_group_cfg(0.01)).unwrap();
        assert_eq!(r.trace.placed[1].synopsis_start, 12);
        assert_eq!(r.trace.placed[1].weight, 0.5f64.powi(4));
    }

    #[test]
    fn huge_threshold_never_shifts() {
        let tubes: Vec<Tube> = (0..8).map(|i| still(i, i as u32 * 7, 5 + i as u32, 0, 0, 10)).collect();
        let cfg = SchedulerConfig {
            collision_threshold: 1e12,
            ..Default::default()
        };
        let r = rearrange(&singletons(&tubes), &tubes, &cfg).unwrap();
        assert!(r.schedule.placements().iter().all(|p| p.synopsis_start == 0));
        assert_eq!(r.schedule.synopsis_length(), 12);
    }

    #[test]
    fn coarse_rule_takes_bigger_steps() {
        let tubes = [still(1, 0, 30, 0, 0, 10), still(2, 0, 30, 0, 0, 10)];
        let cfg = SchedulerConfig {
            decay_rate: 1.0,
            coarse_shifts: vec![ShiftRule { threshold: 0.5, step: 9 }],
            ..two_group_cfg(0.05)
        };
        let r = rearrange(&singletons(&tubes), &tubes, &cfg).unwrap();
        let shifts: Vec<u32> = r.trace.evaluations.iter().map(|e| e.shifted_by).collect();
        // cost 1.0, 0.7, 0.4 at starts 0, 9, 18; then fine steps
        assert_eq!(&shifts[..3], &[9, 9, 3]);
        assert_eq!(r.trace.placed[1].synopsis_start, 30);
    }

    #[test]
    fn config_validation() {
        assert!(SchedulerConfig::default().validate().is_ok());
        for bad in [
            SchedulerConfig { batch_size: 0, ..Default::default() },
            SchedulerConfig { decay_rate: 0.0, ..Default::default() },
            SchedulerConfig { decay_rate: 1.5, ..Default::default() },
            SchedulerConfig { collision_threshold: 0.0, ..Default::default() },
            SchedulerConfig { shift_step: 0, ..Default::default() },
            SchedulerConfig { coarse_shifts: vec![ShiftRule { threshold: 1.0, step: 4 }], ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn unknown_tube_is_an_error() {
        let tubes = [still(1, 0, 5, 0, 0, 4)];
        let other = [still(2, 0, 5, 0, 0, 4)];
        assert!(matches!(
            rearrange(&singletons(&other), &tubes, &SchedulerConfig::default()),
            Err(Error::UnknownTube(2))
        ));
    }
}
