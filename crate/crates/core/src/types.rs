use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub type TubeId = u64;

/// Chronologically ordered boxes of one tracked object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tube {
    id: TubeId,
    class_label: Option<i32>,
    boxes: Vec<BoundingBox>,
}

impl Tube {
    /// Boxes must be nonempty with strictly increasing frame indices.
    pub fn new(id: TubeId, class_label: Option<i32>, boxes: Vec<BoundingBox>) -> Result<Self> {
        if boxes.is_empty() {
            return Err(Error::InvalidTube {
                id,
                reason: "no boxes".into(),
            });
        }
        if let Some(w) = boxes.windows(2).find(|w| w[0].frame >= w[1].frame) {
            return Err(Error::InvalidTube {
                id,
                reason: format!("frame {} follows frame {}", w[1].frame, w[0].frame),
            });
        }
        Ok(Tube {
            id,
            class_label,
            boxes,
        })
    }

    pub fn id(&self) -> TubeId {
        self.id
    }

    pub fn class_label(&self) -> Option<i32> {
        self.class_label
    }

    pub fn boxes(&self) -> &[BoundingBox] {
        &self.boxes
    }

    pub fn start(&self) -> u32 {
        self.boxes[0].frame
    }

    /// Last frame, inclusive.
    pub fn end(&self) -> u32 {
        self.boxes[self.boxes.len() - 1].frame
    }

    /// Number of frames spanned from first to last box.
    pub fn span(&self) -> u32 {
        self.end() - self.start() + 1
    }

    pub fn box_count(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_gapless(&self) -> bool {
        self.span() as usize == self.boxes.len()
    }

    pub fn box_at(&self, frame: u32) -> Option<&BoundingBox> {
        if frame < self.start() || frame > self.end() {
            return None;
        }
        if self.is_gapless() {
            return self.boxes.get((frame - self.start()) as usize);
        }
        self.boxes
            .binary_search_by_key(&frame, |b| b.frame)
            .ok()
            .map(|i| &self.boxes[i])
    }

    pub fn total_area(&self) -> u64 {
        self.boxes.iter().map(BoundingBox::area).sum()
    }
}

/// Static properties of the source video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
    pub fps: f64,
}

impl VideoMeta {
    pub fn new(width: u32, height: u32, frame_count: u32, fps: f64) -> Result<Self> {
        let meta = VideoMeta {
            width,
            height,
            frame_count,
            fps,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.frame_count == 0 || !(self.fps > 0.0) {
            return Err(Error::config(format!(
                "video metadata must be strictly positive, got {}x{} with {} frames at {} fps",
                self.width, self.height, self.frame_count, self.fps
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> u64 {
        self.width as u64 * self.height as u64
    }
}

/// A tube locked inside a group at a fixed offset from the group's start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupMember {
    pub tube_id: TubeId,
    pub offset: u32,
    /// Frames spanned by the tube.
    pub span: u32,
}

/// Tubes whose relative timing is frozen through scheduling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TubeGroup {
    members: Vec<GroupMember>,
    source_start: u32,
}

impl TubeGroup {
    /// Builds a group from member tubes; members are ordered by (source start, id).
    pub fn from_tubes<'a>(tubes: impl IntoIterator<Item = &'a Tube>) -> Self {
        let mut tubes: Vec<&Tube> = tubes.into_iter().collect();
        assert!(!tubes.is_empty(), "a group needs at least one tube");
        tubes.sort_by_key(|t| (t.start(), t.id()));
        let source_start = tubes[0].start();
        let members = tubes
            .iter()
            .map(|t| GroupMember {
                tube_id: t.id(),
                offset: t.start() - source_start,
                span: t.span(),
            })
            .collect();
        TubeGroup {
            members,
            source_start,
        }
    }

    /// Group with explicit member offsets, as read from an external schedule.
    /// Members are sorted by (offset, id); the smallest offset must be 0.
    pub fn from_members(mut members: Vec<GroupMember>, source_start: u32) -> Result<Self> {
        members.sort_by_key(|m| (m.offset, m.tube_id));
        match members.first() {
            Some(m) if m.offset == 0 => Ok(TubeGroup {
                members,
                source_start,
            }),
            _ => Err(Error::config("a group needs a member at offset 0")),
        }
    }

    pub fn members(&self) -> &[GroupMember] {
        &self.members
    }

    pub fn source_start(&self) -> u32 {
        self.source_start
    }

    /// Frames from the group's start to the end of its last-ending member.
    pub fn extent(&self) -> u32 {
        self.members
            .iter()
            .map(|m| m.offset + m.span)
            .max()
            .unwrap_or(0)
    }

    pub fn tube_ids(&self) -> impl Iterator<Item = TubeId> + '_ {
        self.members.iter().map(|m| m.tube_id)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// One group placed on the synopsis timeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    /// Position of the group in the grouping result.
    pub group_index: usize,
    pub group: TubeGroup,
    pub synopsis_start: u32,
}

impl Placement {
    /// Exclusive end frame on the synopsis timeline.
    pub fn end(&self) -> u32 {
        self.synopsis_start + self.group.extent()
    }

    pub fn tube_starts(&self) -> impl Iterator<Item = (TubeId, u32)> + '_ {
        self.group
            .members()
            .iter()
            .map(move |m| (m.tube_id, self.synopsis_start + m.offset))
    }
}

/// Synopsis start frame of every group plus the resulting synopsis length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynopsisSchedule {
    placements: Vec<Placement>,
    synopsis_length: u32,
}

impl SynopsisSchedule {
    pub fn new(mut placements: Vec<Placement>) -> Self {
        placements.sort_by_key(|p| (p.synopsis_start, p.group_index));
        let synopsis_length = placements.iter().map(Placement::end).max().unwrap_or(0);
        SynopsisSchedule {
            placements,
            synopsis_length,
        }
    }

    pub fn empty() -> Self {
        SynopsisSchedule::new(Vec::new())
    }

    pub fn placements(&self) -> &[Placement] {
        &self.placements
    }

    pub fn synopsis_length(&self) -> u32 {
        self.synopsis_length
    }

    /// Synopsis start of every scheduled tube.
    pub fn tube_starts(&self) -> BTreeMap<TubeId, u32> {
        self.placements.iter().flat_map(Placement::tube_starts).collect()
    }

    pub fn tube_count(&self) -> usize {
        self.placements.iter().map(|p| p.group.len()).sum()
    }
}

/// Tubes keyed by id.
pub fn index_tubes(tubes: &[Tube]) -> Result<BTreeMap<TubeId, &Tube>> {
    let mut map = BTreeMap::new();
    for t in tubes {
        if map.insert(t.id(), t).is_some() {
            return Err(Error::DuplicateTubeId(t.id()));
        }
    }
    Ok(map)
}

/// A box mapped onto the synopsis timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynopsisBox {
    pub synopsis_frame: u32,
    pub tube_id: TubeId,
    pub placement: usize,
    pub bbox: BoundingBox,
}

/// Every scheduled box keyed by synopsis frame; entry `s` lists the boxes shown at frame `s`.
pub fn expand_schedule(
    schedule: &SynopsisSchedule,
    tubes: &BTreeMap<TubeId, &Tube>,
) -> Result<Vec<Vec<SynopsisBox>>> {
    let mut frames = vec![Vec::new(); schedule.synopsis_length() as usize];
    for (pi, placement) in schedule.placements().iter().enumerate() {
        for (tube_id, start) in placement.tube_starts() {
            let tube = tubes.get(&tube_id).ok_or(Error::UnknownTube(tube_id))?;
            for b in tube.boxes() {
                let s = start + (b.frame - tube.start());
                frames[s as usize].push(SynopsisBox {
                    synopsis_frame: s,
                    tube_id,
                    placement: pi,
                    bbox: *b,
                });
            }
        }
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tube(id: u64, first: u32, last: u32) -> Tube {
        let boxes = (first..=last).map(|f| BoundingBox::new(f, 0, 0, 2, 2)).collect();
        Tube::new(id, None, boxes).unwrap()
    }

    #[test]
    fn tube_rejects_bad_ordering() {
        let boxes = vec![BoundingBox::new(3, 0, 0, 1, 1), BoundingBox::new(3, 0, 0, 1, 1)];
        assert!(Tube::new(1, None, boxes).is_err());
        assert!(Tube::new(1, None, Vec::new()).is_err());
    }

    #[test]
    fn group_offsets_and_extent() {
        let (a, b) = (tube(1, 10, 19), tube(2, 14, 30));
        let g = TubeGroup::from_tubes([&b, &a]);
        assert_eq!(g.source_start(), 10);
        assert_eq!(g.members()[0].tube_id, 1);
        assert_eq!(g.members()[1].offset, 4);
        assert_eq!(g.extent(), 21);
    }

    #[test]
    fn schedule_length_is_max_end() {
        let (a, b) = (tube(1, 0, 9), tube(2, 5, 7));
        let sched = SynopsisSchedule::new(vec![
            Placement {
                group_index: 1,
                group: TubeGroup::from_tubes([&b]),
                synopsis_start: 12,
            },
            Placement {
                group_index: 0,
                group: TubeGroup::from_tubes([&a]),
                synopsis_start: 0,
            },
        ]);
        assert_eq!(sched.synopsis_length(), 15);
        assert_eq!(sched.placements()[0].group_index, 0);
        let tubes = [a, b];
        let idx = index_tubes(&tubes).unwrap();
        let frames = expand_schedule(&sched, &idx).unwrap();
        assert_eq!(frames.len(), 15);
        assert_eq!(frames[11].len(), 0);
        assert_eq!(frames[12][0].tube_id, 2);
        assert_eq!(frames[12][0].bbox.frame, 5);
    }

    #[test]
    fn meta_must_be_positive() {
        assert!(VideoMeta::new(0, 10, 10, 25.0).is_err());
        assert!(VideoMeta::new(10, 10, 10, 0.0).is_err());
        assert!(VideoMeta::new(10, 10, 10, 25.0).is_ok());
    }
}
