//! Box reconstruction for frames skipped by a strided detector.

use std::collections::BTreeMap;

use crate::geometry::{interpolate_box, BoundingBox};
use crate::types::TubeId;

/// A detection carrying its track identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackedBox {
    pub id: TubeId,
    pub class_label: Option<i32>,
    pub bbox: BoundingBox,
}

/// Boxes for every frame strictly between `from_frame` and `to_frame`.
///
/// Ids present at both ends are interpolated per coordinate; ids present at
/// only one end are held constant at that endpoint's box. Each inner list is
/// sorted by id.
pub fn interpolate_between(
    from_frame: u32,
    from: &[TrackedBox],
    to_frame: u32,
    to: &[TrackedBox],
) -> Vec<Vec<TrackedBox>> {
    assert!(to_frame > from_frame, "interpolation needs increasing frames");
    let mut ends: BTreeMap<TubeId, (Option<&TrackedBox>, Option<&TrackedBox>)> = BTreeMap::new();
    for b in from {
        ends.entry(b.id).or_default().0 = Some(b);
    }
    for b in to {
        ends.entry(b.id).or_default().1 = Some(b);
    }
    (from_frame + 1..to_frame)
        .map(|frame| {
            ends.values()
                .map(|ends| match *ends {
                    (Some(a), Some(b)) => TrackedBox {
                        bbox: interpolate_box(&a.bbox.at_frame(from_frame), &b.bbox.at_frame(to_frame), frame),
                        ..*a
                    },
                    (Some(only), None) | (None, Some(only)) => TrackedBox {
                        bbox: only.bbox.at_frame(frame),
                        ..*only
                    },
                    (None, None) => unreachable!(),
                })
                .collect()
        })
        .collect()
}

/// Boxes for frames `t+1` and `t+2` from detections at `t` and `t+3`.
pub fn interpolate_stride(
    t: u32,
    at_t: &[TrackedBox],
    at_t3: &[TrackedBox],
) -> (Vec<TrackedBox>, Vec<TrackedBox>) {
    let mut frames = interpolate_between(t, at_t, t + 3, at_t3).into_iter();
    let first = frames.next().unwrap_or_default();
    let second = frames.next().unwrap_or_default();
    (first, second)
}
