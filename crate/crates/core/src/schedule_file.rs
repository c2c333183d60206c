//! JSON form of a synopsis schedule, shared by the scheduler, the renderer
//! and the scorer. Schedules produced by other tools load the same way.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{GroupMember, Placement, SynopsisSchedule, Tube, TubeGroup, TubeId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub group_index: usize,
    pub tube_ids: Vec<TubeId>,
    pub synopsis_start: u32,
    /// Synopsis start of each tube, parallel to `tube_ids`.
    pub per_tube_starts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub synopsis_length: u32,
    pub placements: Vec<PlacementRecord>,
}

impl ScheduleFile {
    pub fn from_schedule(schedule: &SynopsisSchedule) -> Self {
        let placements = schedule
            .placements()
            .iter()
            .map(|p| {
                let (tube_ids, per_tube_starts) = p.tube_starts().unzip();
                PlacementRecord {
                    group_index: p.group_index,
                    tube_ids,
                    synopsis_start: p.synopsis_start,
                    per_tube_starts,
                }
            })
            .collect();
        ScheduleFile {
            synopsis_length: schedule.synopsis_length(),
            placements,
        }
    }

    /// Rebuilds the schedule against the tubes it refers to.
    pub fn to_schedule(&self, tubes: &BTreeMap<TubeId, &Tube>) -> Result<SynopsisSchedule> {
        let mut seen = BTreeSet::new();
        let mut placements = Vec::with_capacity(self.placements.len());
        for rec in &self.placements {
            if rec.tube_ids.len() != rec.per_tube_starts.len() || rec.tube_ids.is_empty() {
                return Err(Error::config(format!(
                    "placement of group {} needs one start per tube",
                    rec.group_index
                )));
            }
            let mut members = Vec::with_capacity(rec.tube_ids.len());
            let mut source_start = u32::MAX;
            for (&id, &start) in rec.tube_ids.iter().zip(&rec.per_tube_starts) {
                let tube = tubes.get(&id).ok_or(Error::UnknownTube(id))?;
                if !seen.insert(id) {
                    return Err(Error::DuplicateTubeId(id));
                }
                let offset = start.checked_sub(rec.synopsis_start).ok_or_else(|| {
                    Error::config(format!("tube {id} starts before its group"))
                })?;
                source_start = source_start.min(tube.start());
                members.push(GroupMember {
                    tube_id: id,
                    offset,
                    span: tube.span(),
                });
            }
            placements.push(Placement {
                group_index: rec.group_index,
                group: TubeGroup::from_members(members, source_start)?,
                synopsis_start: rec.synopsis_start,
            });
        }
        let schedule = SynopsisSchedule::new(placements);
        if schedule.synopsis_length() != self.synopsis_length {
            return Err(Error::config(format!(
                "synopsis_length {} disagrees with placements ending at {}",
                self.synopsis_length,
                schedule.synopsis_length()
            )));
        }
        Ok(schedule)
    }
}

pub fn write_schedule(schedule: &SynopsisSchedule, mut out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, &ScheduleFile::from_schedule(schedule))?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_schedule(input: impl Read, tubes: &BTreeMap<TubeId, &Tube>) -> Result<SynopsisSchedule> {
    let file: ScheduleFile = serde_json::from_reader(input)?;
    file.to_schedule(tubes)
}
