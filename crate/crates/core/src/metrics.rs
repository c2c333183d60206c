//! Condensation, collision and ordering metrics for a synopsis schedule,
//! plus the per-video statistics used to normalize them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::intersection_area;
use crate::types::{expand_schedule, SynopsisSchedule, Tube, TubeId, VideoMeta};

/// Synopsis length over source length.
pub fn frame_condensation_ratio(synopsis_length: u32, source_length: u32) -> Result<f64> {
    if source_length == 0 {
        return Err(Error::OutOfDomain {
            value: 0.0,
            domain: "source length > 0",
        });
    }
    Ok(synopsis_length as f64 / source_length as f64)
}

/// Total pixels shared by pairs of boxes shown in the same synopsis frame.
pub fn collision_area(schedule: &SynopsisSchedule, tubes: &BTreeMap<TubeId, &Tube>) -> Result<u64> {
    collision_area_with(schedule, tubes, true)
}

/// As [`collision_area`]; with `include_intra_group` false, pairs of tubes
/// from the same group are skipped.
pub fn collision_area_with(
    schedule: &SynopsisSchedule,
    tubes: &BTreeMap<TubeId, &Tube>,
    include_intra_group: bool,
) -> Result<u64> {
    let frames = expand_schedule(schedule, tubes)?;
    Ok(frames
        .par_iter()
        .map(|boxes| {
            let mut sum = 0u64;
            for (i, a) in boxes.iter().enumerate() {
                for b in &boxes[i + 1..] {
                    if include_intra_group || a.placement != b.placement {
                        sum += intersection_area(&a.bbox, &b.bbox);
                    }
                }
            }
            sum
        })
        .sum())
}

/// Fraction of tube pairs whose synopsis order strictly inverts their source
/// order; `None` with fewer than two tubes.
pub fn chronological_disorder_ratio(
    schedule: &SynopsisSchedule,
    tubes: &BTreeMap<TubeId, &Tube>,
) -> Result<Option<f64>> {
    let starts = schedule.tube_starts();
    let n = starts.len();
    if n < 2 {
        return Ok(None);
    }
    let mut pairs = Vec::with_capacity(n);
    for (&id, &syn) in &starts {
        let tube = tubes.get(&id).ok_or(Error::UnknownTube(id))?;
        pairs.push((tube.start(), syn));
    }
    let total = n as u64 * (n as u64 - 1) / 2;
    Ok(Some(strict_inversions(pairs) as f64 / total as f64))
}

/// Pairs with `src_i < src_j` and `syn_i > syn_j`, counted with a Fenwick tree.
fn strict_inversions(mut pairs: Vec<(u32, u32)>) -> u64 {
    pairs.sort_unstable();
    let ranks: Vec<u32> = {
        let mut v: Vec<u32> = pairs.iter().map(|p| p.1).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let rank = |s: u32| ranks.binary_search(&s).expect("present") + 1;
    let mut tree = vec![0u64; ranks.len() + 1];
    let prefix = |tree: &[u64], mut i: usize| {
        let mut s = 0;
        while i > 0 {
            s += tree[i];
            i &= i - 1;
        }
        s
    };
    let mut inserted = 0u64;
    let mut count = 0u64;
    let mut i = 0;
    while i < pairs.len() {
        let j = pairs[i..].iter().position(|p| p.0 != pairs[i].0).map_or(pairs.len(), |k| i + k);
        for p in &pairs[i..j] {
            count += inserted - prefix(&tree, rank(p.1));
        }
        for p in &pairs[i..j] {
            let mut r = rank(p.1);
            while r < tree.len() {
                tree[r] += 1;
                r += r & r.wrapping_neg();
            }
            inserted += 1;
        }
        i = j;
    }
    count
}

/// `fr * coverage / (100 * density)` with density as a fraction of pixels.
pub fn normalized_fr(fr: f64, coverage: f64, density: f64) -> Result<f64> {
    if !(density > 0.0) {
        return Err(Error::OutOfDomain {
            value: density,
            domain: "density > 0",
        });
    }
    Ok(fr * coverage / (100.0 * density))
}

pub fn missed_object_rate(total: u64, missed: u64) -> Result<f64> {
    if total == 0 || missed > total {
        return Err(Error::OutOfDomain {
            value: missed as f64,
            domain: "0 <= missed <= total, total > 0",
        });
    }
    Ok(missed as f64 / total as f64)
}

/// Ground-truth boxes in total, and those lying in frames that were skipped.
pub fn missed_boxes(ground_truth: &[Tube], skipped: impl IntoIterator<Item = u32>) -> (u64, u64) {
    let skipped: BTreeSet<u32> = skipped.into_iter().collect();
    ground_truth
        .iter()
        .flat_map(Tube::boxes)
        .fold((0, 0), |(t, m), b| (t + 1, m + skipped.contains(&b.frame) as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    /// Box pixels over all video pixels, in percent.
    pub density_percent: f64,
    /// Fraction of frame pixels covered by some box at some time.
    pub coverage: f64,
    /// Longest tube over source length.
    pub minimum_fr: f64,
    pub tube_pixels: u64,
}

pub fn dataset_stats(tubes: &[Tube], meta: &VideoMeta) -> Result<DatasetStats> {
    meta.validate()?;
    let (w, h) = (meta.width as usize, meta.height as usize);
    let tube_pixels: u64 = tubes.iter().map(Tube::total_area).sum();
    // corner-difference array; prefix sums give per-pixel box counts
    let stride = w + 1;
    let mut diff = vec![0i64; stride * (h + 1)];
    for b in tubes.iter().flat_map(Tube::boxes) {
        let (l, t) = (b.left as usize, b.top as usize);
        let (r, btm) = ((b.right() as usize).min(w), (b.bottom() as usize).min(h));
        if l >= r || t >= btm {
            continue;
        }
        diff[t * stride + l] += 1;
        diff[t * stride + r] -= 1;
        diff[btm * stride + l] -= 1;
        diff[btm * stride + r] += 1;
    }
    let mut covered = 0u64;
    let mut above = vec![0i64; w];
    for y in 0..h {
        let mut run = 0i64;
        for x in 0..w {
            run += diff[y * stride + x];
            above[x] += run;
            covered += (above[x] > 0) as u64;
        }
    }
    let longest = tubes.iter().map(Tube::span).max().unwrap_or(0);
    Ok(DatasetStats {
        density_percent: tube_pixels as f64 / (meta.pixel_count() as f64 * meta.frame_count as f64) * 100.0,
        coverage: covered as f64 / (w * h) as f64,
        minimum_fr: longest as f64 / meta.frame_count as f64,
        tube_pixels,
    })
}

/// Collision area as a fraction of all tube pixels.
pub fn collision_level(ca: u64, tubes: &[Tube]) -> Result<f64> {
    let total: u64 = tubes.iter().map(Tube::total_area).sum();
    if total == 0 {
        return Err(Error::OutOfDomain {
            value: 0.0,
            domain: "nonempty tube set",
        });
    }
    Ok(ca as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub synopsis_length: u32,
    pub source_length: u32,
    pub tube_count: usize,
    pub fr: f64,
    pub ca: u64,
    pub cdr: Option<f64>,
    pub nfr: Option<f64>,
    pub mor: Option<f64>,
    pub density_percent: f64,
    pub coverage: f64,
    pub minimum_fr: f64,
    pub collision_level: Option<f64>,
}

/// Scores a schedule over `tubes`; `detection` is (ground-truth boxes, missed boxes) when known.
pub fn score(
    schedule: &SynopsisSchedule,
    tubes: &[Tube],
    meta: &VideoMeta,
    detection: Option<(u64, u64)>,
) -> Result<MetricsReport> {
    let index = crate::types::index_tubes(tubes)?;
    let fr = frame_condensation_ratio(schedule.synopsis_length(), meta.frame_count)?;
    let ca = collision_area(schedule, &index)?;
    let stats = dataset_stats(tubes, meta)?;
    let nfr = (stats.density_percent > 0.0)
        .then(|| normalized_fr(fr, stats.coverage, stats.density_percent / 100.0))
        .transpose()?;
    Ok(MetricsReport {
        synopsis_length: schedule.synopsis_length(),
        source_length: meta.frame_count,
        tube_count: schedule.tube_count(),
        fr,
        ca,
        cdr: chronological_disorder_ratio(schedule, &index)?,
        nfr,
        mor: detection.map(|(t, m)| missed_object_rate(t, m)).transpose()?,
        density_percent: stats.density_percent,
        coverage: stats.coverage,
        minimum_fr: stats.minimum_fr,
        collision_level: (stats.tube_pixels > 0).then(|| ca as f64 / stats.tube_pixels as f64),
    })
}

/// Aligned plain-text table, one row per labelled report.
pub fn format_table(rows: &[(String, MetricsReport)]) -> String {
    let opt = |v: Option<f64>, prec: usize| v.map_or_else(|| "-".to_string(), |v| format!("{v:.prec$}"));
    let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<label_w$}  {:>8}  {:>12}  {:>10}  {:>7}  {:>7}  {:>7}  {:>7}",
        "label", "FR", "CA(px)", "CA(x1e7)", "level", "CDR", "NFR", "MOR%"
    );
    for (label, r) in rows {
        let _ = writeln!(
            out,
            "{:<label_w$}  {:>8.4}  {:>12}  {:>10.4}  {:>7}  {:>7}  {:>7}  {:>7}",
            label,
            r.fr,
            r.ca,
            r.ca as f64 / 1e7,
            opt(r.collision_level.map(|v| v * 100.0), 2),
            opt(r.cdr, 3),
            opt(r.nfr, 4),
            opt(r.mor.map(|v| v * 100.0), 2),
        );
    }
    out
}
