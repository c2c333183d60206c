//! Partitioning tubes into groups of related or mutually occluding tubes.
//!
//! Two tubes are linked when their concurrency-weighted average center
//! distance is below `distance_threshold`, or when the summed
//! intersection-over-minimum of their boxes exceeds `collision_threshold`.
//! Groups are the connected components of the link graph.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{center_distance, common_box_pairs, iom};
use crate::types::{index_tubes, Tube, TubeGroup, TubeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupingConfig {
    /// Pixels; pairs with weighted distance strictly below this are linked.
    pub distance_threshold: f64,
    /// Summed IoM; pairs strictly above this are linked.
    pub collision_threshold: f64,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        GroupingConfig {
            distance_threshold: 100.0,
            collision_threshold: 10.0,
        }
    }
}

impl GroupingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance_threshold > 0.0 && self.collision_threshold > 0.0) {
            return Err(Error::config("grouping thresholds must be strictly positive"));
        }
        Ok(())
    }
}

/// Mean center distance over common frames; `None` when the tubes never coexist.
pub fn average_distance(t1: &Tube, t2: &Tube) -> Option<f64> {
    let (sum, n) = common_box_pairs(t1, t2)
        .fold((0.0, 0usize), |(s, n), (a, b)| (s + center_distance(a, b), n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Decreasing weight on concurrency `x`: `(1 + 1 / (1 + e^(x/2)))^4`.
pub fn weight_f(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfDomain {
            value: x,
            domain: "[0, 1]",
        });
    }
    Ok((1.0 + 1.0 / (1.0 + (x / 2.0).exp())).powi(4))
}

/// Weight of the fraction of the shorter tube's span shared with the other tube.
pub fn concurrency_weight(t1: &Tube, t2: &Tube) -> Option<f64> {
    let common = common_box_pairs(t1, t2).count();
    if common == 0 {
        return None;
    }
    let shorter = t1.span().min(t2.span()) as f64;
    Some(weight_f((common as f64 / shorter).min(1.0)).expect("ratio lies in [0, 1]"))
}

pub fn weighted_distance(t1: &Tube, t2: &Tube) -> Option<f64> {
    Some(average_distance(t1, t2)? * concurrency_weight(t1, t2)?)
}

/// Sum of IoM over common frames.
pub fn total_collision(t1: &Tube, t2: &Tube) -> f64 {
    common_box_pairs(t1, t2).map(|(a, b)| iom(a, b)).sum()
}

/// Every grouping quantity of one unordered tube pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairCost {
    pub first: TubeId,
    pub second: TubeId,
    pub common_frames: usize,
    pub distance: Option<f64>,
    pub weight: Option<f64>,
    pub weighted_distance: Option<f64>,
    pub collision: f64,
    pub linked: bool,
}

pub fn pair_cost(t1: &Tube, t2: &Tube, cfg: &GroupingConfig) -> PairCost {
    let mut common = 0usize;
    let mut dist_sum = 0.0;
    let mut collision = 0.0;
    for (a, b) in common_box_pairs(t1, t2) {
        common += 1;
        dist_sum += center_distance(a, b);
        collision += iom(a, b);
    }
    let (distance, weight) = if common > 0 {
        let ratio = (common as f64 / t1.span().min(t2.span()) as f64).min(1.0);
        (
            Some(dist_sum / common as f64),
            Some(weight_f(ratio).expect("ratio lies in [0, 1]")),
        )
    } else {
        (None, None)
    };
    let weighted = distance.zip(weight).map(|(d, w)| d * w);
    let linked = weighted.is_some_and(|dw| dw < cfg.distance_threshold) || collision > cfg.collision_threshold;
    PairCost {
        first: t1.id(),
        second: t2.id(),
        common_frames: common,
        distance,
        weight,
        weighted_distance: weighted,
        collision,
        linked,
    }
}

/// Costs of every temporally overlapping unordered pair, by (first, second) index order.
/// Pairs that never coexist cannot link and are omitted.
pub fn pair_costs(tubes: &[Tube], cfg: &GroupingConfig) -> Vec<PairCost> {
    let mut order: Vec<usize> = (0..tubes.len()).collect();
    order.sort_by_key(|&i| (tubes[i].start(), tubes[i].id()));
    let mut candidates = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if tubes[j].start() > tubes[i].end() {
                break;
            }
            candidates.push((i.min(j), i.max(j)));
        }
    }
    candidates.sort_unstable();
    candidates
        .par_iter()
        .map(|&(i, j)| pair_cost(&tubes[i], &tubes[j], cfg))
        .collect()
}

/// Disjoint sets over `0..n` with path halving and union by size.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Groups tubes by transitive closure of the link predicate, sorted by
/// source start (ties by smallest member id).
pub fn build_groups(tubes: &[Tube], cfg: &GroupingConfig) -> Result<Vec<TubeGroup>> {
    cfg.validate()?;
    index_tubes(tubes)?;
    let position: std::collections::HashMap<TubeId, usize> =
        tubes.iter().enumerate().map(|(i, t)| (t.id(), i)).collect();
    let mut sets = DisjointSet::new(tubes.len());
    for pc in pair_costs(tubes, cfg).into_iter().filter(|pc| pc.linked) {
        sets.union(position[&pc.first], position[&pc.second]);
    }
    let mut members: std::collections::BTreeMap<usize, Vec<&Tube>> = Default::default();
    for (i, t) in tubes.iter().enumerate() {
        members.entry(sets.find(i)).or_default().push(t);
    }
    let mut groups: Vec<TubeGroup> = members.into_values().map(TubeGroup::from_tubes).collect();
    groups.sort_by_key(|g| (g.source_start(), g.tube_ids().min()));
    Ok(groups)
}

/// Debug dump of pair costs for threshold tuning.
pub fn write_pair_table(costs: &[PairCost], mut out: impl Write) -> io::Result<()> {
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.6}"));
    writeln!(out, "first,second,common_frames,distance,weight,weighted_distance,collision,linked")?;
    for c in costs {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.6},{}",
            c.first,
            c.second,
            c.common_frames,
            opt(c.distance),
            opt(c.weight),
            opt(c.weighted_distance),
            c.collision,
            c.linked
        )?;
    }
    Ok(())
}
