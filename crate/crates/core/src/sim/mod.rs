//! Cycle-approximate model of a three-stage splatting pipeline.
//!
//! Projection runs once over all points, then sorting and rasterization
//! work tile by tile with a two-slot buffer between them. Tile Merging
//! lets consecutive light tiles share one buffer slot; Incremental
//! Pipelining streams each tile through a line buffer in row chunks so
//! rasterization can start before sorting finishes.

mod report;

use serde::{Deserialize, Serialize};

pub use report::{imbalance_report, BoxStats, ImbalanceReport};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    /// Projection cycles per point for one unit.
    pub proj_cycles_per_point: f64,
    pub proj_units: u32,
    /// A tile with `k` intersections sorts in `sort_coeff * k/16 * log2(max(k, 2))` cycles.
    pub sort_coeff: f64,
    /// Each tile row rasterizes in `max(1, ceil(rast_coeff * k / 16))` cycles.
    pub rast_coeff: f64,
    pub tile_size: u32,
    pub line_buffer_bytes: u32,
    /// Bytes buffered per pixel (colour and transmittance).
    pub bytes_per_pixel: u32,
    /// Merge threshold; `None` uses the median tile count.
    pub beta: Option<u64>,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            proj_cycles_per_point: 1.0,
            proj_units: 8,
            sort_coeff: 1.0,
            rast_coeff: 1.0,
            tile_size: 16,
            line_buffer_bytes: 1024,
            bytes_per_pixel: 16,
            beta: None,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.proj_cycles_per_point,
            self.sort_coeff,
            self.rast_coeff,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite()))
            || self.proj_units == 0
            || self.tile_size == 0
            || self.bytes_per_pixel == 0
        {
            return Err(Error::Config("cost coefficients must be positive".into()));
        }
        if self.beta == Some(0) {
            return Err(Error::Config("beta must be >= 1".into()));
        }
        Ok(())
    }

    pub fn projection_cycles(&self, points: usize) -> u64 {
        (points as f64 * self.proj_cycles_per_point / self.proj_units as f64).ceil() as u64
    }

    pub fn sort_cycles(&self, k: u64) -> u64 {
        if k == 0 {
            return 0;
        }
        let k = k as f64;
        (self.sort_coeff * k / 16.0 * k.max(2.0).log2()).ceil() as u64
    }

    pub fn row_cycles(&self, k: u64) -> u64 {
        ((self.rast_coeff * k as f64 / 16.0).ceil() as u64).max(1)
    }

    pub fn raster_cycles(&self, k: u64) -> u64 {
        self.tile_size as u64 * self.row_cycles(k)
    }

    /// Tile rows held by the line buffer, at least one.
    pub fn chunk_rows(&self) -> u32 {
        let row = self.tile_size * self.bytes_per_pixel;
        (self.line_buffer_bytes / row).clamp(1, self.tile_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Features {
    pub tile_merging: bool,
    pub incremental_pipelining: bool,
}

impl Features {
    pub const BASELINE: Features = Features {
        tile_merging: false,
        incremental_pipelining: false,
    };
    pub const TM: Features = Features {
        tile_merging: true,
        incremental_pipelining: false,
    };
    pub const TM_IP: Features = Features {
        tile_merging: true,
        incremental_pipelining: true,
    };

    pub fn label(&self) -> &'static str {
        match (self.tile_merging, self.incremental_pipelining) {
            (false, false) => "baseline",
            (true, false) => "tm",
            (false, true) => "ip",
            (true, true) => "tm+ip",
        }
    }
}

/// One tile's place in a merged group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupMember {
    pub tile: usize,
    pub group: usize,
    pub count: u64,
}

/// Groups consecutive tiles until their summed count reaches `beta`.
///
/// A tile that would push a non-empty group past `beta` starts a new group.
pub fn merge_tiles(counts: &[u64], beta: u64) -> Vec<Vec<GroupMember>> {
    let beta = beta.max(1);
    let mut groups: Vec<Vec<GroupMember>> = Vec::new();
    let mut current: Vec<GroupMember> = Vec::new();
    let mut sum = 0u64;
    for (tile, &count) in counts.iter().enumerate() {
        if !current.is_empty() && sum + count > beta {
            groups.push(std::mem::take(&mut current));
            sum = 0;
        }
        current.push(GroupMember {
            tile,
            group: groups.len(),
            count,
        });
        sum += count;
        if sum >= beta {
            groups.push(std::mem::take(&mut current));
            sum = 0;
        }
    }
    if !current.is_empty() {
        groups.push(current);
    }
    groups
}

/// Median tile count, at least 1.
pub fn default_beta(counts: &[u64]) -> u64 {
    if counts.is_empty() {
        return 1;
    }
    let mut v = counts.to_vec();
    v.sort_unstable();
    v[(v.len() - 1) / 2].max(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTrace {
    pub name: String,
    pub busy: u64,
    /// Idle cycles between the stage's first start and last finish.
    pub stall: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileTimeline {
    pub tile: usize,
    pub group: usize,
    pub count: u64,
    pub sort_start: u64,
    pub sort_end: u64,
    pub raster_start: u64,
    pub raster_end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub features: Features,
    pub beta: u64,
    pub groups: usize,
    pub chunks_per_tile: u32,
    pub makespan: u64,
    pub stages: Vec<StageTrace>,
    pub tiles: Vec<TileTimeline>,
}

impl SimTrace {
    pub fn utilization(&self, stage: usize) -> f64 {
        if self.makespan == 0 {
            return 0.0;
        }
        self.stages[stage].busy as f64 / self.makespan as f64
    }

    pub fn stage(&self, name: &str) -> Option<&StageTrace> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    /// Per-tile timeline as CSV.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for t in &self.tiles {
            w.serialize(t).map_err(|e| Error::Config(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Splits `total` into `parts` integers differing by at most one, larger first.
fn split_even(total: u64, parts: u32) -> Vec<u64> {
    let parts = parts as u64;
    (0..parts)
        .map(|i| total / parts + u64::from(i < total % parts))
        .collect()
}

/// Two-stage schedule over per-tile costs.
///
/// Producing tile `i` needs a free buffer slot: if `i` opens group `g`, the
/// consumer must have finished group `g - 2`; later members of a group use
/// the slot already held. Each tile flows through in `chunks` pieces, and
/// the consumer takes a piece once the producer has finished it.
pub fn schedule(
    produce: &[u64],
    consume: &[u64],
    group_of: &[usize],
    chunks: u32,
    start: u64,
) -> Vec<(u64, u64, u64, u64)> {
    let n = produce.len();
    let chunks = chunks.max(1);
    let mut out = Vec::with_capacity(n);
    let mut group_end: Vec<u64> = Vec::new();
    let mut p_free = start;
    let mut c_free = 0u64;
    for i in 0..n {
        let g = group_of[i];
        let opens = i == 0 || group_of[i - 1] != g;
        let slot = if opens && g >= 2 { group_end[g - 2] } else { 0 };
        let p_start = p_free.max(slot);
        let mut p = p_start;
        let mut c_start = None;
        for (pc, cc) in split_even(produce[i], chunks)
            .into_iter()
            .zip(split_even(consume[i], chunks))
        {
            p += pc;
            let s = p.max(c_free);
            c_start.get_or_insert(s);
            c_free = s + cc;
        }
        p_free = p;
        if group_end.len() <= g {
            group_end.resize(g + 1, 0);
        }
        group_end[g] = c_free;
        out.push((p_start, p, c_start.unwrap_or(p), c_free));
    }
    out
}

/// Simulates one frame given per-tile intersection counts in arrival order.
pub fn simulate(
    counts: &[u64],
    points: usize,
    cost: &CostModel,
    features: Features,
) -> Result<SimTrace> {
    cost.validate()?;
    if counts.is_empty() {
        return Err(Error::Config("workload has no tiles".into()));
    }
    let beta = cost.beta.unwrap_or_else(|| default_beta(counts));
    let group_of: Vec<usize> = if features.tile_merging {
        merge_tiles(counts, beta)
            .iter()
            .flat_map(|g| g.iter().map(|m| m.group))
            .collect()
    } else {
        (0..counts.len()).collect()
    };
    let chunks = if features.incremental_pipelining {
        cost.tile_size.div_ceil(cost.chunk_rows())
    } else {
        1
    };
    let produce: Vec<u64> = counts.iter().map(|&k| cost.sort_cycles(k)).collect();
    let consume: Vec<u64> = counts.iter().map(|&k| cost.raster_cycles(k)).collect();
    let proj = cost.projection_cycles(points);
    let times = schedule(&produce, &consume, &group_of, chunks, proj);

    let makespan = times.last().map_or(proj, |t| t.3).max(proj);
    let span = |first: u64, last: u64, busy: u64| (last - first).saturating_sub(busy);
    let sort_busy: u64 = produce.iter().sum();
    let rast_busy: u64 = consume.iter().sum();
    let first = times.first().expect("non-empty");
    let sort_last = times.iter().map(|t| t.1).max().unwrap_or(0);
    let stages = vec![
        StageTrace {
            name: "projection".into(),
            busy: proj,
            stall: 0,
        },
        StageTrace {
            name: "sort".into(),
            busy: sort_busy,
            stall: span(first.0, sort_last, sort_busy),
        },
        StageTrace {
            name: "raster".into(),
            busy: rast_busy,
            stall: span(first.2, makespan, rast_busy),
        },
    ];
    let tiles = times
        .iter()
        .enumerate()
        .map(|(i, t)| TileTimeline {
            tile: i,
            group: group_of[i],
            count: counts[i],
            sort_start: t.0,
            sort_end: t.1,
            raster_start: t.2,
            raster_end: t.3,
        })
        .collect();
    Ok(SimTrace {
        features,
        beta,
        groups: group_of.last().map_or(0, |g| g + 1),
        chunks_per_tile: chunks,
        makespan,
        stages,
        tiles,
    })
}

/// Baseline, Tile Merging, and both features, in that order.
pub fn simulate_all(counts: &[u64], points: usize, cost: &CostModel) -> Result<Vec<SimTrace>> {
    [Features::BASELINE, Features::TM, Features::TM_IP]
        .into_iter()
        .map(|f| simulate(counts, points, cost, f))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn groups_of(counts: &[u64], beta: u64) -> Vec<Vec<u64>> {
        merge_tiles(counts, beta)
            .into_iter()
            .map(|g| g.into_iter().map(|m| m.count).collect())
            .collect()
    }

    #[test]
    fn merge_hand_cases() {
        assert_eq!(groups_of(&[10, 3, 4, 50], 20), vec![vec![10, 3, 4], vec![50]]);
        assert_eq!(groups_of(&[30, 25, 21], 20), vec![vec![30], vec![25], vec![21]]);
        assert!(merge_tiles(&[], 5).is_empty());
        // 8 + 9 reaches the threshold exactly and closes the group.
        assert_eq!(groups_of(&[8, 9, 1, 1], 17), vec![vec![8, 9], vec![1, 1]]);
    }

    #[test]
    fn members_keep_native_ids() {
        let g = merge_tiles(&[10, 3, 4, 50], 20);
        assert_eq!(g[0].iter().map(|m| m.tile).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(g[1][0].tile, 3);
        assert_eq!(g[1][0].group, 1);
    }

    #[test]
    fn balanced_two_stage_pipeline() {
        let n = 7;
        let t = schedule(&vec![5; n], &vec![5; n], &(0..n).collect::<Vec<_>>(), 1, 0);
        assert_eq!(t.last().unwrap().3, (n as u64 + 1) * 5);
        for w in t.windows(2) {
            assert_eq!(w[1].2, w[0].3);
        }
    }

    #[test]
    fn incremental_start_precedes_sort_end() {
        let cost = CostModel::default();
        let tr = simulate(&[64], 0, &cost, Features::TM_IP).unwrap();
        assert_eq!(tr.chunks_per_tile, 4);
        assert!(tr.tiles[0].raster_start < tr.tiles[0].sort_end);
    }

    #[test]
    fn cost_shapes() {
        let c = CostModel::default();
        assert_eq!(c.sort_cycles(0), 0);
        assert_eq!(c.sort_cycles(16), 4);
        assert_eq!(c.raster_cycles(0), 16);
        assert_eq!(c.raster_cycles(17), 32);
        assert_eq!(c.projection_cycles(17), 3);
        assert_eq!(c.chunk_rows(), 4);
    }

    #[test]
    fn split_is_exact() {
        assert_eq!(split_even(10, 4), vec![3, 3, 2, 2]);
        assert_eq!(split_even(0, 3), vec![0, 0, 0]);
    }
}
