use serde::{Deserialize, Serialize};

use super::TileWorkload;

/// Summary of per-tile intersection counts for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadStats {
    pub tiles: usize,
    pub total: usize,
    pub mean: f64,
    pub max: usize,
    pub p50: usize,
    pub p90: usize,
    pub p99: usize,
}

/// Nearest-rank percentile of an ascending slice.
pub(crate) fn percentile(sorted: &[usize], q: f64) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn workload_stats(tiles: &[TileWorkload]) -> WorkloadStats {
    let mut counts: Vec<usize> = tiles.iter().map(|t| t.splats.len()).collect();
    counts.sort_unstable();
    let total: usize = counts.iter().sum();
    WorkloadStats {
        tiles: counts.len(),
        total,
        mean: if counts.is_empty() {
            0.0
        } else {
            total as f64 / counts.len() as f64
        },
        max: counts.last().copied().unwrap_or(0),
        p50: percentile(&counts, 0.5),
        p90: percentile(&counts, 0.9),
        p99: percentile(&counts, 0.99),
    }
}
