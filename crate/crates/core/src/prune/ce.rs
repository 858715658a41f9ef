use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::model::FrModel;
use crate::raster::{render, RasterSettings};

/// Value per unit of compute of one point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CeScore {
    /// Pixels dominated, summed over cameras.
    pub val: u64,
    /// Tiles intersected, summed over cameras.
    pub comp: u64,
    /// Largest per-camera `val / comp`.
    pub ce: f64,
}

impl CeScore {
    /// Combines per-camera `(val, comp)` pairs.
    pub fn from_views(views: &[(u64, u64)]) -> Self {
        let mut s = CeScore::default();
        for &(val, comp) in views {
            s.val += val;
            s.comp += comp;
            s.ce = s.ce.max(ratio(val, comp));
        }
        s
    }
}

fn ratio(val: u64, comp: u64) -> f64 {
    if comp == 0 {
        0.0
    } else {
        val as f64 / comp as f64
    }
}

/// Restricts scoring to part of a camera's image.
#[derive(Debug, Clone, PartialEq)]
pub struct CeMask {
    pub pixels: Vec<bool>,
    pub tiles: Vec<bool>,
}

/// Per-camera `(val, comp)` for every point rendered at `level`.
pub fn view_counts(
    model: &FrModel,
    camera: &Camera,
    level: u8,
    settings: &RasterSettings,
    mask: Option<&CeMask>,
) -> Vec<(u64, u64)> {
    let out = render(model, camera, level, settings);
    let mut counts = vec![(0u64, 0u64); model.len()];
    for (pix, d) in out.dominating_points().enumerate() {
        if let Some(i) = d {
            if mask.is_none_or(|m| m.pixels[pix]) {
                counts[i].0 += 1;
            }
        }
    }
    for (t, tile) in out.tile_workloads.iter().enumerate() {
        if mask.is_none_or(|m| m.tiles[t]) {
            for &s in &tile.splats {
                counts[out.splats[s as usize].source_index].1 += 1;
            }
        }
    }
    counts
}

pub fn compute_ce(
    model: &FrModel,
    cameras: &[Camera],
    level: u8,
    settings: &RasterSettings,
) -> Vec<CeScore> {
    compute_ce_masked(model, cameras, level, settings, None)
}

/// Like [`compute_ce`] with one optional mask per camera.
pub fn compute_ce_masked(
    model: &FrModel,
    cameras: &[Camera],
    level: u8,
    settings: &RasterSettings,
    masks: Option<&[CeMask]>,
) -> Vec<CeScore> {
    let views: Vec<Vec<(u64, u64)>> = cameras
        .par_iter()
        .enumerate()
        .map(|(k, cam)| view_counts(model, cam, level, settings, masks.map(|m| &m[k])))
        .collect();
    (0..model.len())
        .map(|i| {
            let per: Vec<(u64, u64)> = views.iter().map(|v| v[i]).collect();
            CeScore::from_views(&per)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_view_ratio() {
        assert_eq!(CeScore::from_views(&[(10, 5)]).ce, 2.0);
        assert_eq!(CeScore::from_views(&[(0, 0)]).ce, 0.0);
    }

    #[test]
    fn max_over_views() {
        let s = CeScore::from_views(&[(1, 2), (4, 2), (3, 3)]);
        assert_eq!(s.ce, 2.0);
        assert_eq!((s.val, s.comp), (8, 7));
    }
}
