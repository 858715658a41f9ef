use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::model::FrModel;
use crate::raster::{project, RasterSettings, TileGrid};

/// Per-point size and tile usage, and the weighted scale of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleStats {
    /// `2 * max(scale)`, in scene units.
    pub span: Vec<f64>,
    /// Mean tiles intersected over the cameras.
    pub usage: Vec<f64>,
    /// `usage - threshold` where usage exceeds the threshold, else 0.
    pub excess: Vec<f64>,
    pub threshold: f64,
    pub ws: f64,
}

impl ScaleStats {
    pub fn from_parts(span: Vec<f64>, usage: Vec<f64>, threshold: f64) -> Self {
        let excess: Vec<f64> = usage
            .iter()
            .map(|&u| if u > threshold { u - threshold } else { 0.0 })
            .collect();
        let n = span.len().max(1) as f64;
        let ws = span.iter().zip(&excess).map(|(s, g)| s * g).sum::<f64>() / n;
        ScaleStats {
            span,
            usage,
            excess,
            threshold,
            ws,
        }
    }

    /// `dWS/dscale` with usage held fixed; only the largest axis moves the span.
    pub fn scale_gradient(&self, model: &FrModel) -> Vec<[f64; 3]> {
        let n = model.len().max(1) as f64;
        model
            .points
            .iter()
            .zip(&self.excess)
            .map(|(p, &g)| {
                let mut out = [0.0; 3];
                if g > 0.0 {
                    let k = (0..3).fold(0, |best, k| if p.scale[k] > p.scale[best] { k } else { best });
                    out[k] = 2.0 * g / n;
                }
                out
            })
            .collect()
    }
}

/// Mean number of tiles each point's footprint overlaps across `cameras`.
pub fn tile_usage(
    model: &FrModel,
    cameras: &[Camera],
    level: u8,
    settings: &RasterSettings,
) -> Vec<f64> {
    let mut usage = vec![0.0; model.len()];
    for cam in cameras {
        let grid = TileGrid::new(cam.width, cam.height, settings.tile_size);
        for s in project(model, level, cam, settings).splats {
            usage[s.source_index] += crate::raster::tiles_overlapped(&s, &grid) as f64;
        }
    }
    let n = cameras.len().max(1) as f64;
    usage.iter_mut().for_each(|u| *u /= n);
    usage
}

/// Nearest-rank percentile.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = (q * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

/// Default tile-use threshold: the 75th percentile of usage.
pub const DEFAULT_USAGE_PERCENTILE: f64 = 0.75;

pub fn weighted_scale(
    model: &FrModel,
    cameras: &[Camera],
    threshold: Option<f64>,
    settings: &RasterSettings,
) -> ScaleStats {
    let usage = tile_usage(model, cameras, 1, settings);
    let t = threshold.unwrap_or_else(|| percentile(&usage, DEFAULT_USAGE_PERCENTILE));
    let span = model.points.iter().map(|p| 2.0 * p.max_extent()).collect();
    ScaleStats::from_parts(span, usage, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_formula() {
        let s = ScaleStats::from_parts(vec![2.0, 4.0], vec![6.0, 8.0], 5.0);
        assert_eq!(s.ws, 7.0);
    }

    #[test]
    fn gate_is_strict() {
        let s = ScaleStats::from_parts(vec![2.0, 4.0], vec![5.0, 3.0], 5.0);
        assert_eq!(s.excess, vec![0.0, 0.0]);
        assert_eq!(s.ws, 0.0);
    }

    #[test]
    fn nearest_rank_percentile() {
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 0.75), 3.0);
        assert_eq!(percentile(&[], 0.75), 0.0);
    }
}
