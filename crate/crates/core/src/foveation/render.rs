use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FoveationMap;
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::model::FrModel;
use crate::raster::{bin_and_sort, project, RasterSettings, SplatView, TileGrid};
use crate::raster::blend_pixel;

/// One level drawn over one tile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePass {
    pub tile: usize,
    pub level: u8,
    /// Splats that passed the filter, nearest first.
    pub splats: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoveationStats {
    /// Intersections drawn at each level, index `level - 1`.
    pub level_intersections: Vec<usize>,
    pub total_intersections: usize,
    pub region_fractions: Vec<f64>,
    pub double_rendered_fraction: f64,
    /// Levels with at least one pass.
    pub active_levels: usize,
}

#[derive(Debug, Clone)]
pub struct FoveatedRender {
    pub grid: TileGrid,
    pub image: Vec<[f64; 3]>,
    pub passes: Vec<TilePass>,
    /// Projected splats at level 1; passes index into this list.
    pub splats: Vec<SplatView>,
    pub stats: FoveationStats,
}

impl FoveatedRender {
    /// Intersections per tile summed over that tile's passes.
    pub fn tile_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.grid.tile_count()];
        for p in &self.passes {
            counts[p.tile] += p.splats.len() as u32;
        }
        counts
    }
}

/// Renders every region at its level, projecting and sorting once.
///
/// A splat takes part in a level-`t` pass iff its quality bound `m >= t`.
pub fn render_foveated(
    model: &FrModel,
    camera: &Camera,
    map: &FoveationMap,
    settings: &RasterSettings,
) -> Result<FoveatedRender> {
    if (camera.width, camera.height) != (map.grid.width, map.grid.height)
        || map.grid.tile_size != settings.tile_size.max(1)
    {
        return Err(Error::Config(format!(
            "foveation map {}x{} (tile {}) does not match camera {}x{} (tile {})",
            map.grid.width,
            map.grid.height,
            map.grid.tile_size,
            camera.width,
            camera.height,
            settings.tile_size
        )));
    }
    if model.level_count < map.level_count {
        return Err(Error::InvalidModel(format!(
            "model has {} levels, foveation needs {}",
            model.level_count, map.level_count
        )));
    }
    let grid = map.grid;
    let projection = project(model, 1, camera, settings);
    let splats = projection.splats;
    let tiles = bin_and_sort(&splats, &grid);
    let per_level: Vec<Vec<SplatView>> = (1..=map.level_count)
        .map(|l| {
            if l == 1 {
                splats.clone()
            } else {
                splats
                    .iter()
                    .map(|s| s.at_level(&model.points[s.source_index], l))
                    .collect()
            }
        })
        .collect();

    let width = grid.width as usize;
    let per_tile: Vec<(Vec<TilePass>, Vec<(usize, [f64; 3])>)> = tiles
        .par_iter()
        .enumerate()
        .map(|(ti, tile)| {
            let (x0, x1, y0, y1) = grid.tile_pixels(tile.tile.0, tile.tile.1);
            let mut passes = Vec::new();
            let mut colors: Vec<Vec<[f64; 3]>> = Vec::new();
            for &level in &map.tile_levels[ti] {
                let list: Vec<u32> = tile
                    .splats
                    .iter()
                    .copied()
                    .filter(|&s| splats[s as usize].quality_bound >= level)
                    .collect();
                let view = &per_level[level as usize - 1];
                let mut c = Vec::with_capacity(((x1 - x0) * (y1 - y0)) as usize);
                for py in y0..y1 {
                    for px in x0..x1 {
                        let i = py as usize * width + px as usize;
                        let (a, b) = map.pixel_levels(i);
                        let needed = a == level || b.is_some_and(|(l, _)| l == level);
                        c.push(if needed {
                            blend_pixel(&list, view, px as f64 + 0.5, py as f64 + 0.5, settings, |_| {})
                                .color
                        } else {
                            [0.0; 3]
                        });
                    }
                }
                colors.push(c);
                passes.push(TilePass {
                    tile: ti,
                    level,
                    splats: list,
                });
            }
            let slot = |level: u8| passes.iter().position(|p| p.level == level).unwrap();
            let mut out = Vec::with_capacity(((x1 - x0) * (y1 - y0)) as usize);
            let mut k = 0;
            for py in y0..y1 {
                for px in x0..x1 {
                    let i = py as usize * width + px as usize;
                    let (a, b) = map.pixel_levels(i);
                    let ca = colors[slot(a)][k];
                    let color = match b {
                        Some((l, w)) => {
                            let cb = colors[slot(l)][k];
                            std::array::from_fn(|c| ca[c] + w * (cb[c] - ca[c]))
                        }
                        None => ca,
                    };
                    out.push((i, color));
                    k += 1;
                }
            }
            (passes, out)
        })
        .collect();

    let mut image = vec![settings.background; grid.width as usize * grid.height as usize];
    let mut passes = Vec::new();
    for (p, pixels) in per_tile {
        passes.extend(p);
        for (i, c) in pixels {
            image[i] = c;
        }
    }
    let mut level_intersections = vec![0usize; map.level_count as usize];
    for p in &passes {
        level_intersections[p.level as usize - 1] += p.splats.len();
    }
    let active_levels = (1..=map.level_count)
        .filter(|l| passes.iter().any(|p| p.level == *l))
        .count();
    let stats = FoveationStats {
        total_intersections: level_intersections.iter().sum(),
        level_intersections,
        region_fractions: map.region_fractions(),
        double_rendered_fraction: map.blended_fraction(),
        active_levels,
    };
    Ok(FoveatedRender {
        grid,
        image,
        passes,
        splats,
        stats,
    })
}
