//! Gaze-dependent multi-level rendering.
//!
//! The image is split into concentric eccentricity regions. Region `k` is
//! drawn with the points whose quality bound is at least `k`, using their
//! level-`k` opacity and DC colour. Pixels near a region boundary are drawn
//! at both neighbouring levels and mixed.

mod derive;
mod render;

use serde::{Deserialize, Serialize};

pub use derive::{derive_fr_model, derive_level, region_quality, DeriveReport, LevelQuality};
pub use render::{render_foveated, FoveatedRender, FoveationStats, TilePass};

use crate::camera::DisplayGeometry;
use crate::error::{Error, Result};
use crate::prune::CeMask;
use crate::raster::TileGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoveationConfig {
    pub level_count: u8,
    /// Eccentricity in degrees at which each level's region starts.
    pub boundaries: Vec<f64>,
    /// Width in degrees of the blend band centred on each boundary.
    pub band: f64,
}

impl Default for FoveationConfig {
    fn default() -> Self {
        FoveationConfig {
            level_count: 4,
            boundaries: vec![0.0, 18.0, 27.0, 33.0],
            band: 2.0,
        }
    }
}

impl FoveationConfig {
    pub fn validate(&self) -> Result<()> {
        let e = &self.boundaries;
        if self.level_count < 1 || e.len() != self.level_count as usize {
            return Err(Error::Config(format!(
                "need one boundary per level: {} levels, {} boundaries",
                self.level_count,
                e.len()
            )));
        }
        if e[0] != 0.0 {
            return Err(Error::Config("the first region must start at 0 degrees".into()));
        }
        if e.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("boundaries must be strictly increasing".into()));
        }
        if !(self.band >= 0.0) {
            return Err(Error::Config(format!("band must be >= 0, got {}", self.band)));
        }
        let min_gap = e.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if self.band > min_gap {
            return Err(Error::Config(format!(
                "band {} is wider than the narrowest region {min_gap}",
                self.band
            )));
        }
        Ok(())
    }

    /// Level whose region contains eccentricity `ecc`.
    pub fn level_at(&self, ecc: f64) -> u8 {
        self.boundaries.iter().filter(|&&b| ecc >= b).count().max(1) as u8
    }

    /// Blend between levels `lower` and `lower + 1` with the weight of the
    /// upper level, if `ecc` lies inside a band.
    pub fn blend_at(&self, ecc: f64) -> Option<Blend> {
        if self.band <= 0.0 {
            return None;
        }
        let half = self.band / 2.0;
        for (k, &b) in self.boundaries.iter().enumerate().skip(1) {
            if (ecc - b).abs() < half {
                let t = ((ecc - (b - half)) / self.band).clamp(0.0, 1.0);
                return Some(Blend {
                    lower: k as u8,
                    weight: t * t * (3.0 - 2.0 * t),
                });
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blend {
    pub lower: u8,
    /// Weight of level `lower + 1`.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoveationMap {
    pub grid: TileGrid,
    pub level_count: u8,
    pub display: DisplayGeometry,
    /// Region level of each pixel, row-major.
    pub pixel_level: Vec<u8>,
    pub blend: Vec<Option<Blend>>,
    /// Level of each tile centre.
    pub tile_level: Vec<u8>,
    /// Levels rendered in each tile, ascending.
    pub tile_levels: Vec<Vec<u8>>,
}

pub fn build_foveation_map(
    config: &FoveationConfig,
    display: &DisplayGeometry,
    tile_size: u32,
) -> Result<FoveationMap> {
    config.validate()?;
    display.validate()?;
    let grid = TileGrid::new(display.width, display.height, tile_size);
    let n = grid.width as usize * grid.height as usize;
    let mut pixel_level = Vec::with_capacity(n);
    let mut blend = Vec::with_capacity(n);
    for py in 0..grid.height {
        for px in 0..grid.width {
            let e = display.pixel_eccentricity(px, py);
            pixel_level.push(config.level_at(e));
            blend.push(config.blend_at(e));
        }
    }
    let mut tile_level = Vec::with_capacity(grid.tile_count());
    let mut tile_levels = Vec::with_capacity(grid.tile_count());
    for ty in 0..grid.tiles_y {
        for tx in 0..grid.tiles_x {
            let (cx, cy) = grid.tile_center(tx, ty);
            tile_level.push(config.level_at(display.eccentricity_of(cx, cy)));
            let (x0, x1, y0, y1) = grid.tile_pixels(tx, ty);
            let mut used = 0u32;
            for py in y0..y1 {
                for px in x0..x1 {
                    let i = py as usize * grid.width as usize + px as usize;
                    match blend[i] {
                        Some(b) => used |= 0b11 << (b.lower - 1),
                        None => used |= 1 << (pixel_level[i] - 1),
                    }
                }
            }
            tile_levels.push(
                (1..=config.level_count)
                    .filter(|l| used & (1 << (l - 1)) != 0)
                    .collect(),
            );
        }
    }
    Ok(FoveationMap {
        grid,
        level_count: config.level_count,
        display: *display,
        pixel_level,
        blend,
        tile_level,
        tile_levels,
    })
}

impl FoveationMap {
    pub fn pixel_count(&self) -> usize {
        self.pixel_level.len()
    }

    /// Share of pixels in each region, index `level - 1`.
    pub fn region_fractions(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.level_count as usize];
        for &l in &self.pixel_level {
            counts[l as usize - 1] += 1;
        }
        let n = self.pixel_count().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }

    /// Share of pixels drawn at two levels.
    pub fn blended_fraction(&self) -> f64 {
        self.blend.iter().filter(|b| b.is_some()).count() as f64 / self.pixel_count().max(1) as f64
    }

    /// Levels a pixel is drawn at: one, or two inside a band.
    pub fn pixel_levels(&self, i: usize) -> (u8, Option<(u8, f64)>) {
        match self.blend[i] {
            Some(b) => (b.lower, Some((b.lower + 1, b.weight))),
            None => (self.pixel_level[i], None),
        }
    }

    pub fn region_mask(&self, level: u8) -> Vec<bool> {
        self.pixel_level.iter().map(|&l| l == level).collect()
    }

    /// Pixels of region `level` and every region beyond it.
    pub fn periphery_mask(&self, level: u8) -> Vec<bool> {
        self.pixel_level.iter().map(|&l| l >= level).collect()
    }

    /// Scores only `pixels`, and only the tiles containing at least one of them.
    pub fn ce_mask(&self, pixels: Vec<bool>) -> CeMask {
        let g = &self.grid;
        let mut tiles = vec![false; g.tile_count()];
        for (i, _) in pixels.iter().enumerate().filter(|(_, &p)| p) {
            let (x, y) = (i as u32 % g.width, i as u32 / g.width);
            tiles[g.tile_index(x / g.tile_size, y / g.tile_size)] = true;
        }
        CeMask { pixels, tiles }
    }
}
