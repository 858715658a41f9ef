//! Tile-based splat renderer: projection, per-tile depth sorting and
//! front-to-back alpha blending, plus the analytic backward pass.

mod backward;
mod bin;
mod blend;
mod project;
mod stats;

use serde::{Deserialize, Serialize};

pub use backward::{backward, ModelGradients, PointGrad, SplatGrad};
pub use bin::{bin_and_sort, tiles_overlapped};
pub use blend::{rasterize, rasterize_tiles};
pub(crate) use blend::blend_pixel;
pub use project::{project, project_points, Projection, SplatView};
pub use stats::{workload_stats, WorkloadStats};

use crate::camera::Camera;
use crate::model::FrModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterSettings {
    pub tile_size: u32,
    pub alpha_max: f64,
    pub alpha_min: f64,
    /// Blending stops once transmittance falls below this value. Zero disables it.
    pub t_stop: f64,
    /// Added to both diagonal entries of every projected covariance, in px².
    pub dilation: f64,
    pub background: [f64; 3],
}

impl Default for RasterSettings {
    fn default() -> Self {
        RasterSettings {
            tile_size: 16,
            alpha_max: 0.99,
            alpha_min: 1.0 / 255.0,
            t_stop: 1e-4,
            dilation: 0.3,
            background: [0.0; 3],
        }
    }
}

/// Mahalanobis radius at which every footprint is truncated (3 sigma).
pub const FOOTPRINT_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileWorkload {
    pub tile: (u32, u32),
    /// Indices into the frame's splat list, nearest first.
    pub splats: Vec<u32>,
}

impl TileWorkload {
    pub fn intersection_count(&self) -> usize {
        self.splats.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub width: u32,
    pub height: u32,
    pub tile_size: u32,
    pub tiles_x: u32,
    pub tiles_y: u32,
}

impl TileGrid {
    pub fn new(width: u32, height: u32, tile_size: u32) -> Self {
        let tile_size = tile_size.max(1);
        TileGrid {
            width,
            height,
            tile_size,
            tiles_x: width.div_ceil(tile_size),
            tiles_y: height.div_ceil(tile_size),
        }
    }

    pub fn tile_count(&self) -> usize {
        self.tiles_x as usize * self.tiles_y as usize
    }

    pub fn tile_index(&self, tx: u32, ty: u32) -> usize {
        ty as usize * self.tiles_x as usize + tx as usize
    }

    /// Pixel bounds `[x0, x1) x [y0, y1)` of a tile, clipped to the image.
    pub fn tile_pixels(&self, tx: u32, ty: u32) -> (u32, u32, u32, u32) {
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (
            x0,
            (x0 + self.tile_size).min(self.width),
            y0,
            (y0 + self.tile_size).min(self.height),
        )
    }

    pub fn tile_center(&self, tx: u32, ty: u32) -> (f64, f64) {
        let (x0, x1, y0, y1) = self.tile_pixels(tx, ty);
        ((x0 + x1) as f64 / 2.0, (y0 + y1) as f64 / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub grid: TileGrid,
    pub level: u8,
    /// Row-major RGB in `[0, 1]`.
    pub image: Vec<[f64; 3]>,
    /// Splat index (into `splats`) with the largest `T * alpha` at each pixel.
    pub dominator: Vec<Option<u32>>,
    pub transmittance: Vec<f64>,
    /// One entry per tile, row-major over the tile grid.
    pub tile_workloads: Vec<TileWorkload>,
    pub splats: Vec<SplatView>,
    pub culled: usize,
}

impl RenderOutput {
    pub fn width(&self) -> u32 {
        self.grid.width
    }

    pub fn height(&self) -> u32 {
        self.grid.height
    }

    pub fn total_intersections(&self) -> usize {
        self.tile_workloads.iter().map(|t| t.splats.len()).sum()
    }

    /// Model point index dominating each pixel.
    pub fn dominating_points(&self) -> impl Iterator<Item = Option<usize>> + '_ {
        self.dominator
            .iter()
            .map(|d| d.map(|s| self.splats[s as usize].source_index))
    }
}

/// Renders the points participating at `level` (`quality_bound >= level`).
pub fn render(
    model: &FrModel,
    camera: &Camera,
    level: u8,
    settings: &RasterSettings,
) -> RenderOutput {
    let projection = project(model, level, camera, settings);
    let grid = TileGrid::new(camera.width, camera.height, settings.tile_size);
    let tiles = bin_and_sort(&projection.splats, &grid);
    let mut out = rasterize(tiles, projection.splats, grid, settings);
    out.level = level;
    out.culled = projection.culled;
    out
}
