use rayon::prelude::*;

use super::{RasterSettings, RenderOutput, SplatView, TileGrid, TileWorkload, FOOTPRINT_SIGMAS};

const MAX_MAHALANOBIS2: f64 = FOOTPRINT_SIGMAS * FOOTPRINT_SIGMAS;

#[derive(Debug, Clone, Copy)]
pub(crate) struct PixelResult {
    pub color: [f64; 3],
    pub transmittance: f64,
    pub dominator: Option<u32>,
}

/// One accepted contribution while blending a pixel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Contribution {
    pub splat: u32,
    /// Position of the splat in the tile list.
    pub slot: usize,
    pub alpha: f64,
    /// Transmittance in front of this splat.
    pub t_before: f64,
    /// Unclamped Gaussian falloff `exp(-d^T Q d / 2)`.
    pub falloff: f64,
    /// True when `alpha` was capped at `alpha_max`.
    pub clamped: bool,
}

/// Front-to-back blending of one pixel over a depth-sorted splat list.
#[inline]
pub(crate) fn blend_pixel(
    list: &[u32],
    splats: &[SplatView],
    px: f64,
    py: f64,
    settings: &RasterSettings,
    mut visit: impl FnMut(Contribution),
) -> PixelResult {
    let mut color = [0.0; 3];
    let mut t = 1.0;
    let mut best = 0.0;
    let mut dominator = None;
    for (slot, &idx) in list.iter().enumerate() {
        let s = &splats[idx as usize];
        let m2 = s.mahalanobis2(px, py);
        if !(m2 <= MAX_MAHALANOBIS2) {
            continue;
        }
        let falloff = (-0.5 * m2).exp();
        let raw = s.base_alpha * falloff;
        let clamped = raw > settings.alpha_max;
        let alpha = if clamped { settings.alpha_max } else { raw };
        if alpha < settings.alpha_min {
            continue;
        }
        let weight = t * alpha;
        for c in 0..3 {
            color[c] += weight * s.color[c];
        }
        if weight > best {
            best = weight;
            dominator = Some(idx);
        }
        visit(Contribution {
            splat: idx,
            slot,
            alpha,
            t_before: t,
            falloff,
            clamped,
        });
        t *= 1.0 - alpha;
        if t < settings.t_stop {
            break;
        }
    }
    for c in 0..3 {
        color[c] += t * settings.background[c];
    }
    PixelResult {
        color,
        transmittance: t,
        dominator,
    }
}

pub(crate) struct FrameBuffers {
    pub image: Vec<[f64; 3]>,
    pub transmittance: Vec<f64>,
    pub dominator: Vec<Option<u32>>,
}

/// Rasterizes the tiles accepted by `include`; other pixels keep the
/// background with unit transmittance.
pub(crate) fn rasterize_buffers(
    tiles: &[TileWorkload],
    splats: &[SplatView],
    grid: &TileGrid,
    settings: &RasterSettings,
    include: impl Fn(usize) -> bool + Sync,
) -> FrameBuffers {
    let n = grid.width as usize * grid.height as usize;
    let mut buffers = FrameBuffers {
        image: vec![settings.background; n],
        transmittance: vec![1.0; n],
        dominator: vec![None; n],
    };
    let per_tile: Vec<Vec<(usize, PixelResult)>> = tiles
        .par_iter()
        .enumerate()
        .map(|(ti, tile)| {
            if !include(ti) {
                return Vec::new();
            }
            let (x0, x1, y0, y1) = grid.tile_pixels(tile.tile.0, tile.tile.1);
            let mut out = Vec::with_capacity(((x1 - x0) * (y1 - y0)) as usize);
            for py in y0..y1 {
                for px in x0..x1 {
                    let r = blend_pixel(
                        &tile.splats,
                        splats,
                        px as f64 + 0.5,
                        py as f64 + 0.5,
                        settings,
                        |_| {},
                    );
                    out.push((py as usize * grid.width as usize + px as usize, r));
                }
            }
            out
        })
        .collect();
    for (pix, r) in per_tile.into_iter().flatten() {
        buffers.image[pix] = r.color;
        buffers.transmittance[pix] = r.transmittance;
        buffers.dominator[pix] = r.dominator;
    }
    buffers
}

/// Blends every tile of a binned frame.
pub fn rasterize(
    tiles: Vec<TileWorkload>,
    splats: Vec<SplatView>,
    grid: TileGrid,
    settings: &RasterSettings,
) -> RenderOutput {
    let b = rasterize_buffers(&tiles, &splats, &grid, settings, |_| true);
    RenderOutput {
        grid,
        level: 1,
        image: b.image,
        dominator: b.dominator,
        transmittance: b.transmittance,
        tile_workloads: tiles,
        splats,
        culled: 0,
    }
}

/// Image and transmittance for a subset of tiles, leaving other pixels at
/// the background.
pub fn rasterize_tiles(
    tiles: &[TileWorkload],
    splats: &[SplatView],
    grid: &TileGrid,
    settings: &RasterSettings,
    include: impl Fn(usize) -> bool + Sync,
) -> (Vec<[f64; 3]>, Vec<f64>) {
    let b = rasterize_buffers(tiles, splats, grid, settings, include);
    (b.image, b.transmittance)
}
