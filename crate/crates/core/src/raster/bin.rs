use std::cmp::Ordering;

use rayon::prelude::*;

use super::{SplatView, TileGrid, TileWorkload};

/// Assigns each splat to every tile its 3-sigma box overlaps and sorts each
/// tile's list nearest first, breaking depth ties by source index.
pub fn bin_and_sort(splats: &[SplatView], grid: &TileGrid) -> Vec<TileWorkload> {
    bin_filtered(splats, grid, |_| true)
}

/// Like [`bin_and_sort`] but only fills tiles accepted by `keep_tile`
/// (indexed row-major); rejected tiles get empty lists.
pub(crate) fn bin_filtered(
    splats: &[SplatView],
    grid: &TileGrid,
    keep_tile: impl Fn(usize) -> bool + Sync,
) -> Vec<TileWorkload> {
    let mut lists: Vec<Vec<u32>> = vec![Vec::new(); grid.tile_count()];
    let ts = grid.tile_size;
    for (i, s) in splats.iter().enumerate() {
        let [x0, y0, x1, y1] = s.rect;
        for ty in (y0 / ts)..=(y1 / ts) {
            for tx in (x0 / ts)..=(x1 / ts) {
                let t = grid.tile_index(tx, ty);
                if keep_tile(t) {
                    lists[t].push(i as u32);
                }
            }
        }
    }
    lists.par_iter_mut().for_each(|list| {
        list.sort_by(|&a, &b| depth_order(&splats[a as usize], &splats[b as usize]))
    });
    lists
        .into_iter()
        .enumerate()
        .map(|(t, splats)| TileWorkload {
            tile: (t as u32 % grid.tiles_x, t as u32 / grid.tiles_x),
            splats,
        })
        .collect()
}

pub(crate) fn depth_order(a: &SplatView, b: &SplatView) -> Ordering {
    a.depth
        .partial_cmp(&b.depth)
        .unwrap_or(Ordering::Equal)
        .then(a.source_index.cmp(&b.source_index))
}

/// Number of tiles a splat's box overlaps.
pub fn tiles_overlapped(s: &SplatView, grid: &TileGrid) -> usize {
    let ts = grid.tile_size;
    let [x0, y0, x1, y1] = s.rect;
    ((x1 / ts - x0 / ts + 1) * (y1 / ts - y0 / ts + 1)) as usize
}
