mod common;

use common::*;
use fovsplat::model::{FrModel, LevelOverride, ScenePoint};
use fovsplat::raster::{
    bin_and_sort, project, render, tiles_overlapped, workload_stats, RasterSettings, TileGrid,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn tiled_render_matches_global_sort(
        seed in any::<u64>(),
        count in 1usize..=100,
        width in 8u32..=64,
        height in 8u32..=64,
        tile in prop::sample::select(vec![4u32, 8, 16]),
        degree in 0u8..=3,
    ) {
        let model = random_scene(&mut rng(seed), count, degree);
        let cam = front_camera(width, height);
        let settings = RasterSettings { t_stop: 0.0, tile_size: tile, ..Default::default() };
        let out = render(&model, &cam, 1, &settings);
        let oracle = brute_force_render(&model, &cam, 1, &settings);
        prop_assert!(max_abs_diff(&out.image, &oracle) <= 1e-5);
    }

    #[test]
    fn tile_lists_match_overlap_counts(seed in any::<u64>(), count in 1usize..60) {
        let model = random_scene(&mut rng(seed), count, 0);
        let cam = front_camera(48, 40);
        let settings = RasterSettings { tile_size: 8, ..Default::default() };
        let out = render(&model, &cam, 1, &settings);
        let per_splat: usize = out.splats.iter().map(|s| tiles_overlapped(s, &out.grid)).sum();
        prop_assert_eq!(out.total_intersections(), per_splat);
        let stats = workload_stats(&out.tile_workloads);
        prop_assert_eq!(stats.total as usize, per_splat);
    }
}

fn disc(x: f64, y: f64, quality_bound: u8) -> ScenePoint {
    let mut p = ScenePoint::with_color([x, y, 0.0], [0.2, 0.2, 0.2], 0.8, [0.9, 0.2, 0.1]);
    for _ in 1..quality_bound {
        p.promote(LevelOverride { opacity: 0.8, sh_dc: p.sh[0] });
    }
    p
}

#[test]
fn level_render_ignores_points_below_the_level() {
    let model = FrModel::new(vec![disc(-0.5, 0.0, 1), disc(0.5, 0.0, 2)], 2, 0).unwrap();
    let cam = front_camera(64, 48);
    let settings = RasterSettings::default();
    let at2 = render(&model, &cam, 2, &settings);
    assert_eq!(at2.splats.len(), 1);
    assert_eq!(at2.splats[0].source_index, 1);
    let only = FrModel::new(vec![disc(0.5, 0.0, 1)], 1, 0).unwrap();
    assert_eq!(at2.image, render(&only, &cam, 1, &settings).image);
}

#[test]
fn single_level_render_is_the_stage_composition() {
    let model = random_scene(&mut rng(4), 30, 1);
    let cam = front_camera(40, 32);
    let settings = RasterSettings::default();
    let out = render(&model, &cam, 1, &settings);
    let proj = project(&model, 1, &cam, &settings);
    let grid = TileGrid::new(40, 32, settings.tile_size);
    let tiles = bin_and_sort(&proj.splats, &grid);
    let composed = fovsplat::raster::rasterize(tiles, proj.splats, grid, &settings);
    assert_eq!(out.image, composed.image);
}

#[test]
fn workload_stats_edge_cases() {
    let cam = front_camera(32, 32);
    let settings = RasterSettings { tile_size: 16, ..Default::default() };
    let empty = FrModel::empty(0);
    let stats = workload_stats(&render(&empty, &cam, 1, &settings).tile_workloads);
    assert_eq!((stats.total, stats.max), (0, 0));
    assert_eq!(stats.mean, 0.0);

    // One small splat at the centre of each 16x16 tile.
    let points: Vec<ScenePoint> = [(8.0, 8.0), (24.0, 8.0), (8.0, 24.0), (24.0, 24.0)]
        .iter()
        .map(|&(px, py)| {
            let (o, d) = cam.pixel_ray(px, py);
            let t = -o.z / d.z;
            ScenePoint::with_color(
                [o.x + t * d.x, o.y + t * d.y, 0.0],
                [0.01; 3],
                0.9,
                [0.5; 3],
            )
        })
        .collect();
    let model = FrModel::new(points, 1, 0).unwrap();
    let stats = workload_stats(&render(&model, &cam, 1, &settings).tile_workloads);
    assert_eq!(stats.mean, 1.0);
    assert_eq!(stats.max, 1);
}
