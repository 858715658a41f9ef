//! Scenes shared by the pruning, foveation and acceptance tests.

use fovsplat::camera::{orbit_ring, Camera, DisplayGeometry};
use fovsplat::foveation::{build_foveation_map, FoveationConfig, FoveationMap};
use fovsplat::loss::QualityLoss;
use fovsplat::model::FrModel;
use fovsplat::prune::{finetune, weighted_scale, LearningRates, TrainConfig};
use fovsplat::raster::RasterSettings;
use fovsplat::synthetic::{
    canonical_cameras, make_synthetic_scene, plane_ground_truth, Layout, SceneSpec,
};

pub struct Fixture {
    pub model: FrModel,
    pub cameras: Vec<Camera>,
    pub targets: Vec<Vec<[f64; 3]>>,
    pub settings: RasterSettings,
}

pub fn ground_truth(cameras: &[Camera]) -> Vec<Vec<[f64; 3]>> {
    cameras.iter().map(|c| plane_ground_truth(c, [0.0; 3])).collect()
}

/// Textured plane where every seventh splat is four times too wide.
pub fn oversized() -> Fixture {
    let mut model = make_synthetic_scene(&SceneSpec::new(Layout::TexturedPlane, 300, 1)).unwrap();
    for p in model.points.iter_mut().step_by(7) {
        p.scale[0] *= 4.0;
        p.scale[1] *= 4.0;
    }
    let cameras = canonical_cameras(6, 96, 64);
    Fixture {
        model,
        targets: ground_truth(&cameras),
        cameras,
        settings: RasterSettings { tile_size: 8, ..Default::default() },
    }
}

pub const OVERSIZED_THRESHOLD: f64 = 0.008;

/// Fine-tunes the oversized fixture to [`OVERSIZED_THRESHOLD`] with the
/// given scale-decay weight. Returns the model, the fixed tile-use
/// threshold and the number of steps.
pub fn decay_run(f: &Fixture, gamma: f64) -> (FrModel, f64, usize) {
    let t = weighted_scale(&f.model, &f.cameras, None, &f.settings).threshold;
    let config = TrainConfig {
        gamma,
        quality_threshold: Some(OVERSIZED_THRESHOLD),
        iteration_budget: 300,
        tile_threshold: Some(t),
        ..Default::default()
    };
    let mut model = f.model.clone();
    let report = finetune(&mut model, &f.cameras, &f.targets, &QualityLoss::L1, &config, &f.settings)
        .unwrap();
    assert!(report.reached_threshold, "gamma {gamma}: {report:?}");
    (model, t, report.steps)
}

/// Textured plane of `n` points fitted to ground truth under MSE.
pub fn fitted_plane(
    n: usize,
    footprint: f64,
    cameras: Vec<Camera>,
    settings: RasterSettings,
    mse_threshold: f64,
    budget: usize,
) -> Fixture {
    let spec = SceneSpec { footprint, ..SceneSpec::new(Layout::TexturedPlane, n, 1) };
    let mut model = make_synthetic_scene(&spec).unwrap();
    let targets = ground_truth(&cameras);
    let config = TrainConfig {
        quality_threshold: Some(mse_threshold),
        iteration_budget: budget,
        ..Default::default()
    };
    finetune(&mut model, &cameras, &targets, &QualityLoss::Mse, &config, &settings).unwrap();
    Fixture { model, cameras, targets, settings }
}

/// Inputs for deriving a four-level model from a redundant plane.
pub struct FrFixture {
    pub l1: Fixture,
    pub map: FoveationMap,
    pub train: TrainConfig,
    pub tau: f64,
}

pub const FR_WIDTH: u32 = 256;
pub const FR_HEIGHT: u32 = 192;

pub fn fr_fixture() -> FrFixture {
    let settings = RasterSettings { tile_size: 8, ..Default::default() };
    let cameras = orbit_ring(4, 70.0, 1.6, 60.0, FR_WIDTH, FR_HEIGHT, 0.0).unwrap();
    let l1 = fitted_plane(2000, 2.0, cameras, settings, 10f64.powf(-3.5), 300);
    let display = DisplayGeometry::centered(FR_WIDTH, FR_HEIGHT, 3.2).unwrap();
    let map = build_foveation_map(&FoveationConfig::default(), &display, settings.tile_size).unwrap();
    let lr = LearningRates { sh: LearningRates::default().sh * 10.0, ..Default::default() };
    let train = TrainConfig {
        lr,
        iteration_budget: 80,
        prune_fraction: 0.05,
        ..Default::default()
    };
    FrFixture { l1, map, train, tau: 0.1 }
}
