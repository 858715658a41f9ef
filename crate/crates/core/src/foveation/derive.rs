use serde::{Deserialize, Serialize};

use super::{render_foveated, FoveationMap};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::hvs::{hvsq, HvsConfig, PoolingMap};
use crate::loss::QualityLoss;
use crate::model::{FrModel, LevelOverride};
use crate::prune::{mean_quality, prune_loop, ParamGroups, PruneScope, RoundReport, TrainConfig};
use crate::raster::{render, RasterSettings};

/// Extra reach of the feature filters beyond a pooling disk, in pixels.
const FEATURE_MARGIN: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeriveReport {
    /// The level that was populated.
    pub level: u8,
    pub source_points: usize,
    pub points: usize,
    /// Region metric of the level-1 render, averaged over cameras.
    pub baseline: f64,
    pub target: f64,
    pub achieved: f64,
    pub reached_target: bool,
    pub rounds: Vec<RoundReport>,
}

fn mean_region_hvsq(
    images: impl Iterator<Item = Vec<[f64; 3]>>,
    references: &[Vec<[f64; 3]>],
    pooling: &PoolingMap,
    hvs: &HvsConfig,
    region: &[bool],
) -> Result<f64> {
    let mut sum = 0.0;
    for (img, r) in images.zip(references) {
        sum += hvsq(r, &img, pooling, hvs.bank, Some(region))?;
    }
    Ok(sum / references.len().max(1) as f64)
}

/// Populates level `level + 1` from the points of `level`.
///
/// The level-`level` points are pruned and fine-tuned against `references`
/// using the metric over region `level + 1` and every region beyond it,
/// since all of them draw from the new level. Only opacity and the DC
/// colour are trained, without scale decay; the trained values become the
/// survivors' overrides for the new level. Shared parameters of the input
/// are never modified.
#[allow(clippy::too_many_arguments)]
pub fn derive_level(
    model: &FrModel,
    level: u8,
    cameras: &[Camera],
    references: &[Vec<[f64; 3]>],
    map: &FoveationMap,
    hvs: &HvsConfig,
    train: &TrainConfig,
    tau: f64,
    settings: &RasterSettings,
    mut on_round: impl FnMut(&RoundReport),
) -> Result<(FrModel, DeriveReport)> {
    if level < 1 || level >= map.level_count {
        return Err(Error::Config(format!(
            "cannot derive level {} of {}",
            level + 1,
            map.level_count
        )));
    }
    if !(tau >= 0.0) {
        return Err(Error::Config(format!("tau must be >= 0, got {tau}")));
    }
    if model.points.iter().any(|p| p.quality_bound > level) {
        return Err(Error::InvalidModel(format!("level {} is already populated", level + 1)));
    }
    let source = model.level_indices(level);
    let points = source
        .iter()
        .map(|&i| {
            let mut p = model.points[i].clone();
            let (opacity, dc) = p.appearance_at(level);
            p.opacity = opacity;
            p.sh[0] = dc;
            p.quality_bound = 1;
            p.overrides.clear();
            p
        })
        .collect();
    let working = FrModel::new(points, 1, model.sh_degree)?;

    let pooling = PoolingMap::from_config(&map.display, hvs)?;
    let region = map.periphery_mask(level + 1);
    let influence = pooling.influence(&region, FEATURE_MARGIN);
    let baseline = mean_region_hvsq(
        cameras.iter().map(|c| render(model, c, 1, settings).image),
        references,
        &pooling,
        hvs,
        &region,
    )?;
    let target = (1.0 + tau) * baseline;
    let loss = QualityLoss::Hvsq {
        map: pooling,
        bank: hvs.bank,
        region: Some(region),
    };
    let config = TrainConfig {
        gamma: 0.0,
        groups: ParamGroups::appearance_dc(),
        quality_threshold: Some(target),
        ..train.clone()
    };
    let masks = vec![map.ce_mask(influence); cameras.len()];
    let outcome = prune_loop(
        &working,
        cameras,
        references,
        &loss,
        &config,
        settings,
        &PruneScope {
            ce_masks: Some(&masks),
        },
        &mut on_round,
    )?;
    let achieved = mean_quality(&outcome.model, cameras, references, &loss, settings)?;

    let mut derived = model.clone();
    derived.level_count = derived.level_count.max(level + 1);
    for (p, &k) in outcome.model.points.iter().zip(&outcome.kept) {
        derived.points[source[k]].promote(LevelOverride {
            opacity: p.opacity,
            sh_dc: p.sh[0],
        });
    }
    derived.validate()?;
    let report = DeriveReport {
        level: level + 1,
        source_points: source.len(),
        points: outcome.kept.len(),
        baseline,
        target,
        achieved,
        reached_target: outcome.reached_threshold,
        rounds: outcome.reports,
    };
    Ok((derived, report))
}

/// Derives levels 2 through the map's level count from a level-1 model.
#[allow(clippy::too_many_arguments)]
pub fn derive_fr_model(
    l1: &FrModel,
    cameras: &[Camera],
    references: &[Vec<[f64; 3]>],
    map: &FoveationMap,
    hvs: &HvsConfig,
    train: &TrainConfig,
    tau: f64,
    settings: &RasterSettings,
    mut on_round: impl FnMut(u8, &RoundReport),
) -> Result<(FrModel, Vec<DeriveReport>)> {
    let mut model = l1.clone();
    model.level_count = map.level_count;
    let mut reports = Vec::new();
    for level in 1..map.level_count {
        let (next, report) = derive_level(
            &model,
            level,
            cameras,
            references,
            map,
            hvs,
            train,
            tau,
            settings,
            |r| on_round(level + 1, r),
        )?;
        model = next;
        reports.push(report);
    }
    Ok((model, reports))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelQuality {
    pub level: u8,
    /// Region metric of the full render at this level.
    pub level_hvsq: f64,
    /// Region metric of the full level-1 render.
    pub l1_hvsq: f64,
    /// Region metric of the foveated render.
    pub foveated_hvsq: f64,
    pub level_intersections: usize,
}

/// Per-region metric against `references`, averaged over cameras.
pub fn region_quality(
    model: &FrModel,
    cameras: &[Camera],
    references: &[Vec<[f64; 3]>],
    map: &FoveationMap,
    hvs: &HvsConfig,
    settings: &RasterSettings,
) -> Result<Vec<LevelQuality>> {
    let pooling = PoolingMap::from_config(&map.display, hvs)?;
    let l1: Vec<_> = cameras.iter().map(|c| render(model, c, 1, settings).image).collect();
    let mut fov_images = Vec::new();
    let mut level_intersections = vec![0usize; map.level_count as usize];
    for c in cameras {
        let f = render_foveated(model, c, map, settings)?;
        for (a, b) in level_intersections.iter_mut().zip(&f.stats.level_intersections) {
            *a += b;
        }
        fov_images.push(f.image);
    }
    (1..=map.level_count)
        .map(|level| {
            let region = map.region_mask(level);
            Ok(LevelQuality {
                level,
                level_hvsq: mean_region_hvsq(
                    cameras.iter().map(|c| render(model, c, level, settings).image),
                    references,
                    &pooling,
                    hvs,
                    &region,
                )?,
                l1_hvsq: mean_region_hvsq(l1.iter().cloned(), references, &pooling, hvs, &region)?,
                foveated_hvsq: mean_region_hvsq(
                    fov_images.iter().cloned(),
                    references,
                    &pooling,
                    hvs,
                    &region,
                )?,
                level_intersections: level_intersections[level as usize - 1],
            })
        })
        .collect()
}
