//! Efficiency-aware pruning.
//!
//! Points are ranked by how many pixels they dominate per tile they
//! touch. The lowest-ranked ones are removed in steps, and the survivors are
//! fine-tuned with an optional penalty on large, widely used footprints.

mod ce;
mod scale;
mod train;

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use ce::{compute_ce, compute_ce_masked, view_counts, CeMask, CeScore};
pub use scale::{percentile, tile_usage, weighted_scale, ScaleStats, DEFAULT_USAGE_PERCENTILE};
pub use train::{
    finetune, mean_quality, Adam, FinetuneReport, LearningRates, ParamGroups, TrainConfig,
};

use crate::camera::Camera;
use crate::error::Result;
use crate::loss::QualityLoss;
use crate::model::FrModel;
use crate::raster::{render, RasterSettings};

/// Removal order, first entry removed first: lowest CE, then larger Comp,
/// then higher index.
pub fn ce_order(scores: &[CeScore]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .ce
            .partial_cmp(&scores[b].ce)
            .unwrap_or(Ordering::Equal)
            .then(scores[b].comp.cmp(&scores[a].comp))
            .then(b.cmp(&a))
    });
    order
}

/// How points are ranked for removal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneCriterion {
    /// Lowest pixels-dominated per tile first.
    Ce,
    /// Fewest pixels dominated first, ignoring cost.
    ValOnly,
    /// Uniformly random, seeded.
    Random(u64),
}

pub fn removal_order(criterion: PruneCriterion, scores: &[CeScore]) -> Vec<usize> {
    match criterion {
        PruneCriterion::Ce => ce_order(scores),
        PruneCriterion::ValOnly => {
            let as_val: Vec<CeScore> = scores
                .iter()
                .map(|s| CeScore {
                    ce: s.val as f64,
                    ..*s
                })
                .collect();
            ce_order(&as_val)
        }
        PruneCriterion::Random(seed) => {
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            order
        }
    }
}

/// Removes the first `count` points of `order`, keeping the rest in their
/// original order. Also returns the kept indices.
pub fn remove_points(model: &FrModel, order: &[usize], count: usize) -> (FrModel, Vec<usize>) {
    let mut drop = vec![false; model.len()];
    for &i in order.iter().take(count) {
        drop[i] = true;
    }
    let keep: Vec<usize> = (0..model.len()).filter(|&i| !drop[i]).collect();
    (model.retain_indices(&keep), keep)
}

/// Removes `floor(fraction * N)` lowest-CE points. Returns `None` (and
/// logs a warning) when that count is zero.
pub fn prune_step(model: &FrModel, scores: &[CeScore], fraction: f64) -> Option<(FrModel, Vec<usize>)> {
    let count = (fraction * model.len() as f64).floor() as usize;
    if count == 0 {
        log::warn!(
            "prune fraction {fraction} of {} points removes nothing",
            model.len()
        );
        return None;
    }
    Some(remove_points(model, &ce_order(scores), count))
}

/// Total tile-splat intersections over `cameras` at `level`.
pub fn total_intersections(
    model: &FrModel,
    cameras: &[Camera],
    level: u8,
    settings: &RasterSettings,
) -> usize {
    cameras
        .iter()
        .map(|c| render(model, c, level, settings).total_intersections())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub points: usize,
    pub intersections: usize,
    pub quality: f64,
    pub ws: f64,
    pub prune_steps: usize,
    pub finetune_steps: usize,
    pub reached_threshold: bool,
    /// Set on the final report when the loop stopped early.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub model: FrModel,
    /// Index in the input model of every returned point.
    pub kept: Vec<usize>,
    pub reports: Vec<RoundReport>,
    /// True if the returned model meets the quality threshold.
    pub reached_threshold: bool,
}

/// Optional restrictions used when pruning one level of a foveated model.
#[derive(Debug, Clone, Default)]
pub struct PruneScope<'a> {
    pub ce_masks: Option<&'a [CeMask]>,
}

/// Alternates pruning while the quality loss stays within the threshold
/// with fine-tuning back under it, for at most `max_rounds` rounds.
///
/// The returned model is the one with the fewest intersections among those
/// that met the threshold (the input if none did). A round that ends with
/// more intersections than the previous one is discarded and ends the loop.
pub fn prune_loop(
    dense: &FrModel,
    cameras: &[Camera],
    targets: &[Vec<[f64; 3]>],
    loss: &QualityLoss,
    config: &TrainConfig,
    settings: &RasterSettings,
    scope: &PruneScope,
    mut on_round: impl FnMut(&RoundReport),
) -> Result<PruneOutcome> {
    config.validate()?;
    let threshold = config.threshold();
    let mut model = dense.clone();
    let mut ids: Vec<usize> = (0..dense.len()).collect();
    let mut quality = mean_quality(&model, cameras, targets, loss, settings)?;
    let mut best: Option<(FrModel, Vec<usize>, usize)> = None;
    if quality <= threshold {
        let n = total_intersections(&model, cameras, 1, settings);
        best = Some((model.clone(), ids.clone(), n));
    }
    let mut reports: Vec<RoundReport> = Vec::new();
    let mut previous = total_intersections(&model, cameras, 1, settings);

    for round in 0..config.max_rounds {
        let round_start = (model.clone(), ids.clone());
        let mut prune_steps = 0;
        let mut exhausted = false;
        while quality <= threshold && prune_steps < config.max_prune_repeats {
            let scores = compute_ce_masked(&model, cameras, 1, settings, scope.ce_masks);
            match prune_step(&model, &scores, config.prune_fraction) {
                Some((m, keep)) => {
                    ids = keep.iter().map(|&k| ids[k]).collect();
                    model = m;
                }
                None => {
                    exhausted = true;
                    break;
                }
            }
            prune_steps += 1;
            quality = mean_quality(&model, cameras, targets, loss, settings)?;
        }
        let ft = finetune(&mut model, cameras, targets, loss, config, settings)?;
        quality = ft.final_quality;
        let intersections = total_intersections(&model, cameras, 1, settings);
        let mut report = RoundReport {
            round,
            points: model.len(),
            intersections,
            quality,
            ws: if config.gamma > 0.0 {
                ft.final_ws
            } else {
                weighted_scale(&model, cameras, config.tile_threshold, settings).ws
            },
            prune_steps,
            finetune_steps: ft.steps,
            reached_threshold: ft.reached_threshold,
            stop_reason: None,
        };
        if intersections > previous {
            report.stop_reason = Some("intersections increased; round discarded".into());
            on_round(&report);
            reports.push(report);
            (model, ids) = round_start;
            break;
        }
        previous = intersections;
        if ft.reached_threshold && best.as_ref().is_none_or(|b| intersections <= b.2) {
            best = Some((model.clone(), ids.clone(), intersections));
        }
        if !ft.reached_threshold {
            report.stop_reason = Some("quality threshold unreachable within budget".into());
        } else if exhausted {
            report.stop_reason = Some("prune fraction removes no further points".into());
        }
        let stop = report.stop_reason.is_some();
        on_round(&report);
        reports.push(report);
        if stop {
            break;
        }
    }
    let reached = best.is_some();
    let (model, kept) = match best {
        Some((m, k, _)) => (m, k),
        None => (model, ids),
    };
    Ok(PruneOutcome {
        model,
        kept,
        reports,
        reached_threshold: reached,
    })
}
