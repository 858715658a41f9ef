//! Gradient fine-tuning of point parameters.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scale::{weighted_scale, ScaleStats};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::loss::QualityLoss;
use crate::model::FrModel;
use crate::raster::{backward, render, ModelGradients, RasterSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    /// Multiplied by the scene extent.
    pub position: f64,
    /// On log-scale.
    pub scale: f64,
    pub rotation: f64,
    /// On logit-opacity.
    pub opacity: f64,
    /// Degree-0 coefficients; higher bands use a twentieth of this.
    pub sh: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            position: 1.6e-4,
            scale: 5e-3,
            rotation: 1e-3,
            opacity: 5e-2,
            sh: 2.5e-3,
        }
    }
}

impl LearningRates {
    pub fn scaled(&self, k: f64) -> Self {
        LearningRates {
            position: self.position * k,
            scale: self.scale * k,
            rotation: self.rotation * k,
            opacity: self.opacity * k,
            sh: self.sh * k,
        }
    }
}

/// Which parameter groups a fine-tuning run may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamGroups {
    pub position: bool,
    pub scale: bool,
    pub rotation: bool,
    pub opacity: bool,
    pub sh_dc: bool,
    pub sh_rest: bool,
}

impl Default for ParamGroups {
    fn default() -> Self {
        ParamGroups {
            position: true,
            scale: true,
            rotation: true,
            opacity: true,
            sh_dc: true,
            sh_rest: true,
        }
    }
}

impl ParamGroups {
    /// Opacity and SH-DC only.
    pub fn appearance_dc() -> Self {
        ParamGroups {
            position: false,
            scale: false,
            rotation: false,
            opacity: true,
            sh_dc: true,
            sh_rest: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the weighted-scale term.
    pub gamma: f64,
    /// Fraction of points removed per prune step.
    pub prune_fraction: f64,
    /// Fine-tuning stops once the quality loss is at or below this value.
    /// `None` means no bound.
    pub quality_threshold: Option<f64>,
    pub iteration_budget: usize,
    pub lr: LearningRates,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub groups: ParamGroups,
    /// Tile-use threshold for the weighted scale; `None` picks the 75th
    /// percentile of usage, recomputed every round.
    pub tile_threshold: Option<f64>,
    pub max_rounds: usize,
    pub max_prune_repeats: usize,
    /// Where to write the last finite model if the loss diverges.
    #[serde(skip)]
    pub dump_on_divergence: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.0,
            prune_fraction: 0.1,
            quality_threshold: None,
            iteration_budget: 200,
            lr: LearningRates::default(),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-15,
            groups: ParamGroups::default(),
            tile_threshold: None,
            max_rounds: 10,
            max_prune_repeats: 20,
            dump_on_divergence: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prune_fraction > 0.0 && self.prune_fraction < 1.0) {
            return Err(Error::Config(format!(
                "prune_fraction must be in (0, 1), got {}",
                self.prune_fraction
            )));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        self.quality_threshold.unwrap_or(f64::INFINITY)
    }
}

/// Layout of a point's parameters in the flat optimisation vector.
const POS: usize = 0;
const SCALE: usize = 3;
const ROT: usize = 6;
const OPACITY: usize = 10;
const SH: usize = 11;

fn stride(model: &FrModel) -> usize {
    SH + 3 * model.points.first().map_or(1, |p| p.sh.len())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn pack(model: &FrModel) -> Vec<f64> {
    let k = stride(model);
    let mut v = vec![0.0; k * model.len()];
    for (i, p) in model.points.iter().enumerate() {
        let b = &mut v[i * k..(i + 1) * k];
        b[POS..POS + 3].copy_from_slice(&p.position);
        for a in 0..3 {
            b[SCALE + a] = p.scale[a].ln();
        }
        b[ROT..ROT + 4].copy_from_slice(&p.rotation);
        b[OPACITY] = logit(p.opacity);
        for (c, coeff) in p.sh.iter().enumerate() {
            b[SH + 3 * c..SH + 3 * c + 3].copy_from_slice(coeff);
        }
    }
    v
}

/// Writes trainable groups back into the model, leaving frozen ones
/// untouched. Quaternions are renormalised in `v` as well.
fn unpack(v: &mut [f64], model: &mut FrModel, groups: &ParamGroups) {
    let k = stride(model);
    for (i, p) in model.points.iter_mut().enumerate() {
        let b = &mut v[i * k..(i + 1) * k];
        if groups.position {
            p.position.copy_from_slice(&b[POS..POS + 3]);
        }
        if groups.scale {
            for a in 0..3 {
                p.scale[a] = b[SCALE + a].exp();
            }
        }
        if groups.rotation {
            let n = b[ROT..ROT + 4].iter().map(|q| q * q).sum::<f64>().sqrt();
            for a in 0..4 {
                b[ROT + a] /= n;
                p.rotation[a] = b[ROT + a];
            }
        }
        if groups.opacity {
            p.opacity = sigmoid(b[OPACITY]);
        }
        for (c, coeff) in p.sh.iter_mut().enumerate() {
            if (c == 0 && groups.sh_dc) || (c > 0 && groups.sh_rest) {
                coeff.copy_from_slice(&b[SH + 3 * c..SH + 3 * c + 3]);
            }
        }
    }
}

fn pack_gradient(model: &FrModel, g: &ModelGradients, ws_grad: Option<&[[f64; 3]]>) -> Vec<f64> {
    let k = stride(model);
    let mut v = vec![0.0; k * model.len()];
    for (i, (p, pg)) in model.points.iter().zip(&g.points).enumerate() {
        let b = &mut v[i * k..(i + 1) * k];
        b[POS..POS + 3].copy_from_slice(&pg.position);
        for a in 0..3 {
            let extra = ws_grad.map_or(0.0, |w| w[i][a]);
            b[SCALE + a] = (pg.scale[a] + extra) * p.scale[a];
        }
        // Parameters are kept unit, so this is the gradient of the raw values.
        b[ROT..ROT + 4].copy_from_slice(&pg.rotation);
        b[OPACITY] = pg.opacity * p.opacity * (1.0 - p.opacity);
        for (c, coeff) in pg.sh.iter().enumerate() {
            b[SH + 3 * c..SH + 3 * c + 3].copy_from_slice(coeff);
        }
    }
    v
}

fn learning_rates(model: &FrModel, cfg: &TrainConfig) -> Vec<f64> {
    let k = stride(model);
    let g = &cfg.groups;
    let on = |b: bool, lr: f64| if b { lr } else { 0.0 };
    let extent = model.extent();
    let mut row = vec![0.0; k];
    row[POS..POS + 3].fill(on(g.position, cfg.lr.position * extent));
    row[SCALE..SCALE + 3].fill(on(g.scale, cfg.lr.scale));
    row[ROT..ROT + 4].fill(on(g.rotation, cfg.lr.rotation));
    row[OPACITY] = on(g.opacity, cfg.lr.opacity);
    row[SH..SH + 3].fill(on(g.sh_dc, cfg.lr.sh));
    row[SH + 3..].fill(on(g.sh_rest, cfg.lr.sh / 20.0));
    row.repeat(model.len())
}

/// First/second-moment adaptive optimiser.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(len: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            if lr[i] == 0.0 {
                continue;
            }
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr[i] * mh / (vh.sqrt() + self.epsilon);
        }
    }
}

/// Mean quality loss over all cameras at level 1.
pub fn mean_quality(
    model: &FrModel,
    cameras: &[Camera],
    targets: &[Vec<[f64; 3]>],
    loss: &QualityLoss,
    settings: &RasterSettings,
) -> Result<f64> {
    let values: Vec<f64> = cameras
        .par_iter()
        .zip(targets.par_iter())
        .map(|(cam, target)| {
            let out = render(model, cam, 1, settings);
            loss.value(&out.image, target, cam.width, cam.height)
        })
        .collect::<Result<_>>()?;
    Ok(values.iter().sum::<f64>() / values.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub steps: usize,
    /// Quality loss measured over all cameras, once before training and
    /// after every pass over the cameras.
    pub quality_history: Vec<f64>,
    /// Per-step training loss (quality on the step's camera plus the
    /// weighted-scale term).
    pub loss_history: Vec<f64>,
    pub final_quality: f64,
    pub final_ws: f64,
    pub reached_threshold: bool,
}

/// Gradient descent on `quality + gamma * WS`, one camera per step, until
/// the quality loss over all cameras is at or below the threshold or the
/// iteration budget runs out.
pub fn finetune(
    model: &mut FrModel,
    cameras: &[Camera],
    targets: &[Vec<[f64; 3]>],
    loss: &QualityLoss,
    config: &TrainConfig,
    settings: &RasterSettings,
) -> Result<FinetuneReport> {
    config.validate()?;
    if cameras.is_empty() || cameras.len() != targets.len() {
        return Err(Error::Config(format!(
            "need one target per camera, got {} cameras and {} targets",
            cameras.len(),
            targets.len()
        )));
    }
    let threshold = config.threshold();
    let mut quality = mean_quality(model, cameras, targets, loss, settings)?;
    let mut report = FinetuneReport {
        steps: 0,
        quality_history: vec![quality],
        loss_history: Vec::new(),
        final_quality: quality,
        final_ws: 0.0,
        reached_threshold: quality <= threshold,
    };
    let mut stats: Option<ScaleStats> = None;
    let refresh_ws = |m: &FrModel| weighted_scale(m, cameras, config.tile_threshold, settings);
    if config.gamma > 0.0 {
        stats = Some(refresh_ws(model));
    }
    if report.reached_threshold || model.is_empty() {
        report.final_ws = stats.as_ref().map_or(0.0, |s| s.ws);
        return Ok(report);
    }

    let lr = learning_rates(model, config);
    let mut params = pack(model);
    let mut adam = Adam::new(params.len(), config.beta1, config.beta2, config.epsilon);
    let mut last_good = model.clone();
    for step in 0..config.iteration_budget {
        let k = step % cameras.len();
        let cam = &cameras[k];
        let out = render(model, cam, 1, settings);
        let (value, d_image) = loss.evaluate(&out.image, &targets[k], cam.width, cam.height)?;
        let grads = backward(model, cam, &out, &d_image, settings);
        let ws_grad = stats.as_ref().map(|s| {
            s.scale_gradient(model)
                .into_iter()
                .map(|g| g.map(|v| v * config.gamma))
                .collect::<Vec<_>>()
        });
        let total = value + config.gamma * stats.as_ref().map_or(0.0, |s| s.ws);
        if !total.is_finite() {
            if let Some(path) = &config.dump_on_divergence {
                crate::io::save_model(&last_good, path, crate::io::ModelFormat::Fsplat)?;
            }
            return Err(Error::Diverged {
                iteration: step,
                loss: total,
            });
        }
        report.loss_history.push(total);
        last_good = model.clone();
        let g = pack_gradient(model, &grads, ws_grad.as_deref());
        adam.update(&mut params, &g, &lr);
        unpack(&mut params, model, &config.groups);
        report.steps = step + 1;

        if (step + 1) % cameras.len() == 0 {
            quality = mean_quality(model, cameras, targets, loss, settings)?;
            report.quality_history.push(quality);
            if config.gamma > 0.0 {
                // Usage and the gate are constants within a pass.
                let t = stats.as_ref().map(|s| s.threshold);
                let mut s = weighted_scale(model, cameras, config.tile_threshold.or(t), settings);
                s.threshold = t.unwrap_or(s.threshold);
                stats = Some(s);
            }
            if quality <= threshold {
                report.reached_threshold = true;
                break;
            }
        }
    }
    if report.steps % cameras.len() != 0 {
        quality = mean_quality(model, cameras, targets, loss, settings)?;
        report.quality_history.push(quality);
        report.reached_threshold = quality <= threshold;
    }
    report.final_quality = quality;
    report.final_ws = if config.gamma > 0.0 {
        refresh_ws(model).ws
    } else {
        0.0
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScenePoint;

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = vec![1.0, 2.0];
        let mut a = Adam::new(2, 0.9, 0.999, 1e-15);
        a.update(&mut p, &[0.5, -3.0], &[0.1, 0.0]);
        assert!((p[0] - 0.9).abs() < 1e-12);
        assert_eq!(p[1], 2.0);
    }

    #[test]
    fn pack_unpack_roundtrip() {
        let mut p = ScenePoint::with_color([0.1, 0.2, 0.3], [0.5, 0.25, 0.125], 0.3, [0.2, 0.4, 0.6]);
        p.rotation = [0.5, 0.5, 0.5, 0.5];
        let model = FrModel::new(vec![p], 1, 0).unwrap();
        let mut back = model.clone();
        unpack(&mut pack(&model), &mut back, &ParamGroups::default());
        for k in 0..3 {
            assert!((back.points[0].scale[k] - model.points[0].scale[k]).abs() < 1e-15);
        }
        assert!((back.points[0].opacity - 0.3).abs() < 1e-12);
    }
}
