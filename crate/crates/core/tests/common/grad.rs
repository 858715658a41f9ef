//! Finite-difference checks of the backward pass.

use fovsplat::model::{FrModel, LevelOverride};
use fovsplat::raster::{backward, render, RasterSettings};
use rand::Rng;

use super::*;

/// Central-difference step. Small enough that few perturbations cross a
/// truncation or clamp boundary, large enough to stay clear of rounding.
pub const FD_STEP: f64 = 1e-6;

pub struct Check {
    pub name: String,
    pub analytic: f64,
    pub numeric: f64,
    /// The perturbation moved a pixel across a truncation, `alpha_min`,
    /// clamp or termination boundary, so the loss is not smooth there.
    pub at_boundary: bool,
}

/// Every scalar parameter of every point, as (label, accessor) pairs.
pub fn parameters(model: &FrModel) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    for (i, p) in model.points.iter().enumerate() {
        for k in 0..3 {
            out.push((format!("p{i}.position[{k}]"), i, k));
            out.push((format!("p{i}.scale[{k}]"), i, 3 + k));
        }
        for k in 0..4 {
            out.push((format!("p{i}.rotation[{k}]"), i, 6 + k));
        }
        out.push((format!("p{i}.opacity"), i, 10));
        for k in 0..p.sh.len() * 3 {
            out.push((format!("p{i}.sh[{}][{}]", k / 3, k % 3), i, 11 + k));
        }
        for k in 0..p.overrides.len() * 4 {
            out.push((format!("p{i}.override[{}][{}]", k / 4, k % 4), i, 1000 + k));
        }
    }
    out
}

pub fn param_mut(model: &mut FrModel, i: usize, slot: usize) -> &mut f64 {
    let p = &mut model.points[i];
    match slot {
        0..=2 => &mut p.position[slot],
        3..=5 => &mut p.scale[slot - 3],
        6..=9 => &mut p.rotation[slot - 6],
        10 => &mut p.opacity,
        s if s < 1000 => &mut p.sh[(s - 11) / 3][(s - 11) % 3],
        s => {
            let o: &mut LevelOverride = &mut p.overrides[(s - 1000) / 4];
            match (s - 1000) % 4 {
                0 => &mut o.opacity,
                k => &mut o.sh_dc[k - 1],
            }
        }
    }
}

pub fn analytic_value(g: &fovsplat::raster::PointGrad, slot: usize) -> f64 {
    match slot {
        0..=2 => g.position[slot],
        3..=5 => g.scale[slot - 3],
        6..=9 => g.rotation[slot - 6],
        10 => g.opacity,
        s if s < 1000 => g.sh[(s - 11) / 3][(s - 11) % 3],
        s => {
            let o = &g.overrides[(s - 1000) / 4];
            match (s - 1000) % 4 {
                0 => o.opacity,
                k => o.sh_dc[k - 1],
            }
        }
    }
}

/// Compares analytic gradients against central differences. Rotation is
/// perturbed without renormalising, which matches the projection (it
/// normalises internally) and the analytic chain through the normalisation.
pub fn gradient_checks(model: &FrModel, level: u8, seed: u64) -> Vec<Check> {
    let cam = front_camera(40, 32);
    let settings = RasterSettings::default();
    let mut r = rng(seed);
    let weights: Vec<[f64; 3]> = (0..cam.pixel_count())
        .map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
        .collect();
    let out = render(model, &cam, level, &settings);
    let grads = backward(model, &cam, &out, &weights, &settings);
    let h = FD_STEP;
    parameters(model)
        .into_iter()
        .map(|(name, i, slot)| {
            let mut m = model.clone();
            let base = *param_mut(&mut m, i, slot);
            *param_mut(&mut m, i, slot) = base + h;
            let plus = probe(&render(&m, &cam, level, &settings), &weights);
            let sig_plus = contribution_signature(&m, &cam, level, &settings);
            *param_mut(&mut m, i, slot) = base - h;
            let minus = probe(&render(&m, &cam, level, &settings), &weights);
            let sig_minus = contribution_signature(&m, &cam, level, &settings);
            Check {
                name,
                at_boundary: sig_plus != sig_minus,
                analytic: analytic_value(&grads.points[i], slot),
                numeric: (plus - minus) / (2.0 * h),
            }
        })
        .collect()
}

pub fn passes(c: &Check) -> bool {
    rel_err(c.analytic, c.numeric) < 1e-3
}

pub fn pass_rate(checks: &[Check]) -> f64 {
    checks.iter().filter(|c| passes(c)).count() as f64 / checks.len() as f64
}

/// Smooth parameters must all pass; boundary cases are only reported.
pub fn assert_smooth_pass(checks: &[Check]) {
    for c in checks.iter().filter(|c| !passes(c)) {
        eprintln!(
            "{}: analytic {} numeric {} boundary {}",
            c.name, c.analytic, c.numeric, c.at_boundary
        );
    }
    let bad: Vec<_> = checks.iter().filter(|c| !c.at_boundary && !passes(c)).collect();
    assert!(bad.is_empty(), "{} smooth parameters failed", bad.len());
}

