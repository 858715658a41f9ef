//! Shared oracles for the integration tests.
#![allow(dead_code)]

pub mod fixtures;
pub mod grad;
pub mod hvs_cases;

use fovsplat::camera::Camera;
use fovsplat::model::{rgb_to_sh_dc, sh_coeff_count, FrModel, ScenePoint};
use fovsplat::raster::{project, RasterSettings, RenderOutput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-pixel renderer that globally sorts every projected splat and blends
/// the full list, with no tiles and no early termination.
pub fn brute_force_render(
    model: &FrModel,
    camera: &Camera,
    level: u8,
    settings: &RasterSettings,
) -> Vec<[f64; 3]> {
    let splats = project(model, level, camera, settings).splats;
    let mut order: Vec<usize> = (0..splats.len()).collect();
    order.sort_by(|&a, &b| {
        splats[a]
            .depth
            .partial_cmp(&splats[b].depth)
            .unwrap()
            .then(splats[a].source_index.cmp(&splats[b].source_index))
    });
    let mut image = Vec::with_capacity(camera.pixel_count());
    for py in 0..camera.height {
        for px in 0..camera.width {
            let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
            let mut t = 1.0;
            let mut c = [0.0; 3];
            for &i in &order {
                let s = &splats[i];
                let dx = x - s.mean2d[0];
                let dy = y - s.mean2d[1];
                let q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
                if q > 9.0 {
                    continue;
                }
                let alpha = (s.base_alpha * (-0.5 * q).exp()).min(settings.alpha_max);
                if alpha < settings.alpha_min {
                    continue;
                }
                for k in 0..3 {
                    c[k] += t * alpha * s.color[k];
                }
                t *= 1.0 - alpha;
            }
            for k in 0..3 {
                c[k] += t * settings.background[k];
            }
            image.push(c);
        }
    }
    image
}

pub fn max_abs_diff(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(p, q)| (0..3).map(move |k| (p[k] - q[k]).abs()))
        .fold(0.0, f64::max)
}

/// Camera on the -z side looking at the origin.
pub fn front_camera(width: u32, height: u32) -> Camera {
    Camera::look_at([0.0, 0.0, -4.0], [0.0; 3], [0.0, -1.0, 0.0], 50.0, width, height).unwrap()
}

/// Random points in front of [`front_camera`], with colours and opacities
/// kept away from the clamp limits.
pub fn random_scene(rng: &mut impl Rng, count: usize, sh_degree: u8) -> FrModel {
    let coeffs = sh_coeff_count(sh_degree);
    let points = (0..count)
        .map(|_| {
            let mut q = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0f64),
            ];
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            q.iter_mut().for_each(|v| *v /= n);
            let rgb = [
                rng.random_range(0.2..0.8),
                rng.random_range(0.2..0.8),
                rng.random_range(0.2..0.8),
            ];
            let mut sh = vec![rgb_to_sh_dc(rgb)];
            for _ in 1..coeffs {
                sh.push([
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                ]);
            }
            ScenePoint {
                position: [
                    rng.random_range(-1.2..1.2),
                    rng.random_range(-1.2..1.2),
                    rng.random_range(-1.0..1.0),
                ],
                scale: [
                    rng.random_range(0.05..0.35),
                    rng.random_range(0.05..0.35),
                    rng.random_range(0.05..0.35),
                ],
                rotation: q,
                opacity: rng.random_range(0.1..0.9),
                sh,
                quality_bound: 1,
                overrides: Vec::new(),
            }
        })
        .collect();
    FrModel::new(points, 1, sh_degree).unwrap()
}

/// `sum(weights * image)`, a linear probe whose image gradient is `weights`.
pub fn probe(out: &RenderOutput, weights: &[[f64; 3]]) -> f64 {
    out.image
        .iter()
        .zip(weights)
        .map(|(p, w)| p[0] * w[0] + p[1] * w[1] + p[2] * w[2])
        .sum()
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-9 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// For every pixel, the ordered list of splats that pass the truncation,
/// `alpha_min` and early-termination tests. Two models with equal
/// signatures differ only smoothly in their renders.
pub fn contribution_signature(
    model: &FrModel,
    camera: &Camera,
    level: u8,
    settings: &RasterSettings,
) -> Vec<Vec<(usize, bool)>> {
    let splats = project(model, level, camera, settings).splats;
    let mut order: Vec<usize> = (0..splats.len()).collect();
    order.sort_by(|&a, &b| {
        splats[a]
            .depth
            .partial_cmp(&splats[b].depth)
            .unwrap()
            .then(splats[a].source_index.cmp(&splats[b].source_index))
    });
    let mut out = Vec::with_capacity(camera.pixel_count());
    for py in 0..camera.height {
        for px in 0..camera.width {
            let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
            let mut t = 1.0;
            let mut list = Vec::new();
            for &i in &order {
                let s = &splats[i];
                let [x0, y0, x1, y1] = s.rect;
                if px < x0 || px > x1 || py < y0 || py > y1 {
                    continue;
                }
                let dx = x - s.mean2d[0];
                let dy = y - s.mean2d[1];
                let q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
                if q > 9.0 {
                    continue;
                }
                let raw = s.base_alpha * (-0.5 * q).exp();
                if raw.min(settings.alpha_max) < settings.alpha_min {
                    continue;
                }
                let clamped = raw > settings.alpha_max;
                list.push((s.source_index, clamped));
                t *= 1.0 - raw.min(settings.alpha_max);
                if t < settings.t_stop {
                    break;
                }
            }
            out.push(list);
        }
    }
    out
}
