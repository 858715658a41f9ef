//! Reverse-mode gradients of a rendered image with respect to point parameters.
//!
//! The pass replays each pixel's front-to-back blend to recover `T_i` and
//! `alpha_i`, walks the contributions back to front, then chains the per-splat
//! screen-space gradients through the EWA projection to the 3D parameters.

use nalgebra::{Matrix2, Matrix3, Vector3};
use rayon::prelude::*;

use super::blend::{blend_pixel, Contribution};
use super::project::project_geometry;
use super::{RasterSettings, RenderOutput};
use crate::camera::Camera;
use crate::model::{FrModel, LevelOverride, SH_C0};
use crate::sh;

/// Gradient with respect to one projected splat's screen-space quantities.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SplatGrad {
    pub mean2d: [f64; 2],
    /// With respect to `[a, b, c]` of the conic `[[a, b], [b, c]]`.
    pub conic: [f64; 3],
    pub color: [f64; 3],
    pub opacity: f64,
}

impl SplatGrad {
    fn add(&mut self, o: &SplatGrad) {
        for k in 0..2 {
            self.mean2d[k] += o.mean2d[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointGrad {
    pub position: [f64; 3],
    pub scale: [f64; 3],
    /// With respect to the stored (unit) quaternion components.
    pub rotation: [f64; 4],
    pub opacity: f64,
    pub sh: Vec<[f64; 3]>,
    /// `overrides[l - 2]` holds gradients of the level-`l` record.
    pub overrides: Vec<LevelOverride>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelGradients {
    pub points: Vec<PointGrad>,
}

impl ModelGradients {
    pub fn zeros(model: &FrModel) -> Self {
        ModelGradients {
            points: model
                .points
                .iter()
                .map(|p| PointGrad {
                    sh: vec![[0.0; 3]; p.sh.len()],
                    overrides: vec![
                        LevelOverride {
                            opacity: 0.0,
                            sh_dc: [0.0; 3]
                        };
                        p.overrides.len()
                    ],
                    ..Default::default()
                })
                .collect(),
        }
    }

    /// Adds `weight * other` into `self`.
    pub fn accumulate(&mut self, other: &ModelGradients, weight: f64) {
        for (a, b) in self.points.iter_mut().zip(&other.points) {
            for k in 0..3 {
                a.position[k] += weight * b.position[k];
                a.scale[k] += weight * b.scale[k];
            }
            for k in 0..4 {
                a.rotation[k] += weight * b.rotation[k];
            }
            a.opacity += weight * b.opacity;
            for (x, y) in a.sh.iter_mut().zip(&b.sh) {
                for c in 0..3 {
                    x[c] += weight * y[c];
                }
            }
            for (x, y) in a.overrides.iter_mut().zip(&b.overrides) {
                x.opacity += weight * y.opacity;
                for c in 0..3 {
                    x.sh_dc[c] += weight * y.sh_dc[c];
                }
            }
        }
    }
}

/// Gradients of a scalar loss given `d_image = dL/d(image)` for a frame
/// produced by [`super::render`] from the same model and camera.
pub fn backward(
    model: &FrModel,
    camera: &Camera,
    output: &RenderOutput,
    d_image: &[[f64; 3]],
    settings: &RasterSettings,
) -> ModelGradients {
    let splat_grads = screen_space_gradients(output, d_image, settings);
    let mut grads = ModelGradients::zeros(model);
    let w = camera.rotation_matrix();
    let center = camera.center();
    let per_splat: Vec<(usize, PointGrad)> = output
        .splats
        .par_iter()
        .zip(splat_grads.par_iter())
        .filter(|(_, g)| **g != SplatGrad::default())
        .map(|(s, g)| {
            let i = s.source_index;
            (
                i,
                point_gradient(model, i, output.level, camera, &w, &center, g, settings),
            )
        })
        .collect();
    for (i, g) in per_splat {
        grads.points[i] = g;
    }
    grads
}

/// `dL/d(splat)` for every splat in the frame.
pub fn screen_space_gradients(
    output: &RenderOutput,
    d_image: &[[f64; 3]],
    settings: &RasterSettings,
) -> Vec<SplatGrad> {
    let grid = &output.grid;
    let splats = &output.splats;
    let width = grid.width as usize;
    assert_eq!(d_image.len(), output.image.len(), "gradient image size mismatch");

    let per_tile: Vec<Vec<SplatGrad>> = output
        .tile_workloads
        .par_iter()
        .map(|tile| {
            let mut local = vec![SplatGrad::default(); tile.splats.len()];
            if tile.splats.is_empty() {
                return local;
            }
            let mut contribs: Vec<Contribution> = Vec::new();
            let (x0, x1, y0, y1) = grid.tile_pixels(tile.tile.0, tile.tile.1);
            for py in y0..y1 {
                for px in x0..x1 {
                    let pix = py as usize * width + px as usize;
                    let dc = d_image[pix];
                    if dc == [0.0; 3] {
                        continue;
                    }
                    let (fx, fy) = (px as f64 + 0.5, py as f64 + 0.5);
                    contribs.clear();
                    blend_pixel(&tile.splats, splats, fx, fy, settings, |c| {
                        contribs.push(c)
                    });
                    // Colour of everything behind the current splat, seen
                    // through unit transmittance.
                    let mut behind = settings.background;
                    for ct in contribs.iter().rev() {
                        let s = &splats[ct.splat as usize];
                        let g = &mut local[ct.slot];
                        let weight = ct.t_before * ct.alpha;
                        let mut d_alpha = 0.0;
                        for c in 0..3 {
                            g.color[c] += weight * dc[c];
                            d_alpha += dc[c] * ct.t_before * (s.color[c] - behind[c]);
                            behind[c] = ct.alpha * s.color[c] + (1.0 - ct.alpha) * behind[c];
                        }
                        if ct.clamped {
                            continue;
                        }
                        g.opacity += d_alpha * ct.falloff;
                        // alpha = o * exp(-q / 2), q = d^T Q d, d = pixel - mean
                        let d_q = -0.5 * d_alpha * s.base_alpha * ct.falloff;
                        let dx = fx - s.mean2d[0];
                        let dy = fy - s.mean2d[1];
                        let [a, b, cc] = s.conic;
                        g.mean2d[0] -= d_q * 2.0 * (a * dx + b * dy);
                        g.mean2d[1] -= d_q * 2.0 * (b * dx + cc * dy);
                        g.conic[0] += d_q * dx * dx;
                        g.conic[1] += d_q * 2.0 * dx * dy;
                        g.conic[2] += d_q * dy * dy;
                    }
                }
            }
            local
        })
        .collect();

    // Fixed tile order keeps the reduction deterministic.
    let mut out = vec![SplatGrad::default(); splats.len()];
    for (tile, local) in output.tile_workloads.iter().zip(&per_tile) {
        for (slot, g) in local.iter().enumerate() {
            out[tile.splats[slot] as usize].add(g);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn point_gradient(
    model: &FrModel,
    index: usize,
    level: u8,
    camera: &Camera,
    w: &Matrix3<f64>,
    center: &Vector3<f64>,
    g: &SplatGrad,
    settings: &RasterSettings,
) -> PointGrad {
    let point = &model.points[index];
    let geo = project_geometry(point, camera, w, center, settings.dilation);
    let mut out = PointGrad {
        sh: vec![[0.0; 3]; point.sh.len()],
        overrides: vec![
            LevelOverride {
                opacity: 0.0,
                sh_dc: [0.0; 3]
            };
            point.overrides.len()
        ],
        ..Default::default()
    };
    let override_slot = if level >= 2 && (level as usize - 2) < point.overrides.len() {
        Some(level as usize - 2)
    } else {
        None
    };

    // Appearance.
    let (_, dc) = point.appearance_at(level);
    let dir: [f64; 3] = geo.view_dir.into();
    let rest = sh::eval_rest(&point.sh, dir);
    let mut g_col = [0.0; 3];
    for c in 0..3 {
        let raw = dc[c] * SH_C0 + rest[c] + 0.5;
        if (0.0..=1.0).contains(&raw) {
            g_col[c] = g.color[c];
        }
    }
    let g_dc = g_col.map(|v| v * SH_C0);
    match override_slot {
        Some(slot) => {
            out.overrides[slot].opacity = g.opacity;
            out.overrides[slot].sh_dc = g_dc;
        }
        None => {
            out.opacity = g.opacity;
            out.sh[0] = g_dc;
        }
    }
    let mut g_pos = Vector3::zeros();
    if point.sh.len() > 1 {
        let basis = sh::basis(dir, point.sh.len());
        let d_basis = sh::basis_gradient(dir, point.sh.len());
        let mut g_dir = Vector3::zeros();
        for k in 1..point.sh.len() {
            for c in 0..3 {
                out.sh[k][c] = g_col[c] * basis[k];
                let coeff = point.sh[k][c] * g_col[c];
                for a in 0..3 {
                    g_dir[a] += coeff * d_basis[k][a];
                }
            }
        }
        let d = geo.view_dir;
        g_pos += (g_dir - d * d.dot(&g_dir)) / geo.view_dist;
    }

    // Conic -> dilated covariance: dL/dSigma = -Q G Q.
    let [xx, xy, yy] = geo.cov2d;
    let det = xx * yy - xy * xy;
    let q = Matrix2::new(yy / det, -xy / det, -xy / det, xx / det);
    let g_q = Matrix2::new(g.conic[0], 0.5 * g.conic[1], 0.5 * g.conic[1], g.conic[2]);
    let g_cov2 = -(q * g_q * q);

    // cov2 = M Sigma M^T with M = J W.
    let m = geo.jw;
    let g_cov3 = m.transpose() * g_cov2 * m;
    let g_m = 2.0 * g_cov2 * m * geo.cov3d;
    let g_j = g_m * w.transpose();

    let (tx, ty, tz) = (geo.t.x, geo.t.y, geo.t.z);
    let (fx, fy) = (camera.fx, camera.fy);
    let tz2 = tz * tz;
    let tz3 = tz2 * tz;
    let mut g_t = Vector3::new(
        g_j[(0, 2)] * (-fx / tz2),
        g_j[(1, 2)] * (-fy / tz2),
        g_j[(0, 0)] * (-fx / tz2)
            + g_j[(0, 2)] * (2.0 * fx * tx / tz3)
            + g_j[(1, 1)] * (-fy / tz2)
            + g_j[(1, 2)] * (2.0 * fy * ty / tz3),
    );
    g_t.x += g.mean2d[0] * fx / tz;
    g_t.y += g.mean2d[1] * fy / tz;
    g_t.z -= g.mean2d[0] * fx * tx / tz2 + g.mean2d[1] * fy * ty / tz2;
    g_pos += w.transpose() * g_t;
    out.position = g_pos.into();

    // Sigma = (R S)(R S)^T.
    let s = Vector3::from(point.scale);
    let rs = geo.rot * Matrix3::from_diagonal(&s);
    let g_rs = 2.0 * g_cov3 * rs;
    let mut g_r = Matrix3::zeros();
    for j in 0..3 {
        let mut acc = 0.0;
        for i in 0..3 {
            acc += g_rs[(i, j)] * geo.rot[(i, j)];
            g_r[(i, j)] = g_rs[(i, j)] * s[j];
        }
        out.scale[j] = acc;
    }
    out.rotation = quaternion_gradient(point.rotation, &g_r);
    out
}

/// Chains `dL/dR` through the rotation matrix of a (normalised) quaternion.
fn quaternion_gradient(q: [f64; 4], g: &Matrix3<f64>) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    let g = |i, j| g[(i, j)];
    let gw = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0)
        + x * g(2, 1));
    let gx = 2.0
        * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2)
            + z * g(2, 0)
            + w * g(2, 1)
            - 2.0 * x * g(2, 2));
    let gy = 2.0
        * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2)
            - w * g(2, 0)
            + z * g(2, 1)
            - 2.0 * y * g(2, 2));
    let gz = 2.0
        * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1)
            + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1));
    let gq = [gw, gx, gy, gz];
    let qn = [w, x, y, z];
    let dot: f64 = (0..4).map(|k| gq[k] * qn[k]).sum();
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = (gq[k] - qn[k] * dot) / n;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScenePoint;
    use crate::raster::render;

    fn camera() -> Camera {
        Camera::look_at([0.0, 0.0, -4.0], [0.0; 3], [0.0, -1.0, 0.0], 60.0, 32, 32).unwrap()
    }

    #[test]
    fn fully_occluded_splat_gets_zero_gradient() {
        // Blending stops right after the wall, so the splat behind is never reached.
        let settings = RasterSettings {
            alpha_max: 1.0,
            t_stop: 0.5,
            ..Default::default()
        };
        let mut wall = ScenePoint::with_color([0.0, 0.0, -1.0], [50.0, 50.0, 0.01], 1.0, [0.3; 3]);
        wall.opacity = 1.0;
        let hidden = ScenePoint::with_color([0.0, 0.0, 1.0], [0.2; 3], 0.8, [0.9; 3]);
        let model = FrModel::new(vec![wall, hidden], 1, 0).unwrap();
        let cam = camera();
        let out = render(&model, &cam, 1, &settings);
        assert!(out.transmittance.iter().all(|&t| t < 0.5));
        let d = vec![[1.0; 3]; out.image.len()];
        let g = backward(&model, &cam, &out, &d, &settings);
        let h = &g.points[1];
        assert_eq!(h.position, [0.0; 3]);
        assert_eq!(h.scale, [0.0; 3]);
        assert_eq!(h.opacity, 0.0);
        assert_eq!(h.sh[0], [0.0; 3]);
    }

    #[test]
    fn background_pixel_gradient_ignores_distant_splat() {
        let settings = RasterSettings::default();
        let p = ScenePoint::with_color([0.5, 0.5, 0.0], [0.05; 3], 0.8, [0.9; 3]);
        let model = FrModel::new(vec![p], 1, 0).unwrap();
        let cam = camera();
        let out = render(&model, &cam, 1, &settings);
        let mut d = vec![[0.0; 3]; out.image.len()];
        d[0] = [1.0; 3];
        let g = backward(&model, &cam, &out, &d, &settings);
        assert_eq!(g.points[0], ModelGradients::zeros(&model).points[0]);
    }

    #[test]
    fn quaternion_gradient_is_tangent() {
        let q = [0.5, 0.5, 0.5, 0.5];
        let g = Matrix3::new(1.0, 2.0, 3.0, -1.0, 0.5, 0.2, 0.0, 1.0, -2.0);
        let d = quaternion_gradient(q, &g);
        let dot: f64 = (0..4).map(|k| d[k] * q[k]).sum();
        assert!(dot.abs() < 1e-12);
    }
}
