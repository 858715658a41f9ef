use nalgebra::{Matrix2x3, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{RasterSettings, FOOTPRINT_SIGMAS};
use crate::camera::Camera;
use crate::model::{FrModel, ScenePoint, SH_C0};
use crate::sh;

/// A point projected into one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplatView {
    pub mean2d: [f64; 2],
    /// Inverse of the dilated 2D covariance, `[a, b, c]` for `[[a, b], [b, c]]`.
    pub conic: [f64; 3],
    /// Dilated 2D covariance `[xx, xy, yy]`.
    pub cov2d: [f64; 3],
    pub depth: f64,
    /// Clamped RGB at the projected level.
    pub color: [f64; 3],
    /// Opacity at the projected level.
    pub base_alpha: f64,
    pub source_index: usize,
    pub quality_bound: u8,
    /// View-dependent colour contribution of SH bands >= 1.
    pub sh_rest: [f64; 3],
    /// Inclusive pixel rectangle `[x0, y0, x1, y1]` whose centres may lie
    /// inside the 3-sigma footprint.
    pub rect: [u32; 4],
}

impl SplatView {
    /// Re-evaluates opacity and colour for another level of the same point.
    pub fn at_level(&self, point: &ScenePoint, level: u8) -> SplatView {
        let (opacity, dc) = point.appearance_at(level);
        let mut s = self.clone();
        s.base_alpha = opacity;
        s.color = color_from(dc, self.sh_rest);
        s
    }

    /// Squared Mahalanobis distance from the splat centre to pixel centre `(px, py)`.
    #[inline]
    pub fn mahalanobis2(&self, px: f64, py: f64) -> f64 {
        let dx = px - self.mean2d[0];
        let dy = py - self.mean2d[1];
        let [a, b, c] = self.conic;
        a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
    }
}

pub(crate) fn color_from(dc: [f64; 3], rest: [f64; 3]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for k in 0..3 {
        c[k] = (dc[k] * SH_C0 + rest[k] + 0.5).clamp(0.0, 1.0);
    }
    c
}

#[derive(Debug, Clone, Default)]
pub struct Projection {
    pub splats: Vec<SplatView>,
    /// Points dropped by the depth or frustum test.
    pub culled: usize,
}

pub(crate) fn quat_to_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Intermediate quantities of one projection, shared with the backward pass.
pub(crate) struct ProjectedGeometry {
    pub t: Vector3<f64>,
    pub rot: Matrix3<f64>,
    pub cov3d: Matrix3<f64>,
    pub jw: Matrix2x3<f64>,
    pub cov2d: [f64; 3],
    pub mean2d: [f64; 2],
    pub view_dir: Vector3<f64>,
    pub view_dist: f64,
}

pub(crate) fn project_geometry(
    point: &ScenePoint,
    camera: &Camera,
    w: &Matrix3<f64>,
    center: &Vector3<f64>,
    dilation: f64,
) -> ProjectedGeometry {
    let p = Vector3::from(point.position);
    let t = w * p + camera.translation_vector();
    let rot = quat_to_matrix(point.rotation);
    let s = Matrix3::from_diagonal(&Vector3::from(point.scale));
    let m = rot * s;
    let cov3d = m * m.transpose();
    let (tx, ty, tz) = (t.x, t.y, t.z);
    let j = Matrix2x3::new(
        camera.fx / tz,
        0.0,
        -camera.fx * tx / (tz * tz),
        0.0,
        camera.fy / tz,
        -camera.fy * ty / (tz * tz),
    );
    let jw = j * w;
    let c2 = jw * cov3d * jw.transpose();
    let cov2d = [c2[(0, 0)] + dilation, c2[(0, 1)], c2[(1, 1)] + dilation];
    let mean2d = [
        camera.fx * tx / tz + camera.cx,
        camera.fy * ty / tz + camera.cy,
    ];
    let v = p - center;
    let view_dist = v.norm();
    ProjectedGeometry {
        t,
        rot,
        cov3d,
        jw,
        cov2d,
        mean2d,
        view_dir: v / view_dist,
        view_dist,
    }
}

/// Projects every point that participates at `level`.
pub fn project(
    model: &FrModel,
    level: u8,
    camera: &Camera,
    settings: &RasterSettings,
) -> Projection {
    let indices = model.level_indices(level);
    project_points(model, &indices, level, camera, settings)
}

/// Projects the given points, evaluating appearance at `level`.
pub fn project_points(
    model: &FrModel,
    indices: &[usize],
    level: u8,
    camera: &Camera,
    settings: &RasterSettings,
) -> Projection {
    let w = camera.rotation_matrix();
    let center = camera.center();
    let projected: Vec<Option<SplatView>> = indices
        .par_iter()
        .map(|&i| project_one(&model.points[i], i, level, camera, &w, &center, settings))
        .collect();
    let culled = projected.iter().filter(|s| s.is_none()).count();
    Projection {
        splats: projected.into_iter().flatten().collect(),
        culled,
    }
}

fn project_one(
    point: &ScenePoint,
    index: usize,
    level: u8,
    camera: &Camera,
    w: &Matrix3<f64>,
    center: &Vector3<f64>,
    settings: &RasterSettings,
) -> Option<SplatView> {
    let depth = (w * Vector3::from(point.position) + camera.translation_vector()).z;
    if !(depth > camera.near && depth < camera.far) {
        return None;
    }
    let g = project_geometry(point, camera, w, center, settings.dilation);
    let [xx, xy, yy] = g.cov2d;
    let det = xx * yy - xy * xy;
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    let conic = [yy / det, -xy / det, xx / det];

    // Exact axis-aligned box of the 3-sigma ellipse, padded by a hair so
    // rounding never excludes a pixel the Mahalanobis test would accept.
    let pad = |e: f64| e * (1.0 + 1e-9) + 1e-9;
    let ex = pad(FOOTPRINT_SIGMAS * xx.sqrt());
    let ey = pad(FOOTPRINT_SIGMAS * yy.sqrt());
    let [mx, my] = g.mean2d;
    let x0 = (mx - ex - 0.5).ceil().max(0.0);
    let x1 = (mx + ex - 0.5).floor().min(camera.width as f64 - 1.0);
    let y0 = (my - ey - 0.5).ceil().max(0.0);
    let y1 = (my + ey - 0.5).floor().min(camera.height as f64 - 1.0);
    if !(x0 <= x1 && y0 <= y1) {
        return None;
    }

    let sh_rest = sh::eval_rest(&point.sh, g.view_dir.into());
    let (opacity, dc) = point.appearance_at(level);
    Some(SplatView {
        mean2d: g.mean2d,
        conic,
        cov2d: g.cov2d,
        depth,
        color: color_from(dc, sh_rest),
        base_alpha: opacity,
        source_index: index,
        quality_bound: point.quality_bound,
        sh_rest,
        rect: [x0 as u32, y0 as u32, x1 as u32, y1 as u32],
    })
}
