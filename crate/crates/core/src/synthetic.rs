//! Deterministic desk-scale scenes standing in for dataset-trained models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{orbit_ring, Camera};
use crate::error::{Error, Result};
use crate::model::{rgb_to_sh_dc, FrModel, ScenePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    Grid,
    Sphere,
    TexturedPlane,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub layout: Layout,
    pub point_count: usize,
    pub seed: u64,
    /// Textured plane only: splat size relative to the point spacing, with
    /// opacity lowered in proportion. Values above 1 give overlapping,
    /// redundant splats.
    #[serde(default = "unit")]
    pub footprint: f64,
}

fn unit() -> f64 {
    1.0
}

impl SceneSpec {
    pub fn new(layout: Layout, point_count: usize, seed: u64) -> Self {
        SceneSpec {
            layout,
            point_count,
            seed,
            footprint: 1.0,
        }
    }
}

/// Half-width of the textured plane, which spans `[-1, 1]^2` at `z = 0`.
pub const PLANE_HALF: f64 = 1.0;

pub fn make_synthetic_scene(spec: &SceneSpec) -> Result<FrModel> {
    if spec.point_count == 0 {
        return Err(Error::Config("synthetic scene needs at least one point".into()));
    }
    if !(spec.footprint > 0.0 && spec.footprint.is_finite()) {
        return Err(Error::Config(format!("footprint must be positive, got {}", spec.footprint)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let points = match spec.layout {
        Layout::Grid => grid(spec.point_count, &mut rng),
        Layout::Sphere => sphere(spec.point_count, &mut rng),
        Layout::TexturedPlane => plane(spec.point_count, spec.footprint, &mut rng),
    };
    FrModel::new(points, 1, 0)
}

fn random_rotation(rng: &mut impl Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return q.map(|v| v / n);
        }
    }
}

fn grid(n: usize, rng: &mut impl Rng) -> Vec<ScenePoint> {
    let side = (n as f64).cbrt().ceil() as usize;
    let spacing = 1.6 / side.max(1) as f64;
    (0..n)
        .map(|i| {
            let (a, b, c) = (i % side, (i / side) % side, i / (side * side));
            let at = |k: usize| -0.8 + spacing * (k as f64 + 0.5);
            let position = [at(a), at(b), at(c)];
            let rgb = position.map(|v| 0.5 + 0.4 * v);
            let mut p = ScenePoint::with_color(
                position,
                std::array::from_fn(|_| spacing * rng.random_range(0.15..0.4)),
                rng.random_range(0.5..0.9),
                rgb,
            );
            p.rotation = random_rotation(rng);
            p
        })
        .collect()
}

fn sphere(n: usize, rng: &mut impl Rng) -> Vec<ScenePoint> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let spacing = (4.0 * std::f64::consts::PI / n as f64).sqrt();
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let dir = [r * phi.cos(), r * phi.sin(), z];
            let position = dir.map(|v| 0.8 * v);
            let rgb = dir.map(|v| 0.5 + 0.35 * v);
            let mut p = ScenePoint::with_color(
                position,
                std::array::from_fn(|_| 0.8 * spacing * rng.random_range(0.25..0.5)),
                rng.random_range(0.6..0.95),
                rgb,
            );
            p.rotation = random_rotation(rng);
            p
        })
        .collect()
}

/// Smooth colour pattern on the plane, faded to black towards the border.
pub fn plane_texture(u: f64, v: f64) -> [f64; 3] {
    use std::f64::consts::PI;
    let window = |t: f64| {
        let x = ((PLANE_HALF - t.abs()) / 0.2).clamp(0.0, 1.0);
        x * x * (3.0 - 2.0 * x)
    };
    let w = window(u) * window(v);
    let r = 0.5 + 0.3 * (PI * u).sin() * (0.5 * PI * v).cos();
    let g = 0.5 + 0.3 * (PI * (u + v) * 0.75).cos();
    let b = 0.45 + 0.3 * (PI * v).sin() * (0.5 * PI * u).cos();
    [r * w, g * w, b * w]
}

fn plane(n: usize, footprint: f64, rng: &mut impl Rng) -> Vec<ScenePoint> {
    // R2 low-discrepancy sequence covers the square evenly for any count.
    let g = 1.324_717_957_244_746f64;
    let (a1, a2) = (1.0 / g, 1.0 / (g * g));
    let spacing = 2.0 * PLANE_HALF / (n as f64).sqrt();
    let offset: f64 = rng.random_range(0.0..1.0);
    (0..n)
        .map(|i| {
            let x = (offset + a1 * (i + 1) as f64).fract();
            let y = (offset + a2 * (i + 1) as f64).fract();
            let u = PLANE_HALF * (2.0 * x - 1.0);
            let v = PLANE_HALF * (2.0 * y - 1.0);
            let s = 0.6 * spacing * footprint;
            let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
            ScenePoint {
                position: [u, v, 0.0],
                scale: [s, s * rng.random_range(0.7..1.0), 0.02 * s],
                rotation: [(angle / 2.0).cos(), 0.0, 0.0, (angle / 2.0).sin()],
                opacity: (0.8 / footprint).min(0.99),
                sh: vec![rgb_to_sh_dc(plane_texture(u, v))],
                quality_bound: 1,
                overrides: Vec::new(),
            }
        })
        .collect()
}

/// Orbit elevation, radius and field of view of the canonical camera ring.
pub const ORBIT_ELEVATION: f64 = 40.0;
pub const ORBIT_RADIUS: f64 = 3.8;
pub const ORBIT_FOV: f64 = 60.0;

/// `count` cameras around the origin that frame every synthetic layout.
pub fn canonical_cameras(count: usize, width: u32, height: u32) -> Vec<Camera> {
    orbit_ring(count, ORBIT_ELEVATION, ORBIT_RADIUS, ORBIT_FOV, width, height, 0.0)
        .expect("canonical orbit is valid")
}

/// Cameras between the canonical ones, for held-out evaluation.
pub fn held_out_cameras(count: usize, width: u32, height: u32) -> Vec<Camera> {
    orbit_ring(
        count,
        ORBIT_ELEVATION - 10.0,
        ORBIT_RADIUS,
        ORBIT_FOV,
        width,
        height,
        180.0 / count as f64,
    )
    .expect("held-out orbit is valid")
}

/// Exact image of the textured plane seen by `camera`, by ray casting.
pub fn plane_ground_truth(camera: &Camera, background: [f64; 3]) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(camera.pixel_count());
    for py in 0..camera.height {
        for px in 0..camera.width {
            let (o, d) = camera.pixel_ray(px as f64 + 0.5, py as f64 + 0.5);
            let hit = if d.z.abs() > 1e-12 { -o.z / d.z } else { -1.0 };
            let color = if hit > 0.0 {
                let (u, v) = (o.x + hit * d.x, o.y + hit * d.y);
                if u.abs() <= PLANE_HALF && v.abs() <= PLANE_HALF {
                    plane_texture(u, v)
                } else {
                    background
                }
            } else {
                background
            };
            out.push(color);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{project, RasterSettings};

    #[test]
    fn deterministic_under_seed() {
        let spec = SceneSpec::new(Layout::Grid, 4, 7);
        assert_eq!(
            make_synthetic_scene(&spec).unwrap(),
            make_synthetic_scene(&spec).unwrap()
        );
    }

    #[test]
    fn zero_points_is_an_error() {
        let spec = SceneSpec::new(Layout::Sphere, 0, 1);
        assert!(make_synthetic_scene(&spec).is_err());
    }

    #[test]
    fn every_layout_fits_the_canonical_cameras() {
        for layout in [Layout::Grid, Layout::Sphere, Layout::TexturedPlane] {
            let model = make_synthetic_scene(&SceneSpec::new(layout, 300, 3))
            .unwrap();
            for cam in canonical_cameras(8, 96, 64) {
                let proj = project(&model, 1, &cam, &RasterSettings::default());
                assert_eq!(proj.culled, 0);
                for s in &proj.splats {
                    assert!(s.mean2d[0] > 0.0 && s.mean2d[0] < 96.0, "{layout:?}");
                    assert!(s.mean2d[1] > 0.0 && s.mean2d[1] < 64.0, "{layout:?}");
                }
            }
        }
    }

    #[test]
    fn ground_truth_sees_the_plane_centre() {
        let cam = &canonical_cameras(1, 64, 48)[0];
        let gt = plane_ground_truth(cam, [0.0; 3]);
        let centre = gt[24 * 64 + 32];
        let expected = plane_texture(0.0, 0.0);
        for k in 0..3 {
            assert!((centre[k] - expected[k]).abs() < 0.05);
        }
    }
}
