//! Pinhole cameras, orbit rigs and display geometry.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A pinhole camera looking down its local `+z` axis, `x` right, `y` down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// World-to-camera rotation, row major.
    pub rotation: [[f64; 3]; 3],
    /// World-to-camera translation.
    pub translation: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    /// Camera at `eye` looking at `target` with a horizontal field of view in degrees.
    pub fn look_at(
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        fov_x_deg: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let eye_v = Vector3::from(eye);
        let forward = Vector3::from(target) - eye_v;
        if forward.norm() <= 0.0 {
            return Err(Error::Config("camera eye coincides with target".into()));
        }
        let z = forward.normalize();
        let right = z.cross(&Vector3::from(up));
        if right.norm() < 1e-9 {
            return Err(Error::Config("camera up vector is parallel to view direction".into()));
        }
        let x = right.normalize();
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let t = -(r * eye_v);
        let fx = width as f64 / (2.0 * (fov_x_deg.to_radians() / 2.0).tan());
        let cam = Camera {
            rotation: matrix_to_rows(&r),
            translation: t.into(),
            fx,
            fy: fx,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            near: 0.01,
            far: 1000.0,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("camera resolution must be positive".into()));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::Config("camera clip planes must satisfy 0 < near < far".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config("focal lengths must be positive".into()));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&[
            self.rotation[0][0],
            self.rotation[0][1],
            self.rotation[0][2],
            self.rotation[1][0],
            self.rotation[1][1],
            self.rotation[1][2],
            self.rotation[2][0],
            self.rotation[2][1],
            self.rotation[2][2],
        ])
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * p + self.translation_vector()
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation_matrix().transpose() * self.translation_vector())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// World-space ray through the centre of pixel `(x, y)`.
    pub fn pixel_ray(&self, x: f64, y: f64) -> (Vector3<f64>, Vector3<f64>) {
        let d_cam = Vector3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0);
        let d = self.rotation_matrix().transpose() * d_cam;
        (self.center(), d.normalize())
    }
}

fn matrix_to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

/// Server-side orbit parameters around a target point. Angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Orbit {
    pub azimuth: f64,
    pub elevation: f64,
    pub radius: f64,
    #[serde(default)]
    pub target: [f64; 3],
    #[serde(default = "default_fov")]
    pub fov_deg: f64,
}

fn default_fov() -> f64 {
    60.0
}

impl Default for Orbit {
    fn default() -> Self {
        Orbit {
            azimuth: 0.0,
            elevation: 45.0,
            radius: 3.0,
            target: [0.0; 3],
            fov_deg: 60.0,
        }
    }
}

impl Orbit {
    /// Orbit in a `z`-up world.
    pub fn camera(&self, width: u32, height: u32) -> Result<Camera> {
        if !(self.radius > 0.0) {
            return Err(Error::Config("orbit radius must be positive".into()));
        }
        let elevation = self.elevation.clamp(-89.0, 89.0).to_radians();
        let az = self.azimuth.to_radians();
        let eye = [
            self.target[0] + self.radius * elevation.cos() * az.cos(),
            self.target[1] + self.radius * elevation.cos() * az.sin(),
            self.target[2] + self.radius * elevation.sin(),
        ];
        Camera::look_at(eye, self.target, [0.0, 0.0, 1.0], self.fov_deg, width, height)
    }
}

/// `count` cameras evenly spaced in azimuth at a fixed elevation and radius.
pub fn orbit_ring(
    count: usize,
    elevation: f64,
    radius: f64,
    fov_deg: f64,
    width: u32,
    height: u32,
    azimuth_offset: f64,
) -> Result<Vec<Camera>> {
    (0..count)
        .map(|i| {
            Orbit {
                azimuth: azimuth_offset + 360.0 * i as f64 / count as f64,
                elevation,
                radius,
                target: [0.0; 3],
                fov_deg,
            }
            .camera(width, height)
        })
        .collect()
}

/// Display resolution, angular pixel density and gaze position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplayGeometry {
    pub width: u32,
    pub height: u32,
    pub pixels_per_degree: f64,
    pub gaze: [f64; 2],
}

pub const DEFAULT_PIXELS_PER_DEGREE: f64 = 20.0;

impl DisplayGeometry {
    pub fn new(width: u32, height: u32, pixels_per_degree: f64, gaze: [f64; 2]) -> Result<Self> {
        let d = DisplayGeometry {
            width,
            height,
            pixels_per_degree,
            gaze,
        };
        d.validate()?;
        Ok(d)
    }

    /// Gaze at the image centre.
    pub fn centered(width: u32, height: u32, pixels_per_degree: f64) -> Result<Self> {
        Self::new(
            width,
            height,
            pixels_per_degree,
            [width as f64 / 2.0, height as f64 / 2.0],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pixels_per_degree > 0.0) {
            return Err(Error::Config("pixels_per_degree must be positive".into()));
        }
        let [gx, gy] = self.gaze;
        if !(0.0..=self.width as f64).contains(&gx) || !(0.0..=self.height as f64).contains(&gy) {
            return Err(Error::Config(format!(
                "gaze ({gx}, {gy}) outside {}x{} display",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn with_gaze(&self, gaze: [f64; 2]) -> Result<Self> {
        Self::new(self.width, self.height, self.pixels_per_degree, gaze)
    }

    /// Eccentricity in degrees of a point given in pixel coordinates.
    pub fn eccentricity_of(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.gaze[0];
        let dy = y - self.gaze[1];
        (dx * dx + dy * dy).sqrt() / self.pixels_per_degree
    }

    /// Eccentricity at the centre of integer pixel `(px, py)`.
    pub fn pixel_eccentricity(&self, px: u32, py: u32) -> f64 {
        self.eccentricity_of(px as f64 + 0.5, py as f64 + 0.5)
    }
}
