//! Scene representation: Gaussian points organised into nested quality levels.
//!
//! Level 1 uses every point. A point with quality bound `m` also takes part in
//! levels `2..=m`, so the point set of level `l + 1` is always a subset of the
//! set of level `l`. Only opacity and the degree-0 SH coefficients may differ
//! between levels; they are stored as one [`LevelOverride`] per extra level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest supported spherical-harmonic degree.
pub const MAX_SH_DEGREE: u8 = 3;

/// Number of SH coefficients per colour channel for a degree.
pub fn sh_coeff_count(degree: u8) -> usize {
    let d = degree as usize + 1;
    d * d
}

/// Tolerance for accepting a stored quaternion as unit length.
pub const UNIT_QUAT_EPS: f64 = 1e-6;
/// Quaternions within this distance of unit norm are renormalised on load.
pub const RENORMALIZE_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelOverride {
    pub opacity: f64,
    pub sh_dc: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePoint {
    pub position: [f64; 3],
    /// Per-axis standard deviation, linear domain.
    pub scale: [f64; 3],
    /// Unit quaternion `(w, x, y, z)`.
    pub rotation: [f64; 4],
    pub opacity: f64,
    /// `sh[k][c]`: coefficient `k` of colour channel `c`.
    pub sh: Vec<[f64; 3]>,
    /// Highest level that renders this point.
    pub quality_bound: u8,
    /// `overrides[l - 2]` holds the level-`l` values, for `l` in `2..=quality_bound`.
    pub overrides: Vec<LevelOverride>,
}

impl ScenePoint {
    /// A level-1-only point with a constant colour (degree 0 SH).
    pub fn with_color(position: [f64; 3], scale: [f64; 3], opacity: f64, rgb: [f64; 3]) -> Self {
        ScenePoint {
            position,
            scale,
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity,
            sh: vec![rgb_to_sh_dc(rgb)],
            quality_bound: 1,
            overrides: Vec::new(),
        }
    }

    /// Opacity and SH-DC used when rendering at `level`.
    pub fn appearance_at(&self, level: u8) -> (f64, [f64; 3]) {
        if level >= 2 {
            if let Some(o) = self.overrides.get(level as usize - 2) {
                return (o.opacity, o.sh_dc);
            }
        }
        (self.opacity, self.sh[0])
    }

    pub fn participates_at(&self, level: u8) -> bool {
        level >= 1 && level <= self.quality_bound
    }

    pub fn max_extent(&self) -> f64 {
        self.scale[0].max(self.scale[1]).max(self.scale[2])
    }

    /// Raises the quality bound by one, storing the new level's appearance.
    pub fn promote(&mut self, appearance: LevelOverride) {
        self.overrides.push(appearance);
        self.quality_bound += 1;
    }

    fn validate(&mut self, index: usize, level_count: u8, coeffs: usize) -> Result<()> {
        let bad = |message: String| Error::InvalidPoint { index, message };
        if self.position.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite position".into()));
        }
        if self.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(bad(format!("scale must be finite and positive, got {:?}", self.scale)));
        }
        let norm = self.rotation.iter().map(|q| q * q).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > RENORMALIZE_EPS {
            return Err(bad(format!("quaternion norm {norm} is not unit")));
        }
        // Already-unit quaternions are left untouched so that save/load is bit exact.
        if (norm - 1.0).abs() > UNIT_QUAT_EPS {
            for q in &mut self.rotation {
                *q /= norm;
            }
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(bad(format!("opacity {} outside [0, 1]", self.opacity)));
        }
        if self.sh.len() != coeffs {
            return Err(bad(format!("expected {coeffs} SH coefficients, got {}", self.sh.len())));
        }
        if self.sh.iter().flatten().any(|v| !v.is_finite()) {
            return Err(bad("non-finite SH coefficient".into()));
        }
        if self.quality_bound < 1 || self.quality_bound > level_count {
            return Err(bad(format!(
                "quality bound {} outside [1, {level_count}]",
                self.quality_bound
            )));
        }
        if self.overrides.len() != self.quality_bound as usize - 1 {
            return Err(bad(format!(
                "quality bound {} requires {} override records, found {}",
                self.quality_bound,
                self.quality_bound - 1,
                self.overrides.len()
            )));
        }
        for o in &self.overrides {
            if !(0.0..=1.0).contains(&o.opacity) || o.sh_dc.iter().any(|v| !v.is_finite()) {
                return Err(bad("invalid override record".into()));
            }
        }
        Ok(())
    }
}

pub const SH_C0: f64 = 0.282_094_791_773_878_14;

pub fn rgb_to_sh_dc(rgb: [f64; 3]) -> [f64; 3] {
    rgb.map(|c| (c - 0.5) / SH_C0)
}

pub fn sh_dc_to_rgb(dc: [f64; 3]) -> [f64; 3] {
    dc.map(|c| c * SH_C0 + 0.5)
}

/// A multi-level ("foveated") model. A plain single-level model is the
/// special case `level_count == 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrModel {
    pub points: Vec<ScenePoint>,
    pub level_count: u8,
    pub sh_degree: u8,
}

impl FrModel {
    pub fn new(points: Vec<ScenePoint>, level_count: u8, sh_degree: u8) -> Result<Self> {
        let mut model = FrModel {
            points,
            level_count,
            sh_degree,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn empty(sh_degree: u8) -> Self {
        FrModel {
            points: Vec::new(),
            level_count: 1,
            sh_degree,
        }
    }

    /// Checks every invariant, renormalising near-unit quaternions in place.
    pub fn validate(&mut self) -> Result<()> {
        if self.level_count == 0 {
            return Err(Error::InvalidModel("level count must be at least 1".into()));
        }
        if self.sh_degree > MAX_SH_DEGREE {
            return Err(Error::InvalidModel(format!(
                "SH degree {} exceeds {MAX_SH_DEGREE}",
                self.sh_degree
            )));
        }
        let coeffs = sh_coeff_count(self.sh_degree);
        let levels = self.level_count;
        for (i, p) in self.points.iter_mut().enumerate() {
            p.validate(i, levels, coeffs)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `|L_l|` for `l = 1..=level_count`.
    pub fn level_sizes(&self) -> Vec<usize> {
        (1..=self.level_count)
            .map(|l| self.points.iter().filter(|p| p.quality_bound >= l).count())
            .collect()
    }

    /// Indices of the points that render at `level`.
    pub fn level_indices(&self, level: u8) -> Vec<usize> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.participates_at(level))
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of per-level override records, `sum(max(0, m - 1))`.
    pub fn override_count(&self) -> usize {
        self.points.iter().map(|p| p.quality_bound as usize - 1).sum()
    }

    /// A copy keeping only the points selected by `keep`, in order.
    pub fn retain_indices(&self, keep: &[usize]) -> FrModel {
        FrModel {
            points: keep.iter().map(|&i| self.points[i].clone()).collect(),
            level_count: self.level_count,
            sh_degree: self.sh_degree,
        }
    }

    /// Radius of the bounding sphere around the centroid of all point centres.
    pub fn extent(&self) -> f64 {
        if self.points.is_empty() {
            return 1.0;
        }
        let n = self.points.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p.position[k] / n;
            }
        }
        let r = self
            .points
            .iter()
            .map(|p| (0..3).map(|k| (p.position[k] - c[k]).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if r > 0.0 {
            r
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(m: u8) -> ScenePoint {
        let mut p = ScenePoint::with_color([0.0; 3], [0.1; 3], 0.5, [0.2, 0.4, 0.6]);
        for l in 2..=m {
            p.promote(LevelOverride {
                opacity: 0.1 * l as f64,
                sh_dc: [l as f64; 3],
            });
        }
        p
    }

    #[test]
    fn level_sizes_follow_quality_bounds() {
        let model = FrModel::new(vec![point(1), point(3), point(2), point(3)], 3, 0).unwrap();
        assert_eq!(model.level_sizes(), vec![4, 3, 2]);
        assert_eq!(model.level_indices(3), vec![1, 3]);
        assert_eq!(model.override_count(), 2 + 1 + 2);
    }

    #[test]
    fn appearance_selects_override_by_level() {
        let p = point(3);
        assert_eq!(p.appearance_at(1), (0.5, p.sh[0]));
        assert_eq!(p.appearance_at(2), (0.2, [2.0; 3]));
        assert_eq!(p.appearance_at(3).1, [3.0; 3]);
    }

    #[test]
    fn rejects_zero_quaternion_and_bad_scale() {
        let mut p = point(1);
        p.rotation = [0.0; 4];
        let err = FrModel::new(vec![point(1), p], 1, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidPoint { index: 1, .. }));

        let mut p = point(1);
        p.scale[2] = -1.0;
        assert!(matches!(
            FrModel::new(vec![p], 1, 0),
            Err(Error::InvalidPoint { index: 0, .. })
        ));
        let mut p = point(1);
        p.scale[0] = f64::NAN;
        assert!(FrModel::new(vec![p], 1, 0).is_err());
    }

    #[test]
    fn renormalizes_nearly_unit_quaternions() {
        let mut p = point(1);
        p.rotation = [1.0005, 0.0, 0.0, 0.0];
        let model = FrModel::new(vec![p], 1, 0).unwrap();
        assert_eq!(model.points[0].rotation[0], 1.0);
    }

    #[test]
    fn quality_bound_must_fit_level_count() {
        assert!(FrModel::new(vec![point(3)], 2, 0).is_err());
        let mut p = point(2);
        p.overrides.clear();
        assert!(FrModel::new(vec![p], 2, 0).is_err());
    }

    #[test]
    fn sh_dc_roundtrip() {
        let rgb = [0.1, 0.5, 0.9];
        let back = sh_dc_to_rgb(rgb_to_sh_dc(rgb));
        for k in 0..3 {
            assert!((back[k] - rgb[k]).abs() < 1e-12);
        }
    }
}
