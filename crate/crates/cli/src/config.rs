//! Job configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use fovsplat::camera::Orbit;
use fovsplat::foveation::FoveationConfig;
use fovsplat::hvs::HvsConfig;
use fovsplat::loss::LossKind;
use fovsplat::prune::TrainConfig;
use fovsplat::raster::RasterSettings;
use fovsplat::sim::CostModel;
use fovsplat::synthetic::Layout;
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Render,
    Prune,
    TrainFr,
    Hvsq,
    Simulate,
    Stats,
    Serve,
    Synth,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobConfig {
    /// Checked against the subcommand when both are given.
    pub command: Option<Command>,
    pub seed: u64,
    pub paths: Paths,
    pub synth: SynthSection,
    pub views: Views,
    pub render: RenderSection,
    pub prune: PruneSection,
    pub derive: DeriveSection,
    pub simulate: SimulateSection,
    pub serve: ServeSection,
    pub display: DisplaySection,
    pub raster: RasterSettings,
    pub foveation: FoveationConfig,
    pub hvs: HvsConfig,
    pub train: TrainConfig,
    pub cost: CostModel,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Input model, `.fsplat` or `.ply`.
    pub model: Option<PathBuf>,
    /// Output directory.
    pub output: Option<PathBuf>,
    /// Reference images for `views.reference = "images"`, one per view.
    pub references: Vec<PathBuf>,
    pub reference_image: Option<PathBuf>,
    pub altered_image: Option<PathBuf>,
    pub workload: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub layout: Layout,
    pub point_count: usize,
    pub footprint: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            layout: Layout::TexturedPlane,
            point_count: 2000,
            footprint: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// Renders of the input model itself.
    Model,
    /// Exact images of the synthetic textured plane.
    Plane,
    /// Files listed in `paths.references`.
    Images,
}

/// Ring of training and evaluation cameras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Views {
    pub count: usize,
    pub width: u32,
    pub height: u32,
    pub elevation: f64,
    pub radius: f64,
    pub fov_deg: f64,
    pub azimuth_offset: f64,
    pub reference: ReferenceKind,
}

impl Default for Views {
    fn default() -> Self {
        Views {
            count: 6,
            width: 128,
            height: 96,
            elevation: fovsplat::synthetic::ORBIT_ELEVATION,
            radius: fovsplat::synthetic::ORBIT_RADIUS,
            fov_deg: fovsplat::synthetic::ORBIT_FOV,
            azimuth_offset: 0.0,
            reference: ReferenceKind::Model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub width: u32,
    pub height: u32,
    pub orbit: Orbit,
    pub foveated: bool,
    /// Level drawn when not foveated.
    pub level: u8,
}

impl Default for RenderSection {
    fn default() -> Self {
        RenderSection {
            width: 640,
            height: 360,
            orbit: Orbit::default(),
            foveated: false,
            level: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneSection {
    pub loss: LossKind,
}

impl Default for PruneSection {
    fn default() -> Self {
        PruneSection { loss: LossKind::L1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeriveSection {
    /// Allowed relative quality loss per level.
    pub tau: f64,
}

impl Default for DeriveSection {
    fn default() -> Self {
        DeriveSection { tau: 0.1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Points projected per frame; only the projection prologue depends on it.
    pub points: usize,
}

pub const BIND_ENV: &str = "FOVSPLAT_BIND";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub bind: String,
    pub width: u32,
    pub height: u32,
    pub pixels_per_degree: f64,
    pub orbit: Orbit,
}

impl Default for ServeSection {
    fn default() -> Self {
        ServeSection {
            bind: "127.0.0.1:8765".into(),
            width: 640,
            height: 360,
            pixels_per_degree: 8.0,
            orbit: Orbit::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisplaySection {
    pub pixels_per_degree: f64,
    /// Gaze in pixels; the image centre when absent.
    pub gaze: Option<[f64; 2]>,
}

impl Default for DisplaySection {
    fn default() -> Self {
        DisplaySection {
            pixels_per_degree: fovsplat::camera::DEFAULT_PIXELS_PER_DEGREE,
            gaze: None,
        }
    }
}

impl DisplaySection {
    pub fn geometry(&self, width: u32, height: u32) -> fovsplat::Result<fovsplat::DisplayGeometry> {
        match self.gaze {
            Some(g) => fovsplat::DisplayGeometry::new(width, height, self.pixels_per_degree, g),
            None => fovsplat::DisplayGeometry::centered(width, height, self.pixels_per_degree),
        }
    }
}

/// Sets `key` (dotted path) in `table` to `value`, parsed as a TOML value
/// when possible and as a bare string otherwise.
pub fn set_key(table: &mut toml::Table, key: &str, value: &str) -> Result<(), Failure> {
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    set_value(table, key, parsed)
}

pub fn set_value(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), Failure> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Failure::Config(format!("bad key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Failure::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn read_table(path: &Path) -> Result<toml::Table, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

impl JobConfig {
    pub fn from_table(table: toml::Table) -> Result<Self, Failure> {
        let config: JobConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Failure::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), Failure> {
        let check = |r: fovsplat::Result<()>| r.map_err(Failure::from);
        check(self.foveation.validate())?;
        check(self.train.validate())?;
        check(self.cost.validate())?;
        if self.raster.tile_size == 0 {
            return Err(Failure::Config("raster.tile_size must be positive".into()));
        }
        if self.views.count == 0 || self.views.width == 0 || self.views.height == 0 {
            return Err(Failure::Config("views need a positive count and size".into()));
        }
        if !(self.derive.tau >= 0.0) {
            return Err(Failure::Config("derive.tau must be >= 0".into()));
        }
        Ok(())
    }

    pub fn model_path(&self) -> Result<&Path, Failure> {
        self.paths
            .model
            .as_deref()
            .ok_or_else(|| Failure::Config("no model given (paths.model or --model)".into()))
    }

    pub fn output_dir(&self) -> Result<&Path, Failure> {
        self.paths
            .output
            .as_deref()
            .ok_or_else(|| Failure::Config("no output directory given (paths.output or --out)".into()))
    }

    pub fn workload_path(&self) -> Result<&Path, Failure> {
        self.paths
            .workload
            .as_deref()
            .ok_or_else(|| Failure::Config("no workload file given".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_key_builds_nested_tables() {
        let mut t = toml::Table::new();
        set_key(&mut t, "train.gamma", "0.3").unwrap();
        set_key(&mut t, "paths.model", "a b.fsplat").unwrap();
        set_key(&mut t, "foveation.boundaries", "[0.0, 10.0, 20.0, 30.0]").unwrap();
        let c = JobConfig::from_table(t).unwrap();
        assert_eq!(c.train.gamma, 0.3);
        assert_eq!(c.paths.model, Some(PathBuf::from("a b.fsplat")));
        assert_eq!(c.foveation.boundaries[1], 10.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for key in ["colour", "train.gama", "raster.tile"] {
            let mut t = toml::Table::new();
            set_key(&mut t, key, "1").unwrap();
            assert!(matches!(JobConfig::from_table(t), Err(Failure::Config(_))), "{key}");
        }
    }

    #[test]
    fn defaults_validate() {
        JobConfig::from_table(toml::Table::new()).unwrap();
    }
}
