//! Model, image and workload file formats.

pub mod fsplat;
pub mod image;
pub mod ply;
pub mod workload;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FrModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFormat {
    /// PLY point cloud with the usual splat attribute names.
    StandardSplat,
    Fsplat,
}

impl ModelFormat {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ply") => Ok(ModelFormat::StandardSplat),
            Some("fsplat") => Ok(ModelFormat::Fsplat),
            _ => Err(Error::Config(format!(
                "cannot infer model format from {}; use .ply or .fsplat",
                path.display()
            ))),
        }
    }
}

pub fn load_model(path: &Path, format: ModelFormat) -> Result<FrModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        ModelFormat::StandardSplat => ply::decode(&bytes),
        ModelFormat::Fsplat => fsplat::decode(&bytes),
    }
}

pub fn save_model(model: &FrModel, path: &Path, format: ModelFormat) -> Result<()> {
    let bytes = match format {
        ModelFormat::StandardSplat => ply::encode(model)?,
        ModelFormat::Fsplat => fsplat::encode(model),
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
