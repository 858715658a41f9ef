//! Per-tile intersection counts exchanged between the renderer and the
//! simulator, as JSON or as a compact binary array.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{RenderOutput, TileWorkload};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadFile {
    pub tiles_x: u32,
    pub tiles_y: u32,
    pub tile_size: u32,
    /// Intersections per tile in row-major (arrival) order.
    pub counts: Vec<u32>,
}

const MAGIC: &[u8; 4] = b"FWKL";

impl WorkloadFile {
    pub fn from_output(out: &RenderOutput) -> Self {
        WorkloadFile {
            tiles_x: out.grid.tiles_x,
            tiles_y: out.grid.tiles_y,
            tile_size: out.grid.tile_size,
            counts: out.tile_workloads.iter().map(|t| t.splats.len() as u32).collect(),
        }
    }

    pub fn from_counts(tiles_x: u32, counts: Vec<u32>) -> Self {
        let tiles_x = tiles_x.max(1);
        WorkloadFile {
            tiles_x,
            tiles_y: (counts.len() as u32).div_ceil(tiles_x),
            tile_size: 16,
            counts,
        }
    }

    /// Tile workloads carrying counts only (splat lists hold placeholder ids).
    pub fn tiles(&self) -> Vec<TileWorkload> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| TileWorkload {
                tile: (i as u32 % self.tiles_x, i as u32 / self.tiles_x),
                splats: vec![0; c as usize],
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.tiles_x == 0 || self.counts.len() > self.tiles_x as usize * self.tiles_y as usize {
            return Err(Error::InvalidModel(format!(
                "{} tile counts do not fit a {}x{} grid",
                self.counts.len(),
                self.tiles_x,
                self.tiles_y
            )));
        }
        Ok(())
    }

    pub fn encode_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 4 * self.counts.len());
        out.extend_from_slice(MAGIC);
        for v in [self.tiles_x, self.tiles_y, self.tile_size, self.counts.len() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for c in &self.counts {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn decode_binary(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..4] != MAGIC {
            return Err(Error::parse(0, "not a binary workload file"));
        }
        let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap());
        let n = word(3) as usize;
        if bytes.len() != 20 + 4 * n {
            return Err(Error::parse(16, format!("expected {n} tile counts")));
        }
        let w = WorkloadFile {
            tiles_x: word(0),
            tiles_y: word(1),
            tile_size: word(2),
            counts: bytes[20..]
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        w.validate()?;
        Ok(w)
    }

    /// JSON for `.json` paths, binary otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = if is_json(path) {
            serde_json::to_vec_pretty(self).expect("workload serialises")
        } else {
            self.encode_binary()
        };
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if is_json(path) {
            let w: WorkloadFile = serde_json::from_slice(&bytes).map_err(|e| {
                Error::parse(0, format!("{}: {e}", path.display()))
            })?;
            w.validate()?;
            Ok(w)
        } else {
            Self::decode_binary(&bytes)
        }
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_and_json_roundtrip() {
        let w = WorkloadFile::from_counts(2, vec![10, 3, 4, 50]);
        assert_eq!(WorkloadFile::decode_binary(&w.encode_binary()).unwrap(), w);
        let dir = tempfile::tempdir().unwrap();
        for name in ["w.json", "w.bin"] {
            let p = dir.path().join(name);
            w.save(&p).unwrap();
            assert_eq!(WorkloadFile::load(&p).unwrap(), w);
        }
        assert_eq!(w.tiles()[3].tile, (1, 1));
    }
}
