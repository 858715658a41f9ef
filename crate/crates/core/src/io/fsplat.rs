//! Native multi-level model format.
//!
//! All values little endian. Layout:
//!
//! ```text
//! magic "FSPL" | version u32 | level_count u32 | sh_degree u32 | point_count u64
//! positions   f64 x 3N
//! scales      f64 x 3N
//! rotations   f64 x 4N      (w, x, y, z)
//! opacities   f64 x N
//! sh          f64 x 3CN     (point-major, then coefficient, then channel)
//! quality     u8  x N
//! overrides   u64 count, then count x (opacity, dc_r, dc_g, dc_b) f64
//! ```
//!
//! Override records are sorted by (point, level). Since every point with
//! bound `m` has exactly `m - 1` records, the point and level of each
//! record follow from the quality column and are not stored.

use crate::error::{Error, Result};
use crate::model::{sh_coeff_count, FrModel, LevelOverride, ScenePoint, MAX_SH_DEGREE};

pub const MAGIC: &[u8; 4] = b"FSPL";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 24;
/// Bytes per override record.
pub const OVERRIDE_BYTES: usize = 4 * 8;

/// Size in bytes of a model with no overrides.
pub fn base_size(point_count: usize, sh_degree: u8) -> usize {
    let per_point = 8 * (3 + 3 + 4 + 1 + 3 * sh_coeff_count(sh_degree)) + 1;
    HEADER_BYTES + point_count * per_point + 8
}

pub fn encode(model: &FrModel) -> Vec<u8> {
    let n = model.points.len();
    let mut out = Vec::with_capacity(
        base_size(n, model.sh_degree) + OVERRIDE_BYTES * model.override_count(),
    );
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.level_count as u32).to_le_bytes());
    out.extend_from_slice(&(model.sh_degree as u32).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
    for p in &model.points {
        p.position.iter().for_each(|&v| put(v));
    }
    for p in &model.points {
        p.scale.iter().for_each(|&v| put(v));
    }
    for p in &model.points {
        p.rotation.iter().for_each(|&v| put(v));
    }
    for p in &model.points {
        put(p.opacity);
    }
    for p in &model.points {
        p.sh.iter().flatten().for_each(|&v| put(v));
    }
    out.extend(model.points.iter().map(|p| p.quality_bound));
    out.extend_from_slice(&(model.override_count() as u64).to_le_bytes());
    for p in &model.points {
        for o in &p.overrides {
            out.extend_from_slice(&o.opacity.to_le_bytes());
            for v in o.sh_dc {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse(
                self.pos as u64,
                format!("unexpected end of file reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(count.checked_mul(8).ok_or_else(|| self.overflow())?, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn overflow(&self) -> Error {
        Error::parse(self.pos as u64, "point count overflows")
    }
}

pub fn decode(bytes: &[u8]) -> Result<FrModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::parse(0, "bad magic, not an fsplat file"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::parse(4, format!("unsupported version {version}")));
    }
    let level_count = r.u32("level count")?;
    if level_count == 0 || level_count > u8::MAX as u32 {
        return Err(Error::parse(8, format!("invalid level count {level_count}")));
    }
    let sh_degree = r.u32("SH degree")?;
    if sh_degree > MAX_SH_DEGREE as u32 {
        return Err(Error::parse(12, format!("invalid SH degree {sh_degree}")));
    }
    let n64 = r.u64("point count")?;
    let coeffs = sh_coeff_count(sh_degree as u8);
    let per_point = 8 * (11 + 3 * coeffs) + 1;
    if n64 > ((bytes.len() - HEADER_BYTES) / per_point) as u64 {
        return Err(Error::parse(
            16,
            format!("point count {n64} exceeds the file size"),
        ));
    }
    let n = n64 as usize;
    let pos = r.f64s(3 * n, "positions")?;
    let scale = r.f64s(3 * n, "scales")?;
    let rot = r.f64s(4 * n, "rotations")?;
    let opacity = r.f64s(n, "opacities")?;
    let sh = r.f64s(3 * coeffs * n, "SH coefficients")?;
    let quality_offset = r.pos;
    let quality = r.take(n, "quality bounds")?.to_vec();
    for (i, &m) in quality.iter().enumerate() {
        if m == 0 || m as u32 > level_count {
            return Err(Error::parse(
                (quality_offset + i) as u64,
                format!("quality bound {m} of point {i} outside [1, {level_count}]"),
            ));
        }
    }
    let table_offset = r.pos;
    let records = r.u64("override count")?;
    let expected: u64 = quality.iter().map(|&m| m as u64 - 1).sum();
    if records != expected {
        return Err(Error::parse(
            table_offset as u64,
            format!("override table has {records} records, quality bounds imply {expected}"),
        ));
    }
    let table = r.f64s(4 * records as usize, "override table")?;
    if r.pos != bytes.len() {
        return Err(Error::parse(r.pos as u64, "trailing bytes after override table"));
    }

    let mut cursor = table.chunks_exact(4);
    let points = (0..n)
        .map(|i| ScenePoint {
            position: [pos[3 * i], pos[3 * i + 1], pos[3 * i + 2]],
            scale: [scale[3 * i], scale[3 * i + 1], scale[3 * i + 2]],
            rotation: [rot[4 * i], rot[4 * i + 1], rot[4 * i + 2], rot[4 * i + 3]],
            opacity: opacity[i],
            sh: (0..coeffs)
                .map(|k| {
                    let b = 3 * (i * coeffs + k);
                    [sh[b], sh[b + 1], sh[b + 2]]
                })
                .collect(),
            quality_bound: quality[i],
            overrides: (1..quality[i])
                .map(|_| {
                    let c = cursor.next().expect("record count checked above");
                    LevelOverride {
                        opacity: c[0],
                        sh_dc: [c[1], c[2], c[3]],
                    }
                })
                .collect(),
        })
        .collect();
    FrModel::new(points, level_count as u8, sh_degree as u8)
}
