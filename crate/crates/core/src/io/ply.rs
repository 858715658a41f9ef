//! PLY import and export using the common splat attribute names:
//! `x y z`, `scale_0..2` (log sigma), `rot_0..3` (w x y z), `opacity`
//! (logit), `f_dc_0..2` and `f_rest_*` stored channel-major.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{FrModel, ScenePoint, MAX_SH_DEGREE, RENORMALIZE_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
    BinaryBe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8], big_endian: bool) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let a: [u8; $n] = b[..$n].try_into().unwrap();
                (if big_endian {
                    <$t>::from_be_bytes(a)
                } else {
                    <$t>::from_le_bytes(a)
                }) as f64
            }};
        }
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => num!(i16, 2),
            Scalar::U16 => num!(u16, 2),
            Scalar::I32 => num!(i32, 4),
            Scalar::U32 => num!(u32, 4),
            Scalar::F32 => num!(f32, 4),
            Scalar::F64 => num!(f64, 8),
        }
    }
}

struct Header {
    encoding: Encoding,
    vertex_count: usize,
    properties: Vec<(String, Scalar)>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0usize;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[offset..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(Error::parse(offset as u64, "header not terminated by end_header"));
        };
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| Error::parse(offset as u64, "header is not valid text"))?
            .trim_end_matches('\r')
            .to_string();
        lines.push((offset, line.clone()));
        offset += nl + 1;
        if line.trim() == "end_header" {
            break;
        }
    }
    if lines.first().map(|(_, l)| l.trim()) != Some("ply") {
        return Err(Error::parse(0, "missing 'ply' magic line"));
    }
    let mut encoding = None;
    let mut vertex_count = None;
    let mut properties = Vec::new();
    // Which element the following property lines belong to.
    let mut in_vertex = false;
    for (at, line) in &lines[1..] {
        let at = *at as u64;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", fmt, _version] => {
                encoding = Some(match *fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLe,
                    "binary_big_endian" => Encoding::BinaryBe,
                    other => return Err(Error::parse(at, format!("unknown format '{other}'"))),
                });
            }
            ["comment", ..] | ["obj_info", ..] | ["end_header"] => {}
            ["element", name, count] => {
                let count: usize = count
                    .parse()
                    .map_err(|_| Error::parse(at, format!("bad element count '{count}'")))?;
                if *name == "vertex" {
                    if vertex_count.is_some() {
                        return Err(Error::parse(at, "duplicate vertex element"));
                    }
                    vertex_count = Some(count);
                    in_vertex = true;
                } else {
                    if vertex_count.is_none() {
                        return Err(Error::parse(at, "elements before 'vertex' are not supported"));
                    }
                    in_vertex = false;
                }
            }
            ["property", "list", ..] => {
                if in_vertex {
                    return Err(Error::parse(at, "list properties on vertices are not supported"));
                }
            }
            ["property", ty, name] => {
                if in_vertex {
                    let scalar = Scalar::parse(ty)
                        .ok_or_else(|| Error::parse(at, format!("unknown property type '{ty}'")))?;
                    properties.push((name.to_string(), scalar));
                }
            }
            _ => return Err(Error::parse(at, format!("unrecognised header line '{line}'"))),
        }
    }
    Ok(Header {
        encoding: encoding.ok_or_else(|| Error::parse(0, "missing format line"))?,
        vertex_count: vertex_count.ok_or_else(|| Error::parse(0, "missing vertex element"))?,
        properties,
        body_offset: offset,
    })
}

/// Reads all vertex rows as `f64`, row-major.
fn read_rows(bytes: &[u8], h: &Header) -> Result<Vec<f64>> {
    let width = h.properties.len();
    let mut values = Vec::with_capacity(h.vertex_count * width);
    match h.encoding {
        Encoding::Ascii => {
            let body = &bytes[h.body_offset..];
            let mut pos = 0usize;
            for row in 0..h.vertex_count {
                let line_start = pos;
                let nl = body[pos..].iter().position(|&b| b == b'\n').unwrap_or(body.len() - pos);
                let line = std::str::from_utf8(&body[pos..pos + nl]).map_err(|_| {
                    Error::parse((h.body_offset + line_start) as u64, "vertex row is not text")
                })?;
                pos = (pos + nl + 1).min(body.len());
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() < width {
                    return Err(Error::parse(
                        (h.body_offset + line_start) as u64,
                        format!("vertex {row} has {} values, expected {width}", fields.len()),
                    ));
                }
                for f in &fields[..width] {
                    values.push(f.parse::<f64>().map_err(|_| {
                        Error::parse(
                            (h.body_offset + line_start) as u64,
                            format!("vertex {row}: bad number '{f}'"),
                        )
                    })?);
                }
            }
        }
        Encoding::BinaryLe | Encoding::BinaryBe => {
            let big = h.encoding == Encoding::BinaryBe;
            let stride: usize = h.properties.iter().map(|(_, s)| s.size()).sum();
            let needed = stride
                .checked_mul(h.vertex_count)
                .ok_or_else(|| Error::parse(h.body_offset as u64, "vertex count overflows"))?;
            if bytes.len() - h.body_offset < needed {
                return Err(Error::parse(
                    bytes.len() as u64,
                    format!(
                        "file ends inside vertex data: need {needed} bytes, have {}",
                        bytes.len() - h.body_offset
                    ),
                ));
            }
            let mut pos = h.body_offset;
            for _ in 0..h.vertex_count {
                for (_, s) in &h.properties {
                    values.push(s.read(&bytes[pos..], big));
                    pos += s.size();
                }
            }
        }
    }
    Ok(values)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

pub fn decode(bytes: &[u8]) -> Result<FrModel> {
    let h = parse_header(bytes)?;
    let column: HashMap<&str, usize> = h
        .properties
        .iter()
        .enumerate()
        .map(|(i, (n, _))| (n.as_str(), i))
        .collect();
    let need = |name: &str| -> Result<usize> {
        column
            .get(name)
            .copied()
            .ok_or_else(|| Error::parse(0, format!("missing vertex property '{name}'")))
    };
    let xyz = [need("x")?, need("y")?, need("z")?];
    let scale = [need("scale_0")?, need("scale_1")?, need("scale_2")?];
    let rot = [need("rot_0")?, need("rot_1")?, need("rot_2")?, need("rot_3")?];
    let opacity = need("opacity")?;
    let dc = [need("f_dc_0")?, need("f_dc_1")?, need("f_dc_2")?];
    let rest_count = (0..).take_while(|k| column.contains_key(format!("f_rest_{k}").as_str())).count();
    let per_channel = rest_count / 3;
    let degree = (0..=MAX_SH_DEGREE)
        .find(|&d| (d as usize + 1).pow(2) - 1 == per_channel && rest_count % 3 == 0)
        .ok_or_else(|| {
            Error::parse(0, format!("{rest_count} f_rest properties match no SH degree <= 3"))
        })?;
    let rest: Vec<usize> = (0..rest_count).map(|k| column[format!("f_rest_{k}").as_str()]).collect();

    let width = h.properties.len();
    let values = read_rows(bytes, &h)?;
    let mut points = Vec::with_capacity(h.vertex_count);
    for i in 0..h.vertex_count {
        let row = &values[i * width..(i + 1) * width];
        let bad = |message: String| Error::InvalidPoint { index: i, message };
        let s = scale.map(|c| row[c].exp());
        if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(bad(format!("non-positive or non-finite scale {:?}", s)));
        }
        let q = rot.map(|c| row[c]);
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > RENORMALIZE_EPS {
            return Err(bad(format!("quaternion norm {norm} is not unit")));
        }
        let mut sh = vec![dc.map(|c| row[c])];
        for k in 0..per_channel {
            sh.push([
                row[rest[k]],
                row[rest[per_channel + k]],
                row[rest[2 * per_channel + k]],
            ]);
        }
        points.push(ScenePoint {
            position: xyz.map(|c| row[c]),
            scale: s,
            rotation: q,
            opacity: sigmoid(row[opacity]),
            sh,
            quality_bound: 1,
            overrides: Vec::new(),
        });
    }
    FrModel::new(points, 1, degree)
}

/// Writes the level-1 attributes as a binary little-endian PLY with `float`
/// properties. Level overrides are not representable and are dropped.
pub fn encode(model: &FrModel) -> Result<Vec<u8>> {
    let per_channel = (model.sh_degree as usize + 1).pow(2) - 1;
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header += &format!("element vertex {}\n", model.points.len());
    for name in ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"] {
        header += &format!("property float {name}\n");
    }
    for k in 0..3 * per_channel {
        header += &format!("property float f_rest_{k}\n");
    }
    for name in ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"] {
        header += &format!("property float {name}\n");
    }
    header += "end_header\n";
    let mut out = header.into_bytes();
    let mut put = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
    for p in &model.points {
        p.position.iter().for_each(|&v| put(v));
        p.sh[0].iter().for_each(|&v| put(v));
        for c in 0..3 {
            for k in 1..=per_channel {
                put(p.sh[k][c]);
            }
        }
        put(logit(p.opacity));
        p.scale.iter().for_each(|&v| put(v.ln()));
        p.rotation.iter().for_each(|&v| put(v));
    }
    Ok(out)
}
