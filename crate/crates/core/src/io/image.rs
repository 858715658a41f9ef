//! 8-bit PNG and raw float image files.

use std::path::Path;

use crate::error::{Error, Result};

/// Quantises a `[0, 1]` channel to 8 bits.
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn to_rgb8(image: &[[f64; 3]]) -> Vec<u8> {
    image.iter().flat_map(|p| p.map(to_u8)).collect()
}

pub fn encode_png(width: u32, height: u32, image: &[[f64; 3]]) -> Result<Vec<u8>> {
    check_len(width, height, image.len())?;
    let mut out = Vec::new();
    let encoder = ::image::codecs::png::PngEncoder::new(&mut out);
    ::image::ImageEncoder::write_image(
        encoder,
        &to_rgb8(image),
        width,
        height,
        ::image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| Error::Image(e.to_string()))?;
    Ok(out)
}

pub fn write_png(path: &Path, width: u32, height: u32, image: &[[f64; 3]]) -> Result<()> {
    let bytes = encode_png(width, height, image)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads any 8-bit PNG as RGB in `[0, 1]`.
pub fn read_png(path: &Path) -> Result<(u32, u32, Vec<[f64; 3]>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = ::image::load_from_memory_with_format(&bytes, ::image::ImageFormat::Png)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let pixels = img
        .pixels()
        .map(|p| p.0.map(|c| c as f64 / 255.0))
        .collect();
    Ok((w, h, pixels))
}

const RAW_MAGIC: &[u8; 4] = b"RGBF";

/// Raw float image: magic, width u32, height u32, then RGB `f32` rows, all
/// little endian.
pub fn encode_raw(width: u32, height: u32, image: &[[f64; 3]]) -> Result<Vec<u8>> {
    check_len(width, height, image.len())?;
    let mut out = Vec::with_capacity(12 + image.len() * 12);
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    for p in image {
        for c in p {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_raw(bytes: &[u8]) -> Result<(u32, u32, Vec<[f64; 3]>)> {
    if bytes.len() < 12 || &bytes[..4] != RAW_MAGIC {
        return Err(Error::parse(0, "not a raw float image"));
    }
    let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let n = w as usize * h as usize;
    if bytes.len() != 12 + 12 * n {
        return Err(Error::parse(12, format!("expected {} bytes of pixel data", 12 * n)));
    }
    let px = bytes[12..]
        .chunks_exact(12)
        .map(|c| {
            let f = |k: usize| f32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap()) as f64;
            [f(0), f(1), f(2)]
        })
        .collect();
    Ok((w, h, px))
}

/// Loads a PNG or a raw float image, chosen by extension.
pub fn read_image(path: &Path) -> Result<(u32, u32, Vec<[f64; 3]>)> {
    if path.extension().and_then(|e| e.to_str()) == Some("png") {
        read_png(path)
    } else {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        decode_raw(&bytes)
    }
}

fn check_len(width: u32, height: u32, len: usize) -> Result<()> {
    let n = width as usize * height as usize;
    if n != len {
        return Err(Error::DimensionMismatch {
            expected: (width as usize, height as usize),
            actual: (len, 1),
        });
    }
    Ok(())
}
