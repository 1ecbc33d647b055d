//! Binary file formats: TXL1 taxel arrays, PFM float images, PGM previews.
//!
//! TXL1 layout (little-endian): `b"TXL1"`, `u32` count N, N × `f32` values,
//! `u32` CRC-32 of all preceding bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::PixelGrid;
use crate::interp::{ArraySample, TactileImage};

pub const TXL_MAGIC: &[u8; 4] = b"TXL1";

pub fn encode_txl(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * values.len());
    out.extend_from_slice(TXL_MAGIC);
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode_txl(bytes: &[u8], path: &Path) -> Result<Vec<f64>> {
    if bytes.len() < 8 {
        return Err(Error::format(bytes.len() as u64, "truncated TXL1 header"));
    }
    if &bytes[..4] != TXL_MAGIC {
        return Err(Error::format(0, "bad magic, expected TXL1"));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body_end = 8 + 4 * n;
    if bytes.len() < body_end + 4 {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated TXL1 payload: {n} values need {} bytes", body_end + 4),
        ));
    }
    if bytes.len() > body_end + 4 {
        return Err(Error::format(
            (body_end + 4) as u64,
            "trailing bytes after TXL1 checksum",
        ));
    }
    let stored = u32::from_le_bytes(bytes[body_end..body_end + 4].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(Error::ChecksumMismatch {
            path: path.to_path_buf(),
            expected: format!("{stored:08x}"),
            found: format!("{computed:08x}"),
        });
    }
    Ok(bytes[8..body_end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect())
}

pub fn write_txl(path: &Path, values: &[f64]) -> Result<()> {
    std::fs::write(path, encode_txl(values)).map_err(|e| Error::io(path, e))
}

pub fn read_txl(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_txl(&bytes, path)
}

pub fn read_array(path: &Path) -> Result<ArraySample> {
    ArraySample::new(read_txl(path)?)
}

/// Little-endian PFM, first stored row = image row 0 (bottom, smallest y).
pub fn encode_pfm(img: &TactileImage) -> Vec<u8> {
    let header = format!("Pf\n{} {}\n-1.0\n", img.cols(), img.rows());
    let mut out = Vec::with_capacity(header.len() + 4 * img.data().len());
    out.extend_from_slice(header.as_bytes());
    for &v in img.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Decoded PFM payload: `(rows, cols, data)`.
pub fn decode_pfm(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    // Three whitespace-terminated header tokens after the "Pf" line.
    let mut pos = 0usize;
    let mut token = |what: &str| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos || pos >= bytes.len() {
            return Err(Error::format(
                start as u64,
                format!("truncated PFM header: missing {what}"),
            ));
        }
        let t = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        Ok(t)
    };
    let magic = token("magic")?;
    if magic != "Pf" {
        return Err(Error::format(
            0,
            format!("expected single-channel PFM magic Pf, got {magic:?}"),
        ));
    }
    let cols: usize = token("width")?.parse().map_err(|_| Error::format(3, "bad PFM width"))?;
    let rows: usize = token("height")?
        .parse()
        .map_err(|_| Error::format(3, "bad PFM height"))?;
    let scale: f64 = token("scale")?.parse().map_err(|_| Error::format(3, "bad PFM scale"))?;
    if scale >= 0.0 {
        return Err(Error::format(3, "big-endian PFM is not supported"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let need = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(3, "PFM dimensions overflow"))?;
    if bytes.len() < start + need {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated PFM raster: expected {need} bytes after offset {start}"),
        ));
    }
    if bytes.len() > start + need {
        return Err(Error::format((start + need) as u64, "trailing bytes after PFM raster"));
    }
    let data = bytes[start..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok((rows, cols, data))
}

pub fn write_pfm(path: &Path, img: &TactileImage) -> Result<()> {
    std::fs::write(path, encode_pfm(img)).map_err(|e| Error::io(path, e))
}

/// Reads a PFM and attaches it to `grid`, which must match its size.
pub fn read_pfm(path: &Path, grid: &PixelGrid) -> Result<TactileImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (rows, cols, data) = decode_pfm(&bytes)?;
    if rows != grid.rows || cols != grid.cols {
        return Err(Error::ShapeMismatch(format!(
            "{}: {cols}x{rows} image, grid is {}x{}",
            path.display(),
            grid.cols,
            grid.rows
        )));
    }
    TactileImage::new(*grid, data)
}

/// Min-max normalized 8-bit preview, top row = largest y. Returns the bytes
/// and the `(min, max)` used for scaling.
pub fn to_gray(img: &TactileImage) -> (Vec<u8>, (f64, f64)) {
    let (lo, hi) = (img.min(), img.max());
    let span = hi - lo;
    let mut out = Vec::with_capacity(img.data().len());
    for r in (0..img.rows()).rev() {
        for c in 0..img.cols() {
            let v = if span > 0.0 { (img.get(r, c) - lo) / span } else { 0.0 };
            out.push((v * 255.0).round() as u8);
        }
    }
    (out, (lo, hi))
}

pub fn encode_pgm(cols: usize, rows: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn write_pgm(path: &Path, cols: usize, rows: usize, pixels: &[u8]) -> Result<()> {
    std::fs::write(path, encode_pgm(cols, rows, pixels)).map_err(|e| Error::io(path, e))
}
