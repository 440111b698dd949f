//! Raster file formats.
//!
//! * 16-bit binary PGM (`P5`, maxval 65535, big-endian samples) for images.
//!   The DN bit depth defaults to 14; a `<file>.meta.json` sidecar with a
//!   `bit_depth` key overrides it.
//! * `DSPF`: 4-byte magic, width and height as little-endian `u32`, then
//!   row-major little-endian `f32` samples. Used for images, disparity maps
//!   and residual fields. Invalid disparity entries hold [`INVALID_NAN_BITS`].
//! * `DSPM`: 4-byte magic, width and height as little-endian `u32`, then the
//!   validity mask as packed bits (MSB first, 1 = valid), each row padded to a
//!   byte boundary. Lives next to its `DSPF` file with the `.dspm` extension.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{DisparityMap, ImageGrid, ResidualField, DEFAULT_BIT_DEPTH};

pub const FLOAT_MAGIC: &[u8; 4] = b"DSPF";
pub const MASK_MAGIC: &[u8; 4] = b"DSPM";

/// Quiet NaN with a reserved payload marking invalid disparity samples.
pub const INVALID_NAN_BITS: u32 = 0x7FC0_0D5F;

const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    Pgm,
    Float,
}

impl RasterFormat {
    /// Picks a format from the file extension: `.pgm` or `.dspf`.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("pgm") => Ok(RasterFormat::Pgm),
            Some("dspf") => Ok(RasterFormat::Float),
            _ => Err(Error::contract(format!(
                "{}: unknown raster extension (expected .pgm or .dspf)",
                path.display()
            ))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    bit_depth: u32,
}

/// Path of the metadata sidecar for a raster file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Path of the validity mask accompanying a `DSPF` file.
pub fn mask_path(path: &Path) -> PathBuf {
    path.with_extension("dspm")
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_bit_depth(path: &Path) -> Result<u32> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(DEFAULT_BIT_DEPTH);
    }
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: Sidecar = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: side.clone(),
        source,
    })?;
    Ok(meta.bit_depth)
}

fn write_bit_depth(path: &Path, bit_depth: u32) -> Result<()> {
    let side = sidecar_path(path);
    if bit_depth == DEFAULT_BIT_DEPTH {
        if side.exists() {
            fs::remove_file(&side).map_err(|e| Error::io(&side, e))?;
        }
        return Ok(());
    }
    let text = serde_json::to_string(&Sidecar { bit_depth }).expect("sidecar serializes");
    write_bytes(&side, text.as_bytes())
}

/// Reads an image in either supported format, chosen by extension.
pub fn read_raster(path: &Path) -> Result<ImageGrid> {
    let bit_depth = read_bit_depth(path)?;
    let bytes = read_bytes(path)?;
    let img = match RasterFormat::from_path(path)? {
        RasterFormat::Pgm => decode_pgm(&bytes, bit_depth)?,
        RasterFormat::Float => {
            let (w, h, values) = decode_float(&bytes)?;
            let max = ((1u32 << bit_depth) - 1) as f64;
            for (index, &v) in values.iter().enumerate() {
                if v.is_nan() {
                    return Err(Error::format(
                        (HEADER_LEN + 4 * index) as u64,
                        "NaN sample in image raster",
                    ));
                }
                if !(0.0..=max).contains(&v) {
                    return Err(Error::Range {
                        value: v,
                        index,
                        bit_depth,
                    });
                }
            }
            ImageGrid::new(w, h, bit_depth, values)?
        }
    };
    Ok(img)
}

/// Writes an image. PGM samples are rounded to the nearest integer and
/// clamped to the DN range; the float format stores `f32` samples.
pub fn write_raster(img: &ImageGrid, path: &Path) -> Result<()> {
    let bytes = match RasterFormat::from_path(path)? {
        RasterFormat::Pgm => encode_pgm(img),
        RasterFormat::Float => encode_float(img.width(), img.height(), img.pixels()),
    };
    write_bytes(path, &bytes)?;
    write_bit_depth(path, img.bit_depth())
}

/// Encodes an image as a 16-bit binary PGM.
pub fn encode_pgm(img: &ImageGrid) -> Vec<u8> {
    let header = format!("P5\n{} {}\n65535\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + 2 * img.pixels().len());
    out.extend_from_slice(header.as_bytes());
    let max = img.max_dn();
    for &p in img.pixels() {
        let v = p.round().clamp(0.0, max) as u16;
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start as u64, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(start as u64, format!("{what} out of range")))
    }
}

/// Decodes a 16-bit binary PGM, checking every sample against `bit_depth`.
pub fn decode_pgm(bytes: &[u8], bit_depth: u32) -> Result<ImageGrid> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(0, "missing P5 magic"));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 65535 {
        return Err(Error::format(
            maxval_at as u64,
            format!("maxval {maxval} unsupported, only 16-bit (65535) PGM is accepted"),
        ));
    }
    match bytes.get(cur.pos) {
        Some(b' ' | b'\t' | b'\n' | b'\r') => cur.pos += 1,
        _ => {
            return Err(Error::format(
                cur.pos as u64,
                "expected single whitespace after maxval",
            ))
        }
    }
    let data = &bytes[cur.pos..];
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::format(2, "image dimensions overflow"))?;
    if data.len() < 2 * n {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated sample data: {} of {} bytes", data.len(), 2 * n),
        ));
    }
    let max = (1u32 << bit_depth) - 1;
    let mut pixels = Vec::with_capacity(n);
    for (index, pair) in data[..2 * n].chunks_exact(2).enumerate() {
        let v = u16::from_be_bytes([pair[0], pair[1]]) as u32;
        if v > max {
            return Err(Error::Range {
                value: v as f64,
                index,
                bit_depth,
            });
        }
        pixels.push(v as f64);
    }
    ImageGrid::new(width, height, bit_depth, pixels)
}

fn encode_header(magic: &[u8; 4], width: usize, height: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    out
}

fn decode_header(bytes: &[u8], magic: &[u8; 4]) -> Result<(usize, usize)> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(Error::format(
            0,
            format!(
                "magic mismatch, expected {}",
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len() as u64, "truncated header"));
    }
    let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    Ok((w, h))
}

/// Encodes raw `f32` samples. NaN inputs are written with the reserved payload.
pub fn encode_float(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    let mut out = encode_header(FLOAT_MAGIC, width, height);
    out.reserve(4 * values.len());
    for &v in values {
        let bits = if v.is_nan() {
            INVALID_NAN_BITS
        } else {
            (v as f32).to_bits()
        };
        out.extend_from_slice(&bits.to_le_bytes());
    }
    out
}

pub fn decode_float(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let (w, h) = decode_header(bytes, FLOAT_MAGIC)?;
    let n = w * h;
    let body = &bytes[HEADER_LEN..];
    if body.len() < 4 * n {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated float data: {} of {} bytes", body.len(), 4 * n),
        ));
    }
    let values = body[..4 * n]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok((w, h, values))
}

pub fn encode_mask(width: usize, height: usize, valid: &[bool]) -> Vec<u8> {
    let mut out = encode_header(MASK_MAGIC, width, height);
    let row_bytes = width.div_ceil(8);
    for row in valid.chunks(width.max(1)).take(height) {
        let mut packed = vec![0u8; row_bytes];
        for (x, &ok) in row.iter().enumerate() {
            if ok {
                packed[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.extend_from_slice(&packed);
    }
    out
}

pub fn decode_mask(bytes: &[u8]) -> Result<(usize, usize, Vec<bool>)> {
    let (w, h) = decode_header(bytes, MASK_MAGIC)?;
    let row_bytes = w.div_ceil(8);
    let body = &bytes[HEADER_LEN..];
    if body.len() < row_bytes * h {
        return Err(Error::format(
            bytes.len() as u64,
            format!(
                "truncated mask data: {} of {} bytes",
                body.len(),
                row_bytes * h
            ),
        ));
    }
    let mut valid = Vec::with_capacity(w * h);
    for row in body.chunks_exact(row_bytes.max(1)).take(h) {
        for x in 0..w {
            valid.push(row[x / 8] & (0x80 >> (x % 8)) != 0);
        }
    }
    Ok((w, h, valid))
}

/// Writes a disparity map as `DSPF` plus its `DSPM` mask.
pub fn write_disparity(map: &DisparityMap, path: &Path) -> Result<()> {
    let values: Vec<f64> = map
        .values()
        .iter()
        .zip(map.valid())
        .map(|(&v, &ok)| if ok { v } else { f64::NAN })
        .collect();
    write_bytes(path, &encode_float(map.width(), map.height(), &values))?;
    write_bytes(
        &mask_path(path),
        &encode_mask(map.width(), map.height(), map.valid()),
    )
}

/// Reads a disparity map. Without a `.dspm` companion the mask is derived
/// from the NaN entries.
pub fn read_disparity(path: &Path) -> Result<DisparityMap> {
    let (w, h, mut values) = decode_float(&read_bytes(path)?)?;
    let mpath = mask_path(path);
    let valid = if mpath.exists() {
        let (mw, mh, valid) = decode_mask(&read_bytes(&mpath)?)?;
        if (mw, mh) != (w, h) {
            return Err(Error::format(
                4,
                format!("mask is {mw}x{mh} but raster is {w}x{h}"),
            ));
        }
        for (index, (v, &ok)) in values.iter().zip(&valid).enumerate() {
            if ok && v.is_nan() {
                return Err(Error::format(
                    (HEADER_LEN + 4 * index) as u64,
                    "NaN at a position the mask marks valid",
                ));
            }
        }
        valid
    } else {
        values.iter().map(|v| !v.is_nan()).collect()
    };
    for (v, &ok) in values.iter_mut().zip(&valid) {
        if !ok {
            *v = 0.0;
        }
    }
    DisparityMap::new(w, h, values, valid)
}

pub fn write_residual(field: &ResidualField, path: &Path) -> Result<()> {
    write_disparity(field.map(), path)
}

pub fn read_residual(path: &Path) -> Result<ResidualField> {
    Ok(ResidualField::from_map(read_disparity(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pgm_bytes(w: usize, h: usize, maxval: u32, samples: &[u16]) -> Vec<u8> {
        let mut b = format!("P5\n# test\n{w} {h}\n{maxval}\n").into_bytes();
        for s in samples {
            b.extend_from_slice(&s.to_be_bytes());
        }
        b
    }

    #[test]
    fn constant_pgm_reads_mean() {
        let img = decode_pgm(&pgm_bytes(8, 8, 65535, &[100; 64]), 14).unwrap();
        assert_eq!(img.stats().mean, 100.0);
        assert_eq!(img.bit_depth(), 14);
    }

    #[test]
    fn eight_bit_pgm_is_rejected() {
        match decode_pgm(&pgm_bytes(8, 8, 255, &[0; 64]), 14) {
            Err(Error::Format { offset, .. }) => assert!(offset > 2),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_sample() {
        let mut s = vec![0u16; 64];
        s[5] = 16384;
        assert!(matches!(
            decode_pgm(&pgm_bytes(8, 8, 65535, &s), 14),
            Err(Error::Range { index: 5, .. })
        ));
        assert!(decode_pgm(&pgm_bytes(8, 8, 65535, &s), 16).is_ok());
    }

    #[test]
    fn bad_magic_names_offset_zero() {
        assert!(matches!(
            decode_pgm(b"P2\n8 8\n65535\n", 14),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn pgm_rounds_and_keeps_boundary() {
        let mut px = vec![0.0; 64];
        px[0] = 16383.0;
        px[1] = 77.6;
        let img = ImageGrid::new(8, 8, 14, px).unwrap();
        let back = decode_pgm(&encode_pgm(&img), 14).unwrap();
        assert_eq!(back.pixels()[0], 16383.0);
        assert_eq!(back.pixels()[1], 78.0);
        assert_eq!(back.pixels()[2], 0.0);
    }

    #[test]
    fn truncated_float_is_format_error() {
        let bytes = encode_float(4, 4, &[97.0; 16]);
        assert!(matches!(
            decode_float(&bytes[..bytes.len() - 3]),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            decode_float(&bytes[..6]),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn mask_rows_pad_to_bytes() {
        let valid: Vec<bool> = (0..30).map(|i| i % 3 != 0).collect();
        let bytes = encode_mask(10, 3, &valid);
        assert_eq!(bytes.len(), 12 + 2 * 3);
        let (w, h, back) = decode_mask(&bytes).unwrap();
        assert_eq!((w, h), (10, 3));
        assert_eq!(back, valid);
    }

    #[test]
    fn nan_payload_is_reserved() {
        let bytes = encode_float(1, 1, &[f64::NAN]);
        assert_eq!(
            u32::from_le_bytes(bytes[12..16].try_into().unwrap()),
            INVALID_NAN_BITS
        );
    }
}
