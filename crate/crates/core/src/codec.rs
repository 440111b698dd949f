//! Lossy stage of a JPEG-style codec: blockwise DCT, quantization with a
//! named table, dequantization and inverse DCT.
//!
//! Modeling choices, all of which matter when comparing against flight data:
//!
//! * The transform is the orthonormal (unitary) 2D DCT-II, not the scaled
//!   variant of the JPEG standard. Table entries divide coefficients in this
//!   orthonormal domain. A constant 8x8 block of value `v` has DC `8v`.
//! * Before the transform every sample is shifted by `-2^(bit_depth-1)`.
//! * Quantization rounds half away from zero.
//! * Entropy coding is lossless and therefore omitted.
//! * Images whose sides are not multiples of 8 are edge-replicated up to the
//!   next multiple, processed and cropped back.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{check_same_shape, ImageGrid, ResidualField};

pub const BLOCK: usize = 8;

/// An 8x8 block in row-major order; index `row * 8 + col`.
pub type Block = [f64; 64];

/// Quantized coefficients of one block.
pub type QuantBlock = [i32; 64];

/// The most frequently used Terrain Camera table. Row 0 / column 0 hold the
/// lowest vertical / horizontal frequencies.
pub const SF008S_A: [[u32; 8]; 8] = [
    [3, 2, 2, 3, 4, 6, 8, 10],
    [2, 2, 2, 3, 4, 9, 10, 9],
    [2, 2, 3, 4, 6, 9, 11, 9],
    [2, 3, 4, 5, 8, 14, 13, 10],
    [3, 4, 6, 9, 11, 17, 16, 12],
    [4, 6, 9, 10, 13, 17, 18, 15],
    [8, 10, 12, 14, 16, 20, 20, 16],
    [12, 15, 15, 16, 18, 16, 16, 16],
];

/// A named 8x8 table of positive quantization step sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantTable {
    name: String,
    entries: [u32; 64],
}

impl QuantTable {
    pub fn new(name: impl Into<String>, rows: [[u32; 8]; 8]) -> Result<Self> {
        let mut entries = [0u32; 64];
        for (r, row) in rows.iter().enumerate() {
            for (c, &q) in row.iter().enumerate() {
                if q == 0 {
                    return Err(Error::contract(format!(
                        "quantization entry ({r},{c}) must be >= 1"
                    )));
                }
                entries[r * 8 + c] = q;
            }
        }
        Ok(QuantTable {
            name: name.into(),
            entries,
        })
    }

    /// The built-in `SF008S_A` table.
    pub fn sf008s_a() -> Self {
        Self::new("SF008S_A", SF008S_A).expect("built-in table is valid")
    }

    /// A table with every entry equal to `q`.
    pub fn uniform(name: impl Into<String>, q: u32) -> Result<Self> {
        Self::new(name, [[q; 8]; 8])
    }

    /// Looks up a built-in table by name: `SF008S_A` or `ones` (all entries 1).
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "SF008S_A" => Some(Self::sf008s_a()),
            "ones" => Some(Self::uniform("ones", 1).expect("valid table")),
            _ => None,
        }
    }

    /// Resolves a built-in name, falling back to loading a table file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match Self::builtin(name_or_path) {
            Some(t) => Ok(t),
            None => Self::load(Path::new(name_or_path)),
        }
    }

    /// Loads a table from a text file of 8 lines with 8 positive integers each.
    /// Lines starting with `#` and blank lines are ignored. The table is named
    /// after the file stem.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("custom")
            .to_string();
        Self::parse(name, &text)
    }

    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut rows = [[0u32; 8]; 8];
        let mut n_rows = 0usize;
        let mut offset = 0usize;
        for line in text.split_inclusive('\n') {
            let line_offset = offset;
            offset += line.len();
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if n_rows == 8 {
                return Err(Error::format(line_offset as u64, "more than 8 table rows"));
            }
            let mut n_cols = 0usize;
            for tok in trimmed.split_whitespace() {
                let q: u32 = tok.parse().map_err(|_| {
                    Error::format(
                        line_offset as u64,
                        format!("not a positive integer: {tok:?}"),
                    )
                })?;
                if q == 0 {
                    return Err(Error::format(
                        line_offset as u64,
                        "table entries must be >= 1",
                    ));
                }
                if n_cols == 8 {
                    return Err(Error::format(
                        line_offset as u64,
                        "more than 8 entries in row",
                    ));
                }
                rows[n_rows][n_cols] = q;
                n_cols += 1;
            }
            if n_cols != 8 {
                return Err(Error::format(
                    line_offset as u64,
                    format!("row has {n_cols} entries, expected 8"),
                ));
            }
            n_rows += 1;
        }
        if n_rows != 8 {
            return Err(Error::format(
                offset as u64,
                format!("table has {n_rows} rows, expected 8"),
            ));
        }
        Self::new(name, rows)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Step size for vertical frequency `row`, horizontal frequency `col`.
    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> u32 {
        self.entries[row * 8 + col]
    }

    pub fn entries(&self) -> &[u32; 64] {
        &self.entries
    }

    pub fn rows(&self) -> [[u32; 8]; 8] {
        let mut rows = [[0u32; 8]; 8];
        for (r, row) in rows.iter_mut().enumerate() {
            row.copy_from_slice(&self.entries[r * 8..r * 8 + 8]);
        }
        rows
    }
}

impl fmt::Display for QuantTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# {}", self.name)?;
        for r in 0..8 {
            let row: Vec<String> = (0..8).map(|c| self.entry(r, c).to_string()).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Orthonormal DCT-II basis, `basis[u * 8 + x] = a(u) cos((2x + 1) u pi / 16)`.
pub fn dct_basis() -> &'static Block {
    static BASIS: OnceLock<Block> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut m = [0.0; 64];
        for u in 0..8 {
            let a = if u == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
            for x in 0..8 {
                m[u * 8 + x] = a * (((2 * x + 1) * u) as f64 * PI / 16.0).cos();
            }
        }
        m
    })
}

/// Forward orthonormal 2D DCT-II of one block.
pub fn dct8_forward(block: &Block) -> Block {
    let c = dct_basis();
    let mut tmp = [0.0; 64];
    // Columns: tmp[u][col] = sum_r C[u][r] B[r][col]
    for u in 0..8 {
        for col in 0..8 {
            let mut s = 0.0;
            for r in 0..8 {
                s += c[u * 8 + r] * block[r * 8 + col];
            }
            tmp[u * 8 + col] = s;
        }
    }
    // Rows: out[u][v] = sum_col tmp[u][col] C[v][col]
    let mut out = [0.0; 64];
    for u in 0..8 {
        for v in 0..8 {
            let mut s = 0.0;
            for col in 0..8 {
                s += tmp[u * 8 + col] * c[v * 8 + col];
            }
            out[u * 8 + v] = s;
        }
    }
    out
}

/// Inverse of [`dct8_forward`].
pub fn dct8_inverse(coeffs: &Block) -> Block {
    let c = dct_basis();
    let mut tmp = [0.0; 64];
    // tmp[r][v] = sum_u C[u][r] F[u][v]
    for r in 0..8 {
        for v in 0..8 {
            let mut s = 0.0;
            for u in 0..8 {
                s += c[u * 8 + r] * coeffs[u * 8 + v];
            }
            tmp[r * 8 + v] = s;
        }
    }
    // out[r][col] = sum_v tmp[r][v] C[v][col]
    let mut out = [0.0; 64];
    for r in 0..8 {
        for col in 0..8 {
            let mut s = 0.0;
            for v in 0..8 {
                s += tmp[r * 8 + v] * c[v * 8 + col];
            }
            out[r * 8 + col] = s;
        }
    }
    out
}

/// `q = round_half_away_from_zero(c / Q)` per coefficient.
pub fn quantize(coeffs: &Block, table: &QuantTable) -> QuantBlock {
    let mut q = [0i32; 64];
    for (i, out) in q.iter_mut().enumerate() {
        *out = (coeffs[i] / table.entries[i] as f64).round() as i32;
    }
    q
}

/// `c = q * Q` per coefficient.
pub fn dequantize(q: &QuantBlock, table: &QuantTable) -> Block {
    let mut c = [0.0; 64];
    for (i, out) in c.iter_mut().enumerate() {
        *out = q[i] as f64 * table.entries[i] as f64;
    }
    c
}

/// Passes one level-shifted block through the lossy stage.
pub fn roundtrip_block(block: &Block, table: &QuantTable) -> Block {
    dct8_inverse(&dequantize(&quantize(&dct8_forward(block), table), table))
}

/// Simulates lossy compression of a whole image with `table`.
///
/// Blocks are processed in parallel; the output does not depend on the
/// number of worker threads.
pub fn compress_image(img: &ImageGrid, table: &QuantTable) -> ImageGrid {
    let (w, h) = img.shape();
    let pw = w.div_ceil(BLOCK) * BLOCK;
    let ph = h.div_ceil(BLOCK) * BLOCK;
    let shift = (1u64 << (img.bit_depth() - 1)) as f64;
    let max = img.max_dn();
    let src = img.pixels();

    let mut out = vec![0.0; pw * ph];
    out.par_chunks_mut(pw * BLOCK)
        .enumerate()
        .for_each(|(by, band)| {
            for bx in 0..pw / BLOCK {
                let mut block = [0.0; 64];
                for r in 0..BLOCK {
                    let sy = (by * BLOCK + r).min(h - 1);
                    for c in 0..BLOCK {
                        let sx = (bx * BLOCK + c).min(w - 1);
                        block[r * 8 + c] = src[sy * w + sx] - shift;
                    }
                }
                let rec = roundtrip_block(&block, table);
                for r in 0..BLOCK {
                    for c in 0..BLOCK {
                        band[r * pw + bx * BLOCK + c] = (rec[r * 8 + c] + shift).clamp(0.0, max);
                    }
                }
            }
        });

    let pixels = if pw == w && ph == h {
        out
    } else {
        let mut cropped = Vec::with_capacity(w * h);
        for y in 0..h {
            cropped.extend_from_slice(&out[y * pw..y * pw + w]);
        }
        cropped
    };
    img.with_pixels(pixels)
        .expect("compressed image keeps the input geometry")
}

/// `compressed - original` as a fully valid residual raster, in DN.
pub fn compression_residual(original: &ImageGrid, compressed: &ImageGrid) -> Result<ResidualField> {
    check_same_shape(original.shape(), compressed.shape(), "compression_residual")?;
    let values = compressed
        .pixels()
        .iter()
        .zip(original.pixels())
        .map(|(c, o)| c - o)
        .collect::<Vec<_>>();
    let n = values.len();
    ResidualField::new(original.width(), original.height(), values, vec![true; n])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_table_rows() {
        let t = QuantTable::sf008s_a();
        assert_eq!(t.rows()[0], [3, 2, 2, 3, 4, 6, 8, 10]);
        assert_eq!(t.rows()[7], [12, 15, 15, 16, 18, 16, 16, 16]);
        assert_eq!(t.entry(3, 5), 14);
        assert!(t.entries().iter().all(|&q| q >= 1));
    }

    #[test]
    fn constant_block_excites_dc_only() {
        let f = dct8_forward(&[128.0; 64]);
        assert!((f[0] - 1024.0).abs() < 1e-9);
        assert!(f[1..].iter().all(|c| c.abs() < 1e-9));
        assert_eq!(dct8_forward(&[0.0; 64]), [0.0; 64]);
    }

    #[test]
    fn dc_only_inverts_to_constant() {
        let mut f = [0.0; 64];
        f[0] = 1024.0;
        assert!(dct8_inverse(&f).iter().all(|v| (v - 128.0).abs() < 1e-9));
        assert_eq!(dct8_inverse(&[0.0; 64]), [0.0; 64]);
    }

    #[test]
    fn quantize_examples() {
        let t = QuantTable::uniform("q3", 3).unwrap();
        let mut c = [0.0; 64];
        c[0] = 10.0;
        let q = quantize(&c, &t);
        assert_eq!(q[0], 3);
        assert_eq!(dequantize(&q, &t)[0], 9.0);

        let t2 = QuantTable::uniform("q2", 2).unwrap();
        c[0] = -7.0;
        assert_eq!(quantize(&c, &t2)[0], -4);
        c[0] = 7.0;
        assert_eq!(quantize(&c, &t2)[0], 4);
    }

    #[test]
    fn all_ones_table_rounds() {
        let t = QuantTable::uniform("ones", 1).unwrap();
        let c: Block = std::array::from_fn(|i| i as f64 * 0.37 - 11.0);
        let d = dequantize(&quantize(&c, &t), &t);
        for i in 0..64 {
            assert_eq!(d[i], c[i].round());
            assert!((d[i] - c[i]).abs() <= 0.5);
        }
    }

    #[test]
    fn parse_table_text() {
        let text = "# comment\n3 2 2 3 4 6 8 10\n2 2 2 3 4 9 10 9\n2 2 3 4 6 9 11 9\n\
                    2 3 4 5 8 14 13 10\n3 4 6 9 11 17 16 12\n4 6 9 10 13 17 18 15\n\
                    8 10 12 14 16 20 20 16\n12 15 15 16 18 16 16 16\n";
        let t = QuantTable::parse("SF008S_A", text).unwrap();
        assert_eq!(t, QuantTable::sf008s_a());
        let again = QuantTable::parse("SF008S_A", &t.to_string()).unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn parse_rejects_bad_tables() {
        assert!(matches!(
            QuantTable::parse("x", "1 2 3\n"),
            Err(Error::Format { offset: 0, .. })
        ));
        let zero_row = "0 1 1 1 1 1 1 1\n".repeat(8);
        assert!(QuantTable::parse("x", &zero_row).is_err());
        let seven = "1 1 1 1 1 1 1 1\n".repeat(7);
        assert!(QuantTable::parse("x", &seven).is_err());
        let nine = "1 1 1 1 1 1 1 1\n".repeat(9);
        assert!(matches!(
            QuantTable::parse("x", &nine),
            Err(Error::Format { offset: 128, .. })
        ));
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = ImageGrid::filled(24, 16, 1000.3).unwrap();
        let out = compress_image(&img, &QuantTable::sf008s_a());
        let s = out.stats();
        assert!(s.max - s.min < 1e-9);
        assert!((s.mean - 1000.3).abs() <= 1.0);
    }

    #[test]
    fn odd_sizes_keep_shape() {
        let img = ImageGrid::from_fn(13, 21, 14, |x, y| (x * 37 + y * 11) as f64).unwrap();
        let out = compress_image(&img, &QuantTable::sf008s_a());
        assert_eq!(out.shape(), (13, 21));
    }

    #[test]
    fn identical_inputs_zero_residual() {
        let img = ImageGrid::from_fn(16, 16, 14, |x, y| (x + y) as f64).unwrap();
        let r = compression_residual(&img, &img).unwrap();
        assert_eq!(r.stats().std, 0.0);
        let other = ImageGrid::filled(8, 16, 0.0).unwrap();
        assert!(matches!(
            compression_residual(&img, &other),
            Err(Error::Contract(_))
        ));
    }
}
