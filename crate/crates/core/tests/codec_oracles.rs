use std::f64::consts::PI;

use proptest::prelude::*;
use selene_noise::codec::{
    compress_image, dct8_forward, dct8_inverse, dequantize, quantize, QuantTable, SF008S_A,
};
use selene_noise::ImageGrid;

/// Textbook 2D DCT-II with orthonormal scaling, evaluated term by term.
fn naive_dct(block: &[f64; 64]) -> [f64; 64] {
    let alpha = |k: usize| {
        if k == 0 {
            (1.0f64 / 8.0).sqrt()
        } else {
            (2.0f64 / 8.0).sqrt()
        }
    };
    let mut out = [0.0; 64];
    for u in 0..8 {
        for v in 0..8 {
            let mut s = 0.0;
            for y in 0..8 {
                for x in 0..8 {
                    s += block[y * 8 + x]
                        * (((2 * y + 1) as f64 * u as f64 * PI) / 16.0).cos()
                        * (((2 * x + 1) as f64 * v as f64 * PI) / 16.0).cos();
                }
            }
            out[u * 8 + v] = alpha(u) * alpha(v) * s;
        }
    }
    out
}

fn naive_idct(coeffs: &[f64; 64]) -> [f64; 64] {
    let alpha = |k: usize| {
        if k == 0 {
            (1.0f64 / 8.0).sqrt()
        } else {
            (2.0f64 / 8.0).sqrt()
        }
    };
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for u in 0..8 {
                for v in 0..8 {
                    s += alpha(u)
                        * alpha(v)
                        * coeffs[u * 8 + v]
                        * (((2 * y + 1) as f64 * u as f64 * PI) / 16.0).cos()
                        * (((2 * x + 1) as f64 * v as f64 * PI) / 16.0).cos();
                }
            }
            out[y * 8 + x] = s;
        }
    }
    out
}

/// Straight-line reference codec: level shift, DCT, quantize, dequantize,
/// inverse DCT, unshift, clamp. Image sides must be multiples of 8.
fn oracle_compress(img: &ImageGrid, table: &QuantTable) -> Vec<f64> {
    let (w, h) = img.shape();
    let shift = (1u32 << (img.bit_depth() - 1)) as f64;
    let mut out = vec![0.0; w * h];
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            let mut block = [0.0; 64];
            for y in 0..8 {
                for x in 0..8 {
                    block[y * 8 + x] = img.get(bx + x, by + y) - shift;
                }
            }
            let c = naive_dct(&block);
            let mut dq = [0.0; 64];
            for i in 0..64 {
                let q = table.entries()[i] as f64;
                dq[i] = (c[i] / q).round() * q;
            }
            let r = naive_idct(&dq);
            for y in 0..8 {
                for x in 0..8 {
                    out[(by + y) * w + bx + x] = (r[y * 8 + x] + shift).clamp(0.0, img.max_dn());
                }
            }
        }
    }
    out
}

#[test]
fn forward_matches_direct_cosine_sum() {
    let block: [f64; 64] = std::array::from_fn(|i| ((i * 97 + 13) % 211) as f64 - 100.0);
    let fast = dct8_forward(&block);
    let slow = naive_dct(&block);
    for i in 0..64 {
        assert!(
            (fast[i] - slow[i]).abs() < 1e-9,
            "coef {i}: {} vs {}",
            fast[i],
            slow[i]
        );
    }
}

#[test]
fn dc_coefficient_of_constant_block() {
    let block = [10.0; 64];
    let c = dct8_forward(&block);
    assert!((c[0] - 80.0).abs() < 1e-12);
    assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn sf008s_a_table_entries() {
    let t = QuantTable::sf008s_a();
    assert_eq!(t.rows(), SF008S_A);
    assert!(t.entries().iter().all(|&q| q >= 1));
}

#[test]
fn compress_matches_straight_line_oracle_on_gradient() {
    let img = ImageGrid::from_fn(16, 16, 14, |x, y| {
        1000.0 + 37.0 * x as f64 + 11.0 * y as f64
    })
    .unwrap();
    for table in [
        QuantTable::sf008s_a(),
        QuantTable::uniform("q7", 7).unwrap(),
    ] {
        let fast = compress_image(&img, &table);
        let slow = oracle_compress(&img, &table);
        for (i, (a, b)) in fast.pixels().iter().zip(&slow).enumerate() {
            assert!(
                (a - b).abs() < 1e-9,
                "{} pixel {i}: {a} vs {b}",
                table.name()
            );
        }
    }
}

#[test]
fn compress_non_multiple_of_eight_keeps_shape() {
    let img = ImageGrid::from_fn(13, 21, 14, |x, y| 500.0 + (x * y) as f64).unwrap();
    let out = compress_image(&img, &QuantTable::sf008s_a());
    assert_eq!(out.shape(), (13, 21));
    assert!(out
        .pixels()
        .iter()
        .all(|v| (0.0..=img.max_dn()).contains(v)));
}

#[test]
fn table_text_roundtrip() {
    let t = QuantTable::sf008s_a();
    let parsed = QuantTable::parse("again", &t.to_string()).unwrap();
    assert_eq!(parsed.entries(), t.entries());
}

#[test]
fn malformed_table_reports_format_error() {
    let err = QuantTable::parse("bad", "1 2 3\n").unwrap_err();
    assert_eq!(err.exit_code(), 3);
    let zero = "0 1 1 1 1 1 1 1\n".to_string() + &"1 1 1 1 1 1 1 1\n".repeat(7);
    assert!(QuantTable::parse("zero", &zero).is_err());
}

fn block_strategy() -> impl Strategy<Value = [f64; 64]> {
    prop::array::uniform32(-8192.0f64..8192.0)
        .prop_flat_map(|a| prop::array::uniform32(-8192.0f64..8192.0).prop_map(move |b| (a, b)))
        .prop_map(|(a, b)| std::array::from_fn(|i| if i < 32 { a[i] } else { b[i - 32] }))
}

proptest! {
    #[test]
    fn inverse_undoes_forward(block in block_strategy()) {
        let back = dct8_inverse(&dct8_forward(&block));
        for i in 0..64 {
            prop_assert!((back[i] - block[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn quantization_error_at_most_half_step(block in block_strategy(), q in 1u32..64) {
        let table = QuantTable::uniform("u", q).unwrap();
        let c = dct8_forward(&block);
        let dq = dequantize(&quantize(&c, &table), &table);
        for i in 0..64 {
            // naive loop: nearest multiple of q
            let naive = (c[i] / q as f64).round() * q as f64;
            prop_assert_eq!(dq[i], naive);
            prop_assert!((dq[i] - c[i]).abs() <= q as f64 / 2.0 + 1e-9);
        }
    }

    #[test]
    fn parseval(block in block_strategy()) {
        let c = dct8_forward(&block);
        let e_space: f64 = block.iter().map(|v| v * v).sum();
        let e_freq: f64 = c.iter().map(|v| v * v).sum();
        prop_assert!((e_space - e_freq).abs() <= 1e-9 * e_space.max(1.0));
    }
}
