//! Patch datasets for external residual estimators.
//!
//! Rasters are tiled into non-overlapping square patches anchored at the
//! origin; partial tiles along the right and bottom edges are dropped.
//! Patches are split into train and test sets by a seeded shuffle, and
//! exported as raw float rasters plus a JSON-lines manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{encode_float, encode_mask};
use crate::raster::{check_same_shape, ImageGrid, ResidualField};
use crate::stats::SummaryStats;

pub const DEFAULT_PATCH_SIZE: usize = 256;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.9;
pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct PatchRecord {
    pub source_id: u64,
    pub x0: usize,
    pub y0: usize,
    pub left: ImageGrid,
    pub right: ImageGrid,
    pub residual: ResidualField,
    pub split: Option<Split>,
}

#[derive(Debug, Clone)]
pub struct PatchSet {
    pub patch_size: usize,
    pub records: Vec<PatchRecord>,
    pub seed: Option<u64>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends the records of another set with the same patch size.
    pub fn merge(&mut self, other: PatchSet) -> Result<()> {
        if other.patch_size != self.patch_size {
            return Err(Error::contract(format!(
                "cannot merge patch sizes {} and {}",
                self.patch_size, other.patch_size
            )));
        }
        self.records.extend(other.records);
        self.seed = None;
        Ok(())
    }

    pub fn count(&self, split: Split) -> usize {
        self.records
            .iter()
            .filter(|r| r.split == Some(split))
            .count()
    }
}

/// Top-left corners of the full tiles of a `width x height` raster, in
/// row-major order.
pub fn patch_origins(width: usize, height: usize, patch_size: usize) -> Vec<(usize, usize)> {
    if patch_size == 0 {
        return Vec::new();
    }
    let (nx, ny) = (width / patch_size, height / patch_size);
    (0..ny)
        .flat_map(|j| (0..nx).map(move |i| (i * patch_size, j * patch_size)))
        .collect()
}

/// Tiles a rectified stereo pair and its residual into square patches.
pub fn extract_patches(
    source_id: u64,
    left: &ImageGrid,
    right_rectified: &ImageGrid,
    residual: &ResidualField,
    patch_size: usize,
) -> Result<PatchSet> {
    check_same_shape(left.shape(), right_rectified.shape(), "extract_patches")?;
    check_same_shape(left.shape(), residual.shape(), "extract_patches")?;
    let (w, h) = left.shape();
    if patch_size > w.min(h) {
        return Err(Error::contract(format!(
            "patch size {patch_size} exceeds the {w}x{h} raster"
        )));
    }
    if patch_size < crate::raster::MIN_SIDE {
        return Err(Error::contract(format!(
            "patch size must be at least {}",
            crate::raster::MIN_SIDE
        )));
    }
    let records = patch_origins(w, h, patch_size)
        .into_par_iter()
        .map(|(x0, y0)| {
            let res = residual.map().crop(x0, y0, patch_size, patch_size)?;
            Ok(PatchRecord {
                source_id,
                x0,
                y0,
                left: left.crop(x0, y0, patch_size, patch_size)?,
                right: right_rectified.crop(x0, y0, patch_size, patch_size)?,
                residual: ResidualField::from_map(res),
                split: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PatchSet {
        patch_size,
        records,
        seed: None,
    })
}

/// Number of training items for `n` items: `ceil(fraction * n)`.
pub fn train_count(n: usize, train_fraction: f64) -> usize {
    // The epsilon keeps products like 0.9 * 10 = 9.000000000000002 from
    // rounding up.
    ((train_fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Split labels for `n` items: a seeded shuffle, the first
/// `ceil(fraction * n)` shuffled positions train and the rest test.
pub fn split_labels(n: usize, train_fraction: f64, seed: u64) -> Result<Vec<Split>> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::contract(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = train_count(n, train_fraction);
    let mut labels = vec![Split::Test; n];
    for &i in &order[..n_train] {
        labels[i] = Split::Train;
    }
    Ok(labels)
}

/// Assigns train/test labels to every record.
pub fn split_dataset(mut patches: PatchSet, train_fraction: f64, seed: u64) -> Result<PatchSet> {
    let labels = split_labels(patches.records.len(), train_fraction, seed)?;
    for (rec, label) in patches.records.iter_mut().zip(labels) {
        rec.split = Some(label);
    }
    patches.seed = Some(seed);
    Ok(patches)
}

/// One line of the export manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub source_id: u64,
    pub x0: usize,
    pub y0: usize,
    pub split: Option<Split>,
    pub left: String,
    pub right: String,
    pub residual: String,
    /// Mean of all valid residual pixels in the exported set.
    pub mean: f64,
    /// Population standard deviation of the same pixels.
    pub std: f64,
}

/// Pooled residual statistics over every record, in manifest order.
pub fn residual_standardization(records: &[&PatchRecord]) -> SummaryStats {
    SummaryStats::from_values(records.iter().flat_map(|r| {
        r.residual
            .values()
            .iter()
            .zip(r.residual.valid())
            .filter(|(_, &ok)| ok)
            .map(|(&v, _)| v)
    }))
}

/// Writes every patch and a `manifest.jsonl` into `dir`.
///
/// Refuses to write into an existing non-empty directory unless `overwrite`
/// is set. Returns the manifest path.
pub fn export_dataset(patches: &PatchSet, dir: &Path, overwrite: bool) -> Result<PathBuf> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .next()
            .is_some();
        if non_empty && !overwrite {
            return Err(Error::contract(format!(
                "{} exists and is not empty (set overwrite to replace)",
                dir.display()
            )));
        }
    } else {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut order: Vec<&PatchRecord> = patches.records.iter().collect();
    order.sort_by_key(|r| (r.source_id, r.y0, r.x0));
    let stats = residual_standardization(&order);

    let entries = order
        .par_iter()
        .map(|rec| {
            let stem = format!("{:04}_{:05}_{:05}", rec.source_id, rec.y0, rec.x0);
            let names = [
                format!("{stem}_left.dspf"),
                format!("{stem}_right.dspf"),
                format!("{stem}_residual.dspf"),
            ];
            let ps = patches.patch_size;
            let residual_values: Vec<f64> = rec
                .residual
                .values()
                .iter()
                .zip(rec.residual.valid())
                .map(|(&v, &ok)| if ok { v } else { f64::NAN })
                .collect();
            let files: [(String, Vec<u8>); 4] = [
                (names[0].clone(), encode_float(ps, ps, rec.left.pixels())),
                (names[1].clone(), encode_float(ps, ps, rec.right.pixels())),
                (names[2].clone(), encode_float(ps, ps, &residual_values)),
                (
                    format!("{stem}_residual.dspm"),
                    encode_mask(ps, ps, rec.residual.valid()),
                ),
            ];
            for (name, bytes) in &files {
                let path = dir.join(name);
                fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            }
            let [left, right, residual] = names;
            Ok(ManifestEntry {
                source_id: rec.source_id,
                x0: rec.x0,
                y0: rec.y0,
                split: rec.split,
                left,
                right,
                residual,
                mean: stats.mean,
                std: stats.std,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = dir.join(MANIFEST_NAME);
    let mut out = Vec::new();
    for e in &entries {
        serde_json::to_writer(&mut out, e).expect("manifest entry serializes");
        out.push(b'\n');
    }
    fs::File::create(&manifest)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}

/// Parses a manifest written by [`export_dataset`].
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}
