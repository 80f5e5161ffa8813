//! Dataset ingestion and batching.
//!
//! MNIST is read from IDX containers on disk; nothing is ever downloaded.
//! Ingestion is deliberately minimal: pixels are scaled to `[0, 1]` by
//! dividing by 255 and not centered, leaving all standardization to the
//! batch-normalization layers.
//!
//! The IDX layout, bit-exact: a 4-byte big-endian magic (0x00000803 for
//! ubyte images, 0x00000801 for ubyte labels), one 4-byte big-endian size
//! per dimension, then the raw unsigned bytes.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use crate::error::Error;
use crate::numerics::{Matrix, Rng};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// The canonical file names the loaders expect inside a data directory.
pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// A feature matrix (one example per row) with integer labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub name: String,
}

impl Dataset {
    /// Panics if the labels disagree with the features or the class count,
    /// or if any feature is non-finite.
    pub fn new(features: Matrix, labels: Vec<usize>, class_count: usize, name: &str) -> Self {
        assert_eq!(
            features.rows(),
            labels.len(),
            "{} feature rows vs {} labels",
            features.rows(),
            labels.len()
        );
        for &l in &labels {
            assert!(l < class_count, "label {l} out of range for {class_count} classes");
        }
        assert!(
            features.data().iter().all(|v| v.is_finite()),
            "dataset '{name}' contains non-finite features"
        );
        Dataset { features, labels, class_count, name: name.to_owned() }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copy the given examples into a dense batch.
    pub fn gather(&self, indices: &[usize]) -> (Matrix, Vec<usize>) {
        let d = self.features.cols();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.features.row(i));
            labels.push(self.labels[i]);
        }
        (Matrix::from_vec(indices.len(), d, data), labels)
    }

    /// Split off the first `n` examples (in current order).
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        assert!(n <= self.len(), "split point {n} beyond dataset of {}", self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        let (hx, hy) = self.gather(&head);
        let (tx, ty) = self.gather(&tail);
        (
            Dataset::new(hx, hy, self.class_count, &self.name),
            Dataset::new(tx, ty, self.class_count, &self.name),
        )
    }
}

fn read_u32_be(r: &mut impl Read, path: &Path) -> Result<u32, Error> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(u32::from_be_bytes(buf))
}

/// Load an MNIST-style image/label pair of IDX files.
///
/// Pixels are flattened row-major into one feature row per image and scaled
/// to `[0, 1]`; labels must be digits 0-9 and the two files must agree on
/// the example count.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, Error> {
    let mut img = BufReader::new(File::open(images_path).map_err(|e| Error::io(images_path, e))?);
    let magic = read_u32_be(&mut img, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::IdxFormat(format!(
            "{}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x} (ubyte images)",
            images_path.display()
        )));
    }
    let n = read_u32_be(&mut img, images_path)? as usize;
    let rows = read_u32_be(&mut img, images_path)? as usize;
    let cols = read_u32_be(&mut img, images_path)? as usize;
    let mut pixels = vec![0u8; n * rows * cols];
    img.read_exact(&mut pixels).map_err(|e| Error::io(images_path, e))?;

    let mut lab = BufReader::new(File::open(labels_path).map_err(|e| Error::io(labels_path, e))?);
    let magic = read_u32_be(&mut lab, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::IdxFormat(format!(
            "{}: bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x} (ubyte labels)",
            labels_path.display()
        )));
    }
    let label_count = read_u32_be(&mut lab, labels_path)? as usize;
    let mut raw_labels = vec![0u8; label_count];
    lab.read_exact(&mut raw_labels).map_err(|e| Error::io(labels_path, e))?;

    if label_count != n {
        return Err(Error::DataConsistency(format!(
            "image count {n} ({}) does not match label count {label_count} ({})",
            images_path.display(),
            labels_path.display()
        )));
    }
    if let Some(&bad) = raw_labels.iter().find(|&&l| l > 9) {
        return Err(Error::DataConsistency(format!(
            "{}: label {bad} outside the digit range 0-9",
            labels_path.display()
        )));
    }

    let features: Vec<f64> = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    let name = images_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Dataset::new(Matrix::from_vec(n, rows * cols, features), labels, 10, &name))
}

/// Write raw ubyte images as an IDX container. `pixels` holds `n * rows *
/// cols` bytes, row-major per image.
pub fn write_idx_images(w: &mut impl Write, rows: usize, cols: usize, pixels: &[u8]) -> std::io::Result<()> {
    assert!(rows * cols > 0 && pixels.len() % (rows * cols) == 0, "pixel buffer does not tile {rows}x{cols} images");
    let n = pixels.len() / (rows * cols);
    w.write_all(&IDX_IMAGES_MAGIC.to_be_bytes())?;
    w.write_all(&(n as u32).to_be_bytes())?;
    w.write_all(&(rows as u32).to_be_bytes())?;
    w.write_all(&(cols as u32).to_be_bytes())?;
    w.write_all(pixels)
}

/// Write ubyte labels as an IDX container.
pub fn write_idx_labels(w: &mut impl Write, labels: &[u8]) -> std::io::Result<()> {
    w.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(labels.len() as u32).to_be_bytes())?;
    w.write_all(labels)
}

/// Seeded stratified sample of `n` examples, preserving each class's
/// proportion to within one example (largest-remainder rounding). The
/// result is shuffled, so `n == ds.len()` yields a permutation of the
/// whole set.
pub fn subset(ds: &Dataset, n: usize, seed: u64) -> Dataset {
    assert!(n >= 1 && n <= ds.len(), "subset size {n} outside 1..={}", ds.len());
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let total = ds.len() as f64;
    let exact: Vec<f64> = by_class.iter().map(|c| n as f64 * c.len() as f64 / total).collect();
    let mut quota: Vec<usize> = exact.iter().map(|&e| e.floor() as usize).collect();
    let assigned: usize = quota.iter().sum();
    let mut order: Vec<usize> = (0..ds.class_count).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - quota[a] as f64;
        let rb = exact[b] - quota[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &c in order.iter().take(n - assigned) {
        quota[c] += 1;
    }

    let mut rng = Rng::seed_from(seed);
    let mut picked = Vec::with_capacity(n);
    for (c, indices) in by_class.iter_mut().enumerate() {
        rng.shuffle(indices);
        picked.extend_from_slice(&indices[..quota[c]]);
    }
    rng.shuffle(&mut picked);
    let (x, y) = ds.gather(&picked);
    Dataset::new(x, y, ds.class_count, &ds.name)
}

/// Seeded shuffled mini-batches covering the dataset exactly once. A
/// trailing batch of a single example is merged into its predecessor, since
/// batch normalization cannot train on one row; a dataset of one example
/// still yields that single batch.
pub fn batches(ds: &Dataset, batch_size: usize, seed: u64) -> Batches<'_> {
    assert!(batch_size >= 2, "batch_size must be at least 2, got {batch_size}");
    let order = Rng::seed_from(seed).shuffled_indices(ds.len());
    Batches { ds, order, pos: 0, batch_size }
}

pub struct Batches<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
}

impl Iterator for Batches<'_> {
    type Item = (Matrix, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        let remaining = self.order.len() - self.pos;
        if remaining == 0 {
            return None;
        }
        let take = if remaining > self.batch_size && remaining - self.batch_size == 1 {
            self.batch_size + 1
        } else {
            remaining.min(self.batch_size)
        };
        let slice = &self.order[self.pos..self.pos + take];
        self.pos += take;
        Some(self.ds.gather(slice))
    }
}

/// Gaussian clusters with unit variance, one per class, centered
/// `separation` apart along the first coordinate. Deterministic per seed.
pub fn synthetic_blobs(
    n_per_class: usize,
    classes: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Dataset {
    assert!(n_per_class > 0 && classes > 0 && dim > 0, "blob sizes must be positive");
    assert!(separation >= 0.0, "separation must be non-negative");
    let mut rng = Rng::seed_from(seed);
    let n = n_per_class * classes;
    let mut features = rng.normal_matrix(n, dim, 1.0);
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        let offset = c as f64 * separation;
        for i in 0..n_per_class {
            features[(c * n_per_class + i, 0)] += offset;
            labels.push(c);
        }
    }
    Dataset::new(features, labels, classes, "blobs")
}
