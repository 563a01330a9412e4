//! Classification datasets: IDX archives (the MNIST distribution format) and
//! a seeded Gaussian-cluster generator for offline runs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::StreamRng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Size of the held-out tail used as validation data for real archives.
pub const MNIST_VALIDATION_TAIL: usize = 10_000;

/// Row-major feature matrix with labels. Rows `[0, train_len)` are the training
/// split and the remainder is validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    num_classes: usize,
    train_len: usize,
    image_shape: Option<(usize, usize)>,
}

/// Borrowed rows of one split.
#[derive(Debug, Clone, Copy)]
pub struct Split<'a> {
    pub inputs: &'a [f64],
    pub labels: &'a [usize],
    pub dim: usize,
}

impl<'a> Split<'a> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, i: usize) -> &'a [f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    /// Uniform indices drawn with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        (0..batch).map(|_| rng.random_range(0..self.len())).collect()
    }
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, labels: Vec<usize>, dim: usize, num_classes: usize) -> Result<Self> {
        if labels.is_empty() || dim == 0 {
            return Err(invalid("dataset", "need at least one row of positive dimension"));
        }
        if inputs.len() != labels.len() * dim {
            return Err(Error::Consistency(format!(
                "{} features do not form {} rows of dimension {dim}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|l| **l >= num_classes) {
            return Err(Error::Consistency(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("dataset inputs must be finite".into()));
        }
        let train_len = labels.len();
        Ok(Self {
            inputs,
            labels,
            dim,
            num_classes,
            train_len,
            image_shape: None,
        })
    }

    /// Marks the last `val_len` rows as the validation split.
    pub fn with_validation_tail(mut self, val_len: usize) -> Result<Self> {
        if val_len >= self.labels.len() {
            return Err(invalid("val_len", "validation tail must leave training rows"));
        }
        self.train_len = self.labels.len() - val_len;
        Ok(self)
    }

    /// Holds out the standard 10,000-row tail, or a sixth of the rows for
    /// archives too small for that.
    pub fn with_default_validation(self) -> Result<Self> {
        let n = self.len();
        let tail = if n > 2 * MNIST_VALIDATION_TAIL {
            MNIST_VALIDATION_TAIL
        } else {
            n / 6
        };
        if tail == 0 {
            Ok(self)
        } else {
            self.with_validation_tail(tail)
        }
    }

    fn with_train_len(mut self, train_len: usize) -> Self {
        self.train_len = train_len;
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image_shape(&self) -> Option<(usize, usize)> {
        self.image_shape
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn train(&self) -> Split<'_> {
        Split {
            inputs: &self.inputs[..self.train_len * self.dim],
            labels: &self.labels[..self.train_len],
            dim: self.dim,
        }
    }

    /// Validation rows; falls back to the training rows when none are held out.
    pub fn validation(&self) -> Split<'_> {
        if self.train_len == self.labels.len() {
            return self.train();
        }
        Split {
            inputs: &self.inputs[self.train_len * self.dim..],
            labels: &self.labels[self.train_len..],
            dim: self.dim,
        }
    }

    pub fn has_validation(&self) -> bool {
        self.train_len < self.labels.len()
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut buf)?;
    Ok(buf)
}

fn expect_magic(cur: &mut &[u8], want: u32, what: &str) -> Result<()> {
    let magic = cur.read_u32::<BigEndian>()?;
    if magic != want {
        return Err(Error::Format(format!(
            "{what}: magic {magic:#010x}, expected {want:#010x}"
        )));
    }
    Ok(())
}

/// Reads an IDX image archive and its label archive. Pixels are scaled to
/// `[0, 1]` and images flattened row-major. No validation split is set.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let img = read_all(images_path.as_ref())?;
    let lab = read_all(labels_path.as_ref())?;

    let mut cur: &[u8] = &img;
    expect_magic(&mut cur, IDX_IMAGES_MAGIC, "images")?;
    let count = cur.read_u32::<BigEndian>()? as usize;
    let rows = cur.read_u32::<BigEndian>()? as usize;
    let cols = cur.read_u32::<BigEndian>()? as usize;
    let dim = rows * cols;
    let mut pixels = vec![0u8; count * dim];
    cur.read_exact(&mut pixels)?;

    let mut cur: &[u8] = &lab;
    expect_magic(&mut cur, IDX_LABELS_MAGIC, "labels")?;
    let label_count = cur.read_u32::<BigEndian>()? as usize;
    if label_count != count {
        return Err(Error::Consistency(format!("{count} images but {label_count} labels")));
    }
    let mut raw_labels = vec![0u8; label_count];
    cur.read_exact(&mut raw_labels)?;

    let labels: Vec<usize> = raw_labels.iter().map(|b| *b as usize).collect();
    let num_classes = labels.iter().copied().max().map_or(1, |m| m + 1);
    let inputs = pixels.iter().map(|p| *p as f64 / 255.0).collect();
    let mut ds = Dataset::new(inputs, labels, dim, num_classes)?;
    ds.image_shape = Some((rows, cols));
    Ok(ds)
}

/// Writes a dataset with `[0, 1]` features as IDX archives. Features are
/// quantized to bytes, so reloading an IDX-sourced dataset is lossless.
pub fn write_idx(dataset: &Dataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let (rows, cols) = dataset.image_shape.unwrap_or((1, dataset.dim));
    if dataset.labels.iter().any(|l| *l > u8::MAX as usize) {
        return Err(Error::Format("IDX labels must fit in one byte".into()));
    }
    let mut w = BufWriter::new(File::create(images_path)?);
    w.write_u32::<BigEndian>(IDX_IMAGES_MAGIC)?;
    w.write_u32::<BigEndian>(dataset.len() as u32)?;
    w.write_u32::<BigEndian>(rows as u32)?;
    w.write_u32::<BigEndian>(cols as u32)?;
    for v in &dataset.inputs {
        w.write_u8((v.clamp(0.0, 1.0) * 255.0).round() as u8)?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(labels_path)?);
    w.write_u32::<BigEndian>(IDX_LABELS_MAGIC)?;
    w.write_u32::<BigEndian>(dataset.len() as u32)?;
    for l in &dataset.labels {
        w.write_u8(*l as u8)?;
    }
    w.flush()?;
    Ok(())
}

fn seeded(seed: u64, salt: u64) -> StreamRng {
    use rand::SeedableRng;
    StreamRng::seed_from_u64(crate::rng::hash2(seed, salt))
}

/// Class means `3 * N(0, I)` for the synthetic generator.
pub fn synthetic_means(num_classes: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded(seed, 0);
    (0..num_classes)
        .map(|_| (0..dim).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

fn cluster_rows(
    means: &[Vec<f64>],
    per_class: usize,
    spread: f64,
    rng: &mut StreamRng,
    inputs: &mut Vec<f64>,
    labels: &mut Vec<usize>,
) {
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            inputs.extend(mean.iter().map(|m| m + spread * rng.sample::<f64, _>(StandardNormal)));
            labels.push(c);
        }
    }
}

/// Gaussian clusters around seeded class means. The training split has
/// `per_class` rows per class and the validation split, drawn with a derived
/// seed around the same means, has the same size.
pub fn synthetic_clusters(num_classes: usize, dim: usize, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if num_classes == 0 || dim == 0 || per_class == 0 {
        return Err(invalid(
            "synthetic",
            "class count, dimension and rows per class must be >= 1",
        ));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(invalid("spread", format!("must be >= 0, got {spread}")));
    }
    let means = synthetic_means(num_classes, dim, seed);
    let mut inputs = Vec::with_capacity(2 * num_classes * per_class * dim);
    let mut labels = Vec::with_capacity(2 * num_classes * per_class);
    cluster_rows(
        &means,
        per_class,
        spread,
        &mut seeded(seed, 1),
        &mut inputs,
        &mut labels,
    );
    cluster_rows(
        &means,
        per_class,
        spread,
        &mut seeded(seed, 2),
        &mut inputs,
        &mut labels,
    );
    let train_len = num_classes * per_class;
    Ok(Dataset::new(inputs, labels, dim, num_classes)?.with_train_len(train_len))
}

/// Parameters of [`synthetic_clusters`]. The default is the offline stand-in
/// for the image benchmark: ten classes whose clusters overlap enough that
/// errors stay well above zero, with enough rows that training and validation
/// error agree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub spread: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            dim: 10,
            per_class: 2000,
            spread: 3.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn generate(&self) -> Result<Dataset> {
        synthetic_clusters(self.num_classes, self.dim, self.per_class, self.spread, self.seed)
    }
}
