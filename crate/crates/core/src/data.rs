//! Synthetic Gaussian-cluster data and the CIFAR-10 binary reader.

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Axis};

use crate::error::{Error, Result};
use crate::numerics::{batch_mean, batch_var, Batch, SeededRng};

pub const CIFAR_PIXELS: usize = 3072;
pub const CIFAR_RECORD: usize = CIFAR_PIXELS + 1;
pub const CIFAR_CLASSES: usize = 10;
/// Class-mean radius of the default synthetic task.
pub const DEFAULT_RADIUS: f64 = 8.0;

/// Gaussian clusters around class means on a sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub input_dim: usize,
    /// Radius of the sphere carrying the class means.
    pub radius: f64,
    pub sigma: f64,
    pub per_class: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_classes: 10,
            input_dim: 64,
            radius: DEFAULT_RADIUS,
            sigma: 1.0,
            per_class: 500,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument("num_classes must be >= 2".into()));
        }
        if self.input_dim == 0 || self.per_class == 0 {
            return Err(Error::InvalidArgument(
                "input_dim and per_class must be positive".into(),
            ));
        }
        if !(self.radius > 0.0) || !(self.sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "radius must be positive and sigma non-negative (got {}, {})",
                self.radius, self.sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One sample per row.
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} samples but {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// Standardizes every feature to mean 0 and variance 1; constant features
    /// are only centered.
    pub fn normalize(&mut self) -> Result<()> {
        let b = Batch::new(self.inputs.clone())?;
        let mean = batch_mean(&b);
        let std = batch_var(&b)?.mapv(f64::sqrt);
        for mut row in self.inputs.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&mean).zip(&std) {
                *v -= m;
                if *s > 0.0 {
                    *v /= s;
                }
            }
        }
        Ok(())
    }

    pub fn select(&self, idx: &[usize]) -> (Batch, Vec<usize>) {
        let x = self.inputs.select(Axis(0), idx);
        let y = idx.iter().map(|&i| self.labels[i]).collect();
        (Batch::new(x).expect("at least one row"), y)
    }

    /// CSV with header `label,f0,...,f{d-1}`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["label".to_string()];
        header.extend((0..self.input_dim()).map(|i| format!("f{i}")));
        out.write_record(&header)?;
        for (row, label) in self.inputs.rows().into_iter().zip(&self.labels) {
            let mut rec = vec![label.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let d = spec.input_dim;
    let means: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| rng.gaussian()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                break v.iter().map(|x| spec.radius * x / norm).collect();
            }
        })
        .collect();
    let n = spec.num_classes * spec.per_class;
    let mut inputs = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for (i, mut row) in inputs.rows_mut().into_iter().enumerate() {
        let c = i % spec.num_classes;
        for (v, m) in row.iter_mut().zip(&means[c]) {
            *v = m + spec.sigma * rng.gaussian();
        }
        labels.push(c);
    }
    Dataset::new(inputs, labels, spec.num_classes)
}

/// Raw CIFAR-10 records: labels and unscaled pixel bytes.
pub fn read_cifar10_records(path: &Path) -> Result<(Vec<u8>, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!(
                "size {} is not a multiple of the {CIFAR_RECORD}-byte record",
                bytes.len()
            ),
        });
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * CIFAR_PIXELS);
    for (index, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if rec[0] as usize >= CIFAR_CLASSES {
            return Err(Error::CorruptRecord {
                path: path.to_path_buf(),
                index,
                label: rec[0],
            });
        }
        labels.push(rec[0]);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok((labels, pixels))
}

pub fn write_cifar10_records(path: &Path, labels: &[u8], pixels: &[u8]) -> Result<()> {
    if pixels.len() != labels.len() * CIFAR_PIXELS {
        return Err(Error::InvalidArgument(format!(
            "{} labels need {} pixel bytes, got {}",
            labels.len(),
            labels.len() * CIFAR_PIXELS,
            pixels.len()
        )));
    }
    let mut out = Vec::with_capacity(labels.len() * CIFAR_RECORD);
    for (l, px) in labels.iter().zip(pixels.chunks_exact(CIFAR_PIXELS)) {
        out.push(*l);
        out.extend_from_slice(px);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Loads and concatenates CIFAR-10 batch files, scales pixels to [0, 1] and
/// standardizes every feature.
pub fn load_cifar10_binary(paths: &[PathBuf]) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    for p in paths {
        let (l, px) = read_cifar10_records(p)?;
        labels.extend(l.into_iter().map(usize::from));
        pixels.extend(px.into_iter().map(|b| f64::from(b) / 255.0));
    }
    let n = labels.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 CIFAR-10 records, found {n}"
        )));
    }
    let inputs = Array2::from_shape_vec((n, CIFAR_PIXELS), pixels).expect("record arithmetic");
    let mut ds = Dataset::new(inputs, labels, CIFAR_CLASSES)?;
    ds.normalize()?;
    Ok(ds)
}

/// The five training batch files of an extracted CIFAR-10 binary archive.
pub fn cifar10_train_files(dir: &Path) -> Vec<PathBuf> {
    (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect()
}

/// Shuffled mini-batches without replacement; a short final batch is dropped
/// and a new pass is reshuffled.
#[derive(Debug, Clone)]
pub struct BatchIter {
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    rng: SeededRng,
}

impl BatchIter {
    pub fn new(n: usize, batch_size: usize, rng: SeededRng) -> Result<Self> {
        if batch_size < 2 || batch_size > n {
            return Err(Error::InvalidArgument(format!(
                "batch size {batch_size} must be in [2, {n}]"
            )));
        }
        let mut it = BatchIter {
            order: (0..n).collect(),
            pos: 0,
            batch_size,
            rng,
        };
        it.rng.shuffle(&mut it.order);
        Ok(it)
    }

    pub fn batches_per_pass(&self) -> usize {
        self.order.len() / self.batch_size
    }

    /// Indices of the next batch, starting a new shuffled pass when needed.
    pub fn next_indices(&mut self) -> Vec<usize> {
        if self.pos + self.batch_size > self.order.len() {
            self.order.sort_unstable();
            self.rng.shuffle(&mut self.order);
            self.pos = 0;
        }
        let idx = self.order[self.pos..self.pos + self.batch_size].to_vec();
        self.pos += self.batch_size;
        idx
    }
}

/// Training accuracy of a multinomial logistic regression fit by full-batch
/// gradient descent; used to confirm that a dataset is linearly separable.
pub fn linear_probe_accuracy(ds: &Dataset, steps: usize, lr: f64) -> f64 {
    let (n, d) = ds.inputs.dim();
    let c = ds.num_classes;
    let mut w = Array2::<f64>::zeros((d, c));
    let mut b = ndarray::Array1::<f64>::zeros(c);
    let predict = |w: &Array2<f64>, b: &ndarray::Array1<f64>| {
        let mut z = ds.inputs.dot(w);
        z += b;
        z
    };
    for _ in 0..steps {
        let mut z = predict(&w, &b);
        for mut row in z.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row /= s;
        }
        for (i, &l) in ds.labels.iter().enumerate() {
            z[[i, l]] -= 1.0;
        }
        z /= n as f64;
        w -= &(ds.inputs.t().dot(&z) * lr);
        b -= &(z.sum_axis(Axis(0)) * lr);
    }
    let z = predict(&w, &b);
    let correct = z
        .rows()
        .into_iter()
        .zip(&ds.labels)
        .filter(|(row, &l)| argmax(row.as_slice().expect("contiguous")) == l)
        .count();
    correct as f64 / n as f64
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// First `n` rows of a dataset (used to shrink CIFAR-10 for desk runs).
pub fn truncate(ds: &Dataset, n: usize) -> Dataset {
    let n = n.min(ds.len());
    Dataset {
        inputs: ds.inputs.slice(s![..n, ..]).to_owned(),
        labels: ds.labels[..n].to_vec(),
        num_classes: ds.num_classes,
    }
}
