use crate::error::{Error, Result};
use crate::numkit::{Matrix, SeededRng};

/// Labeled feature rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset("dataset"));
        }
        if features.rows() != labels.len() {
            return Err(Error::Shape {
                op: "dataset",
                lhs: features.shape(),
                rhs: (labels.len(), 1),
            });
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                classes: num_classes,
            });
        }
        if !features.is_finite() {
            return Err(Error::NonFinite { op: "dataset" });
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.features.select_rows(idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
            self.num_classes,
        )
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

/// Gaussian blobs: class means uniform in `[-1, 1]^d`, isotropic noise of
/// standard deviation `spread`, rows shuffled.
pub fn gen_blobs(
    classes: usize,
    dims: usize,
    per_class: usize,
    spread: f64,
    rng: &mut SeededRng,
) -> Result<Dataset> {
    if classes < 2 || dims < 2 || per_class == 0 {
        return Err(Error::InvalidArgument(format!(
            "blobs need >= 2 classes, >= 2 dims and samples per class (got {classes}, {dims}, {per_class})"
        )));
    }
    if spread < 0.0 || spread.is_nan() {
        return Err(Error::InvalidArgument(format!("spread {spread}")));
    }
    let means = rng.uniform_matrix(classes, dims, -1.0, 1.0);
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        for _ in 0..per_class {
            let x = means
                .row(c)
                .iter()
                .map(|&mu| rng.normal(mu, spread))
                .collect();
            rows.push((c, x));
        }
    }
    rng.shuffle(&mut rows);
    let labels = rows.iter().map(|(c, _)| *c).collect();
    let data = rows.into_iter().flat_map(|(_, x)| x).collect();
    Dataset::new(
        Matrix::from_vec(classes * per_class, dims, data)?,
        labels,
        classes,
    )
}

/// Per-class held-out split: `round(fraction·n_c)` shuffled samples of every
/// class go to validation. Returns `(train, validation)` index lists, each sorted.
pub fn stratified_split(
    labels: &[usize],
    num_classes: usize,
    fraction: f64,
    rng: &mut SeededRng,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for c in 0..num_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        rng.shuffle(&mut idx);
        let take = (fraction * idx.len() as f64).round() as usize;
        val.extend_from_slice(&idx[..take]);
        train.extend_from_slice(&idx[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}
