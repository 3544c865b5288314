use crate::error::{Error, Result};
use crate::numkit::Matrix;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

#[inline]
pub fn gelu_scalar(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

#[inline]
pub fn gelu_grad_scalar(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let t = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Tanh-approximation GELU, elementwise.
pub fn gelu(x: &Matrix) -> Matrix {
    x.map(gelu_scalar)
}

pub fn gelu_grad(x: &Matrix) -> Matrix {
    x.map(gelu_grad_scalar)
}

/// Mean softmax cross-entropy over the rows of `logits`, and its gradient
/// `(softmax - onehot) / n`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (n, classes) = logits.shape();
    if n == 0 {
        return Err(Error::EmptyDataset("softmax_cross_entropy"));
    }
    if labels.len() != n {
        return Err(Error::Shape {
            op: "softmax_cross_entropy",
            lhs: (n, classes),
            rhs: (labels.len(), 1),
        });
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::LabelOutOfRange {
            index,
            label,
            classes,
        });
    }

    let inv_n = 1.0 / n as f64;
    let mut grad = Matrix::zeros(n, classes);
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let log_sum = sum.ln();
        loss -= row[label] - max - log_sum;
        for (c, &z) in row.iter().enumerate() {
            let p = (z - max - log_sum).exp();
            let target = if c == label { 1.0 } else { 0.0 };
            grad.set(i, c, (p - target) * inv_n);
        }
    }
    let loss = loss * inv_n;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            op: "softmax_cross_entropy",
        });
    }
    Ok((loss, grad))
}

pub fn sgd_step(param: &Matrix, grad: &Matrix, lr: f64) -> Result<Matrix> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate {lr}")));
    }
    let out = param.zip_map(grad, |p, g| p - lr * g)?;
    if !out.is_finite() {
        return Err(Error::NonFinite { op: "sgd_step" });
    }
    Ok(out)
}

pub fn frobenius_sq(x: &Matrix) -> f64 {
    x.data().iter().map(|v| v * v).sum()
}

/// Index of the largest entry; the lowest index wins exact ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Largest-remainder (Hamilton) apportionment of `total` seats by `weights`.
/// Remainder ties go to the lower index.
pub fn apportion(total: usize, weights: &[f64]) -> Result<Vec<usize>> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || sum <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "apportion weights must be nonnegative with positive sum: {weights:?}"
        )));
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut seats: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = seats.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        seats[i] += 1;
    }
    Ok(seats)
}
