use alloc::vec::Vec;

use crate::numerics::{Real, Tensor};
use crate::{Error, Result};

/// Batch-mean softmax cross-entropy of the final output potentials and its
/// gradient `(softmax(u) − onehot(y)) / m`.
pub fn loss_and_output_grad<S: Real>(potentials: &Tensor<S>, labels: &[usize]) -> Result<(f64, Tensor<S>)> {
    let op = "cross_entropy";
    let (m, c) = match potentials.shape() {
        [m, c] => (*m, *c),
        s => return Err(Error::shape(op, &[labels.len(), 0], s)),
    };
    if labels.len() != m {
        return Err(Error::shape(op, &[labels.len(), c], potentials.shape()));
    }
    if let Some(&label) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::Label { op, label, classes: c });
    }
    potentials.check_finite(op)?;

    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(m * c);
    for (row, &y) in potentials.data().chunks_exact(c).zip(labels) {
        let max = row.iter().map(|v| v.widen()).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| libm::exp(v.widen() - max)).sum();
        let log_z = max + libm::log(sum);
        loss += log_z - row[y].widen();
        for (k, v) in row.iter().enumerate() {
            let p = libm::exp(v.widen() - log_z);
            let onehot = if k == y { 1.0 } else { 0.0 };
            grad.push(S::cast((p - onehot) / m as f64));
        }
    }
    Ok((loss / m as f64, Tensor::from_vec(&[m, c], grad)?))
}

/// Index of the largest potential of each row (first one on ties).
pub fn predict<S: Real>(potentials: &Tensor<S>) -> Vec<usize> {
    let c = potentials.row_len();
    potentials
        .data()
        .chunks_exact(c.max(1))
        .map(|row| {
            let mut best = 0;
            for (k, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}
