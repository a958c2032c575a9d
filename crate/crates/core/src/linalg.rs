//! Dense vector helpers shared by the objective and the optimizer.

use ndarray::Array2;
use rayon::prelude::*;

/// `K v` for a dense row-major matrix. Rows are processed in parallel, each
/// row reduced sequentially so the result does not depend on thread count.
pub fn matvec(k: &Array2<f64>, v: &[f64]) -> Vec<f64> {
    assert_eq!(k.ncols(), v.len(), "matvec dimension mismatch");
    let run = |row: ndarray::ArrayView1<'_, f64>| -> f64 {
        match row.as_slice() {
            Some(r) => dot(r, v),
            None => row.iter().zip(v).map(|(a, b)| a * b).sum(),
        }
    };
    if k.nrows() < 256 {
        k.outer_iter().map(run).collect()
    } else {
        (0..k.nrows()).into_par_iter().map(|i| run(k.row(i))).collect()
    }
}

/// Dot product with four independent accumulators.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
