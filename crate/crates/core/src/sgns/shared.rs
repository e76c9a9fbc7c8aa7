use std::sync::atomic::{AtomicU32, Ordering};

use crate::matrix::Matrix;

/// Row-major `f32` matrix that several workers may update without locks.
///
/// Each entry is loaded and stored with relaxed ordering; concurrent
/// read-modify-write of the same entry may lose an update, which sparse
/// SGD tolerates. With a single worker the result is identical to plain
/// sequential updates.
pub(crate) struct SharedMatrix {
    cols: usize,
    data: Vec<AtomicU32>,
}

impl SharedMatrix {
    pub fn from_matrix(m: &Matrix) -> Self {
        SharedMatrix {
            cols: m.cols(),
            data: m.as_slice().iter().map(|v| AtomicU32::new(v.to_bits())).collect(),
        }
    }

    pub fn into_matrix(self, rows: usize) -> Matrix {
        let cols = self.cols;
        Matrix::from_vec(rows, cols, self.data.into_iter().map(|a| f32::from_bits(a.into_inner())).collect())
    }

    #[inline]
    pub fn read_row(&self, row: usize, out: &mut [f32]) {
        let base = row * self.cols;
        for (o, a) in out.iter_mut().zip(&self.data[base..base + self.cols]) {
            *o = f32::from_bits(a.load(Ordering::Relaxed));
        }
    }

    /// `row[i] -= lr * (coeff * x[i])`
    #[inline]
    pub fn apply(&self, row: usize, lr: f32, coeff: f32, x: &[f32]) {
        let base = row * self.cols;
        for (a, &xi) in self.data[base..base + self.cols].iter().zip(x) {
            let cur = f32::from_bits(a.load(Ordering::Relaxed));
            a.store((cur - lr * (coeff * xi)).to_bits(), Ordering::Relaxed);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|a| f32::from_bits(a.load(Ordering::Relaxed)).is_finite())
    }
}
