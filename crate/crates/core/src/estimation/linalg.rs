//! Envelope (profile) Cholesky factorization on dense storage.
//!
//! Row `i` of `L` is nonzero only from the first nonzero column of row `i` of
//! the input, so banded graph systems factor in time proportional to the sum
//! of squared row profiles instead of `n³`.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    // Column `i` holds row `i` of L, so inner products run over contiguous memory.
    lt: DMatrix<f64>,
    first: Vec<usize>,
}

impl EnvelopeCholesky {
    /// Factors a symmetric matrix, reading only its lower triangle. Returns
    /// `None` if a pivot is not positive.
    pub fn factor(a: &DMatrix<f64>) -> Option<Self> {
        let n = a.nrows();
        let first: Vec<usize> = (0..n)
            .map(|i| (0..i).find(|&j| a[(i, j)] != 0.0).unwrap_or(i))
            .collect();
        let mut lt = DMatrix::zeros(n, n);
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let start = fi.max(first[j]);
                let dot = if start < j {
                    lt.view((start, i), (j - start, 1))
                        .dot(&lt.view((start, j), (j - start, 1)))
                } else {
                    0.0
                };
                lt[(j, i)] = (a[(i, j)] - dot) / lt[(j, j)];
            }
            let sq = if fi < i {
                lt.view((fi, i), (i - fi, 1)).norm_squared()
            } else {
                0.0
            };
            let d = a[(i, i)] - sq;
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            lt[(i, i)] = d.sqrt();
        }
        Some(Self { lt, first })
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut y = b.clone();
        for i in 0..n {
            let fi = self.first[i];
            let dot = if fi < i {
                self.lt.view((fi, i), (i - fi, 1)).dot(&y.rows(fi, i - fi))
            } else {
                0.0
            };
            y[i] = (y[i] - dot) / self.lt[(i, i)];
        }
        for i in (0..n).rev() {
            y[i] /= self.lt[(i, i)];
            let xi = y[i];
            for k in self.first[i]..i {
                y[k] -= self.lt[(k, i)] * xi;
            }
        }
        y
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for c in 0..b.ncols() {
            out.set_column(c, &self.solve(&b.column(c).into_owned()));
        }
        out
    }

    /// Lower-triangular factor as a dense matrix.
    pub fn l(&self) -> DMatrix<f64> {
        self.lt.transpose()
    }
}
