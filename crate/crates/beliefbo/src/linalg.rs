//! Dense Cholesky with a jitter ladder.
//!
//! Training-set sizes here are small (tens of points), so a straightforward
//! lower-triangular factorization is plenty fast.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Jitter ladder: first attempt is unjittered, then 1e-8 up to 1e-4.
const JITTER_LADDER: [f64; 6] = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Array2<f64>,
    pub jitter: f64,
}

fn raw_cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[[i, j]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Some(l)
}

impl Cholesky {
    /// Factor `a + jitter*I`, escalating jitter until it succeeds.
    pub fn with_jitter(a: &Array2<f64>) -> Result<Self> {
        debug_assert_eq!(a.nrows(), a.ncols());
        let mut last = 0.0;
        for &jit in &JITTER_LADDER {
            last = jit;
            let mut m = a.clone();
            if jit > 0.0 {
                for i in 0..m.nrows() {
                    m[[i, i]] += jit;
                }
            }
            if let Some(lower) = raw_cholesky(&m) {
                return Ok(Self { lower, jitter: jit });
            }
        }
        Err(Error::NotPositiveDefinite { last_jitter: last })
    }

    pub fn n(&self) -> usize {
        self.lower.nrows()
    }

    /// Solve `A x = b`.
    pub fn solve_vec(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let n = self.n();
        let l = &self.lower;
        let mut y = b.to_owned();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[[i, k]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        y
    }

    /// Solve `A X = B` column by column.
    pub fn solve_mat(&self, b: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(b.raw_dim());
        for (j, col) in b.columns().into_iter().enumerate() {
            out.column_mut(j).assign(&self.solve_vec(col));
        }
        out
    }

    /// `log det A = 2 * sum(log diag L)`.
    pub fn log_det(&self) -> f64 {
        (0..self.n()).map(|i| self.lower[[i, i]].ln()).sum::<f64>() * 2.0
    }

    pub fn lower_entry(&self, i: usize, j: usize) -> f64 {
        self.lower[[i, j]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn factors_and_solves_spd_system() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let ch = Cholesky::with_jitter(&a).unwrap();
        assert_eq!(ch.jitter, 0.0);
        let b = array![1.0, 2.0, 3.0];
        let x = ch.solve_vec(b.view());
        let back = a.dot(&x);
        for i in 0..3 {
            assert_abs_diff_eq!(back[i], b[i], epsilon = 1e-10);
        }
        // log det via direct 3x3 determinant
        let det: f64 = 4.0 * (3.0 * 2.0 - 0.04) - 1.0 * (2.0 - 0.1) + 0.5 * (0.2 - 1.5);
        assert_abs_diff_eq!(ch.log_det(), det.ln(), epsilon = 1e-10);
    }

    #[test]
    fn jitter_rescues_rank_deficient_matrix() {
        // duplicated rows make this exactly singular
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        let ch = Cholesky::with_jitter(&a).unwrap();
        assert!(ch.jitter > 0.0);
    }

    #[test]
    fn hopeless_matrix_reports_last_jitter() {
        let a = array![[-5.0, 0.0], [0.0, -5.0]];
        match Cholesky::with_jitter(&a) {
            Err(Error::NotPositiveDefinite { last_jitter }) => {
                assert_abs_diff_eq!(last_jitter, 1e-4);
            }
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }
}
