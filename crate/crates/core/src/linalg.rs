//! Dense factorizations.
//!
//! [`LaplacianFactor`] factors precision matrices of the form
//! `D - W + sigma^2 I` (a weighted graph Laplacian plus a ridge). Such a matrix
//! is a symmetric, strictly diagonally dominant M-matrix whose rows all sum to
//! `sigma^2`. The elimination tracks each row's excess over its off-diagonal
//! mass instead of the diagonal itself, so every pivot is a sum of
//! nonnegative terms. No cancellation occurs, and pivots keep full relative
//! accuracy even when `sigma^2` is many orders of magnitude below the edge
//! weights. A textbook Cholesky would lose them there.
//!
//! General symmetric positive-definite matrices go through nalgebra's
//! Cholesky.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// `C = U^T diag(pivots) U` for `C = D - W + sigma^2 I`, with `U` unit upper
/// triangular (stored row-major, strictly upper part only).
#[derive(Debug, Clone)]
pub struct LaplacianFactor {
    n: usize,
    upper: Vec<f64>,
    pivots: Vec<f64>,
}

impl LaplacianFactor {
    /// Factors `D - W + sigma2 I`. `weights` must be a symmetric `n x n`
    /// row-major matrix with nonnegative entries; its diagonal is ignored.
    pub fn new(weights: &[f64], n: usize, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::NotPositiveDefinite { sigma2 });
        }
        debug_assert_eq!(weights.len(), n * n);

        // Work on the magnitudes of the off-diagonal entries, a[i][j] = |C_ij|.
        let mut a = weights.to_vec();
        for i in 0..n {
            a[i * n + i] = 0.0;
        }
        let mut excess = vec![sigma2; n];
        let mut pivots = vec![0.0; n];

        for k in 0..n {
            let (head, tail) = a.split_at_mut((k + 1) * n);
            let row_k = &mut head[k * n..];
            let off: f64 = row_k[k + 1..].iter().sum();
            let p = excess[k] + off;
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::NotPositiveDefinite { sigma2 });
            }
            pivots[k] = p;
            let ek = excess[k];
            // Schur complement on the trailing block.
            for (r, row_i) in tail.chunks_exact_mut(n).enumerate() {
                let i = k + 1 + r;
                let aik = row_k[i];
                if aik == 0.0 {
                    continue;
                }
                let f = aik / p;
                excess[i] += f * ek;
                for j in (k + 1)..n {
                    if j != i {
                        row_i[j] += f * row_k[j];
                    }
                }
            }
            // Row k now holds the multipliers U_kj = -|C_kj| / p.
            for v in &mut row_k[k + 1..] {
                *v = -*v / p;
            }
        }
        Ok(Self {
            n,
            upper: a,
            pivots,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }

    /// `log |C|`, the sum of the log pivots.
    pub fn log_det(&self) -> f64 {
        self.pivots.iter().map(|p| p.ln()).sum()
    }

    /// Row-major `R = diag(pivots)^{-1/2} U^{-T}`, so that `C^{-1} = R^T R`.
    ///
    /// `U^{-T}` is lower triangular with nonnegative entries, so its columns
    /// are computed by forward substitution without cancellation.
    pub fn inverse_root(&self) -> Vec<f64> {
        let n = self.n;
        // z[j][i] = (U^{-T})_{ij}, filled column by column (stored as rows).
        let mut z = vec![0.0; n * n];
        for j in 0..n {
            let col = &mut z[j * n..(j + 1) * n];
            col[j] = 1.0;
            for i in (j + 1)..n {
                let mut s = 0.0;
                for m in j..i {
                    s -= self.upper[m * n + i] * col[m];
                }
                col[i] = s;
            }
        }
        // R_{ij} = z[j][i] / sqrt(p_i).
        let mut r = vec![0.0; n * n];
        for j in 0..n {
            for i in j..n {
                r[i * n + j] = z[j * n + i] / self.pivots[i].sqrt();
            }
        }
        r
    }
}

/// Products of the inverse precision needed by the evidence gradient.
#[derive(Debug, Clone)]
pub struct InverseSummary {
    n: usize,
    /// `(e_i - e_j)^T C^{-1} (e_i - e_j)` for every pair, row-major.
    pub resistance: Vec<f64>,
    /// `tr(C^{-1})`.
    pub trace: f64,
}

impl InverseSummary {
    pub fn new(factor: &LaplacianFactor) -> Self {
        let n = factor.dim();
        let r = factor.inverse_root();
        // Column i of R, contiguous, nonzero from row i downwards.
        let mut cols = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                cols[j * n + i] = r[i * n + j];
            }
        }
        let trace = cols.iter().map(|v| v * v).sum();
        let mut resistance = vec![0.0; n * n];
        for i in 0..n {
            let ci = &cols[i * n..(i + 1) * n];
            for j in (i + 1)..n {
                let cj = &cols[j * n..(j + 1) * n];
                let v: f64 = ci[i..].iter().zip(&cj[i..]).map(|(a, b)| (a - b) * (a - b)).sum();
                resistance[i * n + j] = v;
                resistance[j * n + i] = v;
            }
        }
        Self {
            n,
            resistance,
            trace,
        }
    }

    #[inline]
    pub fn resistance(&self, i: usize, j: usize) -> f64 {
        self.resistance[i * self.n + j]
    }
}

/// Cholesky factorization of a general symmetric positive-definite matrix.
pub fn cholesky(a: DMatrix<f64>, sigma2_hint: f64) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(a).ok_or(Error::NotPositiveDefinite { sigma2: sigma2_hint })
}

/// `log |A|` from a Cholesky factor: twice the sum of log diagonal entries.
pub fn cholesky_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}
