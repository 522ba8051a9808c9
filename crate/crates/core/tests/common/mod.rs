//! Independent reference computations shared by the integration tests. None
//! of these call into the library's linear algebra or graph construction.

#![allow(dead_code)]

use bkreg::dataset::Dataset;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// LU with partial pivoting: returns `(log|det A|, sign, A^{-1} b)`.
pub fn lu_solve(a: &[Vec<f64>], b: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &v)| {
        let mut row = r.clone();
        row.push(v);
        row
    }).collect();
    let mut log_det = 0.0;
    let mut sign = 1.0;
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| m[i][c].abs().partial_cmp(&m[j][c].abs()).unwrap())
            .unwrap();
        if p != c {
            m.swap(p, c);
            sign = -sign;
        }
        let piv = m[c][c];
        assert!(piv != 0.0, "singular matrix");
        log_det += piv.abs().ln();
        if piv < 0.0 {
            sign = -sign;
        }
        for r in (c + 1)..n {
            let f = m[r][c] / piv;
            for k in c..=n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = ((r + 1)..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    (log_det, sign, x)
}

/// `1/2 log|C| - 1/2 y^T C y - (n/2) log 2 pi` for a precision matrix `C`.
pub fn precision_log_evidence(c: &[Vec<f64>], y: &[f64]) -> f64 {
    let (log_det, sign, _) = lu_solve(c, y);
    assert!(sign > 0.0);
    let quad: f64 = (0..y.len())
        .map(|i| y[i] * (0..y.len()).map(|j| c[i][j] * y[j]).sum::<f64>())
        .sum();
    0.5 * log_det - 0.5 * quad - 0.5 * y.len() as f64 * LN_2PI
}

/// `-1/2 y^T K^{-1} y - 1/2 log|K| - (n/2) log 2 pi` for a covariance `K`.
pub fn covariance_log_evidence(k: &[Vec<f64>], y: &[f64]) -> f64 {
    let (log_det, sign, alpha) = lu_solve(k, y);
    assert!(sign > 0.0);
    let quad: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    -0.5 * quad - 0.5 * log_det - 0.5 * y.len() as f64 * LN_2PI
}

fn sq(a: &[f64], b: &[f64], h: &[f64]) -> f64 {
    a.iter().zip(b).zip(h).map(|((x, y), h)| ((x - y) / h).powi(2)).sum()
}

/// Kernel edge weights `sigma0 exp(-sum ((x_i - x_j) / h_m)^2)`, zero diagonal.
pub fn kernel_weights(data: &Dataset, h: &[f64], sigma0: f64) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[i][j] = sigma0 * (-sq(data.row(i), data.row(j), h)).exp();
            }
        }
    }
    w
}

/// Mutual k-NN edge weights by brute force: `j` is among `i`'s `k` nearest
/// other points (ties to the lower index) and vice versa.
pub fn mutual_weights(data: &Dataset, k: usize, sigma0: f64) -> Vec<Vec<f64>> {
    let n = data.len();
    let ones = vec![1.0; data.dim()];
    let lists: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| {
                let da = sq(data.row(i), data.row(a), &ones);
                let db = sq(data.row(i), data.row(b), &ones);
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            });
            others.truncate(k);
            others
        })
        .collect();
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for &j in &lists[i] {
            if lists[j].contains(&i) {
                w[i][j] = sigma0;
            }
        }
    }
    w
}

/// `D - W + sigma2 I`.
pub fn precision(w: &[Vec<f64>], sigma2: f64) -> Vec<Vec<f64>> {
    let n = w.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        w[i].iter().sum::<f64>() + sigma2
                    } else {
                        -w[i][j]
                    }
                })
                .collect()
        })
        .collect()
}

pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
    let x: Vec<f64> = (0..n * d).map(|_| rng.gen_range(0.0..1.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    Dataset::new(x, d, y).unwrap()
}

pub fn test_mse(model_mean: impl Fn(&[f64]) -> f64, test: &Dataset) -> f64 {
    (0..test.len())
        .map(|i| (model_mean(test.row(i)) - test.target(i)).powi(2))
        .sum::<f64>()
        / test.len() as f64
}
