//! Gaussian-process regression with a squared-exponential covariance, used as
//! a baseline at user-supplied hyperparameters.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::check_dim;
use crate::laplacian::Prediction;
use crate::linalg::cholesky_log_det;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `v0 exp(-1/2 sum_m l_m (x_m - x'_m)^2) + v1 [same index]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SEHypers {
    pub v0: f64,
    pub v1: f64,
    pub inv_lengthscales: Vec<f64>,
}

impl SEHypers {
    pub fn new(v0: f64, v1: f64, inv_lengthscales: Vec<f64>) -> Result<Self> {
        let h = Self {
            v0,
            v1,
            inv_lengthscales,
        };
        h.validate(None)?;
        Ok(h)
    }

    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.v0) || !ok(self.v1) || !self.inv_lengthscales.iter().all(|&l| ok(l)) {
            return Err(Error::InvalidInput(format!(
                "SE hyperparameters must be positive: {self:?}"
            )));
        }
        if self.inv_lengthscales.is_empty() {
            return Err(Error::InvalidInput("no inverse lengthscales given".into()));
        }
        if let Some(d) = dim {
            if self.inv_lengthscales.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: self.inv_lengthscales.len(),
                });
            }
        }
        Ok(())
    }

    /// Prior variance at any point, `v0 + v1`.
    pub fn kappa(&self) -> f64 {
        self.v0 + self.v1
    }
}

pub fn se_covariance(xi: &[f64], xj: &[f64], hyp: &SEHypers, same_index: bool) -> f64 {
    debug_assert_eq!(xi.len(), xj.len());
    let z: f64 = xi
        .iter()
        .zip(xj)
        .zip(&hyp.inv_lengthscales)
        .map(|((a, b), l)| l * (a - b) * (a - b))
        .sum();
    let c = hyp.v0 * (-0.5 * z).exp();
    if same_index {
        c + hyp.v1
    } else {
        c
    }
}

fn covariance_matrix(data: &Dataset, hyp: &SEHypers, jitter: f64) -> DMatrix<f64> {
    let n = data.len();
    DMatrix::from_fn(n, n, |i, j| {
        se_covariance(data.row(i), data.row(j), hyp, i == j) + if i == j { jitter } else { 0.0 }
    })
}

/// Factors the training covariance, retrying once with `1e-10 v0` jitter.
fn factor(data: &Dataset, hyp: &SEHypers) -> Result<Cholesky<f64, Dyn>> {
    hyp.validate(Some(data.dim()))?;
    if let Some(c) = Cholesky::new(covariance_matrix(data, hyp, 0.0)) {
        return Ok(c);
    }
    let jitter = 1e-10 * hyp.v0;
    log::warn!("GP covariance not positive definite; retrying with jitter {jitter:e}");
    Cholesky::new(covariance_matrix(data, hyp, jitter))
        .ok_or(Error::NotPositiveDefinite { sigma2: hyp.v1 })
}

/// A GP fitted to a training set: the factored covariance and `C^{-1} y`.
///
/// Serializes to its hyperparameters and training data; the factorization
/// is recomputed on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GprModelDoc", into = "GprModelDoc")]
pub struct GprModel {
    hyp: SEHypers,
    train: Dataset,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct GprModelDoc {
    hypers: SEHypers,
    train: Dataset,
}

impl TryFrom<GprModelDoc> for GprModel {
    type Error = Error;

    fn try_from(doc: GprModelDoc) -> Result<Self> {
        GprModel::fit(doc.train, doc.hypers)
    }
}

impl From<GprModel> for GprModelDoc {
    fn from(m: GprModel) -> Self {
        Self {
            hypers: m.hyp,
            train: m.train,
        }
    }
}

impl GprModel {
    pub fn fit(train: Dataset, hyp: SEHypers) -> Result<Self> {
        let chol = factor(&train, &hyp)?;
        let alpha = chol.solve(&DVector::from_column_slice(train.targets()));
        Ok(Self {
            hyp,
            train,
            chol,
            alpha,
        })
    }

    pub fn hypers(&self) -> &SEHypers {
        &self.hyp
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        check_dim(&self.train, x)?;
        let k = DVector::from_iterator(
            self.train.len(),
            self.train.rows().map(|xi| se_covariance(x, xi, &self.hyp, false)),
        );
        let mean = k.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&k).unwrap_or_else(|| k.clone());
        let mut variance = self.hyp.kappa() - v.norm_squared();
        if variance < 0.0 {
            log::warn!("GP predictive variance {variance:e} clamped to 0");
            variance = 0.0;
        }
        Ok(Prediction { mean, variance })
    }

    pub fn log_evidence(&self) -> f64 {
        let y = DVector::from_column_slice(self.train.targets());
        let n = self.train.len() as f64;
        -0.5 * y.dot(&self.alpha) - 0.5 * cholesky_log_det(&self.chol) - n * HALF_LN_2PI
    }
}

pub fn gpr_predict(x: &[f64], data: &Dataset, hyp: &SEHypers) -> Result<Prediction> {
    GprModel::fit(data.clone(), hyp.clone())?.predict(x)
}

/// `-1/2 y^T C^{-1} y - 1/2 log|C| - (n/2) log 2 pi`.
pub fn gpr_log_evidence(data: &Dataset, hyp: &SEHypers) -> Result<f64> {
    Ok(GprModel::fit(data.clone(), hyp.clone())?.log_evidence())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn hyp(l: f64) -> SEHypers {
        SEHypers::new(1.0, 0.1, vec![l]).unwrap()
    }

    #[test]
    fn covariance_examples() {
        let h = hyp(2.0);
        assert_relative_eq!(se_covariance(&[0.3], &[0.3], &h, true), 1.1);
        assert_relative_eq!(se_covariance(&[0.3], &[0.3], &h, false), 1.0);
        assert_relative_eq!(se_covariance(&[0.0], &[1.0], &h, false), (-1.0f64).exp());
    }

    #[test]
    fn single_point() {
        let d = Dataset::from_1d(vec![0.0], vec![2.0]).unwrap();
        let h = hyp(2.0);
        let p = gpr_predict(&[1.0], &d, &h).unwrap();
        assert_relative_eq!(p.mean, (-1.0f64).exp() * 2.0 / 1.1, max_relative = 1e-14);
        let ev = gpr_log_evidence(&d, &h).unwrap();
        assert_relative_eq!(ev, -0.5 * 4.0 / 1.1 - 0.5 * 1.1_f64.ln() - HALF_LN_2PI, max_relative = 1e-14);
    }

    #[test]
    fn zero_targets() {
        let d = Dataset::from_1d(vec![0.0, 0.4, 1.5], vec![0.0; 3]).unwrap();
        let h = hyp(1.0);
        for x in [-1.0, 0.2, 3.0] {
            let p = gpr_predict(&[x], &d, &h).unwrap();
            assert_eq!(p.mean, 0.0);
            assert!(p.variance <= h.kappa());
        }
        let c = covariance_matrix(&d, &h, 0.0);
        let ld = c.clone().cholesky().unwrap();
        assert_relative_eq!(
            gpr_log_evidence(&d, &h).unwrap(),
            -0.5 * cholesky_log_det(&ld) - 3.0 * HALF_LN_2PI,
            max_relative = 1e-14
        );
    }

    #[test]
    fn rejects_bad_hypers() {
        assert!(SEHypers::new(0.0, 1.0, vec![1.0]).is_err());
        assert!(SEHypers::new(1.0, 1.0, vec![]).is_err());
        let d = Dataset::from_1d(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        let h = SEHypers::new(1.0, 1.0, vec![1.0, 1.0]).unwrap();
        assert!(matches!(gpr_predict(&[0.0], &d, &h), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn near_noiseless_interpolates() {
        let xs = vec![-2.0, -0.5, 0.7, 2.4];
        let ys = vec![1.5, -3.0, 0.25, 2.0];
        let d = Dataset::from_1d(xs.clone(), ys.clone()).unwrap();
        let h = SEHypers::new(1.0, 1e-12, vec![4.0]).unwrap();
        let m = GprModel::fit(d, h).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!((m.predict(&[*x]).unwrap().mean - y).abs() <= 1e-6 * 3.0);
        }
    }

    fn points() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (2usize..8).prop_flat_map(|n| {
            (
                proptest::collection::vec(-3.0..3.0f64, n),
                proptest::collection::vec(-2.0..2.0f64, n),
                proptest::collection::vec(-2.0..2.0f64, n),
            )
        })
    }

    proptest! {
        #[test]
        fn mean_is_linear_in_targets((xs, y1, y2) in points(), a in -2.0..2.0f64, b in -2.0..2.0f64, q in -3.0..3.0f64) {
            let h = SEHypers::new(1.3, 0.2, vec![0.8]).unwrap();
            let mix: Vec<f64> = y1.iter().zip(&y2).map(|(u, v)| a * u + b * v).collect();
            let p = |ys: Vec<f64>| gpr_predict(&[q], &Dataset::from_1d(xs.clone(), ys).unwrap(), &h).unwrap().mean;
            let lhs = p(mix);
            let rhs = a * p(y1.clone()) + b * p(y2.clone());
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }

        #[test]
        fn variance_nonincreasing_in_n((xs, ys, _) in points(), q in -3.0..3.0f64) {
            let h = SEHypers::new(1.3, 0.2, vec![0.8]).unwrap();
            let mut last = f64::INFINITY;
            for m in 1..=xs.len() {
                let d = Dataset::from_1d(xs[..m].to_vec(), ys[..m].to_vec()).unwrap();
                let v = gpr_predict(&[q], &d, &h).unwrap().variance;
                prop_assert!(v <= last + 1e-12);
                last = v;
            }
        }
    }
}
