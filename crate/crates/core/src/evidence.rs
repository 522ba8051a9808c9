//! Log marginal likelihood (evidence) of the Laplacian prior and its gradient.
//!
//! With precision `C = D - W + sigma^2 I` the targets have density
//! `N(0, C^{-1})`, so
//!
//! ```text
//! L = 1/2 log|C| - 1/2 y^T C y - n/2 log(2 pi)
//! dL/dt = 1/2 tr(C^{-1} dC/dt) - 1/2 y^T (dC/dt) y
//! ```
//!
//! Continuous hyperparameters are handled in log space. For an edge-weight
//! parameter `t` the precision derivative is the Laplacian of `dW/dt`, which
//! lets both terms be written as sums over edges:
//!
//! ```text
//! dL/dt = 1/2 sum_{i<j} dw_ij/dt * (R_ij - (y_i - y_j)^2)
//! ```
//!
//! where `R_ij = (e_i - e_j)^T C^{-1} (e_i - e_j)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::BandwidthSpec;
use crate::laplacian::{build_precision, build_weight_matrix, WeightSpec};
use crate::linalg::{cholesky, cholesky_log_det, InverseSummary, LaplacianFactor};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Hyperparameters of a Laplacian model.
///
/// The continuous block, in order, is the bandwidth(s) (kernel weights only),
/// `sigma0`, then `sigma`. Optimization works on their logarithms; `fixed`
/// marks entries of that block that are held constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub bandwidth: Option<BandwidthSpec>,
    pub k: Option<usize>,
    pub sigma0: f64,
    pub sigma: f64,
    pub fixed: Vec<bool>,
}

impl HyperParams {
    pub fn kernel(bandwidth: BandwidthSpec, sigma0: f64, sigma: f64) -> Self {
        let fixed = vec![false; bandwidth.n_params() + 2];
        Self {
            bandwidth: Some(bandwidth),
            k: None,
            sigma0,
            sigma,
            fixed,
        }
    }

    pub fn mutual(k: usize, sigma0: f64, sigma: f64) -> Self {
        Self {
            bandwidth: None,
            k: Some(k),
            sigma0,
            sigma,
            fixed: vec![false; 2],
        }
    }

    /// Holds `sigma0` and `sigma` fixed so that only bandwidths move.
    pub fn bandwidth_only(mut self) -> Self {
        let n = self.fixed.len();
        self.fixed[n - 2] = true;
        self.fixed[n - 1] = true;
        self
    }

    pub fn with_fixed(mut self, fixed: Vec<bool>) -> Self {
        self.fixed = fixed;
        self
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn n_continuous(&self) -> usize {
        self.bandwidth.as_ref().map_or(0, BandwidthSpec::n_params) + 2
    }

    /// Logarithms of the continuous block.
    pub fn log_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .bandwidth
            .as_ref()
            .map(|b| b.values().iter().map(|h| h.ln()).collect())
            .unwrap_or_default();
        v.push(self.sigma0.ln());
        v.push(self.sigma.ln());
        v
    }

    pub fn with_log_values(&self, logs: &[f64]) -> Self {
        let mut out = self.clone();
        let nb = self.n_continuous() - 2;
        if let Some(b) = &self.bandwidth {
            let hs: Vec<f64> = logs[..nb].iter().map(|v| v.exp()).collect();
            out.bandwidth = Some(b.with_values(&hs));
        }
        out.sigma0 = logs[nb].exp();
        out.sigma = logs[nb + 1].exp();
        out
    }

    /// Copy with the continuous entries at `indices` set to `exp(logs)`;
    /// every other entry is carried over bit-for-bit.
    pub fn with_log_entries(&self, indices: &[usize], logs: &[f64]) -> Self {
        let mut out = self.clone();
        let nb = self.n_continuous() - 2;
        let mut hs = self.bandwidth.as_ref().map(BandwidthSpec::values).unwrap_or_default();
        for (&i, v) in indices.iter().zip(logs) {
            match i.cmp(&nb) {
                std::cmp::Ordering::Less => hs[i] = v.exp(),
                std::cmp::Ordering::Equal => out.sigma0 = v.exp(),
                std::cmp::Ordering::Greater => out.sigma = v.exp(),
            }
        }
        if let Some(b) = &self.bandwidth {
            out.bandwidth = Some(b.with_values(&hs));
        }
        out
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.n_continuous()).filter(|&i| !self.fixed[i]).collect()
    }

    pub fn weight_spec(&self) -> Result<WeightSpec> {
        match (&self.bandwidth, self.k) {
            (Some(b), None) => Ok(WeightSpec::Kernel {
                bandwidth: b.clone(),
                sigma0: self.sigma0,
            }),
            (None, Some(k)) => Ok(WeightSpec::MutualKnn {
                k,
                sigma0: self.sigma0,
            }),
            _ => Err(Error::InvalidInput(
                "hyperparameters need exactly one of a bandwidth or k".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fixed.len() != self.n_continuous() {
            return Err(Error::InvalidInput(format!(
                "fixed mask has {} entries, expected {}",
                self.fixed.len(),
                self.n_continuous()
            )));
        }
        if !(self.sigma > 0.0 && self.sigma0 > 0.0) || !(self.sigma * self.sigma0).is_finite() {
            return Err(Error::InvalidInput(format!(
                "sigma0 = {} and sigma = {} must be positive",
                self.sigma0, self.sigma
            )));
        }
        if self.k == Some(0) {
            return Err(Error::KOutOfRange { k: 0, max: 0 });
        }
        Ok(())
    }
}

/// Evidence value and its gradient with respect to the free continuous
/// hyperparameters (in log space).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceResult {
    pub log_evidence: f64,
    pub gradient: Vec<f64>,
}

/// Log evidence of a general symmetric positive-definite precision matrix.
pub fn log_evidence(precision: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    let n = y.len();
    if precision.nrows() != n || precision.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: precision.nrows(),
            got: n,
        });
    }
    let yv = DVector::from_column_slice(y);
    let quad = yv.dot(&(precision * &yv));
    let chol = cholesky(precision.clone(), f64::NAN)?;
    Ok(0.5 * cholesky_log_det(&chol) - 0.5 * quad - n as f64 * HALF_LN_2PI)
}

/// `y^T (D - W + sigma2 I) y` via edge differences.
fn laplacian_quadratic(weights: &[f64], n: usize, sigma2: f64, y: &[f64]) -> f64 {
    let mut q = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            q += weights[i * n + j] * (y[i] - y[j]).powi(2);
        }
    }
    q + sigma2 * y.iter().map(|v| v * v).sum::<f64>()
}

/// Log evidence of `D - W + sigma2 I` using the Laplacian-aware factorization.
pub fn laplacian_log_evidence(weights: &[f64], n: usize, sigma2: f64, y: &[f64]) -> Result<f64> {
    let factor = LaplacianFactor::new(weights, n, sigma2)?;
    Ok(0.5 * factor.log_det() - 0.5 * laplacian_quadratic(weights, n, sigma2, y)
        - n as f64 * HALF_LN_2PI)
}

/// Log evidence of the model defined by `params` on `data`.
pub fn model_log_evidence(data: &Dataset, params: &HyperParams) -> Result<f64> {
    params.validate()?;
    let w = build_weight_matrix(data, &params.weight_spec()?)?;
    laplacian_log_evidence(&w, data.len(), params.sigma2(), data.targets())
}

/// Log evidence and its log-space gradient over the free continuous
/// hyperparameters.
pub fn evidence_gradient(data: &Dataset, params: &HyperParams) -> Result<EvidenceResult> {
    let (log_evidence, full) = evidence_with_full_gradient(data, params)?;
    let gradient = params.free_indices().into_iter().map(|i| full[i]).collect();
    Ok(EvidenceResult {
        log_evidence,
        gradient,
    })
}

/// Log evidence and the log-space gradient over every continuous
/// hyperparameter, fixed or not.
pub fn evidence_with_full_gradient(data: &Dataset, params: &HyperParams) -> Result<(f64, Vec<f64>)> {
    params.validate()?;
    let n = data.len();
    let y = data.targets();
    let sigma2 = params.sigma2();
    let w = build_weight_matrix(data, &params.weight_spec()?)?;
    let factor = LaplacianFactor::new(&w, n, sigma2)?;
    let value = 0.5 * factor.log_det() - 0.5 * laplacian_quadratic(&w, n, sigma2, y)
        - n as f64 * HALF_LN_2PI;
    let inv = InverseSummary::new(&factor);

    let nb = params.n_continuous() - 2;
    let mut grad = vec![0.0; nb + 2];
    for i in 0..n {
        for j in (i + 1)..n {
            let wij = w[i * n + j];
            if wij == 0.0 {
                continue;
            }
            // 1/2 (R_ij - (y_i - y_j)^2), the sensitivity to w_ij.
            let s = 0.5 * (inv.resistance(i, j) - (y[i] - y[j]).powi(2));
            // d w_ij / d log sigma0 = w_ij
            grad[nb] += wij * s;
            match &params.bandwidth {
                Some(BandwidthSpec::Single(h)) => {
                    let d2 = crate::kernel::sq_dist(data.row(i), data.row(j));
                    grad[0] += 2.0 * wij * d2 / (h * h) * s;
                }
                Some(BandwidthSpec::PerDim(hs)) => {
                    let (xi, xj) = (data.row(i), data.row(j));
                    for (m, h) in hs.iter().enumerate() {
                        let u = (xi[m] - xj[m]) / h;
                        grad[m] += 2.0 * wij * u * u * s;
                    }
                }
                None => {}
            }
        }
    }
    // dC / d log sigma = 2 sigma^2 I
    let yy: f64 = y.iter().map(|v| v * v).sum();
    grad[nb + 1] = sigma2 * (inv.trace - yy);
    Ok((value, grad))
}

/// Dense `dC/dt` for every continuous hyperparameter `t` in raw (not log)
/// parameter space, in the order of [`HyperParams::log_values`].
pub fn precision_derivatives(data: &Dataset, params: &HyperParams) -> Result<Vec<DMatrix<f64>>> {
    params.validate()?;
    let n = data.len();
    let w = build_weight_matrix(data, &params.weight_spec()?)?;
    let nb = params.n_continuous() - 2;
    let mut dws: Vec<Vec<f64>> = vec![vec![0.0; n * n]; nb];
    if let Some(bw) = &params.bandwidth {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (xi, xj) = (data.row(i), data.row(j));
                for m in 0..xi.len() {
                    let h = bw.get(m);
                    let slot = if nb == 1 { 0 } else { m };
                    dws[slot][i * n + j] += w[i * n + j] * 2.0 * (xi[m] - xj[m]).powi(2) / h.powi(3);
                }
            }
        }
    }
    let mut out: Vec<DMatrix<f64>> = dws
        .iter()
        .map(|dw| laplacian_of(dw, n))
        .collect::<Result<_>>()?;
    let dw0: Vec<f64> = w.iter().map(|v| v / params.sigma0).collect();
    out.push(laplacian_of(&dw0, n)?);
    out.push(DMatrix::identity(n, n) * (2.0 * params.sigma));
    Ok(out)
}

fn laplacian_of(w: &[f64], n: usize) -> Result<DMatrix<f64>> {
    // D - W, i.e. the precision with a zero ridge.
    let mut c = build_precision(w, n, 1.0)?;
    for i in 0..n {
        c[(i, i)] -= 1.0;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn scalar_and_identity_cases() {
        let y = 1.7;
        let s2: f64 = 0.3;
        let c = DMatrix::from_element(1, 1, s2);
        let expect = 0.5 * s2.ln() - 0.5 * s2 * y * y - 0.5 * (2.0 * PI).ln();
        assert_relative_eq!(log_evidence(&c, &[y]).unwrap(), expect, max_relative = 1e-14);
        assert_relative_eq!(
            laplacian_log_evidence(&[0.0], 1, s2, &[y]).unwrap(),
            expect,
            max_relative = 1e-14
        );

        let id = DMatrix::identity(2, 2);
        assert_relative_eq!(
            log_evidence(&id, &[0.0, 0.0]).unwrap(),
            -(2.0 * PI).ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn non_pd_is_an_error() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]);
        assert!(matches!(
            log_evidence(&c, &[1.0, 1.0]),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn sigma_derivative_at_unit_sigma_is_twice_identity() {
        let d = Dataset::from_1d(vec![0.0, 0.5, 1.5], vec![1.0, 0.0, 2.0]).unwrap();
        let p = HyperParams::kernel(BandwidthSpec::Single(0.8), 2.0, 1.0);
        let ds = precision_derivatives(&d, &p).unwrap();
        assert_eq!(ds.last().unwrap(), &(DMatrix::identity(3, 3) * 2.0));
    }

    fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
        let x: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        Dataset::new(x, d, y).unwrap()
    }

    /// Gradient through dense inverses, the formula applied literally.
    fn dense_gradient(data: &Dataset, p: &HyperParams) -> Vec<f64> {
        let w = build_weight_matrix(data, &p.weight_spec().unwrap()).unwrap();
        let c = build_precision(&w, data.len(), p.sigma2()).unwrap();
        let cinv = c.try_inverse().unwrap();
        let y = DVector::from_column_slice(data.targets());
        let raw = p.log_values().iter().map(|v| v.exp()).collect::<Vec<_>>();
        precision_derivatives(data, p)
            .unwrap()
            .iter()
            .zip(raw)
            .map(|(dc, t)| t * (0.5 * (&cinv * dc).trace() - 0.5 * y.dot(&(dc * &y))))
            .collect()
    }

    #[test]
    fn edge_sum_gradient_matches_dense_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..6 {
            let d = 1 + trial % 3;
            let data = random_dataset(&mut rng, 9, d);
            let params = [
                HyperParams::kernel(BandwidthSpec::Single(0.7), 1.5, 0.8),
                HyperParams::kernel(BandwidthSpec::PerDim(vec![0.5; d]), 3.0, 0.4),
                HyperParams::mutual(2, 2.0, 0.6),
            ];
            for p in &params {
                let (_, fast) = evidence_with_full_gradient(&data, p).unwrap();
                let slow = dense_gradient(&data, p);
                for (a, b) in fast.iter().zip(&slow) {
                    assert_relative_eq!(a, b, epsilon = 1e-10, max_relative = 1e-9);
                }
            }
        }
    }

    #[test]
    fn laplacian_route_matches_cholesky_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = random_dataset(&mut rng, 12, 2);
        let p = HyperParams::kernel(BandwidthSpec::Single(0.6), 4.0, 0.5);
        let w = build_weight_matrix(&data, &p.weight_spec().unwrap()).unwrap();
        let c = build_precision(&w, 12, p.sigma2()).unwrap();
        assert_relative_eq!(
            model_log_evidence(&data, &p).unwrap(),
            log_evidence(&c, data.targets()).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn free_gradient_respects_mask() {
        let data = Dataset::from_1d(vec![0.0, 0.3, 1.0], vec![1.0, 2.0, 0.0]).unwrap();
        let p = HyperParams::kernel(BandwidthSpec::Single(0.5), 1.0, 1e-7).bandwidth_only();
        let r = evidence_gradient(&data, &p).unwrap();
        assert_eq!(r.gradient.len(), 1);
        let (_, full) = evidence_with_full_gradient(&data, &p).unwrap();
        assert_eq!(r.gradient[0], full[0]);
    }

    #[test]
    fn log_value_round_trip() {
        let p = HyperParams::kernel(BandwidthSpec::PerDim(vec![0.5, 2.0]), 3.0, 0.1);
        let q = p.with_log_values(&p.log_values());
        assert_relative_eq!(q.sigma0, 3.0, max_relative = 1e-15);
        assert_eq!(q.fixed, p.fixed);
        assert!(HyperParams::mutual(0, 1.0, 1.0).validate().is_err());
        assert!(HyperParams::mutual(1, -1.0, 1.0).validate().is_err());
    }
}
