//! Gaussian kernel, bandwidth schemes and the Nadaraya-Watson estimate.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Kernel bandwidth: one value shared by all dimensions, or one per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthSpec {
    Single(f64),
    PerDim(Vec<f64>),
}

impl BandwidthSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let ok = |h: &f64| h.is_finite() && *h > 0.0;
        match self {
            BandwidthSpec::Single(h) if ok(h) => Ok(()),
            BandwidthSpec::PerDim(hs) if hs.len() != dim => Err(Error::DimensionMismatch {
                expected: dim,
                got: hs.len(),
            }),
            BandwidthSpec::PerDim(hs) if hs.iter().all(ok) => Ok(()),
            _ => Err(Error::InvalidInput(format!(
                "bandwidths must be finite and positive: {self:?}"
            ))),
        }
    }

    /// Bandwidth applied to dimension `m`.
    #[inline]
    pub fn get(&self, m: usize) -> f64 {
        match self {
            BandwidthSpec::Single(h) => *h,
            BandwidthSpec::PerDim(hs) => hs[m],
        }
    }

    /// Number of free bandwidth parameters.
    pub fn n_params(&self) -> usize {
        match self {
            BandwidthSpec::Single(_) => 1,
            BandwidthSpec::PerDim(hs) => hs.len(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            BandwidthSpec::Single(h) => vec![*h],
            BandwidthSpec::PerDim(hs) => hs.clone(),
        }
    }

    /// Same scheme as `self` with the given parameter values.
    pub fn with_values(&self, values: &[f64]) -> Self {
        match self {
            BandwidthSpec::Single(_) => BandwidthSpec::Single(values[0]),
            BandwidthSpec::PerDim(_) => BandwidthSpec::PerDim(values.to_vec()),
        }
    }

    /// Squared norm of the bandwidth-scaled displacement `(a - b) H^{-1}`.
    #[inline]
    pub fn scaled_sq_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            BandwidthSpec::Single(h) => a.iter().zip(b).map(|(x, y)| ((x - y) / h).powi(2)).sum(),
            BandwidthSpec::PerDim(hs) => a
                .iter()
                .zip(b)
                .zip(hs)
                .map(|((x, y), h)| ((x - y) / h).powi(2))
                .sum(),
        }
    }

    /// Kernel value `k(a, b)` under this bandwidth.
    #[inline]
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        (-self.scaled_sq_dist(a, b)).exp()
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `k(z) = exp(-||z||^2)`.
pub fn gaussian_kernel(z: &[f64]) -> f64 {
    (-z.iter().map(|v| v * v).sum::<f64>()).exp()
}

pub(crate) fn check_dim(data: &Dataset, x: &[f64]) -> Result<()> {
    if x.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Kernel weight of the query against every training point.
pub fn kernel_weights(x: &[f64], data: &Dataset, bw: &BandwidthSpec) -> Result<Vec<f64>> {
    check_dim(data, x)?;
    bw.validate(data.dim())?;
    Ok(data.rows().map(|xi| bw.kernel(x, xi)).collect())
}

/// Nadaraya-Watson estimate. Returns 0 when every kernel weight underflows.
pub fn kernel_regress(x: &[f64], data: &Dataset, bw: &BandwidthSpec) -> Result<f64> {
    let w = kernel_weights(x, data, bw)?;
    Ok(weighted_mean_or_zero(&w, data.targets()))
}

pub(crate) fn weighted_mean_or_zero(w: &[f64], y: &[f64]) -> f64 {
    let den: f64 = w.iter().sum();
    if den == 0.0 {
        return 0.0;
    }
    let num: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    num / den
}
