//! Graph-Laplacian precision matrices and the Bayesian predictive
//! distribution built on them.
//!
//! The prior precision over training targets is `C = D - W + sigma^2 I`. For a
//! new input the predictive distribution is Gaussian with
//!
//! ```text
//! mean     = sum_i w(x, x_i) y_i / (sum_i w(x, x_i) + sigma^2)
//! variance = 1 / (sum_i w(x, x_i) + sigma^2)
//! ```
//!
//! Kernel edge weights `sigma0 * k(x_i, x_j)` give Bayesian kernel
//! regression; mutual k-NN indicator weights `sigma0 * [i ~ j]` give Bayesian
//! mutual k-NN regression.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{check_dim, BandwidthSpec};
use crate::neighbors::{mutual_neighbors, NeighborTable};

/// Edge-weight rule for the data graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    /// `w_ij = sigma0 * exp(-||(x_i - x_j) H^{-1}||^2)`.
    Kernel { bandwidth: BandwidthSpec, sigma0: f64 },
    /// `w_ij = sigma0` when `i` and `j` are each among the other's `k` nearest
    /// neighbors, else 0.
    MutualKnn { k: usize, sigma0: f64 },
}

impl WeightSpec {
    pub fn sigma0(&self) -> f64 {
        match self {
            WeightSpec::Kernel { sigma0, .. } | WeightSpec::MutualKnn { sigma0, .. } => *sigma0,
        }
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        let s0 = self.sigma0();
        if !(s0 > 0.0) || !s0.is_finite() {
            return Err(Error::InvalidInput(format!("sigma0 must be positive, got {s0}")));
        }
        match self {
            WeightSpec::Kernel { bandwidth, .. } => bandwidth.validate(data.dim()),
            WeightSpec::MutualKnn { k, .. } if *k == 0 || *k > data.len() => {
                Err(Error::KOutOfRange {
                    k: *k,
                    max: data.len(),
                })
            }
            WeightSpec::MutualKnn { .. } => Ok(()),
        }
    }
}

/// Predictive mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// Symmetric `n x n` edge-weight matrix (row-major) with zero diagonal.
pub fn build_weight_matrix(data: &Dataset, spec: &WeightSpec) -> Result<Vec<f64>> {
    spec.validate(data)?;
    let n = data.len();
    let mut w = vec![0.0; n * n];
    match spec {
        WeightSpec::Kernel { bandwidth, sigma0 } => {
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = sigma0 * bandwidth.kernel(data.row(i), data.row(j));
                    w[i * n + j] = v;
                    w[j * n + i] = v;
                }
            }
        }
        WeightSpec::MutualKnn { k, sigma0 } => {
            let adj = NeighborTable::new(data).mutual_adjacency(*k);
            for (wij, &a) in w.iter_mut().zip(&adj) {
                if a {
                    *wij = *sigma0;
                }
            }
        }
    }
    Ok(w)
}

/// `D - W + sigma2 I` as a dense matrix.
pub fn build_precision(weights: &[f64], n: usize, sigma2: f64) -> Result<DMatrix<f64>> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::NotPositiveDefinite { sigma2 });
    }
    if weights.len() != n * n {
        return Err(Error::InvalidInput(format!(
            "weight matrix has {} entries, expected {}",
            weights.len(),
            n * n
        )));
    }
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut degree = 0.0;
        for j in 0..n {
            if i != j {
                let wij = weights[i * n + j];
                degree += wij;
                c[(i, j)] = -wij;
            }
        }
        c[(i, i)] = degree + sigma2;
    }
    Ok(c)
}

/// A fitted graph-Laplacian Gaussian-process regressor.
///
/// Serializes to its specification, `sigma2` and training data only; the
/// weight and precision matrices are rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "LaplacianModelDoc", into = "LaplacianModelDoc")]
pub struct LaplacianModel {
    spec: WeightSpec,
    sigma2: f64,
    train: Dataset,
    weights: Vec<f64>,
    precision: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct LaplacianModelDoc {
    spec: WeightSpec,
    sigma2: f64,
    train: Dataset,
}

impl TryFrom<LaplacianModelDoc> for LaplacianModel {
    type Error = Error;

    fn try_from(doc: LaplacianModelDoc) -> Result<Self> {
        LaplacianModel::fit(doc.train, doc.spec, doc.sigma2)
    }
}

impl From<LaplacianModel> for LaplacianModelDoc {
    fn from(m: LaplacianModel) -> Self {
        Self {
            spec: m.spec,
            sigma2: m.sigma2,
            train: m.train,
        }
    }
}

impl LaplacianModel {
    pub fn fit(train: Dataset, spec: WeightSpec, sigma2: f64) -> Result<Self> {
        let weights = build_weight_matrix(&train, &spec)?;
        let precision = build_precision(&weights, train.len(), sigma2)?;
        Ok(Self {
            spec,
            sigma2,
            train,
            weights,
            precision,
        })
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    /// Row-major edge weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn log_evidence(&self) -> Result<f64> {
        crate::evidence::laplacian_log_evidence(
            &self.weights,
            self.train.len(),
            self.sigma2,
            self.train.targets(),
        )
    }

    /// Edge weight between the query and every training point.
    pub fn query_weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(&self.train, x)?;
        match &self.spec {
            WeightSpec::Kernel { bandwidth, sigma0 } => Ok(self
                .train
                .rows()
                .map(|xi| sigma0 * bandwidth.kernel(x, xi))
                .collect()),
            WeightSpec::MutualKnn { k, sigma0 } => {
                let mut w = vec![0.0; self.train.len()];
                for i in mutual_neighbors(x, &self.train, *k)?.indices {
                    w[i] = *sigma0;
                }
                Ok(w)
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let w = self.query_weights(x)?;
        let den = w.iter().sum::<f64>() + self.sigma2;
        let num: f64 = w.iter().zip(self.train.targets()).map(|(w, y)| w * y).sum();
        Ok(Prediction {
            mean: num / den,
            variance: 1.0 / den,
        })
    }
}

pub fn query_weights(x: &[f64], model: &LaplacianModel) -> Result<Vec<f64>> {
    model.query_weights(x)
}

pub fn predict(x: &[f64], model: &LaplacianModel) -> Result<Prediction> {
    model.predict(x)
}
