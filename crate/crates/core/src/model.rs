//! A single serializable type covering every estimator, used by the CLI and
//! the C interface.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gpr::GprModel;
use crate::kernel::{check_dim, kernel_regress, BandwidthSpec};
use crate::laplacian::{LaplacianModel, WeightSpec};
use crate::neighbors::{knn_regress, mknn_regress};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum FittedModel {
    /// Nadaraya-Watson kernel regression.
    Kr {
        bandwidth: BandwidthSpec,
        train: Dataset,
    },
    Knn {
        k: usize,
        train: Dataset,
    },
    Mknn {
        k: usize,
        train: Dataset,
    },
    /// Bayesian kernel or mutual k-NN regression.
    Bayesian { model: LaplacianModel },
    Gpr { model: GprModel },
}

impl FittedModel {
    pub fn kr(train: Dataset, bandwidth: BandwidthSpec) -> Result<Self> {
        bandwidth.validate(train.dim())?;
        Ok(Self::Kr { bandwidth, train })
    }

    pub fn knn(train: Dataset, k: usize) -> Result<Self> {
        check_k(&train, k)?;
        Ok(Self::Knn { k, train })
    }

    pub fn mknn(train: Dataset, k: usize) -> Result<Self> {
        check_k(&train, k)?;
        Ok(Self::Mknn { k, train })
    }

    pub fn method(&self) -> &'static str {
        match self {
            Self::Kr { .. } => "kr",
            Self::Knn { .. } => "knn",
            Self::Mknn { .. } => "mknn",
            Self::Bayesian { model } => match model.spec() {
                WeightSpec::Kernel { .. } => "bkr",
                WeightSpec::MutualKnn { .. } => "bmknn",
            },
            Self::Gpr { .. } => "gpr",
        }
    }

    pub fn train(&self) -> &Dataset {
        match self {
            Self::Kr { train, .. } | Self::Knn { train, .. } | Self::Mknn { train, .. } => train,
            Self::Bayesian { model } => model.train(),
            Self::Gpr { model } => model.train(),
        }
    }

    pub fn dim(&self) -> usize {
        self.train().dim()
    }

    /// Whether predictions carry a variance.
    pub fn has_variance(&self) -> bool {
        matches!(self, Self::Bayesian { .. } | Self::Gpr { .. })
    }

    /// Predictive mean, and the variance for probabilistic models.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, Option<f64>)> {
        check_dim(self.train(), x)?;
        match self {
            Self::Kr { bandwidth, train } => Ok((kernel_regress(x, train, bandwidth)?, None)),
            Self::Knn { k, train } => Ok((knn_regress(x, train, *k)?, None)),
            Self::Mknn { k, train } => Ok((mknn_regress(x, train, *k)?, None)),
            Self::Bayesian { model } => {
                let p = model.predict(x)?;
                Ok((p.mean, Some(p.variance)))
            }
            Self::Gpr { model } => {
                let p = model.predict(x)?;
                Ok((p.mean, Some(p.variance)))
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

fn check_k(train: &Dataset, k: usize) -> Result<()> {
    if k == 0 || k > train.len() {
        return Err(Error::KOutOfRange { k, max: train.len() });
    }
    Ok(())
}
