//! Nonparametric regression with graph-Laplacian Gaussian-process extensions.
//!
//! The crate provides three classical estimators (Nadaraya-Watson kernel
//! regression, k-NN regression and mutual k-NN regression) together with
//! their Bayesian counterparts. The Bayesian variants place a Gaussian-process
//! prior on the targets whose precision matrix is a graph Laplacian plus a
//! ridge, `C = D - W + sigma^2 I`. With kernel edge weights the predictive mean
//! is a shrunk kernel regression estimate; with mutual k-NN edge weights it is
//! a shrunk mutual k-NN estimate. Both converge to the classical estimate as
//! `sigma^2 / sigma0 -> 0`, and both expose a log marginal likelihood
//! (evidence) that selects bandwidths and `k` without cross-validation.
//!
//! Modules:
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`dataset`] | datasets, sinc generators, yacht loader, normalization, folds |
//! | [`kernel`] | Gaussian kernel, bandwidths, Nadaraya-Watson estimate |
//! | [`neighbors`] | k-NN and mutual k-NN sets and estimates |
//! | [`laplacian`] | Laplacian precision and Bayesian predictive distribution |
//! | [`evidence`] | log evidence and its analytic gradient |
//! | [`optimize`] | evidence ascent over continuous hyperparameters |
//! | [`selection`] | discrete `k` selection and leave-one-out baselines |
//! | [`gpr`] | squared-exponential GP regression baseline |
//! | [`model`] | serializable fitted models used by the CLI and FFI |
//! | [`benchmark`] | experiment suites and reports |

pub mod benchmark;
pub mod dataset;
pub mod error;
pub mod evidence;
pub mod gpr;
pub mod kernel;
pub mod laplacian;
pub mod linalg;
pub mod model;
pub mod neighbors;
pub mod optimize;
pub mod selection;

pub use dataset::{Dataset, FoldAssignment, Normalizer};
pub use error::{Error, Result};
pub use evidence::{EvidenceResult, HyperParams};
pub use gpr::SEHypers;
pub use kernel::BandwidthSpec;
pub use laplacian::{LaplacianModel, Prediction, WeightSpec};
pub use neighbors::NeighborSet;
