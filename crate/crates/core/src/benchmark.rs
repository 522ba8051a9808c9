//! Experiment suites: the sinc train/test benchmarks and the seeded k-fold
//! yacht benchmarks, each producing one row per estimator.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{kfold, sinc1_train, sinc2_train, sinc_test, Dataset, Normalizer};
use crate::error::{Error, Result};
use crate::evidence::HyperParams;
use crate::kernel::BandwidthSpec;
use crate::laplacian::{LaplacianModel, WeightSpec};
use crate::model::FittedModel;
use crate::optimize::{maximize_evidence, AscentOptions};
use crate::selection::{
    log_grid, loocv_bandwidth, loocv_bandwidth_per_dim, loocv_k, select_k, select_k_refined,
    NeighborEstimator,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Sinc,
    YachtSingle,
    YachtMulti,
    YachtKnn,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Sinc => "sinc",
            Suite::YachtSingle => "yacht-single",
            Suite::YachtMulti => "yacht-multi",
            Suite::YachtKnn => "yacht-knn",
        }
    }

    pub fn needs_data(self) -> bool {
        self != Suite::Sinc
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinc" => Ok(Suite::Sinc),
            "yacht-single" => Ok(Suite::YachtSingle),
            "yacht-multi" => Ok(Suite::YachtMulti),
            "yacht-knn" => Ok(Suite::YachtKnn),
            _ => Err(Error::InvalidInput(format!("unknown suite {s:?}"))),
        }
    }
}

/// One estimator row of a results table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Kernel regression, bandwidth by leave-one-out CV.
    KrCv,
    /// Bayesian kernel regression, hyperparameters by evidence.
    Bkr,
    /// Kernel regression at the evidence-selected bandwidth.
    KrB,
    KnnCv,
    MknnCv,
    /// Bayesian mutual k-NN regression.
    Bmknn,
    /// Mutual k-NN regression at the evidence-selected k.
    MknnB,
}

impl Method {
    pub fn id(self) -> &'static str {
        match self {
            Method::KrCv => "kr_cv",
            Method::Bkr => "bkr",
            Method::KrB => "kr_b",
            Method::KnnCv => "knn_cv",
            Method::MknnCv => "mknn_cv",
            Method::Bmknn => "bmknn",
            Method::MknnB => "mknn_b",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::KrCv => "Kernel regression with CV bandwidth",
            Method::Bkr => "Bayesian kernel regression",
            Method::KrB => "Kernel regression with B bandwidth",
            Method::KnnCv => "k-NN regression with CV k",
            Method::MknnCv => "Mutual k-NN regression with CV k",
            Method::Bmknn => "Bayesian mutual k-NN regression",
            Method::MknnB => "Mutual k-NN regression with B k",
        }
    }
}

/// Search settings shared by every selection scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOptions {
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
    /// Largest `k` searched; `None` means `min(n - 1, 50)`.
    pub kmax: Option<usize>,
    /// Coordinate-descent sweeps for per-dimension LOOCV.
    pub sweeps: usize,
    pub ascent: AscentOptions,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            grid_lo: 1e-2,
            grid_hi: 1e1,
            grid_points: 50,
            kmax: None,
            sweeps: 3,
            ascent: AscentOptions::default(),
        }
    }
}

impl SelectionOptions {
    pub fn grid(&self) -> Vec<f64> {
        log_grid(self.grid_lo, self.grid_hi, self.grid_points)
    }

    pub fn kmax_for(&self, n: usize) -> Result<usize> {
        let cap = n.saturating_sub(1);
        if cap == 0 {
            return Err(Error::InvalidInput("k selection needs at least 2 points".into()));
        }
        Ok(self.kmax.unwrap_or(50).min(cap))
    }
}

/// Starting point of the Bayesian kernel regression ascent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BkrInit {
    pub bandwidth: f64,
    pub sigma0: f64,
    pub sigma: f64,
    /// Hold `sigma0` and `sigma` fixed and move only the bandwidth(s).
    pub bandwidth_only: bool,
}

/// How the Bayesian mutual k-NN hyperparameters are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BmknnMode {
    /// `k` by evidence at fixed `sigma0`, `sigma`.
    Fixed { sigma0: f64, sigma: f64 },
    /// Alternate `k` selection and `(sigma0, sigma)` ascent from this start.
    Refined { sigma0: f64, sigma: f64 },
}

/// Hyperparameters chosen for one fit, with the selection score (log
/// evidence for Bayesian rows, leave-one-out MSE for CV rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chosen {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bandwidth: Option<BandwidthSpec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub log_evidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cv_mse: Option<f64>,
}

impl Chosen {
    fn empty() -> Self {
        Self {
            bandwidth: None,
            k: None,
            sigma0: None,
            sigma: None,
            log_evidence: None,
            cv_mse: None,
        }
    }
}

/// A fitted row and the time its selection took.
#[derive(Debug, Clone)]
pub struct RowFit {
    pub method: Method,
    pub model: FittedModel,
    pub chosen: Chosen,
    pub seconds: f64,
}

/// Fits the three kernel rows: CV bandwidth, Bayesian, and classical at the
/// Bayesian bandwidth.
pub fn fit_kernel_rows(
    train: &Dataset,
    multi: bool,
    init: &BkrInit,
    opts: &SelectionOptions,
) -> Result<Vec<RowFit>> {
    let grid = opts.grid();

    let t = Instant::now();
    let cv = if multi {
        loocv_bandwidth_per_dim(train, &grid, opts.sweeps)?
    } else {
        let specs: Vec<BandwidthSpec> = grid.iter().map(|&h| BandwidthSpec::Single(h)).collect();
        loocv_bandwidth(train, &specs)?
    };
    let kr_cv = RowFit {
        method: Method::KrCv,
        model: FittedModel::kr(train.clone(), cv.bandwidth.clone())?,
        chosen: Chosen {
            bandwidth: Some(cv.bandwidth),
            cv_mse: Some(cv.score),
            ..Chosen::empty()
        },
        seconds: t.elapsed().as_secs_f64(),
    };

    let t = Instant::now();
    let bw0 = if multi {
        BandwidthSpec::PerDim(vec![init.bandwidth; train.dim()])
    } else {
        BandwidthSpec::Single(init.bandwidth)
    };
    let mut start = HyperParams::kernel(bw0, init.sigma0, init.sigma);
    if init.bandwidth_only {
        start = start.bandwidth_only();
    }
    let opt = maximize_evidence(train, &start, &opts.ascent)?;
    if !opt.converged {
        log::warn!(
            "evidence ascent stopped after {} iterations without meeting the gradient tolerance",
            opt.iterations
        );
    }
    let p = opt.params;
    let bandwidth = p.bandwidth.clone().expect("kernel hyperparameters");
    let lap = LaplacianModel::fit(train.clone(), p.weight_spec()?, p.sigma2())?;
    let bayes_secs = t.elapsed().as_secs_f64();
    let chosen = Chosen {
        bandwidth: Some(bandwidth.clone()),
        sigma0: Some(p.sigma0),
        sigma: Some(p.sigma),
        log_evidence: Some(opt.log_evidence),
        ..Chosen::empty()
    };
    let bkr = RowFit {
        method: Method::Bkr,
        model: FittedModel::Bayesian { model: lap },
        chosen: chosen.clone(),
        seconds: bayes_secs,
    };
    let kr_b = RowFit {
        method: Method::KrB,
        model: FittedModel::kr(train.clone(), bandwidth)?,
        chosen,
        seconds: bayes_secs,
    };
    Ok(vec![kr_cv, bkr, kr_b])
}

/// Fits the four neighbor rows: k-NN and mutual k-NN with CV `k`, Bayesian
/// mutual k-NN, and mutual k-NN at the Bayesian `k`.
pub fn fit_neighbor_rows(
    train: &Dataset,
    mode: &BmknnMode,
    opts: &SelectionOptions,
) -> Result<Vec<RowFit>> {
    let kmax = opts.kmax_for(train.len())?;
    let mut rows = Vec::with_capacity(4);
    for (method, est) in [
        (Method::KnnCv, NeighborEstimator::Knn),
        (Method::MknnCv, NeighborEstimator::Mknn),
    ] {
        let t = Instant::now();
        let sel = loocv_k(train, 1..=kmax, est)?;
        let score = sel.trace.iter().find(|e| e.0 == sel.k).map(|e| e.1);
        let model = match est {
            NeighborEstimator::Knn => FittedModel::knn(train.clone(), sel.k)?,
            NeighborEstimator::Mknn => FittedModel::mknn(train.clone(), sel.k)?,
        };
        rows.push(RowFit {
            method,
            model,
            chosen: Chosen {
                k: Some(sel.k),
                cv_mse: score,
                ..Chosen::empty()
            },
            seconds: t.elapsed().as_secs_f64(),
        });
    }

    let t = Instant::now();
    let (k, sigma0, sigma, log_evidence) = match *mode {
        BmknnMode::Fixed { sigma0, sigma } => {
            let sel = select_k(train, 1..=kmax, sigma0, sigma)?;
            let ev = sel.trace.iter().find(|e| e.0 == sel.k).map(|e| e.1);
            (sel.k, sigma0, sigma, ev)
        }
        BmknnMode::Refined { sigma0, sigma } => {
            let r = select_k_refined(train, 1..=kmax, sigma0, sigma, &opts.ascent)?;
            (r.k, r.sigma0, r.sigma, Some(r.log_evidence))
        }
    };
    let lap = LaplacianModel::fit(
        train.clone(),
        WeightSpec::MutualKnn { k, sigma0 },
        sigma * sigma,
    )?;
    let secs = t.elapsed().as_secs_f64();
    let chosen = Chosen {
        k: Some(k),
        sigma0: Some(sigma0),
        sigma: Some(sigma),
        log_evidence,
        ..Chosen::empty()
    };
    rows.push(RowFit {
        method: Method::Bmknn,
        model: FittedModel::Bayesian { model: lap },
        chosen: chosen.clone(),
        seconds: secs,
    });
    rows.push(RowFit {
        method: Method::MknnB,
        model: FittedModel::mknn(train.clone(), k)?,
        chosen,
        seconds: secs,
    });
    Ok(rows)
}

/// Predictions of one method on one held-out set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPredictions {
    pub fold: usize,
    /// Row indices into the evaluated dataset (test set for sinc, full data
    /// for k-fold suites).
    pub indices: Vec<usize>,
    pub targets: Vec<f64>,
    pub predictions: Vec<f64>,
}

impl FoldPredictions {
    pub fn mse(&self) -> f64 {
        mse(&self.targets, &self.predictions)
    }
}

pub fn mse(targets: &[f64], predictions: &[f64]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    targets
        .iter()
        .zip(predictions)
        .map(|(y, p)| (y - p) * (y - p))
        .sum::<f64>()
        / targets.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub method: Method,
    pub label: String,
    pub dataset: String,
    pub mse_mean: f64,
    /// Sample (n - 1) standard deviation over folds; absent for a single
    /// train/test split.
    pub mse_std: Option<f64>,
    pub fold_mse: Vec<f64>,
    pub chosen: Vec<Chosen>,
    pub predictions: Vec<FoldPredictions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub suite: Suite,
    pub version: String,
    pub seed: u64,
    /// Number of CV folds; 1 for the sinc train/test split.
    pub folds: usize,
    /// Fold of each data row, for k-fold suites.
    pub fold_assignment: Option<Vec<usize>>,
    pub std_convention: String,
    pub options: SelectionOptions,
    pub records: Vec<MethodRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub method: Method,
    pub dataset: String,
    /// Total selection time summed over folds.
    pub seconds: f64,
}

/// A report plus the wall-clock timings, kept apart so that reports are
/// reproducible byte for byte.
#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub report: BenchmarkReport,
    pub timings: Vec<Timing>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub suite: Suite,
    pub seed: u64,
    pub folds: usize,
    pub options: SelectionOptions,
}

impl BenchmarkConfig {
    pub fn new(suite: Suite) -> Self {
        Self {
            suite,
            seed: 42,
            folds: 10,
            options: SelectionOptions::default(),
        }
    }
}

pub const SINC_BKR_INIT: BkrInit = BkrInit {
    bandwidth: 1.0,
    sigma0: 100.0,
    sigma: 1.0,
    bandwidth_only: false,
};
pub const SINC_BMKNN: BmknnMode = BmknnMode::Refined {
    sigma0: 300.0,
    sigma: 3.0,
};
pub const YACHT_BKR_INIT: BkrInit = BkrInit {
    bandwidth: 1.0,
    sigma0: 1.0,
    sigma: 1e-7,
    bandwidth_only: true,
};
pub const YACHT_BMKNN: BmknnMode = BmknnMode::Fixed {
    sigma0: 0.1,
    sigma: 1e-5,
};

fn fit_suite_rows(suite: Suite, train: &Dataset, opts: &SelectionOptions) -> Result<Vec<RowFit>> {
    match suite {
        Suite::Sinc => {
            let mut rows = fit_kernel_rows(train, false, &SINC_BKR_INIT, opts)?;
            rows.extend(fit_neighbor_rows(train, &SINC_BMKNN, opts)?);
            Ok(rows)
        }
        Suite::YachtSingle => fit_kernel_rows(train, false, &YACHT_BKR_INIT, opts),
        Suite::YachtMulti => fit_kernel_rows(train, true, &YACHT_BKR_INIT, opts),
        Suite::YachtKnn => fit_neighbor_rows(train, &YACHT_BMKNN, opts),
    }
}

struct FoldOutcome {
    rows: Vec<(Method, Chosen, FoldPredictions, f64)>,
}

fn evaluate(
    suite: Suite,
    fold: usize,
    train: &Dataset,
    test: &Dataset,
    indices: Vec<usize>,
    opts: &SelectionOptions,
) -> Result<FoldOutcome> {
    let fits = fit_suite_rows(suite, train, opts)?;
    let mut rows = Vec::with_capacity(fits.len());
    for f in fits {
        let predictions = test
            .rows()
            .map(|x| f.model.predict(x).map(|p| p.0))
            .collect::<Result<Vec<_>>>()?;
        rows.push((
            f.method,
            f.chosen,
            FoldPredictions {
                fold,
                indices: indices.clone(),
                targets: test.targets().to_vec(),
                predictions,
            },
            f.seconds,
        ));
    }
    Ok(FoldOutcome { rows })
}

fn sample_std(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    Some((v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

fn assemble(dataset: &str, outcomes: Vec<FoldOutcome>, timings: &mut Vec<Timing>) -> Vec<MethodRecord> {
    let methods: Vec<Method> = outcomes[0].rows.iter().map(|r| r.0).collect();
    methods
        .into_iter()
        .enumerate()
        .map(|(m, method)| {
            let mut chosen = Vec::new();
            let mut predictions = Vec::new();
            let mut seconds = 0.0;
            for o in &outcomes {
                let (meth, c, p, s) = &o.rows[m];
                debug_assert_eq!(*meth, method);
                chosen.push(c.clone());
                predictions.push(p.clone());
                seconds += s;
            }
            timings.push(Timing {
                method,
                dataset: dataset.to_string(),
                seconds,
            });
            let fold_mse: Vec<f64> = predictions.iter().map(FoldPredictions::mse).collect();
            MethodRecord {
                method,
                label: method.label().to_string(),
                dataset: dataset.to_string(),
                mse_mean: fold_mse.iter().sum::<f64>() / fold_mse.len() as f64,
                mse_std: sample_std(&fold_mse),
                fold_mse,
                chosen,
                predictions,
            }
        })
        .collect()
}

/// Runs a suite. Yacht suites need `data`; the sinc suite ignores it.
pub fn run_benchmark(config: &BenchmarkConfig, data: Option<&Dataset>) -> Result<BenchmarkRun> {
    let opts = &config.options;
    let mut timings = Vec::new();
    let (records, folds, fold_assignment) = match config.suite {
        Suite::Sinc => {
            let test = sinc_test();
            let idx: Vec<usize> = (0..test.len()).collect();
            let sets = [("sinc1", sinc1_train()), ("sinc2", sinc2_train())];
            let outcomes = sets
                .par_iter()
                .map(|(_, train)| evaluate(Suite::Sinc, 0, train, &test, idx.clone(), opts))
                .collect::<Result<Vec<_>>>()?;
            let mut records = Vec::new();
            for ((name, _), o) in sets.iter().zip(outcomes) {
                records.extend(assemble(name, vec![o], &mut timings));
            }
            (records, 1, None)
        }
        suite => {
            let data = data.ok_or_else(|| {
                Error::InvalidInput(format!("suite {} needs a data file", suite.name()))
            })?;
            let assignment = kfold(data.len(), config.folds, config.seed)?;
            let outcomes = (0..config.folds)
                .into_par_iter()
                .map(|f| {
                    let tr_idx = assignment.train_indices(f);
                    let te_idx = assignment.test_indices(f);
                    let train_raw = data.subset(&tr_idx)?;
                    let norm = Normalizer::fit(&train_raw);
                    let train = norm.apply(&train_raw)?;
                    let test = norm.apply(&data.subset(&te_idx)?)?;
                    evaluate(suite, f, &train, &test, te_idx, opts)
                })
                .collect::<Result<Vec<_>>>()?;
            let records = assemble("yacht", outcomes, &mut timings);
            (records, config.folds, Some(assignment.assignment.clone()))
        }
    };
    Ok(BenchmarkRun {
        report: BenchmarkReport {
            suite: config.suite,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            folds,
            fold_assignment,
            std_convention: "sample".into(),
            options: opts.clone(),
            records,
        },
        timings,
    })
}

impl BenchmarkReport {
    pub fn record(&self, dataset: &str, method: Method) -> Option<&MethodRecord> {
        self.records
            .iter()
            .find(|r| r.dataset == dataset && r.method == method)
    }

    /// The results table: one row per method, one MSE column per dataset for
    /// the sinc suite, mean and standard deviation otherwise.
    pub fn table_csv(&self) -> String {
        let mut methods: Vec<Method> = Vec::new();
        for r in &self.records {
            if !methods.contains(&r.method) {
                methods.push(r.method);
            }
        }
        let mut out = String::new();
        if self.suite == Suite::Sinc {
            out.push_str("method,label,sinc1,sinc2\n");
            for m in methods {
                let v = |d: &str| self.record(d, m).map_or(String::new(), |r| r.mse_mean.to_string());
                out.push_str(&format!("{},{},{},{}\n", m.id(), m.label(), v("sinc1"), v("sinc2")));
            }
        } else {
            out.push_str("method,label,mse_mean,mse_std\n");
            for r in &self.records {
                let std = r.mse_std.map_or(String::new(), |s| s.to_string());
                out.push_str(&format!("{},{},{},{}\n", r.method.id(), r.method.label(), r.mse_mean, std));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![(i as f64 * 0.7).sin() * 2.0, (i as f64 * 1.3).cos(), i as f64 / n as f64])
            .collect();
        let ys = rows.iter().map(|r| r[0] * r[0] + 3.0 * r[2] + 0.1 * r[1]).collect();
        Dataset::from_rows(&rows, ys).unwrap()
    }

    fn quick() -> SelectionOptions {
        SelectionOptions {
            grid_points: 8,
            kmax: Some(5),
            sweeps: 1,
            ascent: AscentOptions {
                max_iter: 30,
                ..AscentOptions::default()
            },
            ..SelectionOptions::default()
        }
    }

    #[test]
    fn kfold_suites_report_every_fold() {
        let data = toy(40);
        for suite in [Suite::YachtSingle, Suite::YachtMulti, Suite::YachtKnn] {
            let cfg = BenchmarkConfig {
                folds: 4,
                options: quick(),
                ..BenchmarkConfig::new(suite)
            };
            let run = run_benchmark(&cfg, Some(&data)).unwrap();
            let expect_rows = if suite == Suite::YachtKnn { 4 } else { 3 };
            assert_eq!(run.report.records.len(), expect_rows);
            for r in &run.report.records {
                assert_eq!(r.fold_mse.len(), 4);
                assert_eq!(r.chosen.len(), 4);
                assert!(r.mse_mean >= 0.0 && r.mse_std.is_some());
                let covered: usize = r.predictions.iter().map(|p| p.indices.len()).sum();
                assert_eq!(covered, 40);
                for p in &r.predictions {
                    assert_eq!(p.mse(), r.fold_mse[p.fold]);
                }
            }
            assert_eq!(run.report.table_csv().lines().count(), expect_rows + 1);
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let data = toy(30);
        let cfg = BenchmarkConfig {
            folds: 3,
            options: quick(),
            ..BenchmarkConfig::new(Suite::YachtKnn)
        };
        let a = serde_json::to_string(&run_benchmark(&cfg, Some(&data)).unwrap().report).unwrap();
        let b = serde_json::to_string(&run_benchmark(&cfg, Some(&data)).unwrap().report).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn yacht_suite_without_data_fails() {
        assert!(run_benchmark(&BenchmarkConfig::new(Suite::YachtKnn), None).is_err());
    }

    #[test]
    fn sample_std_convention() {
        assert_eq!(sample_std(&[1.0]), None);
        assert_eq!(sample_std(&[1.0, 3.0]), Some(2f64.sqrt()));
    }

    #[test]
    fn suite_names_round_trip() {
        for s in [Suite::Sinc, Suite::YachtSingle, Suite::YachtMulti, Suite::YachtKnn] {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }
}
