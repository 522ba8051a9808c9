use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use bkreg::benchmark::{
    fit_kernel_rows, fit_neighbor_rows, run_benchmark, BenchmarkConfig, BkrInit, BmknnMode,
    Chosen, Method, SelectionOptions, Suite,
};
use bkreg::dataset::{read_inputs_csv, sinc1_train, sinc2_train, sinc_test, Dataset};
use bkreg::evidence::HyperParams;
use bkreg::gpr::{GprModel, SEHypers};
use bkreg::kernel::BandwidthSpec;
use bkreg::laplacian::{LaplacianModel, WeightSpec};
use bkreg::model::FittedModel;
use bkreg::optimize::maximize_evidence;
use bkreg::selection::{
    evidence_bandwidth_trace, loocv_bandwidth, loocv_bandwidth_per_dim, loocv_k, select_k,
    select_k_refined, NeighborEstimator,
};

#[derive(Parser)]
#[command(name = "bkreg", version, about = "Bayesian kernel and mutual k-NN regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the train.csv and test.csv files of a sinc dataset.
    GenData {
        #[arg(value_enum)]
        name: SincName,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Select hyperparameters, fit a model and save it as JSON.
    Fit(FitArgs),
    /// Predict with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// CSV of query inputs (a `y` column, if present, is ignored).
        #[arg(long, alias = "test")]
        inputs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment suite and write report.json, table.csv and
    /// timings.json.
    Benchmark {
        #[arg(value_enum)]
        suite: SuiteArg,
        /// Data file for the yacht suites.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Export an evidence or cross-validation trace as CSV.
    Curve {
        #[arg(value_enum)]
        kind: CurveKind,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Estimator for loocv-k.
        #[arg(long, value_enum, default_value = "mknn")]
        method: CurveMethod,
        /// Fixed sigma0 for the evidence traces; optimized when omitted.
        #[arg(long)]
        sigma0: Option<f64>,
        /// Fixed sigma for the evidence traces; optimized when omitted.
        #[arg(long)]
        sigma: Option<f64>,
        #[command(flatten)]
        search: SearchArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SincName {
    Sinc1,
    Sinc2,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Sinc,
    YachtSingle,
    YachtMulti,
    YachtKnn,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MethodArg {
    Kr,
    Bkr,
    Knn,
    Mknn,
    Bmknn,
    Gpr,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum SelectionArg {
    Evidence,
    Loocv,
    Fixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum CurveKind {
    EvidenceBandwidth,
    EvidenceK,
    LoocvK,
}

#[derive(Clone, Copy, ValueEnum)]
enum CurveMethod {
    Knn,
    Mknn,
}

#[derive(Args, Clone)]
struct SearchArgs {
    /// Largest k searched (default min(n - 1, 50)).
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long, default_value_t = 1e-2)]
    grid_lo: f64,
    #[arg(long, default_value_t = 1e1)]
    grid_hi: f64,
    #[arg(long, default_value_t = 50)]
    grid_points: usize,
}

impl SearchArgs {
    fn options(&self) -> SelectionOptions {
        SelectionOptions {
            grid_lo: self.grid_lo,
            grid_hi: self.grid_hi,
            grid_points: self.grid_points,
            kmax: self.kmax,
            ..SelectionOptions::default()
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long)]
    train: PathBuf,
    #[arg(long, value_enum)]
    selection: SelectionArg,
    /// Where to write the model JSON.
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Shared bandwidth (fixed value, or the ascent start for evidence).
    #[arg(long, conflicts_with = "bandwidths")]
    bandwidth: Option<f64>,
    /// Comma-separated per-dimension bandwidths.
    #[arg(long, value_delimiter = ',')]
    bandwidths: Option<Vec<f64>>,
    #[arg(long)]
    k: Option<usize>,
    /// Edge-weight scale (fixed value, or the ascent start for evidence).
    #[arg(long)]
    sigma0: Option<f64>,
    /// Noise scale (fixed value, or the ascent start for evidence).
    #[arg(long)]
    sigma: Option<f64>,
    /// Use one bandwidth per input dimension.
    #[arg(long)]
    multi_bandwidth: bool,
    /// Keep sigma0 and sigma at their given values during evidence selection.
    #[arg(long)]
    fix_sigmas: bool,
    /// GP signal variance.
    #[arg(long)]
    v0: Option<f64>,
    /// GP noise variance.
    #[arg(long)]
    v1: Option<f64>,
    /// GP inverse squared lengthscales, comma-separated (one value is
    /// broadcast to every dimension).
    #[arg(long, value_delimiter = ',')]
    inv_lengthscales: Option<Vec<f64>>,
    #[command(flatten)]
    search: SearchArgs,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<bkreg::Error> for Failure {
    fn from(e: bkreg::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents)
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { name, out } => gen_data(name, &out),
        Command::Fit(args) => fit(&args),
        Command::Predict { model, inputs, out } => predict(&model, &inputs, &out),
        Command::Benchmark {
            suite,
            data,
            seed,
            folds,
            out,
            search,
        } => benchmark(suite, data.as_deref(), seed, folds, &out, &search),
        Command::Curve {
            kind,
            train,
            out,
            method,
            sigma0,
            sigma,
            search,
        } => curve(kind, &train, &out, method, sigma0, sigma, &search),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn gen_data(name: SincName, out: &Path) -> CliResult<()> {
    fs::create_dir_all(out)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", out.display())))?;
    let train = match name {
        SincName::Sinc1 => sinc1_train(),
        SincName::Sinc2 => sinc2_train(),
    };
    train.write_csv(out.join("train.csv"))?;
    sinc_test().write_csv(out.join("test.csv"))?;
    Ok(())
}

fn bandwidth_arg(args: &FitArgs, dim: usize) -> CliResult<Option<BandwidthSpec>> {
    let spec = match (&args.bandwidths, args.bandwidth) {
        (Some(hs), _) if hs.len() == 1 && args.multi_bandwidth => BandwidthSpec::PerDim(vec![hs[0]; dim]),
        (Some(hs), _) if hs.len() == 1 => BandwidthSpec::Single(hs[0]),
        (Some(hs), _) => BandwidthSpec::PerDim(hs.clone()),
        (None, Some(h)) if args.multi_bandwidth => BandwidthSpec::PerDim(vec![h; dim]),
        (None, Some(h)) => BandwidthSpec::Single(h),
        (None, None) => return Ok(None),
    };
    spec.validate(dim)?;
    Ok(Some(spec))
}

fn require<T>(v: Option<T>, flag: &str, why: &str) -> CliResult<T> {
    v.map_or_else(|| usage(format!("{why} requires --{flag}")), Ok)
}

fn check_pair(method: MethodArg, selection: SelectionArg) -> CliResult<()> {
    use MethodArg::*;
    use SelectionArg::*;
    let ok = matches!(
        (method, selection),
        (Kr, Loocv | Fixed | Evidence)
            | (Bkr, Evidence | Fixed)
            | (Knn, Loocv | Fixed)
            | (Mknn, Loocv | Fixed | Evidence)
            | (Bmknn, Evidence | Fixed)
            | (Gpr, Fixed)
    );
    if ok {
        Ok(())
    } else {
        let name = |s: SelectionArg| match s {
            Evidence => "evidence",
            Loocv => "loocv",
            Fixed => "fixed",
        };
        let m = method.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
        usage(format!("method {m} does not support selection {}", name(selection)))
    }
}

fn fit(args: &FitArgs) -> CliResult<()> {
    check_pair(args.method, args.selection)?;
    let train = Dataset::read_csv(&args.train)?;
    let dim = train.dim();
    let opts = args.search.options();
    let bandwidth = bandwidth_arg(args, dim)?;
    let (model, chosen) = match (args.method, args.selection) {
        (MethodArg::Gpr, _) => {
            let v0 = require(args.v0, "v0", "gpr")?;
            let v1 = require(args.v1, "v1", "gpr")?;
            let ls = require(args.inv_lengthscales.clone(), "inv-lengthscales", "gpr")?;
            let ls = if ls.len() == 1 { vec![ls[0]; dim] } else { ls };
            let model = GprModel::fit(train, SEHypers::new(v0, v1, ls)?)?;
            let chosen = json!({ "hypers": model.hypers(), "log_evidence": model.log_evidence() });
            (FittedModel::Gpr { model }, chosen)
        }
        (m @ (MethodArg::Kr | MethodArg::Bkr), SelectionArg::Fixed) => {
            let bw = require(bandwidth, "bandwidth", "fixed kernel selection")?;
            if m == MethodArg::Kr {
                (FittedModel::kr(train, bw.clone())?, json!({ "bandwidth": bw }))
            } else {
                let s0 = require(args.sigma0, "sigma0", "fixed bkr")?;
                let s = require(args.sigma, "sigma", "fixed bkr")?;
                let lap = LaplacianModel::fit(
                    train,
                    WeightSpec::Kernel { bandwidth: bw.clone(), sigma0: s0 },
                    s * s,
                )?;
                let ev = lap.log_evidence()?;
                (
                    FittedModel::Bayesian { model: lap },
                    json!({ "bandwidth": bw, "sigma0": s0, "sigma": s, "log_evidence": ev }),
                )
            }
        }
        (m @ (MethodArg::Knn | MethodArg::Mknn | MethodArg::Bmknn), SelectionArg::Fixed) => {
            let k = require(args.k, "k", "fixed neighbor selection")?;
            match m {
                MethodArg::Knn => (FittedModel::knn(train, k)?, json!({ "k": k })),
                MethodArg::Mknn => (FittedModel::mknn(train, k)?, json!({ "k": k })),
                _ => {
                    let s0 = require(args.sigma0, "sigma0", "fixed bmknn")?;
                    let s = require(args.sigma, "sigma", "fixed bmknn")?;
                    let lap = LaplacianModel::fit(train, WeightSpec::MutualKnn { k, sigma0: s0 }, s * s)?;
                    let ev = lap.log_evidence()?;
                    (
                        FittedModel::Bayesian { model: lap },
                        json!({ "k": k, "sigma0": s0, "sigma": s, "log_evidence": ev }),
                    )
                }
            }
        }
        (m @ (MethodArg::Kr | MethodArg::Bkr), sel) => {
            if sel == SelectionArg::Loocv && bandwidth.is_some() {
                return usage("--bandwidth is only used with --selection fixed or evidence");
            }
            let init = BkrInit {
                bandwidth: bandwidth.as_ref().map_or(1.0, |b| b.get(0)),
                sigma0: args.sigma0.unwrap_or(100.0),
                sigma: args.sigma.unwrap_or(1.0),
                bandwidth_only: args.fix_sigmas,
            };
            let want = match (m, sel) {
                (MethodArg::Kr, SelectionArg::Loocv) => Method::KrCv,
                (MethodArg::Kr, _) => Method::KrB,
                _ => Method::Bkr,
            };
            if let Some(bw @ BandwidthSpec::PerDim(_)) = bandwidth {
                return fit_bkr_from(train, bw, &init, &opts, want, &args.out);
            }
            let row = kernel_row(&train, args.multi_bandwidth, &init, &opts, want)?;
            (row.0, serde_json::to_value(row.1).map_err(bkreg::Error::from)?)
        }
        (m, sel) => {
            let mode = if args.fix_sigmas {
                BmknnMode::Fixed {
                    sigma0: require(args.sigma0, "sigma0", "--fix-sigmas")?,
                    sigma: require(args.sigma, "sigma", "--fix-sigmas")?,
                }
            } else {
                BmknnMode::Refined {
                    sigma0: args.sigma0.unwrap_or(300.0),
                    sigma: args.sigma.unwrap_or(3.0),
                }
            };
            let want = match (m, sel) {
                (MethodArg::Knn, _) => Method::KnnCv,
                (MethodArg::Mknn, SelectionArg::Loocv) => Method::MknnCv,
                (MethodArg::Mknn, _) => Method::MknnB,
                _ => Method::Bmknn,
            };
            let row = neighbor_row(&train, &mode, &opts, want)?;
            (row.0, serde_json::to_value(row.1).map_err(bkreg::Error::from)?)
        }
    };
    finish_fit(&model, chosen, args.selection, &args.out)
}

fn selection_name(s: SelectionArg) -> &'static str {
    match s {
        SelectionArg::Evidence => "evidence",
        SelectionArg::Loocv => "loocv",
        SelectionArg::Fixed => "fixed",
    }
}

fn finish_fit(
    model: &FittedModel,
    chosen: serde_json::Value,
    selection: SelectionArg,
    out: &Path,
) -> CliResult<()> {
    model.save(out)?;
    let report = json!({
        "method": model.method(),
        "selection": selection_name(selection),
        "n": model.train().len(),
        "dim": model.dim(),
        "chosen": chosen,
        "model": out.display().to_string(),
    });
    println!("{report}");
    Ok(())
}

fn kernel_row(
    train: &Dataset,
    multi: bool,
    init: &BkrInit,
    opts: &SelectionOptions,
    want: Method,
) -> CliResult<(FittedModel, Chosen)> {
    if want == Method::KrCv {
        let grid = opts.grid();
        let sel = if multi {
            loocv_bandwidth_per_dim(train, &grid, opts.sweeps)?
        } else {
            let specs: Vec<BandwidthSpec> = grid.iter().map(|&h| BandwidthSpec::Single(h)).collect();
            loocv_bandwidth(train, &specs)?
        };
        let chosen = Chosen {
            bandwidth: Some(sel.bandwidth.clone()),
            k: None,
            sigma0: None,
            sigma: None,
            log_evidence: None,
            cv_mse: Some(sel.score),
        };
        return Ok((FittedModel::kr(train.clone(), sel.bandwidth)?, chosen));
    }
    let rows = fit_kernel_rows(train, multi, init, opts)?;
    let row = rows.into_iter().find(|r| r.method == want).expect("row present");
    Ok((row.model, row.chosen))
}

fn neighbor_row(
    train: &Dataset,
    mode: &BmknnMode,
    opts: &SelectionOptions,
    want: Method,
) -> CliResult<(FittedModel, Chosen)> {
    let kmax = opts.kmax_for(train.len())?;
    if matches!(want, Method::KnnCv | Method::MknnCv) {
        let est = if want == Method::KnnCv { NeighborEstimator::Knn } else { NeighborEstimator::Mknn };
        let sel = loocv_k(train, 1..=kmax, est)?;
        let score = sel.trace.iter().find(|e| e.0 == sel.k).map(|e| e.1);
        let model = if want == Method::KnnCv {
            FittedModel::knn(train.clone(), sel.k)?
        } else {
            FittedModel::mknn(train.clone(), sel.k)?
        };
        let chosen = Chosen {
            bandwidth: None,
            k: Some(sel.k),
            sigma0: None,
            sigma: None,
            log_evidence: None,
            cv_mse: score,
        };
        return Ok((model, chosen));
    }
    let rows = fit_neighbor_rows(train, mode, opts)?;
    let row = rows.into_iter().find(|r| r.method == want).expect("row present");
    Ok((row.model, row.chosen))
}

fn fit_bkr_from(
    train: Dataset,
    bw: BandwidthSpec,
    init: &BkrInit,
    opts: &SelectionOptions,
    want: Method,
    out: &Path,
) -> CliResult<()> {
    let mut start = HyperParams::kernel(bw, init.sigma0, init.sigma);
    if init.bandwidth_only {
        start = start.bandwidth_only();
    }
    let opt = maximize_evidence(&train, &start, &opts.ascent)?;
    let p = opt.params;
    let bandwidth = p.bandwidth.clone().expect("kernel hyperparameters");
    let chosen = json!({
        "bandwidth": bandwidth,
        "sigma0": p.sigma0,
        "sigma": p.sigma,
        "log_evidence": opt.log_evidence,
    });
    let model = if want == Method::Bkr {
        FittedModel::Bayesian {
            model: LaplacianModel::fit(train, p.weight_spec()?, p.sigma2())?,
        }
    } else {
        FittedModel::kr(train, bandwidth)?
    };
    finish_fit(&model, chosen, SelectionArg::Evidence, out)
}

fn read_queries(path: &Path, dim: usize) -> CliResult<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let (d, rows) = read_inputs_csv(path)?;
    if d != dim {
        return Err(Failure::Runtime(format!(
            "{} has {d} input columns but the model expects d = {dim}",
            path.display()
        )));
    }
    Ok(rows)
}

fn predict(model_path: &Path, inputs: &Path, out: &Path) -> CliResult<()> {
    let model = FittedModel::load(model_path)?;
    let rows = read_queries(inputs, model.dim())?;
    let mut csv = String::from(if model.has_variance() { "mean,variance\n" } else { "mean\n" });
    for x in &rows {
        let (mean, var) = model.predict(x)?;
        match var {
            Some(v) => writeln!(csv, "{mean},{v}"),
            None => writeln!(csv, "{mean}"),
        }
        .expect("writing to a String");
    }
    write_file(out, &csv)
}

fn benchmark(
    suite: SuiteArg,
    data: Option<&Path>,
    seed: u64,
    folds: usize,
    out: &Path,
    search: &SearchArgs,
) -> CliResult<()> {
    let suite = match suite {
        SuiteArg::Sinc => Suite::Sinc,
        SuiteArg::YachtSingle => Suite::YachtSingle,
        SuiteArg::YachtMulti => Suite::YachtMulti,
        SuiteArg::YachtKnn => Suite::YachtKnn,
    };
    let dataset = match (suite.needs_data(), data) {
        (true, None) => return usage(format!("suite {} requires --data", suite.name())),
        (true, Some(p)) => Some(bkreg::dataset::load_yacht(p)?),
        (false, _) => None,
    };
    let config = BenchmarkConfig {
        suite,
        seed,
        folds,
        options: search.options(),
    };
    let run = run_benchmark(&config, dataset.as_ref())?;
    fs::create_dir_all(out)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", out.display())))?;
    let report = serde_json::to_string_pretty(&run.report).map_err(bkreg::Error::from)?;
    write_file(&out.join("report.json"), &(report + "\n"))?;
    write_file(&out.join("table.csv"), &run.report.table_csv())?;
    let timings = serde_json::to_string_pretty(&run.timings).map_err(bkreg::Error::from)?;
    write_file(&out.join("timings.json"), &(timings + "\n"))?;
    print!("{}", run.report.table_csv());
    Ok(())
}

fn curve(
    kind: CurveKind,
    train: &Path,
    out: &Path,
    method: CurveMethod,
    sigma0: Option<f64>,
    sigma: Option<f64>,
    search: &SearchArgs,
) -> CliResult<()> {
    let data = Dataset::read_csv(train)?;
    let opts = search.options();
    let (trace, best): (Vec<(f64, f64)>, (f64, f64)) = match kind {
        CurveKind::EvidenceBandwidth => {
            let (s0, s) = match (sigma0, sigma) {
                (Some(a), Some(b)) => (a, b),
                (None, None) => {
                    let start = HyperParams::kernel(BandwidthSpec::Single(1.0), 100.0, 1.0);
                    let p = maximize_evidence(&data, &start, &opts.ascent)?.params;
                    (p.sigma0, p.sigma)
                }
                _ => return usage("give both --sigma0 and --sigma, or neither"),
            };
            let trace = evidence_bandwidth_trace(&data, &opts.grid(), s0, s)?;
            let best = first_extreme(&trace, true);
            (trace, best)
        }
        CurveKind::EvidenceK => {
            let kmax = opts.kmax_for(data.len())?;
            let sel = match (sigma0, sigma) {
                (Some(a), Some(b)) => select_k(&data, 1..=kmax, a, b)?.trace,
                (None, None) => select_k_refined(&data, 1..=kmax, 300.0, 3.0, &opts.ascent)?.trace,
                _ => return usage("give both --sigma0 and --sigma, or neither"),
            };
            let trace: Vec<(f64, f64)> = sel.iter().map(|&(k, v)| (k as f64, v)).collect();
            let best = first_extreme(&trace, true);
            (trace, best)
        }
        CurveKind::LoocvK => {
            let kmax = opts.kmax_for(data.len())?;
            let est = match method {
                CurveMethod::Knn => NeighborEstimator::Knn,
                CurveMethod::Mknn => NeighborEstimator::Mknn,
            };
            let sel = loocv_k(&data, 1..=kmax, est)?;
            let trace: Vec<(f64, f64)> = sel.trace.iter().map(|&(k, v)| (k as f64, v)).collect();
            let best = first_extreme(&trace, false);
            (trace, best)
        }
    };
    let mut csv = String::from("kind,hyperparameter,score\n");
    for (h, v) in &trace {
        writeln!(csv, "trace,{h},{v}").expect("writing to a String");
    }
    writeln!(csv, "optimum,{},{}", best.0, best.1).expect("writing to a String");
    write_file(out, &csv)
}

/// First maximum (or minimum) of a trace, so ties go to the smaller value.
fn first_extreme(trace: &[(f64, f64)], max: bool) -> (f64, f64) {
    let mut best = trace[0];
    for &t in &trace[1..] {
        if (max && t.1 > best.1) || (!max && t.1 < best.1) {
            best = t;
        }
    }
    best
}
