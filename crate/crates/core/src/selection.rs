//! Hyperparameter selection: evidence over discrete `k`, and leave-one-out
//! cross-validation for the classical estimators.
//!
//! Every argmax/argmin breaks ties toward the smaller hyperparameter.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evidence::{model_log_evidence, HyperParams};
use crate::kernel::BandwidthSpec;
use crate::laplacian::build_weight_matrix;
use crate::neighbors::NeighborTable;
use crate::optimize::{maximize_evidence, AscentOptions};

/// Selected `k` with the score of every candidate (evidence or CV error).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k: usize,
    pub trace: Vec<(usize, f64)>,
}

/// Selected bandwidth with the score of every evaluated candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub bandwidth: BandwidthSpec,
    pub score: f64,
    pub trace: Vec<(BandwidthSpec, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborEstimator {
    Knn,
    Mknn,
}

fn check_k_range(data: &Dataset, range: &RangeInclusive<usize>) -> Result<()> {
    let max = data.len().saturating_sub(1);
    if range.is_empty() {
        return Err(Error::InvalidInput(format!("empty k range {range:?}")));
    }
    if *range.start() == 0 || *range.end() > max {
        return Err(Error::KOutOfRange {
            k: if *range.start() == 0 { 0 } else { *range.end() },
            max,
        });
    }
    Ok(())
}

fn argmax_first(trace: &[(usize, f64)]) -> usize {
    let mut best = trace[0];
    for &(k, v) in &trace[1..] {
        if v > best.1 {
            best = (k, v);
        }
    }
    best.0
}

fn argmin_first(trace: &[(usize, f64)]) -> usize {
    let mut best = trace[0];
    for &(k, v) in &trace[1..] {
        if v < best.1 {
            best = (k, v);
        }
    }
    best.0
}

/// Evidence of the mutual k-NN model for each `k` in `k_range` at fixed
/// `sigma0` and `sigma`; returns the maximizer.
pub fn select_k(
    data: &Dataset,
    k_range: RangeInclusive<usize>,
    sigma0: f64,
    sigma: f64,
) -> Result<KSelection> {
    check_k_range(data, &k_range)?;
    let trace = k_range
        .into_par_iter()
        .map(|k| Ok((k, model_log_evidence(data, &HyperParams::mutual(k, sigma0, sigma))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(KSelection {
        k: argmax_first(&trace),
        trace,
    })
}

/// Result of alternating `k` selection with continuous refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedK {
    pub k: usize,
    pub sigma0: f64,
    pub sigma: f64,
    pub log_evidence: f64,
    /// Evidence over `k` at the final `sigma0` and `sigma`.
    pub trace: Vec<(usize, f64)>,
    pub rounds: usize,
}

/// Coordinate ascent over the mixed hyperparameters of the mutual k-NN
/// model: pick the best `k` at the current `(sigma0, sigma)`, maximize the
/// evidence over `(sigma0, sigma)` at that `k`, and repeat until `k` stops
/// changing. Each round can only raise the evidence.
pub fn select_k_refined(
    data: &Dataset,
    k_range: RangeInclusive<usize>,
    sigma0: f64,
    sigma: f64,
    options: &AscentOptions,
) -> Result<RefinedK> {
    const MAX_ROUNDS: usize = 20;
    let (mut s0, mut s) = (sigma0, sigma);
    let mut previous = None;
    let mut rounds = 0;
    loop {
        let sel = select_k(data, k_range.clone(), s0, s)?;
        rounds += 1;
        if previous == Some(sel.k) || rounds > MAX_ROUNDS {
            let log_evidence = sel.trace.iter().find(|t| t.0 == sel.k).map(|t| t.1).unwrap_or(f64::NAN);
            return Ok(RefinedK {
                k: sel.k,
                sigma0: s0,
                sigma: s,
                log_evidence,
                trace: sel.trace,
                rounds,
            });
        }
        let opt = maximize_evidence(data, &HyperParams::mutual(sel.k, s0, s), options)?;
        s0 = opt.params.sigma0;
        s = opt.params.sigma;
        previous = Some(sel.k);
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// Per-pair, per-dimension squared differences for fast kernel LOOCV.
struct PairDiffs {
    n: usize,
    dim: usize,
    pairs: Vec<(usize, usize)>,
    sq: Vec<f64>,
}

impl PairDiffs {
    fn new(data: &Dataset) -> Self {
        let n = data.len();
        let dim = data.dim();
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        let mut sq = Vec::with_capacity(pairs.capacity() * dim);
        for i in 0..n {
            for j in (i + 1)..n {
                pairs.push((i, j));
                sq.extend(data.row(i).iter().zip(data.row(j)).map(|(a, b)| (a - b) * (a - b)));
            }
        }
        Self { n, dim, pairs, sq }
    }

    /// Mean squared leave-one-out error of the kernel estimate.
    fn loocv(&self, y: &[f64], bw: &BandwidthSpec) -> f64 {
        let inv: Vec<f64> = (0..self.dim).map(|m| 1.0 / bw.get(m).powi(2)).collect();
        let mut num = vec![0.0; self.n];
        let mut den = vec![0.0; self.n];
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            let z: f64 = self.sq[p * self.dim..(p + 1) * self.dim]
                .iter()
                .zip(&inv)
                .map(|(s, w)| s * w)
                .sum();
            let k = (-z).exp();
            num[i] += k * y[j];
            den[i] += k;
            num[j] += k * y[i];
            den[j] += k;
        }
        let sse: f64 = (0..self.n)
            .map(|i| {
                let pred = if den[i] == 0.0 { 0.0 } else { num[i] / den[i] };
                (y[i] - pred).powi(2)
            })
            .sum();
        sse / self.n as f64
    }
}

/// Leave-one-out CV error of kernel regression with bandwidth `bw`.
pub fn loocv_kernel_score(data: &Dataset, bw: &BandwidthSpec) -> Result<f64> {
    bw.validate(data.dim())?;
    Ok(PairDiffs::new(data).loocv(data.targets(), bw))
}

fn lexicographically_smaller(a: &BandwidthSpec, b: &BandwidthSpec) -> bool {
    a.values()
        .iter()
        .zip(b.values())
        .find(|(x, y)| **x != *y)
        .is_some_and(|(x, y)| *x < y)
}

/// Picks the candidate bandwidth with the smallest leave-one-out error.
pub fn loocv_bandwidth(data: &Dataset, grid: &[BandwidthSpec]) -> Result<BandwidthSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty bandwidth grid".into()));
    }
    for bw in grid {
        bw.validate(data.dim())?;
    }
    let diffs = PairDiffs::new(data);
    let trace: Vec<(BandwidthSpec, f64)> = grid
        .par_iter()
        .map(|bw| (bw.clone(), diffs.loocv(data.targets(), bw)))
        .collect();
    let mut best = &trace[0];
    for cand in &trace[1..] {
        if cand.1 < best.1 || (cand.1 == best.1 && lexicographically_smaller(&cand.0, &best.0)) {
            best = cand;
        }
    }
    Ok(BandwidthSelection {
        bandwidth: best.0.clone(),
        score: best.1,
        trace,
    })
}

/// Per-dimension bandwidths by coordinate descent on the leave-one-out
/// error. Starts from the best shared bandwidth on `values`, then for each
/// sweep and each dimension in turn picks the best grid value with the other
/// dimensions held fixed.
pub fn loocv_bandwidth_per_dim(
    data: &Dataset,
    values: &[f64],
    sweeps: usize,
) -> Result<BandwidthSelection> {
    let single: Vec<BandwidthSpec> = values.iter().map(|&h| BandwidthSpec::Single(h)).collect();
    let start = loocv_bandwidth(data, &single)?;
    let d = data.dim();
    let mut current = vec![start.bandwidth.get(0); d];
    let mut score = start.score;
    let mut trace = Vec::new();
    let diffs = PairDiffs::new(data);
    for _ in 0..sweeps {
        let before = current.clone();
        for m in 0..d {
            let scored: Vec<(BandwidthSpec, f64)> = values
                .par_iter()
                .map(|&h| {
                    let mut hs = current.clone();
                    hs[m] = h;
                    let bw = BandwidthSpec::PerDim(hs);
                    let s = diffs.loocv(data.targets(), &bw);
                    (bw, s)
                })
                .collect();
            // values are ascending, so the first minimum is the smallest.
            let mut best = (current[m], score);
            for (bw, s) in &scored {
                if *s < best.1 || (*s == best.1 && bw.get(m) < best.0) {
                    best = (bw.get(m), *s);
                }
            }
            current[m] = best.0;
            score = best.1;
            trace.extend(scored);
        }
        if current == before {
            break;
        }
    }
    Ok(BandwidthSelection {
        bandwidth: BandwidthSpec::PerDim(current),
        score,
        trace,
    })
}

/// Leave-one-out CV error of the k-NN or mutual k-NN estimate for each `k`.
pub fn loocv_k(
    data: &Dataset,
    k_range: RangeInclusive<usize>,
    estimator: NeighborEstimator,
) -> Result<KSelection> {
    check_k_range(data, &k_range)?;
    let table = NeighborTable::new(data);
    let y = data.targets();
    let n = data.len();
    let trace: Vec<(usize, f64)> = k_range
        .into_par_iter()
        .map(|k| {
            let sse: f64 = (0..n)
                .map(|q| {
                    let members = match estimator {
                        NeighborEstimator::Knn => table.knn_of(q, k, None),
                        NeighborEstimator::Mknn => table.loo_mutual(q, k),
                    };
                    let pred = if members.is_empty() {
                        0.0
                    } else {
                        members.iter().map(|&i| y[i]).sum::<f64>() / members.len() as f64
                    };
                    (y[q] - pred).powi(2)
                })
                .sum();
            (k, sse / n as f64)
        })
        .collect();
    Ok(KSelection {
        k: argmin_first(&trace),
        trace,
    })
}

/// Evidence of the kernel model over a grid of shared bandwidths at fixed
/// `sigma0` and `sigma`.
pub fn evidence_bandwidth_trace(
    data: &Dataset,
    bandwidths: &[f64],
    sigma0: f64,
    sigma: f64,
) -> Result<Vec<(f64, f64)>> {
    bandwidths
        .par_iter()
        .map(|&h| {
            let p = HyperParams::kernel(BandwidthSpec::Single(h), sigma0, sigma);
            Ok((h, model_log_evidence(data, &p)?))
        })
        .collect()
}

/// Number of edges in the mutual k-NN training graph.
pub fn mutual_edge_count(data: &Dataset, k: usize) -> Result<usize> {
    let w = build_weight_matrix(
        data,
        &crate::laplacian::WeightSpec::MutualKnn { k, sigma0: 1.0 },
    )?;
    Ok(w.iter().filter(|&&v| v != 0.0).count() / 2)
}
