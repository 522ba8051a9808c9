mod common;

use approx::assert_relative_eq;
use bkreg::dataset::{sinc1_train, Dataset};
use bkreg::evidence::{evidence_with_full_gradient, log_evidence, model_log_evidence, HyperParams};
use bkreg::gpr::{gpr_log_evidence, se_covariance, SEHypers};
use bkreg::kernel::BandwidthSpec;
use bkreg::laplacian::{build_weight_matrix, WeightSpec};
use common::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn to_rows(m: &[f64], n: usize) -> Vec<Vec<f64>> {
    m.chunks(n).map(<[f64]>::to_vec).collect()
}

#[test]
fn weight_matrices_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let n = rng.gen_range(2..15);
        let d = rng.gen_range(1..4);
        let data = random_dataset(&mut rng, n, d);
        let h: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..2.0)).collect();
        let w = build_weight_matrix(
            &data,
            &WeightSpec::Kernel { bandwidth: BandwidthSpec::PerDim(h.clone()), sigma0: 2.5 },
        )
        .unwrap();
        let oracle = kernel_weights(&data, &h, 2.5);
        for (a, b) in to_rows(&w, n).iter().flatten().zip(oracle.iter().flatten()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-14);
        }
        let k = rng.gen_range(1..n);
        let w = build_weight_matrix(&data, &WeightSpec::MutualKnn { k, sigma0: 0.7 }).unwrap();
        assert_eq!(to_rows(&w, n), mutual_weights(&data, k, 0.7));
    }
}

#[test]
fn evidence_matches_dense_oracle_on_5x5() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let data = random_dataset(&mut rng, 5, 2);
        let s0 = rng.gen_range(0.1..10.0);
        let s = rng.gen_range(0.05..2.0);
        let h = rng.gen_range(0.1..1.5);

        let p = HyperParams::kernel(BandwidthSpec::Single(h), s0, s);
        let c = precision(&kernel_weights(&data, &[h, h], s0), s * s);
        let oracle = precision_log_evidence(&c, data.targets());
        assert_relative_eq!(model_log_evidence(&data, &p).unwrap(), oracle, max_relative = 1e-10);

        let k = rng.gen_range(1..5);
        let p = HyperParams::mutual(k, s0, s);
        let c = precision(&mutual_weights(&data, k, s0), s * s);
        let oracle = precision_log_evidence(&c, data.targets());
        assert_relative_eq!(model_log_evidence(&data, &p).unwrap(), oracle, max_relative = 1e-10);

        // A general SPD precision through the generic route.
        let b: Vec<f64> = (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = DMatrix::from_row_slice(5, 5, &b);
        let a = b.transpose() * &b + DMatrix::identity(5, 5) * 0.5;
        let rows: Vec<Vec<f64>> = (0..5).map(|i| (0..5).map(|j| a[(i, j)]).collect()).collect();
        assert_relative_eq!(
            log_evidence(&a, data.targets()).unwrap(),
            precision_log_evidence(&rows, data.targets()),
            max_relative = 1e-10
        );
    }
}

#[test]
fn gp_evidence_matches_dense_oracle_on_5x5() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..30 {
        let data = random_dataset(&mut rng, 5, 3);
        let hyp = SEHypers::new(
            rng.gen_range(0.2..3.0),
            rng.gen_range(0.01..1.0),
            (0..3).map(|_| rng.gen_range(0.5..5.0)).collect(),
        )
        .unwrap();
        let k: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..5).map(|j| se_covariance(data.row(i), data.row(j), &hyp, i == j)).collect())
            .collect();
        assert_relative_eq!(
            gpr_log_evidence(&data, &hyp).unwrap(),
            covariance_log_evidence(&k, data.targets()),
            max_relative = 1e-10
        );
    }
}

fn fd_gradient(data: &Dataset, p: &HyperParams, eps: f64) -> Vec<f64> {
    let logs = p.log_values();
    (0..logs.len())
        .map(|i| {
            let mut up = logs.clone();
            let mut dn = logs.clone();
            up[i] += eps;
            dn[i] -= eps;
            let fu = model_log_evidence(data, &p.with_log_values(&up)).unwrap();
            let fd = model_log_evidence(data, &p.with_log_values(&dn)).unwrap();
            (fu - fd) / (2.0 * eps)
        })
        .collect()
}

#[test]
fn gradient_matches_finite_differences_on_sinc1() {
    let data = sinc1_train();
    for p in [
        HyperParams::kernel(BandwidthSpec::Single(0.3), 100.0, 1.0),
        HyperParams::kernel(BandwidthSpec::Single(1.0), 100.0, 1.0),
        HyperParams::mutual(3, 300.0, 3.0),
    ] {
        let (_, g) = evidence_with_full_gradient(&data, &p).unwrap();
        let fd = fd_gradient(&data, &p, 1e-5);
        for (a, f) in g.iter().zip(&fd) {
            assert!((a - f).abs() <= 1e-5 * f.abs().max(1e-3), "{a} vs {f}");
        }
    }
}

#[test]
fn scaled_hyperparameters_agree_with_direct_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let data = random_dataset(&mut rng, 8, 2);
        let (s0, s, h) = (rng.gen_range(0.5..5.0), rng.gen_range(0.1..1.0), 0.6);
        let c = rng.gen_range(0.1..10.0);
        let base = HyperParams::kernel(BandwidthSpec::Single(h), s0, s);
        let scaled = HyperParams::kernel(BandwidthSpec::Single(h), c * s0, c.sqrt() * s);
        let l0 = model_log_evidence(&data, &base).unwrap();
        let l1 = model_log_evidence(&data, &scaled).unwrap();

        let cm = precision(&kernel_weights(&data, &[h, h], s0), s * s);
        let y = data.targets();
        let quad: f64 = (0..8).map(|i| y[i] * (0..8).map(|j| cm[i][j] * y[j]).sum::<f64>()).sum();
        let shift = 4.0 * c.ln() - 0.5 * (c - 1.0) * quad;
        assert_relative_eq!(l1, l0 + shift, max_relative = 1e-10, epsilon = 1e-10);
    }
}
