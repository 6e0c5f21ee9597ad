mod common;

use common::*;
use hdgmm::matching::normalize_signals;
use hdgmm::synth::*;
use hdgmm::{Component, HdGmmModel};
use nalgebra::{DMatrix, DVector};

#[test]
fn empirical_snr_matches_target() {
    let mut r = rng(1);
    let clean = gaussian_mat(10_000, 32, &mut r);
    let noisy = add_noise(&clean, 15.0, 2).unwrap();
    let mut signal = 0.0;
    let mut noise = 0.0;
    for i in 0..clean.nrows() {
        signal += clean.row(i).norm_squared();
        noise += (noisy.row(i) - clean.row(i)).norm_squared();
    }
    let snr = 10.0 * (signal / noise).log10();
    assert!((snr - 15.0).abs() <= 0.2, "{snr}");
}

#[test]
fn default_grid_shape_and_distinctness() {
    let grid = SyntheticGrid::default();
    let dict = gen_synthetic_dictionary(&grid).unwrap();
    assert_eq!(dict.len(), 20_000);
    assert_eq!(dict.m(), 64);
    assert_eq!(dict.label_names(), &["T1", "T2", "df"]);

    let coarse = SyntheticGrid { t2: geomspace(0.02, 0.6, 10), df: linspace(0.0, 40.0, 12), ..SyntheticGrid::default() };
    let x = normalize_signals(gen_synthetic_dictionary(&coarse).unwrap().signals()).unwrap();
    let mut min = f64::INFINITY;
    for i in 0..x.nrows() {
        for j in 0..i {
            min = min.min((x.row(i) - x.row(j)).norm());
        }
    }
    assert!(min > 0.0);
}

#[test]
fn generation_is_deterministic() {
    let grid = SyntheticGrid { t2: vec![0.05, 0.2], df: vec![0.0, 10.0], ..SyntheticGrid::default() };
    assert_eq!(gen_synthetic_dictionary(&grid).unwrap(), gen_synthetic_dictionary(&grid).unwrap());
    let model = hdgmm::synth::random_model(&RandomModelSpec::new(2, 6, 2), 1).unwrap();
    assert_eq!(sample_hdgmm(&model, 40, 3).unwrap(), sample_hdgmm(&model, 40, 3).unwrap());
    assert_ne!(sample_hdgmm(&model, 40, 3).unwrap().0, sample_hdgmm(&model, 40, 4).unwrap().0);
}

#[test]
fn stream_equals_one_shot_sampling() {
    let model = hdgmm::synth::random_model(&RandomModelSpec::new(3, 5, 1), 2).unwrap();
    let (all, labels) = sample_hdgmm(&model, 1000, 9).unwrap();
    let mut stream = HdGmmStream::new(model, 9, Some(1000)).unwrap();
    let mut at = 0;
    while let Some((chunk, lab)) = stream.next_labeled(300) {
        assert_eq!(chunk, all.rows(at, chunk.nrows()).into_owned());
        assert_eq!(&lab[..], &labels[at..at + lab.len()]);
        at += chunk.nrows();
    }
    assert_eq!(at, 1000);
}

fn single(a: Vec<f64>, b: f64, m: usize) -> HdGmmModel {
    let mut r = rng(5);
    let w = random_basis(m, a.len(), &mut r);
    let mean = gaussian_vec(m, 1.0, &mut r);
    HdGmmModel::new(vec![Component::new(1.0, mean, DVector::from_vec(a), b, w).unwrap()]).unwrap()
}

#[test]
fn sample_moments_match_model() {
    let model = single(vec![9.0, 4.0], 1.0, 6);
    let n = 100_000;
    let (x, _) = sample_hdgmm(&model, n, 7).unwrap();
    let mean = x.row_mean().transpose();
    let c = &model.components()[0];
    let cov = c.covariance_dense();
    for j in 0..6 {
        let band = 4.0 * (cov[(j, j)] / n as f64).sqrt();
        assert!((mean[j] - c.mean()[j]).abs() <= band);
    }
    let centered = DMatrix::from_fn(n, 6, |i, j| x[(i, j)] - mean[j]);
    let sample_cov = centered.tr_mul(&centered) / (n - 1) as f64;
    let mut eig: Vec<f64> = sample_cov.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let want = [9.0, 4.0, 1.0, 1.0, 1.0, 1.0];
    for (g, w) in eig.iter().zip(want) {
        assert!((g - w).abs() < 0.05 * w, "{eig:?}");
    }
}

#[test]
fn near_isotropic_model_gives_isotropic_samples() {
    let model = single(vec![1.0 + 1e-9], 1.0, 4);
    let (x, _) = sample_hdgmm(&model, 50_000, 8).unwrap();
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(x.nrows(), 4, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.tr_mul(&centered) / x.nrows() as f64;
    assert!((cov - DMatrix::identity(4, 4)).norm() < 0.05);
}
