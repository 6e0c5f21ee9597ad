mod common;

use common::*;
use hdgmm::matching::*;
use hdgmm::reduction::reduce_dataset;
use hdgmm::synth::{add_noise, random_basis, sample_hdgmm};
use hdgmm::{fit_batch, BatchConfig, CompressedDataset, CompressedRecord, Component, HdGmmModel};
use nalgebra::{DMatrix, DVector};

#[test]
fn full_match_self_and_sign() {
    let mut r = rng(1);
    let dict = Dictionary::unlabeled(gaussian_mat(50, 8, &mut r)).unwrap();
    let matcher = FullMatcher::new(&dict).unwrap();
    for i in 0..50 {
        let q: Vec<f64> = dict.signals().row(i).iter().map(|v| v * 3.5).collect();
        let m = matcher.best(&q).unwrap();
        assert_eq!(m.index, i);
        assert!((m.score - 1.0).abs() < 1e-12);
    }
    let signals = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    let dict = Dictionary::unlabeled(signals).unwrap();
    let m = full_match(&dict, &[-1.0, 0.0, 0.0]).unwrap();
    assert_eq!(m.index, 1);
    assert_eq!(m.score, 0.0);
}

#[test]
fn noisy_queries_recover_the_source_row() {
    let mut r = rng(2);
    let dict = Dictionary::unlabeled(gaussian_mat(500, 32, &mut r)).unwrap();
    let matcher = FullMatcher::new(&dict).unwrap();
    let rows: Vec<usize> = (0..100).map(|t| (t * 37) % 500).collect();
    let queries = DMatrix::from_fn(100, 32, |i, j| dict.signals()[(rows[i], j)]);
    let noisy = add_noise(&queries, 20.0, 3).unwrap();
    let hits = matcher.best_all(&noisy).unwrap().iter().zip(&rows).filter(|(m, &i)| m.index == i).count();
    assert!(hits >= 95, "{hits}");
}

#[test]
fn normalization_rules() {
    let s = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.6, 0.8]);
    let n = normalize_signals(&s).unwrap();
    assert_eq!(n.row(0).iter().copied().collect::<Vec<_>>(), vec![0.6, 0.8]);
    assert!((n.row(1) - s.row(1)).norm() < 1e-15);
    assert!((normalize_signals(&n).unwrap() - &n).norm() < 1e-15);
    let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    assert!(matches!(normalize_signals(&z), Err(hdgmm::Error::ZeroNorm { row: 1 })));
}

#[test]
fn svd_error_follows_singular_values() {
    let mut r = rng(4);
    let dict = Dictionary::unlabeled(gaussian_mat(40, 10, &mut r)).unwrap();
    let x = normalize_signals(dict.signals()).unwrap();
    for d in [1, 3, 6] {
        let sc = svd_compress(&dict, d).unwrap();
        let recon = DMatrix::from_fn(40, 10, |i, j| svd_reconstruct(&sc, i).unwrap()[j]);
        let tail: f64 = sc.singular_values.iter().skip(d).map(|s| s * s).sum();
        assert!(((&x - recon).norm() - tail.sqrt()).abs() < 1e-8);
    }
    assert!(svd_compress(&dict, 11).is_err());
}

#[test]
fn svd_is_exact_on_low_rank_dictionaries() {
    let mut r = rng(5);
    let basis = random_basis(12, 3, &mut r);
    let signals = gaussian_mat(60, 3, &mut r) * basis.transpose();
    let labels = DMatrix::from_fn(60, 1, |i, _| i as f64);
    let dict = Dictionary::new(signals, labels, vec!["id".into()]).unwrap();
    let sc = svd_compress(&dict, 3).unwrap();
    let x = normalize_signals(dict.signals()).unwrap();
    for i in 0..60 {
        assert!((svd_reconstruct(&sc, i).unwrap() - x.row(i).transpose()).norm() < 1e-9);
    }
    let queries = add_noise(dict.signals(), 25.0, 1).unwrap();
    let full = FullMatcher::new(&dict).unwrap().best_all(&queries).unwrap();
    let svd = svd_match_all(&sc, dict.labels(), &queries).unwrap();
    assert_eq!(agreement_rate(&full, &svd), 1.0);
}

fn fitted_pipeline(seed: u64) -> (Dictionary, CompressedDataset) {
    let mut r = rng(seed);
    let truth = random_model(&mut r, 3, 10, 2);
    let (raw, comp) = sample_hdgmm(&truth, 900, seed).unwrap();
    let labels = DMatrix::from_fn(900, 1, |i, _| comp[i] as f64);
    let dict = Dictionary::new(normalize_signals(&raw).unwrap(), labels, vec!["k".into()]).unwrap();
    let (model, _) = fit_batch(dict.signals(), 3, 2, &BatchConfig { seed, ..Default::default() }).unwrap();
    let cds = reduce_dataset(&model, dict.signals()).unwrap();
    (dict, cds)
}

#[test]
fn hdgmm_self_match_with_full_fan_out() {
    let (dict, cds) = fitted_pipeline(6);
    let matcher = HdgmmMatcher::new(&cds, dict.labels()).unwrap();
    let res = matcher.best_all(dict.signals(), 3).unwrap();
    for (i, m) in res.iter().enumerate() {
        assert_eq!(m.index, i);
        assert!(m.score < 1e-12);
    }
    // top_n = 1 is exact whenever routing agrees with the stored cluster
    for (i, rec) in cds.records().iter().enumerate() {
        let q: Vec<f64> = dict.signals().row(i).iter().copied().collect();
        if cds.model().assign(&q).unwrap() == rec.cluster_id {
            assert_eq!(matcher.best(&q, 1).unwrap().index, i);
        }
    }
}

#[test]
fn full_fan_out_equals_brute_force() {
    let (dict, cds) = fitted_pipeline(7);
    let queries = add_noise(dict.signals(), 15.0, 2).unwrap();
    let model = cds.model();
    for distance in [RouteDistance::Coordinates, RouteDistance::Reconstruction] {
        let matcher = HdgmmMatcher::new(&cds, dict.labels()).unwrap().with_distance(distance);
        for qi in (0..queries.nrows()).step_by(41) {
            let q = queries.row(qi).transpose().normalize();
            let mut best = (f64::INFINITY, usize::MAX);
            for (i, rec) in cds.records().iter().enumerate() {
                let c = &model.components()[rec.cluster_id];
                let qc = c.basis().tr_mul(&(&q - c.mean()));
                let mut dist2 = (&qc - &rec.coords).norm_squared();
                if distance == RouteDistance::Reconstruction {
                    dist2 = (&q - (c.basis() * &rec.coords + c.mean())).norm_squared();
                }
                if dist2 < best.0 - 1e-12 {
                    best = (dist2, i);
                }
            }
            let got = matcher.best(q.as_slice(), model.k()).unwrap();
            assert_eq!(got.index, best.1, "{distance:?} query {qi}");
        }
    }
}

#[test]
fn empty_clusters_are_skipped() {
    let w = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
    let c0 = Component::new(0.5, DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![2.0]), 1.0, w.clone()).unwrap();
    let c1 = Component::new(0.5, DVector::from_vec(vec![5.0, 0.0]), DVector::from_vec(vec![2.0]), 1.0, w).unwrap();
    let model = HdGmmModel::new(vec![c0, c1]).unwrap();
    let cds = CompressedDataset::new(model, vec![CompressedRecord { cluster_id: 1, coords: DVector::from_vec(vec![0.1]) }]).unwrap();
    let labels = DMatrix::from_element(1, 1, 7.0);
    let matcher = HdgmmMatcher::new(&cds, &labels).unwrap();
    assert!(matches!(matcher.best(&[1.0, 0.0], 1), Err(hdgmm::Error::NoCandidates)));
    assert_eq!(matcher.best(&[1.0, 0.0], 2).unwrap().params[0], 7.0);
    assert!(matcher.best(&[1.0, 0.0], 0).is_err());
}

#[test]
fn noise_aware_routing_is_neutral_at_zero() {
    let (dict, cds) = fitted_pipeline(8);
    let plain = HdgmmMatcher::new(&cds, dict.labels()).unwrap();
    let zero = HdgmmMatcher::new(&cds, dict.labels()).unwrap().with_query_noise(0.0).unwrap();
    let q = add_noise(dict.signals(), 10.0, 1).unwrap();
    assert_eq!(plain.best_all(&q, 1).unwrap(), zero.best_all(&q, 1).unwrap());
    assert!(HdgmmMatcher::new(&cds, dict.labels()).unwrap().with_query_noise(-1.0).is_err());
    assert!((query_noise_variance(f64::INFINITY, 10)).abs() < 1e-300);
}

#[test]
fn param_mae_hand_values() {
    let a = DMatrix::from_row_slice(1, 1, &[3.0]);
    let b = DMatrix::from_row_slice(1, 1, &[5.0]);
    assert_eq!(param_mae(&a, &b).unwrap(), vec![2.0]);
    assert_eq!(param_mae(&a, &a).unwrap(), vec![0.0]);
    assert!(param_mae(&a, &DMatrix::zeros(2, 1)).is_err());
}
