mod common;

use common::*;
use hdgmm::linalg::{orthonormality_error, sorted_symmetric_eigen};
use hdgmm::stiefel::{
    cayley_retract, euclidean_grad, objective_ambient, optimize, optimize_observed, principal_angles, projected_grad_norm_sq,
    StiefelSettings, StopReason,
};
use hdgmm::synth::random_basis;
use nalgebra::{DMatrix, DVector};

fn spd(m: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let g = gaussian_mat(m, m, &mut r);
    &g * g.transpose() / m as f64 + DMatrix::identity(m, m) * 0.1
}

fn spiked(m: usize, top: &[f64], seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let q = random_basis(m, m, &mut r);
    let diag = DVector::from_fn(m, |i, _| top.get(i).copied().unwrap_or(1.0));
    &q * DMatrix::from_diagonal(&diag) * q.transpose()
}

#[test]
fn gradient_matches_finite_differences() {
    for seed in 0..10u64 {
        let mut r = rng(seed);
        let s = spd(12, seed);
        let a = DVector::from_vec(vec![6.0, 3.0, 2.0]);
        let b = 0.5;
        let x = random_basis(12, 3, &mut r);
        let g = euclidean_grad(&s, &a, b, &x).unwrap();
        let h = 1e-6;
        let mut fd = DMatrix::zeros(12, 3);
        for i in 0..12 {
            for j in 0..3 {
                let mut xp = x.clone();
                xp[(i, j)] += h;
                let mut xm = x.clone();
                xm[(i, j)] -= h;
                fd[(i, j)] = (objective_ambient(&s, &a, b, &xp).unwrap() - objective_ambient(&s, &a, b, &xm).unwrap()) / (2.0 * h);
            }
        }
        assert!((&g - &fd).norm() <= 1e-5 * g.norm(), "seed {seed}");
    }
}

#[test]
fn low_rank_cayley_equals_dense_formula() {
    let mut r = rng(31);
    for _ in 0..10 {
        let x = random_basis(15, 4, &mut r);
        let g = gaussian_mat(15, 4, &mut r);
        let tau = 0.3;
        let w = &g * x.transpose() - &x * g.transpose();
        let id = DMatrix::<f64>::identity(15, 15);
        let lhs = &id + &w * (tau / 2.0);
        let rhs = (&id - &w * (tau / 2.0)) * &x;
        let dense = lhs.lu().solve(&rhs).unwrap();
        let fast = cayley_retract(&x, &g, tau).unwrap();
        assert!((fast - &dense).norm() < 1e-12 * (1.0 + dense.norm()));
        assert!(orthonormality_error(&dense) < 1e-12);
    }
}

#[test]
fn projected_gradient_norm_identity() {
    let mut r = rng(32);
    let x = random_basis(10, 3, &mut r);
    let g = gaussian_mat(10, 3, &mut r);
    let w = &g * x.transpose() - &x * g.transpose();
    assert!((projected_grad_norm_sq(&x, &g) - 0.5 * w.norm_squared()).abs() < 1e-10);
}

#[test]
fn every_iterate_is_feasible_and_objective_decreases() {
    for seed in 0..5u64 {
        let mut r = rng(40 + seed);
        let s = spd(20, seed);
        let a = DVector::from_vec(vec![8.0, 4.0]);
        let x0 = random_basis(20, 2, &mut r);
        let mut worst = 0.0f64;
        let mut values = Vec::new();
        optimize_observed(&s, &a, 0.5, &x0, &StiefelSettings::default(), |x, f| {
            worst = worst.max(orthonormality_error(x));
            values.push(f);
        })
        .unwrap();
        assert!(worst <= 1e-10, "{worst}");
        assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}

#[test]
fn minimizer_spans_leading_eigenvectors() {
    for seed in 0..5u64 {
        let s = spiked(30, &[20.0, 12.0, 6.0], seed);
        let a = DVector::from_vec(vec![20.0, 12.0, 6.0]);
        let mut r = rng(50 + seed);
        let x0 = random_basis(30, 3, &mut r);
        let settings = StiefelSettings { max_iter: 500, grad_tol: 1e-10, ..Default::default() };
        let out = optimize(&s, &a, 1.0, &x0, &settings).unwrap();
        let (_, vecs) = sorted_symmetric_eigen(&s);
        let top = vecs.columns(0, 3).into_owned();
        let angle = principal_angles(&out.point, &top).unwrap().into_iter().fold(0.0, f64::max);
        assert!(angle <= 1e-3, "seed {seed}: {angle} ({:?})", out.status);
    }
}

#[test]
fn stationary_saddle_is_escaped() {
    let mut s = DMatrix::zeros(6, 6);
    for (i, v) in [9.0, 4.0, 1.0, 0.5, 0.5, 0.5].iter().enumerate() {
        s[(i, i)] = *v;
    }
    let mut x0 = DMatrix::zeros(6, 1);
    x0[(2, 0)] = 1.0;
    let out = optimize(&s, &DVector::from_vec(vec![9.0]), 1.0, &x0, &StiefelSettings::default()).unwrap();
    assert!(out.escapes >= 1);
    assert!((out.point[(0, 0)].abs() - 1.0).abs() < 1e-8);
    assert_eq!(out.status, StopReason::GradientTolerance);
}

#[test]
fn non_orthonormal_start_is_rejected() {
    let s = spd(5, 1);
    let x0 = DMatrix::from_element(5, 1, 1.0);
    assert!(optimize(&s, &DVector::from_vec(vec![2.0]), 1.0, &x0, &StiefelSettings::default()).is_err());
}
