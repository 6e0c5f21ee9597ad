#![allow(dead_code)]

use hdgmm::synth::random_basis;
use hdgmm::{Component, HdGmmModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec<R: Rng>(n: usize, scale: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_mat<R: Rng>(r: usize, c: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random valid component with `m` in `[lo_m, hi_m]`.
pub fn random_component<R: Rng>(rng: &mut R, lo_m: usize, hi_m: usize, weight: f64) -> Component {
    let m = rng.gen_range(lo_m..=hi_m);
    let d = rng.gen_range(1..m);
    let b = 10f64.powf(rng.gen_range(-2.0..0.5));
    let mut a: Vec<f64> = (0..d).map(|_| b * 10f64.powf(rng.gen_range(0.1..2.0))).collect();
    a.sort_by(|x, y| y.total_cmp(x));
    let mean = gaussian_vec(m, 2.0, rng);
    Component::new(weight, mean, DVector::from_vec(a), b, random_basis(m, d, rng)).unwrap()
}

/// Random model with shared `m` and `d`.
pub fn random_model<R: Rng>(rng: &mut R, k: usize, m: usize, d: usize) -> HdGmmModel {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let residue = 1.0 - weights.iter().sum::<f64>();
    weights[0] += residue;
    let comps = weights
        .iter()
        .map(|&w| {
            let b = rng.gen_range(0.2..1.0);
            let mut a: Vec<f64> = (0..d).map(|_| rng.gen_range(2.0..10.0)).collect();
            a.sort_by(|x, y| y.total_cmp(x));
            Component::new(w, gaussian_vec(m, 3.0, rng), DVector::from_vec(a), b, random_basis(m, d, rng)).unwrap()
        })
        .collect();
    HdGmmModel::new(comps).unwrap()
}

/// Dense `(y − μ)ᵀ Σ⁻¹ (y − μ)` through a Cholesky factorization.
pub fn dense_mahalanobis(c: &Component, y: &DVector<f64>) -> f64 {
    let chol = c.covariance_dense().cholesky().expect("SPD covariance");
    let diff = y - c.mean();
    diff.dot(&chol.solve(&diff))
}

pub fn dense_log_det(c: &Component) -> f64 {
    let chol = c.covariance_dense().cholesky().expect("SPD covariance");
    2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

pub fn dense_log_density(c: &Component, y: &DVector<f64>) -> f64 {
    let m = c.ambient_dim() as f64;
    -0.5 * (m * (2.0 * std::f64::consts::PI).ln() + dense_log_det(c) + dense_mahalanobis(c, y))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
