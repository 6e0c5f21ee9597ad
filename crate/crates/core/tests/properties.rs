mod common;

use common::*;
use hdgmm::linalg::orthonormality_error;
use hdgmm::reduction::{project, reconstruct};
use hdgmm::stiefel::cayley_retract;
use hdgmm::synth::random_basis;
use nalgebra::DVector;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projector_is_idempotent(seed in any::<u64>(), scale in 0.1f64..10.0) {
        let mut r = rng(seed);
        let c = random_component(&mut r, 2, 20, 1.0);
        let coords = gaussian_vec(c.reduced_dim(), scale, &mut r);
        let back = project(&c, reconstruct(&c, &coords).unwrap().as_slice()).unwrap();
        prop_assert!((back - &coords).norm() <= 1e-12 * (1.0 + coords.norm()));
    }

    #[test]
    fn residual_is_orthogonal_and_no_worse_than_mean(seed in any::<u64>()) {
        let mut r = rng(seed);
        let c = random_component(&mut r, 2, 20, 1.0);
        let y = gaussian_vec(c.ambient_dim(), 3.0, &mut r);
        let recon = reconstruct(&c, &project(&c, y.as_slice()).unwrap()).unwrap();
        let resid = &y - &recon;
        prop_assert!(c.basis().tr_mul(&resid).norm() <= 1e-10 * (1.0 + y.norm()));
        prop_assert!(resid.norm() <= (&y - c.mean()).norm() + 1e-10);
    }

    #[test]
    fn retraction_stays_on_the_manifold(seed in any::<u64>(), tau in 0.0f64..5.0) {
        let mut r = rng(seed);
        let x = random_basis(12, 3, &mut r);
        let g = gaussian_mat(12, 3, &mut r);
        let y = cayley_retract(&x, &g, tau).unwrap();
        prop_assert!(orthonormality_error(&y) <= 1e-10);
    }

    #[test]
    fn responsibilities_sum_to_one(seed in any::<u64>(), spread in 0.1f64..1e3) {
        let mut r = rng(seed);
        let model = random_model(&mut r, 3, 7, 2);
        let y: DVector<f64> = gaussian_vec(7, spread, &mut r);
        let resp = model.responsibilities(y.as_slice()).unwrap();
        prop_assert!((resp.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(resp.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
