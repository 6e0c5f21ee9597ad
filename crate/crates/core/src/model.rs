//! HD-GMM parameterization and density evaluation.
//!
//! A component stores its weight, mean, the `d` leading variances `a`, the
//! shared trailing variance `b` and an `M × d` orthonormal basis `W`. The
//! covariance `W diag(a − b) Wᵀ + b I` is never formed except by
//! [`Component::covariance_dense`], which exists for testing.


use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, argmax, log_sum_exp, orthonormality_error};
use crate::par;

/// Basis columns further than this from orthonormal are rejected.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Relative floor on the trailing variance: `b ≥ NOISE_FLOOR_REL · max(a₁, 1)`.
pub const NOISE_FLOOR_REL: f64 = 1e-12;

/// Absolute tolerance on `Σ πₖ = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Floor applied to the trailing variance of a component whose leading
/// variance is `a1`.
pub fn noise_floor(a1: f64) -> f64 {
    NOISE_FLOOR_REL * a1.max(1.0)
}

/// One mixture component with a spiked covariance spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    weight: f64,
    mean: DVector<f64>,
    signal_variances: DVector<f64>,
    noise_variance: f64,
    basis: DMatrix<f64>,
}

impl Component {
    /// Builds a component, clamping `b` up to [`noise_floor`] and checking
    /// every invariant of the parameterization.
    pub fn new(
        weight: f64,
        mean: DVector<f64>,
        signal_variances: DVector<f64>,
        noise_variance: f64,
        basis: DMatrix<f64>,
    ) -> Result<Self> {
        let m = mean.len();
        let d = signal_variances.len();
        if basis.nrows() != m {
            return Err(Error::DimensionMismatch { expected: m, found: basis.nrows() });
        }
        if basis.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: basis.ncols() });
        }
        if d == 0 || d >= m {
            return Err(Error::InvalidParameter(format!(
                "reduced dimension d = {d} must lie in 1..={}",
                m.saturating_sub(1)
            )));
        }
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(Error::InvalidParameter(format!("weight {weight} outside (0, 1]")));
        }
        let all_finite = mean.iter().chain(signal_variances.iter()).chain(basis.iter()).all(|v| v.is_finite())
            && noise_variance.is_finite();
        if !all_finite {
            return Err(Error::InvalidParameter("non-finite component parameter".into()));
        }
        if signal_variances.as_slice().windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter("signal variances must be non-increasing".into()));
        }
        let b = noise_variance.max(noise_floor(signal_variances[0]));
        if signal_variances[d - 1] <= b {
            return Err(Error::InvalidParameter(format!(
                "smallest signal variance {} must exceed noise variance {b}",
                signal_variances[d - 1]
            )));
        }
        let err = orthonormality_error(&basis);
        if err > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal(err));
        }
        Ok(Self { weight, mean, signal_variances, noise_variance: b, basis })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Leading variances `a₁ ≥ … ≥ a_d`.
    pub fn signal_variances(&self) -> &DVector<f64> {
        &self.signal_variances
    }

    /// Trailing variance `b`.
    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// `M × d` orthonormal basis of the component subspace.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn reduced_dim(&self) -> usize {
        self.signal_variances.len()
    }

    #[cfg(test)]
    pub(crate) fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    /// Dense `M × M` covariance `W diag(a − b) Wᵀ + b I`.
    pub fn covariance_dense(&self) -> DMatrix<f64> {
        let b = self.noise_variance;
        let scaled = DMatrix::from_fn(self.ambient_dim(), self.reduced_dim(), |i, j| {
            self.basis[(i, j)] * (self.signal_variances[j] - b)
        });
        let mut cov = &scaled * self.basis.transpose();
        for i in 0..self.ambient_dim() {
            cov[(i, i)] += b;
        }
        linalg::symmetrize(&mut cov);
        cov
    }

    fn check_dim(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch { expected: self.ambient_dim(), found: y.len() });
        }
        Ok(())
    }

    /// `(y − μ)ᵀ Σ⁻¹ (y − μ)` evaluated through the basis: the in-subspace
    /// coordinates are weighted by `1/aⱼ` and the residual by `1/b`.
    pub fn mahalanobis_sq(&self, y: &[f64]) -> Result<f64> {
        self.check_dim(y)?;
        let mut centered = DVector::from_column_slice(y);
        centered -= &self.mean;
        let z = self.basis.tr_mul(&centered);
        let mut inside = 0.0;
        for (zj, aj) in z.iter().zip(self.signal_variances.iter()) {
            inside += zj * zj / aj;
        }
        // residual = centered − W z, computed in place
        centered.gemv(-1.0, &self.basis, &z, 1.0);
        Ok(inside + centered.norm_squared() / self.noise_variance)
    }

    /// `log |Σ| = Σⱼ log aⱼ + (M − d) log b`.
    pub fn log_det_cov(&self) -> f64 {
        let tail = (self.ambient_dim() - self.reduced_dim()) as f64;
        self.signal_variances.iter().map(|a| a.ln()).sum::<f64>() + tail * self.noise_variance.ln()
    }

    /// Gaussian log-density `log N(y; μ, Σ)`.
    pub fn log_density(&self, y: &[f64]) -> Result<f64> {
        let maha = self.mahalanobis_sq(y)?;
        Ok(self.log_density_from_maha(maha))
    }

    fn log_density_from_maha(&self, maha: f64) -> f64 {
        -0.5 * (self.ambient_dim() as f64 * LN_2PI + self.log_det_cov() + maha)
    }

    /// Mahalanobis distances for every column of an `M × n` block.
    pub(crate) fn mahalanobis_columns(&self, block: &DMatrix<f64>) -> Vec<f64> {
        let mut centered = block.clone();
        for mut col in centered.column_iter_mut() {
            col -= &self.mean;
        }
        let z = self.basis.tr_mul(&centered);
        // centered ← centered − W z
        centered.gemm(-1.0, &self.basis, &z, 1.0);
        let inv_a: Vec<f64> = self.signal_variances.iter().map(|a| 1.0 / a).collect();
        (0..block.ncols())
            .map(|c| {
                let inside: f64 = z.column(c).iter().zip(&inv_a).map(|(v, ia)| v * v * ia).sum();
                inside + centered.column(c).norm_squared() / self.noise_variance
            })
            .collect()
    }
}

/// K-component mixture sharing an ambient dimension `M` and a reduced
/// dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct HdGmmModel {
    components: Vec<Component>,
}

impl HdGmmModel {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidParameter("a model needs at least one component".into()))?;
        let (m, d) = (first.ambient_dim(), first.reduced_dim());
        for c in &components {
            if c.ambient_dim() != m {
                return Err(Error::DimensionMismatch { expected: m, found: c.ambient_dim() });
            }
            if c.reduced_dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: c.reduced_dim() });
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component(&self, k: usize) -> Option<&Component> {
        self.components.get(k)
    }

    /// Number of components `K`.
    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Ambient dimension `M`.
    pub fn m(&self) -> usize {
        self.components[0].ambient_dim()
    }

    /// Reduced dimension `d`.
    pub fn d(&self) -> usize {
        self.components[0].reduced_dim()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    fn log_joint(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.components.iter().map(|c| Ok(c.weight.ln() + c.log_density(y)?)).collect()
    }

    /// Posterior membership probabilities `r_k(y)`.
    pub fn responsibilities(&self, y: &[f64]) -> Result<DVector<f64>> {
        let lj = self.log_joint(y)?;
        let norm = log_sum_exp(&lj);
        Ok(DVector::from_iterator(lj.len(), lj.iter().map(|v| (v - norm).exp())))
    }

    /// Most responsible component, ties to the lowest index.
    pub fn assign(&self, y: &[f64]) -> Result<usize> {
        Ok(argmax(&self.log_joint(y)?))
    }

    /// `log Σₖ πₖ N(y; θₖ)` for one record.
    pub fn log_density(&self, y: &[f64]) -> Result<f64> {
        Ok(log_sum_exp(&self.log_joint(y)?))
    }

    fn check_data(&self, data: &DMatrix<f64>) -> Result<()> {
        if data.ncols() != self.m() {
            return Err(Error::DimensionMismatch { expected: self.m(), found: data.ncols() });
        }
        Ok(())
    }

    /// `N × K` matrix of `log πₖ + log N(yᵢ; θₖ)`.
    pub fn log_joint_matrix(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_data(data)?;
        let n = data.nrows();
        let k = self.k();
        let consts: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + c.log_density_from_maha(0.0))
            .collect();
        let blocks = par::map_ranges(par::chunks(n, par::CHUNK), |r| {
            let block = linalg::rows_as_columns(data, r.start, r.len());
            let mahas: Vec<Vec<f64>> = self.components.iter().map(|c| c.mahalanobis_columns(&block)).collect();
            (r, mahas)
        });
        let mut out = DMatrix::zeros(n, k);
        for (r, mahas) in blocks {
            for (kk, col) in mahas.iter().enumerate() {
                for (off, maha) in col.iter().enumerate() {
                    out[(r.start + off, kk)] = consts[kk] - 0.5 * maha;
                }
            }
        }
        Ok(out)
    }

    /// Responsibility matrix (`N × K`) and per-record log-densities.
    pub fn posterior(&self, data: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let mut lj = self.log_joint_matrix(data)?;
        let mut row_ll = Vec::with_capacity(lj.nrows());
        let mut buf = vec![0.0; lj.ncols()];
        for i in 0..lj.nrows() {
            for (kk, b) in buf.iter_mut().enumerate() {
                *b = lj[(i, kk)];
            }
            let norm = log_sum_exp(&buf);
            for kk in 0..buf.len() {
                lj[(i, kk)] = (buf[kk] - norm).exp();
            }
            row_ll.push(norm);
        }
        Ok((lj, row_ll))
    }

    /// Total log-likelihood `Σᵢ log p(yᵢ)`, summed in record order.
    pub fn log_likelihood(&self, data: &DMatrix<f64>) -> Result<f64> {
        let (_, rows) = self.posterior(data)?;
        Ok(linalg::compensated_sum(rows))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use std::f64::consts::PI;

    pub(crate) fn axis_component(m: usize, axis: usize, a: f64, b: f64) -> Component {
        let mut w = DMatrix::zeros(m, 1);
        w[(axis, 0)] = 1.0;
        Component::new(1.0, DVector::zeros(m), dvector![a], b, w).unwrap()
    }

    #[test]
    fn dense_covariance_axis_aligned() {
        let c = axis_component(3, 0, 4.0, 1.0);
        let cov = c.covariance_dense();
        let expected = DMatrix::from_diagonal(&dvector![4.0, 1.0, 1.0]);
        assert!((cov - expected).norm() < 1e-15);
    }

    #[test]
    fn dense_covariance_near_isotropic() {
        let eps = 1e-9;
        let c = axis_component(2, 1, 2.0, 2.0 - eps);
        let cov = c.covariance_dense();
        assert!((cov - DMatrix::identity(2, 2) * 2.0).norm() < 1e-8);
    }

    #[test]
    fn mahalanobis_hand_check() {
        let c = axis_component(3, 0, 4.0, 1.0);
        assert_eq!(c.mahalanobis_sq(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!((c.mahalanobis_sq(&[2.0, 1.0, 1.0]).unwrap() - 3.0).abs() < 1e-15);
        assert!(matches!(c.mahalanobis_sq(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn log_det_hand_check() {
        let c = axis_component(3, 0, 4.0, 1.0);
        assert!((c.log_det_cov() - 4f64.ln()).abs() < 1e-15);
        let eps = 1e-10;
        let c = axis_component(3, 0, 2.0 + eps, 2.0);
        assert!((c.log_det_cov() - 3.0 * 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn standard_normal_at_mode() {
        let c = axis_component(2, 0, 1.0 + 1e-12, 1.0);
        let ld = c.log_density(&[0.0, 0.0]).unwrap();
        assert!((ld + (2.0 * PI).ln()).abs() < 1e-10);
    }

    #[test]
    fn noise_floor_is_applied() {
        let c = axis_component(3, 0, 4.0, 0.0);
        assert_eq!(c.noise_variance(), noise_floor(4.0));
    }

    #[test]
    fn invalid_components_rejected() {
        let w = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let mean = DVector::zeros(2);
        assert!(Component::new(0.0, mean.clone(), dvector![2.0], 1.0, w.clone()).is_err());
        assert!(Component::new(1.0, mean.clone(), dvector![1.0], 2.0, w.clone()).is_err());
        let skew = DMatrix::from_column_slice(2, 1, &[1.0, 0.5]);
        assert!(matches!(
            Component::new(1.0, mean.clone(), dvector![2.0], 1.0, skew),
            Err(Error::NotOrthonormal(_))
        ));
        let full = DMatrix::identity(2, 2);
        assert!(Component::new(1.0, mean, dvector![3.0, 2.0], 1.0, full).is_err());
    }

    fn mirror_model() -> HdGmmModel {
        let w = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let c1 = Component::new(0.5, dvector![-1.0, 0.0], dvector![2.0], 1.0, w.clone()).unwrap();
        let c2 = Component::new(0.5, dvector![1.0, 0.0], dvector![2.0], 1.0, w).unwrap();
        HdGmmModel::new(vec![c1, c2]).unwrap()
    }

    #[test]
    fn mirror_components_split_evenly() {
        let model = mirror_model();
        let r = model.responsibilities(&[0.0, 0.3]).unwrap();
        assert!((r[0] - 0.5).abs() < 1e-15 && (r[1] - 0.5).abs() < 1e-15);
        assert_eq!(model.assign(&[0.0, 0.3]).unwrap(), 0);
    }

    #[test]
    fn single_component_responsibility() {
        let model = HdGmmModel::new(vec![axis_component(3, 1, 5.0, 1.0)]).unwrap();
        assert_eq!(model.responsibilities(&[9.0, -3.0, 2.0]).unwrap()[0], 1.0);
    }

    #[test]
    fn likelihood_is_additive() {
        let model = mirror_model();
        let one = DMatrix::from_row_slice(1, 2, &[0.2, -0.7]);
        let two = DMatrix::from_row_slice(2, 2, &[0.2, -0.7, 0.2, -0.7]);
        let l1 = model.log_likelihood(&one).unwrap();
        assert_eq!(model.log_likelihood(&two).unwrap(), 2.0 * l1);
        assert!((l1 - model.log_density(&[0.2, -0.7]).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let c = axis_component(3, 0, 4.0, 1.0).with_weight(0.4);
        assert!(HdGmmModel::new(vec![c]).is_err());
    }
}
