//! Curvilinear search on the Stiefel manifold for the component basis.
//!
//! Minimizes `f(X) = Σⱼ cⱼ xⱼᵀ S xⱼ` with `cⱼ = 1/aⱼ − 1/b < 0` over `M × d`
//! matrices with orthonormal columns. Steps follow the Cayley curve
//! `Y(τ) = X − τ U (I + τ/2 VᵀU)⁻¹ VᵀX` with `U = [G | X]`, `V = [X | −G]`,
//! which keeps `YᵀY = I` and only needs a `2d × 2d` solve.
//!
//! Every accepted step satisfies the Armijo condition, so the objective is
//! monotone. Gradient methods cannot leave a stationary point, and warm starts
//! are often exactly that (an eigenbasis of the wrong subspace), so when the
//! projected gradient vanishes the solver checks two second-order descent
//! moves before stopping: reordering columns by Rayleigh quotient, and
//! swapping the weakest column for the leading direction of `S` restricted to
//! the orthogonal complement.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{fix_column_signs, orthonormality_error, polar_orthonormalize};

/// Orthonormality tolerance for inputs.
pub const INPUT_ORTHO_TOL: f64 = 1e-8;

/// Iterates are re-orthonormalized when their error exceeds this.
const DRIFT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// Every line search starts from `tau0`.
    Fixed,
    /// Trial step from alternating Barzilai–Borwein quotients, still
    /// subject to monotone Armijo backtracking.
    BarzilaiBorwein,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StiefelSettings {
    pub max_iter: usize,
    /// Tolerance on the projected-gradient norm `√(½‖GXᵀ − XGᵀ‖²)`.
    pub grad_tol: f64,
    pub armijo_c1: f64,
    /// Backtracking factor.
    pub rho: f64,
    pub tau0: f64,
    pub tau_min: f64,
    pub step_rule: StepRule,
    /// Try the second-order escape moves at stationary points.
    pub escape_saddles: bool,
}

impl Default for StiefelSettings {
    fn default() -> Self {
        Self {
            max_iter: 50,
            grad_tol: 1e-7,
            armijo_c1: 1e-4,
            rho: 0.5,
            tau0: 1e-2,
            tau_min: 1e-14,
            step_rule: StepRule::BarzilaiBorwein,
            escape_saddles: true,
        }
    }
}

impl StiefelSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidParameter(format!("backtrack factor {} not in (0, 1)", self.rho)));
        }
        if !(self.tau_min < self.tau0 && self.tau_min > 0.0) {
            return Err(Error::InvalidParameter("need 0 < tau_min < tau0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    /// Backtracking fell below `tau_min`; the last iterate is returned.
    StepStall,
}

#[derive(Debug, Clone)]
pub struct StiefelOutcome {
    pub point: DMatrix<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub escapes: usize,
    pub status: StopReason,
}

fn column_weights(a: &DVector<f64>, b: f64) -> Result<Vec<f64>> {
    if !(b > 0.0) {
        return Err(Error::InvalidParameter(format!("noise variance {b} must be positive")));
    }
    a.iter()
        .map(|&aj| {
            if aj > b {
                Ok(1.0 / aj - 1.0 / b)
            } else {
                Err(Error::InvalidParameter(format!("signal variance {aj} must exceed {b}")))
            }
        })
        .collect()
}

fn check_point(s: &DMatrix<f64>, a: &DVector<f64>, x: &DMatrix<f64>) -> Result<()> {
    if !s.is_square() || s.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), found: s.nrows() });
    }
    if x.ncols() != a.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: x.ncols() });
    }
    let err = orthonormality_error(x);
    if err > INPUT_ORTHO_TOL {
        return Err(Error::NotOrthonormal(err));
    }
    Ok(())
}

fn eval(s: &DMatrix<f64>, w: &[f64], x: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let sx = s * x;
    let f = (0..x.ncols()).map(|j| w[j] * x.column(j).dot(&sx.column(j))).sum();
    (f, sx)
}

fn grad_from_sx(mut sx: DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    for (j, mut col) in sx.column_iter_mut().enumerate() {
        col *= 2.0 * w[j];
    }
    sx
}

/// `f(X) = Σⱼ (1/aⱼ − 1/b) xⱼᵀ S xⱼ`.
pub fn objective(s: &DMatrix<f64>, a: &DVector<f64>, b: f64, x: &DMatrix<f64>) -> Result<f64> {
    check_point(s, a, x)?;
    objective_ambient(s, a, b, x)
}

/// [`objective`] extended to every `M × d` matrix, e.g. for finite
/// differences off the manifold.
pub fn objective_ambient(s: &DMatrix<f64>, a: &DVector<f64>, b: f64, x: &DMatrix<f64>) -> Result<f64> {
    if s.nrows() != x.nrows() || !s.is_square() || x.ncols() != a.len() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), found: s.nrows() });
    }
    let w = column_weights(a, b)?;
    Ok(eval(s, &w, x).0)
}

/// `G = 2 S X diag(1/aⱼ − 1/b)`.
pub fn euclidean_grad(s: &DMatrix<f64>, a: &DVector<f64>, b: f64, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if s.nrows() != x.nrows() || x.ncols() != a.len() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), found: s.nrows() });
    }
    let w = column_weights(a, b)?;
    Ok(grad_from_sx(s * x, &w))
}

/// Half the squared Frobenius norm of `GXᵀ − XGᵀ`, i.e. `−f'(0)` along the
/// Cayley curve. Requires `XᵀX = I`.
pub fn projected_grad_norm_sq(x: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
    let gtx = g.tr_mul(x);
    let tr_sq: f64 = (&gtx * &gtx).trace();
    (g.norm_squared() - tr_sq).max(0.0)
}

/// Point `Y(τ)` on the Cayley curve through `X` generated by `G`.
pub fn cayley_retract(x: &DMatrix<f64>, g: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    let (m, d) = x.shape();
    if g.shape() != (m, d) {
        return Err(Error::DimensionMismatch { expected: m * d, found: g.len() });
    }
    if tau == 0.0 {
        return Ok(x.clone());
    }
    let mut u = DMatrix::zeros(m, 2 * d);
    u.columns_mut(0, d).copy_from(g);
    u.columns_mut(d, d).copy_from(x);
    let mut v = DMatrix::zeros(m, 2 * d);
    v.columns_mut(0, d).copy_from(x);
    v.columns_mut(d, d).copy_from(&(-g));
    let mut system = v.tr_mul(&u) * (0.5 * tau);
    for i in 0..2 * d {
        system[(i, i)] += 1.0;
    }
    let rhs = v.tr_mul(x);
    let z = system
        .lu()
        .solve(&rhs)
        .filter(|z| z.iter().all(|v| v.is_finite()))
        .ok_or(Error::SingularRetraction(2 * d))?;
    Ok(x - (u * z) * tau)
}

/// Principal angles (radians, ascending) between the spans of two
/// orthonormal `M × d` matrices.
pub fn principal_angles(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.shape() != y.shape() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    for m in [x, y] {
        let err = orthonormality_error(m);
        if err > INPUT_ORTHO_TOL {
            return Err(Error::NotOrthonormal(err));
        }
    }
    let svd = x.tr_mul(y).svd(false, false);
    let mut angles: Vec<f64> = svd.singular_values.iter().map(|s| s.clamp(0.0, 1.0).acos()).collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

fn rayleigh(s: &DMatrix<f64>, x: &DMatrix<f64>) -> Vec<f64> {
    let sx = s * x;
    (0..x.ncols()).map(|j| x.column(j).dot(&sx.column(j))).collect()
}

fn project_out(x: &DMatrix<f64>, v: &mut DVector<f64>) {
    for _ in 0..2 {
        let c = x.tr_mul(v);
        v.gemv(-1.0, x, &c, 1.0);
    }
}

/// Leading eigen-direction of `S` on the orthogonal complement of `span(X)`.
fn complement_direction(s: &DMatrix<f64>, x: &DMatrix<f64>) -> Option<(DVector<f64>, f64)> {
    let m = x.nrows();
    if x.ncols() >= m {
        return None;
    }
    let shift = s.norm();
    let mut v = DVector::from_fn(m, |i, _| ((i as f64 + 1.0) * 0.618_033_988_749_895).fract() - 0.5);
    project_out(x, &mut v);
    for _ in 0..200 {
        let norm = v.norm();
        if norm < 1e-300 {
            return None;
        }
        v /= norm;
        let mut next = s * &v + &v * shift;
        project_out(x, &mut next);
        v = next;
    }
    let norm = v.norm();
    if norm < 1e-300 {
        return None;
    }
    v /= norm;
    let q = v.dot(&(s * &v));
    Some((v, q))
}

/// One second-order descent move from a stationary `X`, if any strictly
/// lowers the objective.
fn escape(s: &DMatrix<f64>, w: &[f64], x: &DMatrix<f64>, f: f64) -> Option<DMatrix<f64>> {
    let scale = s.norm().max(f64::MIN_POSITIVE) * w.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    let q = rayleigh(s, x);
    let d = x.ncols();

    // columns ordered by Rayleigh quotient, largest paired with most negative weight
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| q[j].total_cmp(&q[i]).then(i.cmp(&j)));
    let mut best = None;
    if order.iter().enumerate().any(|(i, &j)| i != j) {
        let mut permuted = DMatrix::zeros(x.nrows(), d);
        for (dst, &src) in order.iter().enumerate() {
            permuted.set_column(dst, &x.column(src));
        }
        let fp = eval(s, w, &permuted).0;
        if fp < f - 1e-12 * scale {
            best = Some((permuted, fp));
        }
    }

    if let Some((v, qv)) = complement_direction(s, x) {
        let (mut cand, mut fc) = (x.clone(), f);
        let mut gain = 0.0;
        let mut slot = None;
        for j in 0..d {
            let delta = w[j] * (qv - q[j]);
            if delta < gain {
                gain = delta;
                slot = Some(j);
            }
        }
        if let Some(j) = slot {
            cand.set_column(j, &v);
            fc += gain;
            if fc < f - 1e-12 * scale && best.as_ref().is_none_or(|(_, fb)| fc < *fb) {
                best = Some((cand, fc));
            }
        }
    }
    best.map(|(x, _)| x)
}

/// Runs the curvilinear search from `x0`.
pub fn optimize(
    s: &DMatrix<f64>,
    a: &DVector<f64>,
    b: f64,
    x0: &DMatrix<f64>,
    settings: &StiefelSettings,
) -> Result<StiefelOutcome> {
    optimize_observed(s, a, b, x0, settings, |_, _| {})
}

/// [`optimize`] with a callback invoked on the start point and on every
/// accepted iterate together with its objective value.
pub fn optimize_observed<F>(
    s: &DMatrix<f64>,
    a: &DVector<f64>,
    b: f64,
    x0: &DMatrix<f64>,
    settings: &StiefelSettings,
    mut observe: F,
) -> Result<StiefelOutcome>
where
    F: FnMut(&DMatrix<f64>, f64),
{
    settings.validate()?;
    check_point(s, a, x0)?;
    let w = column_weights(a, b)?;

    let mut x = x0.clone();
    let (mut f, sx) = eval(s, &w, &x);
    let mut g = grad_from_sx(sx, &w);
    let mut gn2 = projected_grad_norm_sq(&x, &g);
    observe(&x, f);

    let mut iterations = 0;
    let mut escapes = 0;
    let mut tau_prev = settings.tau0;
    let mut last_step: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let status = loop {
        if gn2.sqrt() <= settings.grad_tol {
            if settings.escape_saddles && escapes <= x.ncols() {
                if let Some(next) = escape(s, &w, &x, f) {
                    escapes += 1;
                    x = next;
                    let (fx, sx) = eval(s, &w, &x);
                    f = fx;
                    g = grad_from_sx(sx, &w);
                    gn2 = projected_grad_norm_sq(&x, &g);
                    last_step = None;
                    observe(&x, f);
                    continue;
                }
            }
            break StopReason::GradientTolerance;
        }
        if iterations >= settings.max_iter {
            break StopReason::MaxIterations;
        }

        let mut tau = match (settings.step_rule, &last_step) {
            (StepRule::BarzilaiBorwein, Some((dx, dg))) => {
                let sy = dx.dot(dg).abs();
                let bb = if iterations % 2 == 0 {
                    dx.norm_squared() / sy
                } else {
                    sy / dg.norm_squared()
                };
                if bb.is_finite() && bb > 0.0 {
                    bb.clamp(settings.tau_min, 1e20)
                } else {
                    tau_prev
                }
            }
            _ => settings.tau0,
        };

        let accepted = loop {
            if tau < settings.tau_min {
                break None;
            }
            match cayley_retract(&x, &g, tau) {
                Ok(y) => {
                    // long steps lose orthogonality to cancellation
                    let y = if orthonormality_error(&y) > DRIFT_TOL { polar_orthonormalize(&y) } else { y };
                    let (fy, sy) = eval(s, &w, &y);
                    if fy <= f - settings.armijo_c1 * tau * gn2 {
                        break Some((y, fy, sy));
                    }
                }
                Err(Error::SingularRetraction(_)) => {}
                Err(e) => return Err(e),
            }
            tau *= settings.rho;
        };
        let Some((y, fy, sy)) = accepted else {
            break StopReason::StepStall;
        };

        let gy = grad_from_sx(sy, &w);
        // BB differences use the Riemannian gradient G − X GᵀX
        let rg_old = &g - &x * g.tr_mul(&x);
        let rg_new = &gy - &y * gy.tr_mul(&y);
        last_step = Some((&y - &x, rg_new - rg_old));
        tau_prev = tau;
        x = y;
        f = fy;
        g = gy;
        gn2 = projected_grad_norm_sq(&x, &g);
        iterations += 1;
        observe(&x, f);
    };

    Ok(StiefelOutcome { point: x, objective: f, iterations, grad_norm: gn2.sqrt(), escapes, status })
}

/// Applies the basis sign convention used for serialization.
pub fn canonical_signs(mut x: DMatrix<f64>) -> DMatrix<f64> {
    fix_column_signs(&mut x);
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn axis(m: usize, cols: &[usize]) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(m, cols.len());
        for (j, &i) in cols.iter().enumerate() {
            x[(i, j)] = 1.0;
        }
        x
    }

    #[test]
    fn objective_hand_values() {
        let s = DMatrix::from_diagonal(&dvector![4.0, 1.0]);
        let a = dvector![4.0];
        assert!((objective(&s, &a, 1.0, &axis(2, &[0])).unwrap() + 3.0).abs() < 1e-15);
        assert!((objective(&s, &a, 1.0, &axis(2, &[1])).unwrap() + 0.75).abs() < 1e-15);
    }

    #[test]
    fn objective_constant_for_identity() {
        let s = DMatrix::identity(5, 5);
        let a = dvector![3.0, 2.0];
        let expected = (1.0 / 3.0 - 1.0) + (0.5 - 1.0);
        let x = axis(5, &[3, 1]);
        assert!((objective(&s, &a, 1.0, &x).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn objective_rejects_bad_inputs() {
        let s = DMatrix::identity(3, 3);
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0]);
        assert!(matches!(objective(&s, &dvector![2.0], 1.0, &x), Err(Error::NotOrthonormal(_))));
        assert!(objective(&s, &dvector![1.0], 2.0, &axis(3, &[0])).is_err());
    }

    #[test]
    fn gradient_zero_and_linear() {
        let x = axis(4, &[0, 2]);
        let a = dvector![3.0, 2.0];
        let g0 = euclidean_grad(&DMatrix::zeros(4, 4), &a, 1.0, &x).unwrap();
        assert_eq!(g0.norm(), 0.0);
        // b → b/2 with a → a/2 doubles 1/a − 1/b
        let s = DMatrix::from_fn(4, 4, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let g1 = euclidean_grad(&s, &a, 1.0, &x).unwrap();
        let g2 = euclidean_grad(&s, &(a / 2.0), 0.5, &x).unwrap();
        assert!((g2 - g1 * 2.0).norm() < 1e-12);
    }

    #[test]
    fn retraction_fixed_points() {
        let x = axis(5, &[1, 3]);
        let g = DMatrix::from_fn(5, 2, |i, j| (i + 2 * j) as f64 * 0.1);
        assert_eq!(cayley_retract(&x, &g, 0.0).unwrap(), x);
        let y = cayley_retract(&x, &x, 0.7).unwrap();
        assert!((y - &x).norm() < 1e-14);
    }

    #[test]
    fn diagonal_start_on_saddle_reaches_top_axis() {
        let mut diag = vec![1.0; 8];
        diag[0] = 9.0;
        diag[1] = 4.0;
        let s = DMatrix::from_diagonal(&DVector::from_vec(diag));
        let a = dvector![9.0];
        let out = optimize(&s, &a, 1.0, &axis(8, &[2]), &StiefelSettings::default()).unwrap();
        assert!((out.point[(0, 0)].abs() - 1.0).abs() < 1e-6);
        assert!((out.objective - (1.0 / 9.0 - 1.0) * 9.0).abs() < 1e-9);
        assert!(orthonormality_error(&out.point) < 1e-10);
    }

    #[test]
    fn stationary_top_basis_stays() {
        let s = DMatrix::from_diagonal(&dvector![5.0, 3.0, 1.0, 0.5]);
        let a = dvector![5.0, 3.0];
        let x0 = axis(4, &[0, 1]);
        let f0 = objective(&s, &a, 0.75, &x0).unwrap();
        let out = optimize(&s, &a, 0.75, &x0, &StiefelSettings::default()).unwrap();
        assert!(out.iterations <= 2);
        assert!(out.objective <= f0);
        assert_eq!(out.status, StopReason::GradientTolerance);
    }

    #[test]
    fn swapped_columns_are_reordered() {
        let s = DMatrix::from_diagonal(&dvector![5.0, 3.0, 1.0, 0.5]);
        let a = dvector![5.0, 3.0];
        let out = optimize(&s, &a, 0.75, &axis(4, &[1, 0]), &StiefelSettings::default()).unwrap();
        assert!((out.point[(0, 0)].abs() - 1.0).abs() < 1e-9);
        assert!((out.point[(1, 1)].abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn principal_angle_cases() {
        let x = axis(3, &[0, 1]);
        assert!(principal_angles(&x, &x).unwrap().iter().all(|t| t.abs() < 1e-7));
        let a = axis(4, &[0, 1]);
        let b = axis(4, &[2, 3]);
        for t in principal_angles(&a, &b).unwrap() {
            assert!((t - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        }
        let e1 = axis(2, &[0]);
        let diag = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]) / 2f64.sqrt();
        let t = principal_angles(&e1, &diag).unwrap();
        assert!((t[0] - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn settings_validation() {
        let bad = StiefelSettings { rho: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = StiefelSettings { tau_min: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
