//! Small dense linear-algebra utilities shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// `log Σ exp(xᵢ)`, stable for large magnitudes. Empty input gives `-∞`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Neumaier-compensated sum in slice order.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// `‖XᵀX − I‖_F`.
pub fn orthonormality_error(x: &DMatrix<f64>) -> f64 {
    let g = x.tr_mul(x);
    let n = g.nrows();
    (g - DMatrix::<f64>::identity(n, n)).norm()
}

/// Nearest matrix with orthonormal columns, `X (XᵀX)^{-1/2}`. Removes the
/// rounding drift left by long chains of retractions.
pub fn polar_orthonormalize(x: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(x.tr_mul(x));
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    x * (&eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose())
}

/// Flips each column so that its largest-magnitude entry is positive
/// (first such entry on ties).
pub fn fix_column_signs(x: &mut DMatrix<f64>) {
    for mut col in x.column_iter_mut() {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order and eigenvectors under the sign convention of
/// [`fix_column_signs`].
pub fn sorted_symmetric_eigen(s: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(s.clone());
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(s.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    fix_column_signs(&mut vectors);
    (values, vectors)
}

/// Copies rows `range` of an `N × M` matrix into an `M × n` matrix whose
/// columns are the records.
pub fn rows_as_columns(data: &DMatrix<f64>, start: usize, len: usize) -> DMatrix<f64> {
    data.rows(start, len).transpose()
}

/// Makes a matrix exactly symmetric by averaging with its transpose.
pub fn symmetrize(s: &mut DMatrix<f64>) {
    let n = s.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
}
