//! Dictionary matching: exhaustive inner-product search, search in a
//! truncated-SVD basis, and cluster-routed search in HD-GMM coordinates.
//!
//! Signals are real and compared after scaling to unit Euclidean norm.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, fix_column_signs};
use crate::model::{Component, HdGmmModel};
use crate::par;
use crate::reduction::CompressedDataset;

/// Signals (`N × M`) with their generating parameters (`N × P`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    signals: DMatrix<f64>,
    labels: DMatrix<f64>,
    label_names: Vec<String>,
}

impl Dictionary {
    pub fn new(signals: DMatrix<f64>, labels: DMatrix<f64>, label_names: Vec<String>) -> Result<Self> {
        if labels.nrows() != signals.nrows() {
            return Err(Error::DimensionMismatch { expected: signals.nrows(), found: labels.nrows() });
        }
        if labels.ncols() != label_names.len() {
            return Err(Error::DimensionMismatch { expected: label_names.len(), found: labels.ncols() });
        }
        for (i, row) in signals.row_iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: i });
            }
        }
        for (i, row) in labels.row_iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: i });
            }
        }
        Ok(Self { signals, labels, label_names })
    }

    /// Signals without parameter labels.
    pub fn unlabeled(signals: DMatrix<f64>) -> Result<Self> {
        let n = signals.nrows();
        Self::new(signals, DMatrix::zeros(n, 0), Vec::new())
    }

    pub fn signals(&self) -> &DMatrix<f64> {
        &self.signals
    }

    pub fn labels(&self) -> &DMatrix<f64> {
        &self.labels
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn len(&self) -> usize {
        self.signals.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.nrows() == 0
    }

    /// Ambient signal dimension.
    pub fn m(&self) -> usize {
        self.signals.ncols()
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DMatrix<f64>, Vec<String>) {
        (self.signals, self.labels, self.label_names)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub index: usize,
    /// Inner product for full/SVD matching, distance for HD-GMM matching.
    pub score: f64,
    pub params: DVector<f64>,
}

/// Scales every row to unit norm.
pub fn normalize_signals(signals: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = signals.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let norm = row.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm { row: i });
        }
        row /= norm;
    }
    Ok(out)
}

fn normalized_query(query: &[f64], m: usize) -> Result<DVector<f64>> {
    if query.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: query.len() });
    }
    let q = DVector::from_column_slice(query);
    let norm = q.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroNorm { row: 0 });
    }
    Ok(q / norm)
}

fn label_row(labels: &DMatrix<f64>, i: usize) -> DVector<f64> {
    labels.row(i).transpose()
}

/// Exhaustive matcher over a pre-normalized dictionary.
#[derive(Debug, Clone)]
pub struct FullMatcher {
    normalized: DMatrix<f64>,
    labels: DMatrix<f64>,
}

impl FullMatcher {
    pub fn new(dict: &Dictionary) -> Result<Self> {
        if dict.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        Ok(Self { normalized: normalize_signals(&dict.signals)?, labels: dict.labels.clone() })
    }

    /// Largest inner product with the normalized query; ties to the lowest index.
    pub fn best(&self, query: &[f64]) -> Result<MatchResult> {
        let q = normalized_query(query, self.normalized.ncols())?;
        let scores = &self.normalized * q;
        let index = linalg::argmax(scores.as_slice());
        Ok(MatchResult { index, score: scores[index], params: label_row(&self.labels, index) })
    }

    pub fn best_all(&self, queries: &DMatrix<f64>) -> Result<Vec<MatchResult>> {
        match_rows(queries, |q| self.best(q))
    }
}

pub fn full_match(dict: &Dictionary, query: &[f64]) -> Result<MatchResult> {
    FullMatcher::new(dict)?.best(query)
}

fn match_rows<F>(queries: &DMatrix<f64>, f: F) -> Result<Vec<MatchResult>>
where
    F: Fn(&[f64]) -> Result<MatchResult> + Sync + Send,
{
    par::map_indexed(queries.nrows(), |i| {
        let q: Vec<f64> = queries.row(i).iter().copied().collect();
        f(&q)
    })
    .into_iter()
    .collect()
}

/// Truncated-SVD compression of the normalized signal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdCompressed {
    /// `M × d` leading right singular vectors.
    pub basis: DMatrix<f64>,
    /// `N × d` coordinates of the normalized signals.
    pub coords: DMatrix<f64>,
    /// Zero: signals are not centered.
    pub column_mean: DVector<f64>,
    /// All singular values, descending.
    pub singular_values: DVector<f64>,
}

impl SvdCompressed {
    pub fn d(&self) -> usize {
        self.basis.ncols()
    }

    /// Coordinates of an arbitrary signal (not normalized).
    pub fn project(&self, y: &[f64]) -> Result<DVector<f64>> {
        if y.len() != self.basis.nrows() {
            return Err(Error::DimensionMismatch { expected: self.basis.nrows(), found: y.len() });
        }
        Ok(self.basis.tr_mul(&(DVector::from_column_slice(y) - &self.column_mean)))
    }

    pub fn reconstruct_coords(&self, coords: &DVector<f64>) -> DVector<f64> {
        &self.basis * coords + &self.column_mean
    }

    /// Projects and reconstructs every row of `signals`.
    pub fn denoise(&self, signals: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if signals.ncols() != self.basis.nrows() {
            return Err(Error::DimensionMismatch { expected: self.basis.nrows(), found: signals.ncols() });
        }
        let mut centered = signals.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.column_mean.transpose();
        }
        let coords = &centered * &self.basis;
        let mut out = coords * self.basis.transpose();
        for mut row in out.row_iter_mut() {
            row += self.column_mean.transpose();
        }
        Ok(out)
    }
}

/// Top-`d` right singular vectors of the row-normalized signals.
pub fn svd_compress(dict: &Dictionary, d: usize) -> Result<SvdCompressed> {
    let (n, m) = dict.signals.shape();
    if dict.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    if d == 0 || d > n.min(m) {
        return Err(Error::InvalidParameter(format!("SVD rank {d} must lie in 1..={}", n.min(m))));
    }
    let x = normalize_signals(&dict.signals)?;
    let svd = x.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
    let singular_values = DVector::from_iterator(order.len(), order.iter().map(|&i| svd.singular_values[i]));
    let mut basis = DMatrix::zeros(m, d);
    for (dst, &src) in order.iter().take(d).enumerate() {
        basis.set_column(dst, &v_t.row(src).transpose());
    }
    fix_column_signs(&mut basis);
    let coords = &x * &basis;
    Ok(SvdCompressed { basis, coords, column_mean: DVector::zeros(m), singular_values })
}

/// Reconstruction of dictionary row `i` from its coordinates.
pub fn svd_reconstruct(sc: &SvdCompressed, i: usize) -> Result<DVector<f64>> {
    if i >= sc.coords.nrows() {
        return Err(Error::InvalidParameter(format!("row {i} out of range")));
    }
    Ok(sc.reconstruct_coords(&sc.coords.row(i).transpose()))
}

/// Largest inner product between the projected normalized query and the
/// stored coordinates.
pub fn svd_match(sc: &SvdCompressed, labels: &DMatrix<f64>, query: &[f64]) -> Result<MatchResult> {
    if sc.coords.nrows() == 0 {
        return Err(Error::EmptyDictionary);
    }
    let q = normalized_query(query, sc.basis.nrows())?;
    let c = sc.basis.tr_mul(&q);
    let scores = &sc.coords * c;
    let index = linalg::argmax(scores.as_slice());
    Ok(MatchResult { index, score: scores[index], params: label_row(labels, index) })
}

pub fn svd_match_all(sc: &SvdCompressed, labels: &DMatrix<f64>, queries: &DMatrix<f64>) -> Result<Vec<MatchResult>> {
    match_rows(queries, |q| svd_match(sc, labels, q))
}

/// Per-sample noise variance of a unit-norm query measured at `snr_db`
/// under the per-signal RMS convention of [`crate::synth::add_noise`].
pub fn query_noise_variance(snr_db: f64, m: usize) -> f64 {
    let rel = 10f64.powf(-snr_db / 10.0);
    rel / (m as f64 * (1.0 + rel))
}

/// Distance used by [`HdgmmMatcher`] between a query and a stored record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RouteDistance {
    /// `‖Wₖᵀ(q − μₖ) − cᵢ‖²` in reduced coordinates.
    #[default]
    Coordinates,
    /// Distance to the record's reconstruction: the coordinate distance plus
    /// the query's squared residual off cluster `k`'s subspace, which makes
    /// scores comparable across clusters.
    Reconstruction,
}

/// Cluster-routed matcher over an HD-GMM-compressed dictionary.
#[derive(Debug, Clone)]
pub struct HdgmmMatcher<'a> {
    compressed: &'a CompressedDataset,
    labels: &'a DMatrix<f64>,
    members: Vec<Vec<usize>>,
    distance: RouteDistance,
    router: Option<HdGmmModel>,
}

impl<'a> HdgmmMatcher<'a> {
    pub fn new(compressed: &'a CompressedDataset, labels: &'a DMatrix<f64>) -> Result<Self> {
        if labels.nrows() != compressed.count() {
            return Err(Error::DimensionMismatch { expected: compressed.count(), found: labels.nrows() });
        }
        let mut members = vec![Vec::new(); compressed.model().k()];
        for (i, r) in compressed.records().iter().enumerate() {
            members[r.cluster_id].push(i);
        }
        Ok(Self { compressed, labels, members, distance: RouteDistance::default(), router: None })
    }

    pub fn with_distance(mut self, distance: RouteDistance) -> Self {
        self.distance = distance;
        self
    }

    /// Routes queries with the posterior of a noisy observation, i.e. under
    /// covariances `Σₖ + σ²I` where `σ²` is the per-sample variance of the
    /// measurement noise on normalized queries. Zero restores plain
    /// responsibilities.
    pub fn with_query_noise(mut self, variance: f64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::InvalidParameter(format!("query noise variance {variance} must be finite and ≥ 0")));
        }
        self.router = if variance == 0.0 {
            None
        } else {
            let comps = self
                .compressed
                .model()
                .components()
                .iter()
                .map(|c| {
                    Component::new(
                        c.weight(),
                        c.mean().clone(),
                        c.signal_variances().add_scalar(variance),
                        c.noise_variance() + variance,
                        c.basis().clone(),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Some(HdGmmModel::new(comps)?)
        };
        Ok(self)
    }

    pub fn best(&self, query: &[f64], top_n: usize) -> Result<MatchResult> {
        if top_n == 0 {
            return Err(Error::InvalidParameter("top_n must be at least 1".into()));
        }
        let model = self.compressed.model();
        let q = normalized_query(query, model.m())?;
        let resp = self.router.as_ref().unwrap_or(model).responsibilities(q.as_slice())?;
        let mut order: Vec<usize> = (0..model.k()).collect();
        order.sort_by(|&i, &j| resp[j].total_cmp(&resp[i]).then(i.cmp(&j)));

        let mut best: Option<(f64, usize)> = None;
        for &k in order.iter().take(top_n) {
            if self.members[k].is_empty() {
                continue;
            }
            let comp = &model.components()[k];
            let mut residual = &q - comp.mean();
            let qc = comp.basis().tr_mul(&residual);
            let res2 = match self.distance {
                RouteDistance::Coordinates => 0.0,
                RouteDistance::Reconstruction => {
                    residual.gemv(-1.0, comp.basis(), &qc, 1.0);
                    residual.norm_squared()
                }
            };
            for &i in &self.members[k] {
                let coords = &self.compressed.records()[i].coords;
                let dist2 = (&qc - coords).norm_squared() + res2;
                let better = match best {
                    None => true,
                    Some((bd, bi)) => dist2 < bd || (dist2 == bd && i < bi),
                };
                if better {
                    best = Some((dist2, i));
                }
            }
        }
        let (dist2, index) = best.ok_or(Error::NoCandidates)?;
        Ok(MatchResult { index, score: dist2.sqrt(), params: label_row(self.labels, index) })
    }

    pub fn best_all(&self, queries: &DMatrix<f64>, top_n: usize) -> Result<Vec<MatchResult>> {
        match_rows(queries, |q| self.best(q, top_n))
    }
}

pub fn hdgmm_match(
    compressed: &CompressedDataset,
    labels: &DMatrix<f64>,
    query: &[f64],
    top_n: usize,
) -> Result<MatchResult> {
    HdgmmMatcher::new(compressed, labels)?.best(query, top_n)
}

/// Stacks the parameter vectors of a result list into a `Q × P` matrix.
pub fn params_matrix(results: &[MatchResult]) -> DMatrix<f64> {
    let p = results.first().map_or(0, |r| r.params.len());
    DMatrix::from_fn(results.len(), p, |i, j| results[i].params[j])
}

/// Per-parameter mean absolute difference.
pub fn param_mae(estimated: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<Vec<f64>> {
    if estimated.shape() != reference.shape() {
        return Err(Error::DimensionMismatch { expected: reference.len(), found: estimated.len() });
    }
    let q = estimated.nrows().max(1) as f64;
    Ok((0..estimated.ncols())
        .map(|j| linalg::compensated_sum((0..estimated.nrows()).map(|i| (estimated[(i, j)] - reference[(i, j)]).abs())) / q)
        .collect())
}

/// Fraction of positions where both result lists point at the same row.
pub fn agreement_rate(a: &[MatchResult], b: &[MatchResult]) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    a.iter().zip(b).filter(|(x, y)| x.index == y.index).count() as f64 / a.len() as f64
}
