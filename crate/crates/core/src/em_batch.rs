//! In-memory EM for HD-GMM, initialization and BIC model selection.
//!
//! The M-step is closed form: each component's weighted covariance is
//! eigen-decomposed, the `d` leading eigenpairs give `(a, W)` and `b` is the
//! mean of the discarded eigenvalues, obtained through the trace identity so
//! the trailing eigenvectors are never needed.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, sorted_symmetric_eigen};
use crate::model::{noise_floor, Component, HdGmmModel};
use crate::par;

/// Components whose mass falls below this fraction of `N` are degenerate.
pub const EMPTY_MASS_REL: f64 = 1e-8;

/// Per-component weighted sums `Σ rᵢₖ`, `Σ rᵢₖ yᵢ` and `Σ rᵢₖ yᵢ yᵢᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMoments {
    pub mass: Vec<f64>,
    pub first: Vec<DVector<f64>>,
    pub scatter: Vec<DMatrix<f64>>,
}

impl WeightedMoments {
    pub fn zeros(k: usize, m: usize) -> Self {
        Self {
            mass: vec![0.0; k],
            first: vec![DVector::zeros(m); k],
            scatter: vec![DMatrix::zeros(m, m); k],
        }
    }

    pub fn k(&self) -> usize {
        self.mass.len()
    }

    pub fn m(&self) -> usize {
        self.first.first().map_or(0, |f| f.len())
    }

    fn add_assign(&mut self, other: &Self) {
        for k in 0..self.k() {
            self.mass[k] += other.mass[k];
            self.first[k] += &other.first[k];
            self.scatter[k] += &other.scatter[k];
        }
    }

    /// Multiplies every statistic by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for k in 0..self.k() {
            self.mass[k] *= factor;
            self.first[k] *= factor;
            self.scatter[k] *= factor;
        }
    }
}

/// Log-likelihood history of a fit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitTrace {
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FitTrace {
    /// True when no entry drops below its predecessor by more than `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.log_likelihood.windows(2).all(|w| w[1] >= w[0] - slack)
    }

    pub fn final_log_likelihood(&self) -> Option<f64> {
        self.log_likelihood.last().copied()
    }
}

/// Responsibilities (`N × K`) and total log-likelihood under `model`.
pub fn e_step(model: &HdGmmModel, data: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let (resp, rows) = model.posterior(data)?;
    Ok((resp, linalg::compensated_sum(rows)))
}

/// Weighted moments of `data` under `resp`, accumulated over fixed-size
/// record chunks merged in order.
pub fn accumulate_moments(data: &DMatrix<f64>, resp: &DMatrix<f64>) -> Result<WeightedMoments> {
    if resp.nrows() != data.nrows() {
        return Err(Error::DimensionMismatch { expected: data.nrows(), found: resp.nrows() });
    }
    let (n, m) = data.shape();
    let k = resp.ncols();
    let folded = par::fold_chunks(
        n,
        par::CHUNK,
        |r| {
            let mut part = WeightedMoments::zeros(k, m);
            let block = data.rows(r.start, r.len());
            let block_t = block.transpose();
            for kk in 0..k {
                let weights = resp.view((r.start, kk), (r.len(), 1));
                part.mass[kk] = weights.iter().sum();
                part.first[kk].gemv(1.0, &block_t, &weights.column(0), 0.0);
                let mut weighted = block.clone_owned();
                for (i, mut row) in weighted.row_iter_mut().enumerate() {
                    row *= weights[i];
                }
                part.scatter[kk].gemm(1.0, &block_t, &weighted, 0.0);
            }
            part
        },
        |mut acc, part| {
            acc.add_assign(&part);
            acc
        },
    );
    let mut moments = folded.unwrap_or_else(|| WeightedMoments::zeros(k, m));
    for s in &mut moments.scatter {
        linalg::symmetrize(s);
    }
    Ok(moments)
}

/// Spectral estimate of `(a, b, W)` from a covariance matrix: the `d`
/// leading eigenpairs, with `b = (tr S − Σ aⱼ)/(M − d)` clamped to
/// `[floor, a_d − floor]`.
pub fn spectral_estimate(cov: &DMatrix<f64>, d: usize, floor_b: f64) -> (DVector<f64>, f64, DMatrix<f64>) {
    let m = cov.nrows();
    let (values, vectors) = sorted_symmetric_eigen(cov);
    let a_raw = values.rows(0, d).into_owned();
    let b_raw = (cov.trace() - a_raw.sum()) / (m - d) as f64;
    let (a, b) = clamp_spectrum(a_raw, b_raw, floor_b);
    (a, b, vectors.columns(0, d).into_owned())
}

/// Enforces `a₁ ≥ … ≥ a_d > b ≥ floor` with `floor = max(floor_b, 1e-12·max(a₁, 1))`.
pub(crate) fn clamp_spectrum(mut a: DVector<f64>, b: f64, floor_b: f64) -> (DVector<f64>, f64) {
    let floor = floor_b.max(noise_floor(a[0]));
    for v in a.iter_mut() {
        *v = v.max(2.0 * floor);
    }
    let a_min = a[a.len() - 1];
    let b = if b.is_nan() { floor } else { b.clamp(floor, a_min - floor) };
    (a, b)
}

/// Component estimate from its weight, mean and covariance.
pub(crate) fn component_from_cov(weight: f64, mean: DVector<f64>, cov: &DMatrix<f64>, d: usize, floor_b: f64) -> Result<Component> {
    let (a, b, w) = spectral_estimate(cov, d, floor_b);
    Component::new(weight, mean, a, b, w)
}

/// Mean and covariance `scatter/n − μμᵀ` from weighted moments.
pub(crate) fn mean_and_cov(mass: f64, first: &DVector<f64>, scatter: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let mean = first / mass;
    let mut cov = scatter / mass;
    cov.ger(-1.0, &mean, &mean, 1.0);
    linalg::symmetrize(&mut cov);
    (mean, cov)
}

/// Closed-form M-step.
pub fn m_step(moments: &WeightedMoments, n: usize, d: usize, floor_b: f64) -> Result<HdGmmModel> {
    let m = moments.m();
    if d == 0 || d >= m {
        return Err(Error::InvalidParameter(format!("reduced dimension {d} must lie in 1..{m}")));
    }
    let total = n as f64;
    for (k, &mass) in moments.mass.iter().enumerate() {
        if !(mass >= EMPTY_MASS_REL * total) || mass <= 0.0 {
            return Err(Error::DegenerateComponent { component: k, mass, iteration: None });
        }
    }
    let weights = normalized_weights(&moments.mass);
    let components = par::map_indexed(moments.k(), |k| {
        let (mean, cov) = mean_and_cov(moments.mass[k], &moments.first[k], &moments.scatter[k]);
        component_from_cov(weights[k], mean, &cov, d, floor_b)
    });
    HdGmmModel::new(components.into_iter().collect::<Result<Vec<_>>>()?)
}

/// `mass / Σ mass`, with the largest entry absorbing the rounding residue so
/// the weights sum to one.
pub(crate) fn normalized_weights(mass: &[f64]) -> Vec<f64> {
    let total: f64 = mass.iter().sum();
    let mut w: Vec<f64> = mass.iter().map(|v| v / total).collect();
    let residue = 1.0 - w.iter().sum::<f64>();
    let big = linalg::argmax(&w);
    w[big] += residue;
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    /// Records drawn (uniformly, without replacement) for initialization.
    pub subsample_cap: usize,
    pub lloyd_iters: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { subsample_cap: 50_000, lloyd_iters: 10 }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let dist = sq_dist(point, center);
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

/// Seeded k-means++ plus Lloyd iterations on a subsample, followed by a
/// hard-assignment M-step.
pub fn init_model(data: &DMatrix<f64>, k: usize, d: usize, seed: u64) -> Result<HdGmmModel> {
    init_model_with(data, k, d, seed, &InitConfig::default())
}

pub fn init_model_with(data: &DMatrix<f64>, k: usize, d: usize, seed: u64, cfg: &InitConfig) -> Result<HdGmmModel> {
    let (n, m) = data.shape();
    if k == 0 {
        return Err(Error::InvalidParameter("K must be positive".into()));
    }
    if d == 0 || d >= m {
        return Err(Error::InvalidParameter(format!("reduced dimension {d} must lie in 1..{m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = n.min(cfg.subsample_cap.max(1));
    let needed = k * (d + 2);
    if take < needed {
        return Err(Error::InsufficientData { needed, got: take });
    }
    let mut picked: Vec<usize> = if take == n {
        (0..n).collect()
    } else {
        index::sample(&mut rng, n, take).into_vec()
    };
    picked.sort_unstable();
    let points: Vec<Vec<f64>> = picked.iter().map(|&i| data.row(i).iter().copied().collect()).collect();

    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = vec![points[rng.gen_range(0..take)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = take - 1;
            for (i, v) in d2.iter().enumerate() {
                acc += v;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..take)
        };
        centers.push(points[next].clone());
        let c = centers.last().unwrap();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, c));
        }
    }

    let mut labels = vec![0usize; take];
    for _ in 0..cfg.lloyd_iters.max(1) {
        labels = par::map_indexed(take, |i| nearest(&points[i], &centers).0);
        let mut sums = vec![vec![0.0; m]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }

    // clusters too small for a d-dimensional spectrum borrow the largest
    // cluster's outermost points
    let min_size = d + 2;
    loop {
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        let Some(small) = (0..k).find(|&c| counts[c] < min_size) else { break };
        let donor = linalg::argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
        if counts[donor] < min_size + (min_size - counts[small]) {
            return Err(Error::InsufficientData { needed, got: take });
        }
        let centroid = &centers[donor];
        let mut members: Vec<(usize, f64)> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == donor)
            .map(|(i, _)| (i, sq_dist(&points[i], centroid)))
            .collect();
        members.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        for &(i, _) in members.iter().take(min_size - counts[small]) {
            labels[i] = small;
        }
    }

    let sub = DMatrix::from_fn(take, m, |i, j| points[i][j]);
    let resp = DMatrix::from_fn(take, k, |i, c| if labels[i] == c { 1.0 } else { 0.0 });
    let moments = accumulate_moments(&sub, &resp)?;
    m_step(&moments, take, d, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchConfig {
    pub max_iter: usize,
    /// Stop once `(ℓₜ − ℓₜ₋₁)/|ℓₜ₋₁|` drops below this.
    pub rel_tol: f64,
    pub seed: u64,
    pub floor_b: f64,
    pub init: InitConfig,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self { max_iter: 200, rel_tol: 1e-7, seed: 0, floor_b: 0.0, init: InitConfig::default() }
    }
}

/// Initializes with [`init_model_with`] and runs EM.
pub fn fit_batch(data: &DMatrix<f64>, k: usize, d: usize, cfg: &BatchConfig) -> Result<(HdGmmModel, FitTrace)> {
    let needed = k * (d + 2) + 1;
    if data.nrows() < needed {
        return Err(Error::InsufficientData { needed, got: data.nrows() });
    }
    let init = init_model_with(data, k, d, cfg.seed, &cfg.init)?;
    fit_batch_from(data, init, cfg)
}

/// Runs EM from a given starting model.
pub fn fit_batch_from(data: &DMatrix<f64>, init: HdGmmModel, cfg: &BatchConfig) -> Result<(HdGmmModel, FitTrace)> {
    let n = data.nrows();
    let d = init.d();
    let mut model = init;
    let mut trace = FitTrace::default();
    loop {
        let (resp, ll) = e_step(&model, data)?;
        if let Some(&prev) = trace.log_likelihood.last() {
            trace.log_likelihood.push(ll);
            if (ll - prev) / prev.abs() < cfg.rel_tol {
                trace.converged = true;
                break;
            }
        } else {
            trace.log_likelihood.push(ll);
        }
        if trace.iterations >= cfg.max_iter {
            break;
        }
        let moments = accumulate_moments(data, &resp)?;
        model = m_step(&moments, n, d, cfg.floor_b).map_err(|e| match e {
            Error::DegenerateComponent { component, mass, .. } => {
                Error::DegenerateComponent { component, mass, iteration: Some(trace.iterations + 1) }
            }
            other => other,
        })?;
        trace.iterations += 1;
    }
    Ok((model, trace))
}

/// Free parameters of a common-`d` HD-GMM:
/// `(K−1) + K·M + K·d·(M − (d+1)/2) + K·(d+1)`.
pub fn param_count(k: usize, m: usize, d: usize) -> u64 {
    let (k, m, d) = (k as u64, m as u64, d as u64);
    let orientation = d * (2 * m - d - 1) / 2;
    (k - 1) + k * m + k * orientation + k * (d + 1)
}

/// `−2 log L + p log N`.
pub fn bic(model: &HdGmmModel, data: &DMatrix<f64>) -> Result<f64> {
    let ll = model.log_likelihood(data)?;
    Ok(bic_value(ll, param_count(model.k(), model.m(), model.d()), data.nrows()))
}

pub fn bic_value(log_likelihood: f64, params: u64, n: usize) -> f64 {
    -2.0 * log_likelihood + params as f64 * (n as f64).ln()
}

#[derive(Debug, Clone)]
pub struct BicCell {
    pub k: usize,
    pub d: usize,
    pub params: u64,
    /// `(bic, log-likelihood)` or the fit failure message.
    pub outcome: std::result::Result<(f64, f64), String>,
}

#[derive(Debug, Clone)]
pub struct BicScan {
    pub cells: Vec<BicCell>,
    pub best: Option<(usize, usize)>,
}

/// Fits every `(K, d)` in the grid with the same seed. Failed fits are
/// recorded and excluded from the minimizer; ties keep the earliest cell.
pub fn bic_scan(data: &DMatrix<f64>, k_grid: &[usize], d_grid: &[usize], cfg: &BatchConfig) -> Result<BicScan> {
    if k_grid.is_empty() || d_grid.is_empty() {
        return Err(Error::InvalidParameter("BIC grids must be non-empty".into()));
    }
    let n = data.nrows();
    let m = data.ncols();
    let mut cells = Vec::new();
    for &k in k_grid {
        for &d in d_grid {
            let outcome = if d == 0 || d >= m {
                Err(format!("d = {d} outside 1..{m}"))
            } else {
                fit_batch(data, k, d, cfg)
                    .map(|(_, trace)| {
                        let ll = trace.final_log_likelihood().unwrap_or(f64::NEG_INFINITY);
                        (bic_value(ll, param_count(k, m, d), n), ll)
                    })
                    .map_err(|e| e.to_string())
            };
            let params = if d >= 1 && d < m { param_count(k, m, d) } else { 0 };
            cells.push(BicCell { k, d, params, outcome });
        }
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for c in &cells {
        if let Ok((b, _)) = c.outcome {
            if b.is_finite() && best.is_none_or(|(_, _, bb)| b < bb) {
                best = Some((c.k, c.d, b));
            }
        }
    }
    Ok(BicScan { cells, best: best.map(|(k, d, _)| (k, d)) })
}
