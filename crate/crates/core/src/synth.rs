//! Seeded generators: toy relaxation dictionaries, mixture samples and
//! measurement noise.

use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::em_batch::normalized_weights;
use crate::error::{Error, Result};
use crate::io::RecordSource;
use crate::linalg::fix_column_signs;
use crate::matching::Dictionary;
use crate::model::{Component, HdGmmModel};

/// Label names of the synthetic dictionary, in column order.
pub const LABEL_NAMES: [&str; 3] = ["T1", "T2", "df"];

/// Parameter grid and sampling of the toy signal
/// `s(t) = (1 − e^{−TR/T1})·e^{−t/T2}·cos(2π·df·t)` at `t_j = j·Δt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticGrid {
    /// Seconds.
    pub t1: Vec<f64>,
    /// Seconds; `f64::INFINITY` gives no decay.
    pub t2: Vec<f64>,
    /// Hertz.
    pub df: Vec<f64>,
    pub m: usize,
    pub dt: f64,
    pub tr: f64,
}

impl Default for SyntheticGrid {
    /// 20,000 signals of length 64: one T1, 100 log-spaced T2 values in
    /// 20–600 ms and 200 off-resonance values in 0–40 Hz.
    fn default() -> Self {
        Self {
            t1: vec![1.0],
            t2: geomspace(0.02, 0.6, 100),
            df: linspace(0.0, 40.0, 200),
            m: 64,
            dt: 0.005,
            tr: 0.01,
        }
    }
}

impl SyntheticGrid {
    pub fn len(&self) -> usize {
        self.t1.len() * self.t2.len() * self.df.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

/// One signal of the toy model.
pub fn toy_signal(t1: f64, t2: f64, df: f64, m: usize, dt: f64, tr: f64) -> DVector<f64> {
    let amp = 1.0 - (-tr / t1).exp();
    DVector::from_fn(m, |j, _| {
        let t = j as f64 * dt;
        amp * (-t / t2).exp() * (2.0 * std::f64::consts::PI * df * t).cos()
    })
}

/// Full grid in `T1`-major, `df`-minor order.
pub fn gen_synthetic_dictionary(grid: &SyntheticGrid) -> Result<Dictionary> {
    if grid.is_empty() || grid.m == 0 {
        return Err(Error::InvalidParameter("empty synthetic grid".into()));
    }
    let positive = |v: &f64| *v > 0.0;
    if !grid.t1.iter().all(positive) || !grid.t2.iter().all(positive) || !grid.df.iter().all(|v| *v >= 0.0 && v.is_finite()) {
        return Err(Error::InvalidParameter("grid values must be positive (df non-negative)".into()));
    }
    if !(grid.dt > 0.0 && grid.tr > 0.0) {
        return Err(Error::InvalidParameter("dt and TR must be positive".into()));
    }
    let n = grid.len();
    let mut signals = DMatrix::zeros(n, grid.m);
    let mut labels = DMatrix::zeros(n, 3);
    let mut i = 0;
    for &t1 in &grid.t1 {
        for &t2 in &grid.t2 {
            for &df in &grid.df {
                signals.set_row(i, &toy_signal(t1, t2, df, grid.m, grid.dt, grid.tr).transpose());
                labels[(i, 0)] = t1;
                labels[(i, 1)] = t2;
                labels[(i, 2)] = df;
                i += 1;
            }
        }
    }
    Dictionary::new(signals, labels, LABEL_NAMES.iter().map(|s| s.to_string()).collect())
}

/// Adds white Gaussian noise with per-row standard deviation
/// `‖yᵢ‖/√M · 10^(−snr_db/20)`.
pub fn add_noise(signals: &DMatrix<f64>, snr_db: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !snr_db.is_finite() {
        return Err(Error::InvalidParameter(format!("snr_db must be finite, got {snr_db}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = signals.ncols();
    let scale = 10f64.powf(-snr_db / 20.0) / (m as f64).sqrt();
    let mut out = signals.clone();
    for i in 0..out.nrows() {
        let sigma = signals.row(i).norm() * scale;
        for j in 0..m {
            let e: f64 = rng.sample(StandardNormal);
            out[(i, j)] += sigma * e;
        }
    }
    Ok(out)
}

/// Infinite or bounded stream of draws from an HD-GMM.
#[derive(Debug, Clone)]
pub struct HdGmmStream {
    model: HdGmmModel,
    picker: WeightedIndex<f64>,
    spread: Vec<DVector<f64>>,
    rng: ChaCha8Rng,
    remaining: Option<u64>,
}

impl HdGmmStream {
    pub fn new(model: HdGmmModel, seed: u64, len: Option<u64>) -> Result<Self> {
        let picker = WeightedIndex::new(model.weights())
            .map_err(|e| Error::InvalidParameter(format!("weights: {e}")))?;
        let spread = model
            .components()
            .iter()
            .map(|c| c.signal_variances().map(|a| (a - c.noise_variance()).sqrt()))
            .collect();
        Ok(Self { model, picker, spread, rng: ChaCha8Rng::seed_from_u64(seed), remaining: len })
    }

    pub fn model(&self) -> &HdGmmModel {
        &self.model
    }

    /// Next draw written into `out`; returns its component.
    fn draw_into(&mut self, out: &mut [f64]) -> usize {
        let k = self.picker.sample(&mut self.rng);
        let c = &self.model.components()[k];
        let (m, d) = (c.ambient_dim(), c.reduced_dim());
        let z = DVector::from_fn(d, |j, _| self.spread[k][j] * self.rng.sample::<f64, _>(StandardNormal));
        let inner = c.basis() * z;
        let sb = c.noise_variance().sqrt();
        for j in 0..m {
            let e: f64 = self.rng.sample(StandardNormal);
            out[j] = c.mean()[j] + inner[j] + sb * e;
        }
        k
    }

    /// Up to `max` draws with their generating components.
    pub fn next_labeled(&mut self, max: usize) -> Option<(DMatrix<f64>, Vec<usize>)> {
        let rows = match self.remaining {
            Some(r) => (r.min(max as u64)) as usize,
            None => max,
        };
        if rows == 0 {
            return None;
        }
        let m = self.model.m();
        let mut data = DMatrix::zeros(rows, m);
        let mut labels = Vec::with_capacity(rows);
        let mut row = vec![0.0; m];
        for i in 0..rows {
            labels.push(self.draw_into(&mut row));
            for (j, v) in row.iter().enumerate() {
                data[(i, j)] = *v;
            }
        }
        if let Some(r) = self.remaining.as_mut() {
            *r -= rows as u64;
        }
        Some((data, labels))
    }
}

impl RecordSource for HdGmmStream {
    fn dim(&self) -> usize {
        self.model.m()
    }

    fn next_records(&mut self, max: usize) -> Result<Option<DMatrix<f64>>> {
        Ok(self.next_labeled(max.max(1)).map(|(d, _)| d))
    }
}

/// `N` draws and their true components. Identical to reading the same
/// number of records from an [`HdGmmStream`] with this seed.
pub fn sample_hdgmm(model: &HdGmmModel, n: usize, seed: u64) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let mut stream = HdGmmStream::new(model.clone(), seed, Some(n as u64))?;
    Ok(stream.next_labeled(n).unwrap_or_else(|| (DMatrix::zeros(0, model.m()), Vec::new())))
}

/// Shape of a randomly drawn model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomModelSpec {
    pub k: usize,
    pub m: usize,
    pub d: usize,
    /// Standard deviation of the component means around the origin.
    pub separation: f64,
    /// Signal variances are drawn uniformly in this range.
    pub signal_range: (f64, f64),
    pub noise: f64,
}

impl RandomModelSpec {
    pub fn new(k: usize, m: usize, d: usize) -> Self {
        Self { k, m, d, separation: 4.0, signal_range: (4.0, 16.0), noise: 0.25 }
    }
}

/// Random orthonormal `m × d` basis from the QR factor of a Gaussian matrix.
pub fn random_basis<R: Rng>(m: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut q = g.qr().q().columns(0, d).into_owned();
    fix_column_signs(&mut q);
    q
}

pub fn random_model(spec: &RandomModelSpec, seed: u64) -> Result<HdGmmModel> {
    let RandomModelSpec { k, m, d, separation, signal_range: (lo, hi), noise } = *spec;
    if k == 0 || d == 0 || d >= m {
        return Err(Error::InvalidParameter(format!("need K ≥ 1 and 1 ≤ d < M, got K = {k}, M = {m}, d = {d}")));
    }
    if !(noise > 0.0 && lo > noise && hi >= lo) {
        return Err(Error::InvalidParameter("need 0 < noise < signal variance range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mass: Vec<f64> = (0..k).map(|_| rng.gen_range(1.0..2.0)).collect();
    let weights = normalized_weights(&mass);
    let mut comps = Vec::with_capacity(k);
    for &w in &weights {
        let mean = DVector::from_fn(m, |_, _| separation * rng.sample::<f64, _>(StandardNormal));
        let mut a: Vec<f64> = (0..d).map(|_| rng.gen_range(lo..=hi)).collect();
        a.sort_by(|x, y| y.total_cmp(x));
        let basis = random_basis(m, d, &mut rng);
        comps.push(Component::new(w, mean, DVector::from_vec(a), noise, basis)?);
    }
    HdGmmModel::new(comps)
}
