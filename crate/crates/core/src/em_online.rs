//! Streaming EM by stochastic approximation of sufficient statistics.
//!
//! Each mini-batch contributes its average expected statistics
//! `(rₖ, rₖ y, rₖ yyᵀ)`; the running statistics move toward them with step
//! `γₜ = (t + t₀)^{−α}` and the parameters are re-solved from the running
//! statistics. Weights and means are closed form. The basis is either the
//! top eigenvectors of the running covariance or the result of a warm-started
//! Stiefel-manifold solve, which needs no full eigendecomposition.
//!
//! Memory is `O(K·M² + B·M)` regardless of how many records stream through.

use nalgebra::{DMatrix, DVector};

use crate::em_batch::{self, clamp_spectrum, mean_and_cov, FitTrace, WeightedMoments};
use crate::error::{Error, Result};
use crate::io::RecordSource;
use crate::linalg::{fix_column_signs, polar_orthonormalize};
use crate::model::{Component, HdGmmModel};
use crate::stiefel::{self, StiefelSettings};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisMode {
    /// Leading eigenvectors of the running covariance.
    Eigen,
    /// Warm-started curvilinear search on the Stiefel manifold.
    Stiefel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineConfig {
    /// Step exponent `α ∈ (0.5, 1]`.
    pub alpha: f64,
    /// Step offset `t₀ ≥ 0`.
    pub t0: f64,
    pub batch_size: usize,
    /// Records to absorb before the first M-step; `None` means `10·K·d`.
    pub burn_in: Option<usize>,
    pub basis_mode: BasisMode,
    pub stiefel: StiefelSettings,
    /// Components whose running mass is below this keep their parameters.
    pub s0_floor: f64,
    /// Trace is recorded every `eval_every` batches.
    pub eval_every: usize,
    pub floor_b: f64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            t0: 0.0,
            batch_size: 256,
            burn_in: None,
            basis_mode: BasisMode::Stiefel,
            stiefel: StiefelSettings::default(),
            s0_floor: 1e-6,
            eval_every: 10,
            floor_b: 0.0,
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.5 && self.alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!("step exponent {} not in (0.5, 1]", self.alpha)));
        }
        if !(self.t0 >= 0.0) {
            return Err(Error::InvalidParameter("step offset must be non-negative".into()));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::InvalidParameter("batch size and eval interval must be positive".into()));
        }
        self.stiefel.validate()
    }

    pub fn burn_in_for(&self, k: usize, d: usize) -> usize {
        self.burn_in.unwrap_or(10 * k * d)
    }
}

/// Running per-component statistics and the step index.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    pub s0: Vec<f64>,
    pub s1: Vec<DVector<f64>>,
    pub s2: Vec<DMatrix<f64>>,
    pub t: u64,
}

impl SuffStats {
    /// Statistics whose M-step reproduces `model` exactly in eigen mode:
    /// `(π, πμ, π(Σ + μμᵀ))`.
    pub fn from_model(model: &HdGmmModel) -> Self {
        let mut s0 = Vec::new();
        let mut s1 = Vec::new();
        let mut s2 = Vec::new();
        for c in model.components() {
            let pi = c.weight();
            let mut second = c.covariance_dense();
            second.ger(1.0, c.mean(), c.mean(), 1.0);
            s0.push(pi);
            s1.push(c.mean() * pi);
            s2.push(second * pi);
        }
        Self { s0, s1, s2, t: 0 }
    }

    pub fn k(&self) -> usize {
        self.s0.len()
    }

    pub fn m(&self) -> usize {
        self.s1.first().map_or(0, |v| v.len())
    }

    fn from_moments(mut moments: WeightedMoments, n: usize) -> Self {
        moments.scale(1.0 / n as f64);
        Self { s0: moments.mass, s1: moments.first, s2: moments.scatter, t: 0 }
    }
}

fn batch_stats(model: &HdGmmModel, batch: &DMatrix<f64>) -> Result<(SuffStats, f64)> {
    if batch.nrows() == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let (resp, ll) = em_batch::e_step(model, batch)?;
    let moments = em_batch::accumulate_moments(batch, &resp)?;
    Ok((SuffStats::from_moments(moments, batch.nrows()), ll))
}

/// Batch average `(1/B) Σᵢ rᵢₖ (1, yᵢ, yᵢyᵢᵀ)`.
pub fn expected_stats(model: &HdGmmModel, batch: &DMatrix<f64>) -> Result<SuffStats> {
    Ok(batch_stats(model, batch)?.0)
}

/// `γₜ = (t + t₀)^{−α}`, capped at 1.
pub fn step_size(t: u64, cfg: &OnlineConfig) -> f64 {
    (t as f64 + cfg.t0).powf(-cfg.alpha).min(1.0)
}

/// `stats + γ (increment − stats)` fieldwise, advancing the step index.
pub fn sa_update(stats: &SuffStats, increment: &SuffStats, gamma: f64) -> SuffStats {
    let keep = 1.0 - gamma;
    let blend = |old: f64, new: f64| if gamma == 1.0 { new } else { keep * old + gamma * new };
    let s0 = stats.s0.iter().zip(&increment.s0).map(|(o, n)| blend(*o, *n)).collect();
    let s1 = stats
        .s1
        .iter()
        .zip(&increment.s1)
        .map(|(o, n)| o.zip_map(n, |a, b| blend(a, b)))
        .collect();
    let s2 = stats
        .s2
        .iter()
        .zip(&increment.s2)
        .map(|(o, n)| o.zip_map(n, |a, b| blend(a, b)))
        .collect();
    SuffStats { s0, s1, s2, t: stats.t + 1 }
}

fn stiefel_component(
    cov: &DMatrix<f64>,
    prev: &Component,
    settings: &StiefelSettings,
    floor_b: f64,
) -> Result<(DVector<f64>, f64, DMatrix<f64>)> {
    let m = cov.nrows();
    let d = prev.reduced_dim();
    let mut a = prev.signal_variances().clone();
    let mut b = prev.noise_variance();
    let mut w = prev.basis().clone();
    for _ in 0..2 {
        let out = stiefel::optimize(cov, &a, b, &w, settings)?;
        let point = polar_orthonormalize(&out.point);
        let sw = cov * &point;
        let rq: Vec<f64> = (0..d).map(|j| point.column(j).dot(&sw.column(j))).collect();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| rq[j].total_cmp(&rq[i]).then(i.cmp(&j)));
        w = DMatrix::zeros(m, d);
        for (dst, &src) in order.iter().enumerate() {
            w.set_column(dst, &point.column(src));
        }
        let a_raw = DVector::from_iterator(d, order.iter().map(|&j| rq[j]));
        let b_raw = (cov.trace() - a_raw.sum()) / (m - d) as f64;
        (a, b) = clamp_spectrum(a_raw, b_raw, floor_b);
    }
    fix_column_signs(&mut w);
    Ok((a, b, w))
}

/// Parameters from running statistics. Returns the model and the number of
/// starved components, which keep their previous parameters.
pub fn m_step_online(stats: &SuffStats, prev: &HdGmmModel, cfg: &OnlineConfig) -> Result<(HdGmmModel, usize)> {
    if stats.k() != prev.k() || stats.m() != prev.m() {
        return Err(Error::DimensionMismatch { expected: prev.k(), found: stats.k() });
    }
    let d = prev.d();
    let starved: Vec<bool> = stats.s0.iter().map(|&s| !(s >= cfg.s0_floor)).collect();
    let n_starved = starved.iter().filter(|&&s| s).count();
    if n_starved == prev.k() {
        return Ok((prev.clone(), n_starved));
    }
    let frozen_weight: f64 = prev.components().iter().zip(&starved).filter(|(_, &s)| s).map(|(c, _)| c.weight()).sum();
    let active_mass: Vec<f64> = stats.s0.iter().zip(&starved).map(|(&s, &st)| if st { 0.0 } else { s }).collect();
    let mut weights: Vec<f64> = em_batch::normalized_weights(&active_mass)
        .into_iter()
        .map(|w| w * (1.0 - frozen_weight))
        .collect();
    for (k, c) in prev.components().iter().enumerate() {
        if starved[k] {
            weights[k] = c.weight();
        }
    }
    // absorb rounding in the largest active component
    let residue = 1.0 - weights.iter().sum::<f64>();
    let big = (0..prev.k()).filter(|&k| !starved[k]).max_by(|&i, &j| weights[i].total_cmp(&weights[j]).then(j.cmp(&i))).unwrap();
    weights[big] += residue;

    let solved = crate::par::map_indexed(prev.k(), |k| -> Result<Component> {
        let old = &prev.components()[k];
        if starved[k] {
            return Ok(old.clone());
        }
        let (mean, cov) = mean_and_cov(stats.s0[k], &stats.s1[k], &stats.s2[k]);
        match cfg.basis_mode {
            BasisMode::Eigen => em_batch::component_from_cov(weights[k], mean, &cov, d, cfg.floor_b),
            BasisMode::Stiefel => {
                let (a, b, w) = stiefel_component(&cov, old, &cfg.stiefel, cfg.floor_b)?;
                Component::new(weights[k], mean, a, b, w)
            }
        }
    });
    let components = solved.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((HdGmmModel::new(components)?, n_starved))
}

/// Natural parameters of a component in factored form:
/// `⟨s(y), φ⟩ = yᵀ linear + Σⱼ quad_coefⱼ (wⱼᵀy)² + yy_coef · yᵀy`.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParams {
    /// `Σⱼ (1/aⱼ − 1/b) wⱼwⱼᵀμ + μ/b`.
    pub linear: DVector<f64>,
    /// `½ (1/b − 1/aⱼ)` paired with `vec(wⱼwⱼᵀ)`.
    pub quad_coef: DVector<f64>,
    pub quad_dirs: DMatrix<f64>,
    /// `−1/(2b)`.
    pub yy_coef: f64,
}

impl NaturalParams {
    /// Inner product with the statistic `[y, vec(yyᵀ), yᵀy]`.
    pub fn dot_stat(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.linear.len() {
            return Err(Error::DimensionMismatch { expected: self.linear.len(), found: y.len() });
        }
        let y = DVector::from_column_slice(y);
        let proj = self.quad_dirs.tr_mul(&y);
        let quad: f64 = proj.iter().zip(self.quad_coef.iter()).map(|(p, c)| c * p * p).sum();
        Ok(self.linear.dot(&y) + quad + self.yy_coef * y.norm_squared())
    }
}

pub fn phi(comp: &Component) -> NaturalParams {
    let b = comp.noise_variance();
    let a = comp.signal_variances();
    let w = comp.basis();
    let mu = comp.mean();
    let proj = w.tr_mul(mu);
    let scaled = DVector::from_iterator(a.len(), (0..a.len()).map(|j| (1.0 / a[j] - 1.0 / b) * proj[j]));
    let linear = w * scaled + mu / b;
    let quad_coef = a.map(|aj| 0.5 * (1.0 / b - 1.0 / aj));
    NaturalParams { linear, quad_coef, quad_dirs: w.clone(), yy_coef: -0.5 / b }
}

/// Log-partition `ψ(μ, Σ)`.
pub fn psi(comp: &Component) -> f64 {
    let b = comp.noise_variance();
    let a = comp.signal_variances();
    let mu = comp.mean();
    let proj = comp.basis().tr_mul(mu);
    let spiked: f64 = (0..a.len()).map(|j| (1.0 / a[j] - 1.0 / b) * proj[j] * proj[j] + a[j].ln()).sum();
    let tail = (comp.ambient_dim() - comp.reduced_dim()) as f64;
    0.5 * spiked + mu.norm_squared() / (2.0 * b) + 0.5 * tail * b.ln()
}

/// `log h(y) + ⟨s(y), φ⟩ − ψ` with `log h(y) = −(M/2) log 2π`.
pub fn exp_family_log_density(comp: &Component, y: &[f64]) -> Result<f64> {
    let m = comp.ambient_dim() as f64;
    Ok(-0.5 * m * LN_2PI + phi(comp).dot_stat(y)? - psi(comp))
}

/// Resumable snapshot of an online fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: HdGmmModel,
    pub stats: SuffStats,
    pub records_seen: u64,
    pub starved_events: u64,
}

/// Incremental estimator driven one mini-batch at a time.
#[derive(Debug, Clone)]
pub struct OnlineEstimator {
    cfg: OnlineConfig,
    model: HdGmmModel,
    stats: SuffStats,
    records_seen: u64,
    starved_events: u64,
    trace: FitTrace,
    holdout: Option<DMatrix<f64>>,
}

impl OnlineEstimator {
    pub fn new(init: HdGmmModel, cfg: OnlineConfig) -> Result<Self> {
        cfg.validate()?;
        let stats = SuffStats::from_model(&init);
        Ok(Self { cfg, model: init, stats, records_seen: 0, starved_events: 0, trace: FitTrace::default(), holdout: None })
    }

    pub fn resume(checkpoint: Checkpoint, cfg: OnlineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            model: checkpoint.model,
            stats: checkpoint.stats,
            records_seen: checkpoint.records_seen,
            starved_events: checkpoint.starved_events,
            trace: FitTrace::default(),
            holdout: None,
        })
    }

    /// Records the mean held-out log-likelihood in the trace instead of the
    /// mean log-likelihood of the incoming batch.
    pub fn with_holdout(mut self, holdout: DMatrix<f64>) -> Self {
        self.holdout = Some(holdout);
        self
    }

    pub fn model(&self) -> &HdGmmModel {
        &self.model
    }

    pub fn stats(&self) -> &SuffStats {
        &self.stats
    }

    pub fn records_seen(&self) -> u64 {
        self.records_seen
    }

    pub fn starved_events(&self) -> u64 {
        self.starved_events
    }

    pub fn trace(&self) -> &FitTrace {
        &self.trace
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            stats: self.stats.clone(),
            records_seen: self.records_seen,
            starved_events: self.starved_events,
        }
    }

    /// Absorbs one mini-batch (`B × M`).
    pub fn observe(&mut self, batch: &DMatrix<f64>) -> Result<()> {
        let (increment, batch_ll) = batch_stats(&self.model, batch)?;
        let t = self.stats.t + 1;
        let gamma = step_size(t, &self.cfg);
        self.stats = sa_update(&self.stats, &increment, gamma);
        self.records_seen += batch.nrows() as u64;
        let burn_in = self.cfg.burn_in_for(self.model.k(), self.model.d()) as u64;
        if self.records_seen >= burn_in {
            let (model, starved) = m_step_online(&self.stats, &self.model, &self.cfg)?;
            self.model = model;
            self.starved_events += starved as u64;
            self.trace.iterations += 1;
        }
        if self.stats.t % self.cfg.eval_every as u64 == 0 {
            let value = match &self.holdout {
                Some(h) => self.model.log_likelihood(h)? / h.nrows() as f64,
                None => batch_ll / batch.nrows() as f64,
            };
            self.trace.log_likelihood.push(value);
        }
        Ok(())
    }

    /// Pulls batches from `source` until it is exhausted.
    pub fn run<S: RecordSource + ?Sized>(&mut self, source: &mut S) -> Result<()> {
        self.run_with(source, |_| Ok(()))
    }

    /// [`run`](Self::run) with a hook called after every batch, e.g. for
    /// checkpointing.
    pub fn run_with<S, F>(&mut self, source: &mut S, mut after_batch: F) -> Result<()>
    where
        S: RecordSource + ?Sized,
        F: FnMut(&Self) -> Result<()>,
    {
        if source.dim() != self.model.m() {
            return Err(Error::DimensionMismatch { expected: self.model.m(), found: source.dim() });
        }
        while let Some(batch) = source.next_records(self.cfg.batch_size)? {
            if batch.nrows() == 0 {
                break;
            }
            self.observe(&batch)?;
            after_batch(self)?;
        }
        Ok(())
    }
}

/// Result of [`fit_online`].
#[derive(Debug, Clone)]
pub struct OnlineFit {
    pub model: HdGmmModel,
    pub trace: FitTrace,
    pub records_seen: u64,
    pub starved_events: u64,
}

/// Streams `source` through an [`OnlineEstimator`] started at `init`.
pub fn fit_online<S: RecordSource + ?Sized>(
    source: &mut S,
    k: usize,
    d: usize,
    cfg: &OnlineConfig,
    init: HdGmmModel,
) -> Result<OnlineFit> {
    if init.k() != k {
        return Err(Error::DimensionMismatch { expected: k, found: init.k() });
    }
    if init.d() != d {
        return Err(Error::DimensionMismatch { expected: d, found: init.d() });
    }
    let mut est = OnlineEstimator::new(init, *cfg)?;
    est.run(source)?;
    let burn_in = cfg.burn_in_for(k, d);
    if (est.records_seen as usize) < burn_in {
        return Err(Error::InsufficientData { needed: burn_in, got: est.records_seen as usize });
    }
    Ok(OnlineFit { model: est.model, trace: est.trace, records_seen: est.records_seen, starved_events: est.starved_events })
}

/// Peak working-set estimate in bytes: running statistics, one increment,
/// one batch and its responsibilities.
pub fn memory_estimate(k: usize, m: usize, d: usize, batch: usize) -> u64 {
    let stats = k * (1 + m + m * m);
    let model = k * (1 + m + d + 1 + m * d);
    let batch_buf = batch * (m + k) + m * batch;
    (8 * (2 * stats + model + batch_buf)) as u64
}
