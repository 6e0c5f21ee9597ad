//! High-dimensional Gaussian mixture models (HD-GMM) for compressing large
//! signal dictionaries.
//!
//! Each mixture component has a spiked covariance `W diag(a - b) Wᵀ + b I`
//! where `W` is an `M × d` orthonormal basis. Fitting is available as an
//! in-memory EM ([`em_batch`]) or as a streaming stochastic-approximation EM
//! ([`em_online`]) whose basis update can run on the Stiefel manifold
//! ([`stiefel`]). A fitted model compresses each record to a cluster id plus
//! `d` coordinates ([`reduction`]) and supports cluster-routed dictionary
//! matching ([`matching`]). Binary formats and generators live in [`io`] and
//! [`synth`].
//!
//! Data matrices are `N × M` with one record per row.

pub mod em_batch;
pub mod em_online;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod matching;
pub mod model;
pub mod par;
pub mod reduction;
pub mod stiefel;
pub mod synth;

pub use em_batch::{bic, bic_scan, fit_batch, init_model, param_count, BatchConfig, FitTrace};
pub use em_online::{fit_online, BasisMode, OnlineConfig, OnlineEstimator, SuffStats};
pub use error::{Error, Result};
pub use matching::{Dictionary, MatchResult};
pub use model::{Component, HdGmmModel};
pub use reduction::{CompressedDataset, CompressedRecord};
