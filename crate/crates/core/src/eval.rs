//! Compression-loss tables: reconstruction MAE against the clean signals
//! after optionally corrupting the inputs with noise.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::matching::SvdCompressed;
use crate::model::HdGmmModel;
use crate::reduction::{compressed_size_bytes, mean_abs_error, reconstruct_dataset, reduce_dataset};
use crate::synth::add_noise;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Svd,
    Hdgmm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Svd => "svd",
            Method::Hdgmm => "hdgmm",
        }
    }
}

/// One cell of the loss table. `snr_db = None` is the noiseless row.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub method: Method,
    pub d: usize,
    pub snr_db: Option<f64>,
    pub mae: f64,
    /// Coordinate payload at 8 bytes per value, cluster ids excluded.
    pub size_bytes: u64,
}

/// `clean` itself when `snr_db` is `None`, otherwise a noisy copy.
pub fn corrupted(clean: &DMatrix<f64>, snr_db: Option<f64>, seed: u64) -> Result<DMatrix<f64>> {
    match snr_db {
        None => Ok(clean.clone()),
        Some(snr) => add_noise(clean, snr, seed),
    }
}

/// MAE between `clean` and the HD-GMM reconstruction of its corrupted copy.
pub fn hdgmm_row(model: &HdGmmModel, clean: &DMatrix<f64>, snr_db: Option<f64>, seed: u64) -> Result<EvalRow> {
    let input = corrupted(clean, snr_db, seed)?;
    let cds = reduce_dataset(model, &input)?;
    let mae = mean_abs_error(clean, &reconstruct_dataset(&cds)?)?;
    Ok(EvalRow {
        method: Method::Hdgmm,
        d: model.d(),
        snr_db,
        mae,
        size_bytes: compressed_size_bytes(clean.nrows() as u64, model.d(), 8, false),
    })
}

/// MAE between `clean` and the truncated-SVD reconstruction of its
/// corrupted copy.
pub fn svd_row(sc: &SvdCompressed, clean: &DMatrix<f64>, snr_db: Option<f64>, seed: u64) -> Result<EvalRow> {
    let input = corrupted(clean, snr_db, seed)?;
    let mae = mean_abs_error(clean, &sc.denoise(&input)?)?;
    Ok(EvalRow {
        method: Method::Svd,
        d: sc.d(),
        snr_db,
        mae,
        size_bytes: compressed_size_bytes(clean.nrows() as u64, sc.d(), 8, false),
    })
}
