//! Cluster-wise dimension reduction.
//!
//! A record is encoded by its most probable component and its `d`
//! coordinates in that component's basis. Coordinates only make sense
//! together with the cluster id, so the two always travel together.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, argmax};
use crate::model::{Component, HdGmmModel};
use crate::par;

/// Bytes per gigaoctet as used for size reporting.
pub const BYTES_PER_GO: f64 = 1e9;

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedRecord {
    pub cluster_id: usize,
    pub coords: DVector<f64>,
}

/// A fitted model plus one compressed record per input row.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedDataset {
    model: HdGmmModel,
    records: Vec<CompressedRecord>,
}

impl CompressedDataset {
    pub fn new(model: HdGmmModel, records: Vec<CompressedRecord>) -> Result<Self> {
        for r in &records {
            if r.cluster_id >= model.k() {
                return Err(Error::InvalidParameter(format!(
                    "cluster id {} out of range for K = {}",
                    r.cluster_id,
                    model.k()
                )));
            }
            if r.coords.len() != model.d() {
                return Err(Error::DimensionMismatch { expected: model.d(), found: r.coords.len() });
            }
        }
        Ok(Self { model, records })
    }

    pub fn model(&self) -> &HdGmmModel {
        &self.model
    }

    pub fn records(&self) -> &[CompressedRecord] {
        &self.records
    }

    pub fn count(&self) -> usize {
        self.records.len()
    }

    /// Number of records assigned to each component.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.model.k()];
        for r in &self.records {
            sizes[r.cluster_id] += 1;
        }
        sizes
    }
}

/// Coordinates `Wᵀ(y − μ)`.
pub fn project(comp: &Component, y: &[f64]) -> Result<DVector<f64>> {
    if y.len() != comp.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: comp.ambient_dim(), found: y.len() });
    }
    let centered = DVector::from_column_slice(y) - comp.mean();
    Ok(comp.basis().tr_mul(&centered))
}

/// `W·coords + μ`.
pub fn reconstruct(comp: &Component, coords: &DVector<f64>) -> Result<DVector<f64>> {
    if coords.len() != comp.reduced_dim() {
        return Err(Error::DimensionMismatch { expected: comp.reduced_dim(), found: coords.len() });
    }
    Ok(comp.basis() * coords + comp.mean())
}

pub fn reduce_record(model: &HdGmmModel, y: &[f64]) -> Result<CompressedRecord> {
    let cluster_id = model.assign(y)?;
    let coords = project(&model.components()[cluster_id], y)?;
    Ok(CompressedRecord { cluster_id, coords })
}

/// Compresses every row of `data`. Output order follows input order.
pub fn reduce_dataset(model: &HdGmmModel, data: &DMatrix<f64>) -> Result<CompressedDataset> {
    let joint = model.log_joint_matrix(data)?;
    let k = model.k();
    let records = par::map_ranges(par::chunks(data.nrows(), par::CHUNK), |r| {
        let mut out = Vec::with_capacity(r.len());
        let mut row = vec![0.0; k];
        for i in r {
            for (kk, v) in row.iter_mut().enumerate() {
                *v = joint[(i, kk)];
            }
            let cluster_id = argmax(&row);
            let comp = &model.components()[cluster_id];
            let centered = data.row(i).transpose() - comp.mean();
            out.push(CompressedRecord { cluster_id, coords: comp.basis().tr_mul(&centered) });
        }
        out
    });
    CompressedDataset::new(model.clone(), records.into_iter().flatten().collect())
}

pub fn reconstruct_record(model: &HdGmmModel, rec: &CompressedRecord) -> Result<DVector<f64>> {
    let comp = model.component(rec.cluster_id).ok_or_else(|| {
        Error::InvalidParameter(format!("cluster id {} out of range for K = {}", rec.cluster_id, model.k()))
    })?;
    reconstruct(comp, &rec.coords)
}

/// `N × M` matrix of reconstructions.
pub fn reconstruct_dataset(cds: &CompressedDataset) -> Result<DMatrix<f64>> {
    let m = cds.model.m();
    let mut out = DMatrix::zeros(cds.count(), m);
    for (i, rec) in cds.records.iter().enumerate() {
        let y = reconstruct_record(&cds.model, rec)?;
        out.set_row(i, &y.transpose());
    }
    Ok(out)
}

/// Mean absolute entry-wise difference between two equally shaped matrices.
pub fn mean_abs_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let rows = (0..a.nrows()).map(|i| {
        linalg::compensated_sum((0..a.ncols()).map(|j| (a[(i, j)] - b[(i, j)]).abs()))
    });
    Ok(linalg::compensated_sum(rows) / a.len() as f64)
}

/// `(1/(N·M)) Σ |yᵢⱼ − ỹᵢⱼ|` against the dataset's reconstructions.
pub fn reconstruction_mae(data: &DMatrix<f64>, compressed: &CompressedDataset) -> Result<f64> {
    if data.nrows() != compressed.count() {
        return Err(Error::DimensionMismatch { expected: compressed.count(), found: data.nrows() });
    }
    mean_abs_error(data, &reconstruct_dataset(compressed)?)
}

/// Payload bytes of `n` compressed records: `n·d·coord_bytes`, plus two
/// bytes per record for the cluster id when `include_ids`.
pub fn compressed_size_bytes(n: u64, d: usize, coord_bytes: usize, include_ids: bool) -> u64 {
    n * d as u64 * coord_bytes as u64 + if include_ids { 2 * n } else { 0 }
}

pub fn gigaoctets(bytes: u64) -> f64 {
    bytes as f64 / BYTES_PER_GO
}

/// Compression ratios against the raw 8-byte-per-sample size and, when
/// provided, a separately stated original size.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressionReport {
    pub compressed_bytes: u64,
    pub raw_original_bytes: u64,
    pub raw_ratio: f64,
    pub stated_original_bytes: Option<u64>,
    pub stated_ratio: Option<f64>,
    /// Set when the stated original differs from the raw computation by
    /// more than 1%.
    pub original_size_discrepancy: bool,
}

impl CompressionReport {
    pub fn new(n: u64, m: usize, d: usize, coord_bytes: usize, stated_original: Option<u64>) -> Self {
        let compressed_bytes = compressed_size_bytes(n, d, coord_bytes, false);
        let raw_original_bytes = n * m as u64 * 8;
        let ratio = |orig: u64| 1.0 - compressed_bytes as f64 / orig as f64;
        let stated_ratio = stated_original.map(ratio);
        let original_size_discrepancy = stated_original
            .is_some_and(|s| (s as f64 - raw_original_bytes as f64).abs() > 0.01 * raw_original_bytes as f64);
        Self {
            compressed_bytes,
            raw_original_bytes,
            raw_ratio: ratio(raw_original_bytes),
            stated_original_bytes: stated_original,
            stated_ratio,
            original_size_discrepancy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn comp_2d() -> Component {
        let w = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        Component::new(1.0, dvector![1.0, 1.0], dvector![2.0], 1.0, w).unwrap()
    }

    #[test]
    fn project_hand_value() {
        let c = comp_2d();
        assert_eq!(project(&c, &[3.0, 1.0]).unwrap(), dvector![2.0]);
        assert_eq!(project(&c, &[1.0, 1.0]).unwrap(), dvector![0.0]);
        assert!(project(&c, &[1.0]).is_err());
    }

    #[test]
    fn reconstruct_roundtrip_in_subspace() {
        let c = comp_2d();
        let y = [4.5, 1.0];
        let back = reconstruct(&c, &project(&c, &y).unwrap()).unwrap();
        assert_eq!(back.as_slice(), &y);
        assert_eq!(reconstruct(&c, &dvector![0.0]).unwrap(), *c.mean());
        assert!(reconstruct(&c, &dvector![0.0, 1.0]).is_err());
    }

    #[test]
    fn single_record_mae() {
        let w = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let c = Component::new(1.0, dvector![0.0, 0.0], dvector![2.0], 1.0, w).unwrap();
        let model = HdGmmModel::new(vec![c]).unwrap();
        let data = DMatrix::from_row_slice(1, 2, &[3.0, 1.0]);
        let cds = reduce_dataset(&model, &data).unwrap();
        assert_eq!(cds.records()[0].cluster_id, 0);
        assert!((reconstruction_mae(&data, &cds).unwrap() - 0.5).abs() < 1e-15);
        let wrong = DMatrix::zeros(2, 2);
        assert!(reconstruction_mae(&wrong, &cds).is_err());
    }

    #[test]
    fn mirror_tie_goes_to_first_cluster() {
        let w = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let c1 = Component::new(0.5, dvector![-1.0, 0.0], dvector![2.0], 1.0, w.clone()).unwrap();
        let c2 = Component::new(0.5, dvector![1.0, 0.0], dvector![2.0], 1.0, w).unwrap();
        let model = HdGmmModel::new(vec![c1, c2]).unwrap();
        assert_eq!(reduce_record(&model, &[0.0, 0.4]).unwrap().cluster_id, 0);
    }

    #[test]
    fn invalid_record_rejected() {
        let model = HdGmmModel::new(vec![comp_2d()]).unwrap();
        let rec = CompressedRecord { cluster_id: 1, coords: dvector![0.0] };
        assert!(reconstruct_record(&model, &rec).is_err());
        assert!(CompressedDataset::new(model, vec![rec]).is_err());
    }

    #[test]
    fn size_formula() {
        assert_eq!(compressed_size_bytes(10, 3, 8, false), 240);
        assert_eq!(compressed_size_bytes(10, 3, 4, true), 140);
    }
}
