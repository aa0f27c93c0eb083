//! Clustering of engagement vectors.
//!
//! Range-normalized rows are clustered hierarchically (Ward by default); the
//! dendrogram cut at `k` seeds Lloyd's k-means, and each partition is scored
//! with the within-group sum of squares and the average silhouette width.

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod hierarchy;
mod kmeans;
mod normalize;
mod quality;
mod scan;

pub use hierarchy::{cut_labels, cut_to_centroids, hierarchical_cluster, Dendrogram, Linkage, Merge};
pub use kmeans::{kmeans, KMeansConfig, KMeansFit};
pub use normalize::{range_normalize, NormalizationParams};
pub use quality::{
    adjusted_rand_index, avg_silhouette, interpret_silhouette, same_partition, silhouette_values, wss,
    Silhouette, Structure,
};
pub use scan::{elbow_k, fit_k, scan_k, KScanReport, KScanRow, ScanConfig};

/// Default upper bound on rows fed to the hierarchical stage.
pub const DEFAULT_HIER_CAP: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("matrix contains a non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("k = {k} is outside [2, {max}]")]
    KOutOfRange { k: usize, max: usize },
    #[error("invalid k range {k_min}..={k_max} for {n} rows (must lie within [2, {}])", n.saturating_sub(1))]
    InvalidRange { k_min: usize, k_max: usize, n: usize },
    #[error("dimension mismatch: expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("assignments must label every row with a cluster in [0, {k})")]
    BadAssignments { k: usize },
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

/// Dense row-major matrix of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ClusterError> {
        if data.len() != rows * cols {
            return Err(ClusterError::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, ClusterError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(ClusterError::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(<[f64]>::to_vec).collect()
    }

    /// Rows picked by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn check_finite(&self) -> Result<(), ClusterError> {
        match self.data.iter().position(|x| !x.is_finite()) {
            Some(p) => Err(ClusterError::NonFinite {
                row: p / self.cols,
                col: p % self.cols,
            }),
            None => Ok(()),
        }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A fitted partition with its quality scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids_normalized: Matrix,
    pub centroids_raw: Matrix,
    pub wss: f64,
    pub avg_silhouette: f64,
    pub interpretation: Structure,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_shapes() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 2));
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.select(&[1, 0]).row(0), &[3.0, 4.0]);
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(Matrix::new(2, 2, vec![0.0; 3]).is_err());
        let bad = Matrix::from_rows(&[vec![1.0, f64::NAN]]).unwrap();
        assert_eq!(bad.check_finite(), Err(ClusterError::NonFinite { row: 0, col: 1 }));
    }
}
