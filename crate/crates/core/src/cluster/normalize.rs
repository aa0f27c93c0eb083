use serde::{Deserialize, Serialize};

use super::{ClusterError, Matrix};

/// Per-column bounds used to map raw values into [0, 1] and back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl NormalizationParams {
    pub fn normalize_value(&self, col: usize, x: f64) -> f64 {
        let range = self.maxs[col] - self.mins[col];
        if range > 0.0 {
            (x - self.mins[col]) / range
        } else {
            0.0
        }
    }

    pub fn denormalize_value(&self, col: usize, x: f64) -> f64 {
        self.mins[col] + x * (self.maxs[col] - self.mins[col])
    }

    pub fn denormalize(&self, m: &Matrix) -> Matrix {
        let mut out = m.clone();
        for i in 0..out.rows() {
            for (j, x) in out.row_mut(i).iter_mut().enumerate() {
                *x = self.denormalize_value(j, *x);
            }
        }
        out
    }
}

/// Min-max scaling of every column; constant columns become all zeros.
pub fn range_normalize(m: &Matrix) -> Result<(Matrix, NormalizationParams), ClusterError> {
    if m.rows() < 2 {
        return Err(ClusterError::TooFewRows {
            needed: 2,
            got: m.rows(),
        });
    }
    m.check_finite()?;
    let mut mins = vec![f64::INFINITY; m.cols()];
    let mut maxs = vec![f64::NEG_INFINITY; m.cols()];
    for row in m.iter_rows() {
        for (j, &x) in row.iter().enumerate() {
            mins[j] = mins[j].min(x);
            maxs[j] = maxs[j].max(x);
        }
    }
    let params = NormalizationParams { mins, maxs };
    let mut out = m.clone();
    for i in 0..out.rows() {
        for (j, x) in out.row_mut(i).iter_mut().enumerate() {
            *x = params.normalize_value(j, *x);
        }
    }
    Ok((out, params))
}
