//! In-memory tabular dataset with the per-feature affine scaling used by
//! training, sampling and metrics (min–max to [-1, 1]).

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Per-feature min–max transform onto [-1, 1] with a stored inverse.
///
/// Constant features map to 0 and invert back to their constant value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(points: &Matrix) -> Result<Self> {
        if points.rows() == 0 || points.cols() == 0 {
            return Err(Error::invalid("cannot fit a scaler on an empty matrix"));
        }
        let d = points.cols();
        let mut mins = alloc::vec![f64::INFINITY; d];
        let mut maxs = alloc::vec![f64::NEG_INFINITY; d];
        for row in points.iter_rows() {
            for j in 0..d {
                mins[j] = mins[j].min(row[j]);
                maxs[j] = maxs[j].max(row[j]);
            }
        }
        Ok(MinMaxScaler { mins, maxs })
    }

    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    pub fn transform_row(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..row.len() {
            let range = self.maxs[j] - self.mins[j];
            out[j] = if range == 0.0 {
                0.0
            } else {
                2.0 * (row[j] - self.mins[j]) / range - 1.0
            };
        }
    }

    pub fn inverse_row(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..row.len() {
            let range = self.maxs[j] - self.mins[j];
            out[j] = if range == 0.0 {
                self.mins[j]
            } else {
                (row[j] + 1.0) * 0.5 * range + self.mins[j]
            };
        }
    }

    pub fn transform(&self, points: &Matrix) -> Result<Matrix> {
        self.check_dim(points)?;
        let mut out = points.clone();
        for i in 0..points.rows() {
            let mut row = alloc::vec![0.0; points.cols()];
            self.transform_row(points.row(i), &mut row);
            out.row_mut(i).copy_from_slice(&row);
        }
        Ok(out)
    }

    pub fn inverse(&self, points: &Matrix) -> Result<Matrix> {
        self.check_dim(points)?;
        let mut out = points.clone();
        for i in 0..points.rows() {
            let mut row = alloc::vec![0.0; points.cols()];
            self.inverse_row(points.row(i), &mut row);
            out.row_mut(i).copy_from_slice(&row);
        }
        Ok(out)
    }

    fn check_dim(&self, points: &Matrix) -> Result<()> {
        if points.cols() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: points.cols(),
            });
        }
        Ok(())
    }
}

/// A numeric dataset (original units) plus its fitted scaler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    points: Matrix,
    feature_names: Vec<String>,
    scaler: MinMaxScaler,
}

impl Dataset {
    /// Validates shape (n >= 2, d >= 1), finiteness, and fits the scaler.
    pub fn new(points: Matrix, feature_names: Vec<String>) -> Result<Self> {
        if points.cols() < 1 {
            return Err(Error::invalid("dataset needs at least one feature"));
        }
        if points.rows() < 2 {
            return Err(Error::invalid("dataset needs at least two rows"));
        }
        if feature_names.len() != points.cols() {
            return Err(Error::Dimension {
                expected: points.cols(),
                got: feature_names.len(),
            });
        }
        if !points.is_finite() {
            return Err(Error::NonFinite("dataset contains NaN or infinite entries".into()));
        }
        let scaler = MinMaxScaler::fit(&points)?;
        Ok(Dataset {
            points,
            feature_names,
            scaler,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.points.rows()
    }

    pub fn n_features(&self) -> usize {
        self.points.cols()
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn scaler(&self) -> &MinMaxScaler {
        &self.scaler
    }

    /// The dataset in scaled coordinates.
    pub fn scaled_points(&self) -> Matrix {
        self.scaler
            .transform(&self.points)
            .expect("scaler fitted on these points")
    }

    /// A new dataset restricted to the given row indices (scaler refitted on
    /// the subset, which keeps train/test splits self-contained).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let rows: Vec<Vec<f64>> = indices
            .iter()
            .map(|&i| self.points.row(i).to_vec())
            .collect();
        Dataset::new(Matrix::from_rows(&rows)?, self.feature_names.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn toy() -> Dataset {
        let m = Matrix::from_rows(&[
            alloc::vec![1.0, 10.0, 5.0],
            alloc::vec![3.0, 20.0, 5.0],
            alloc::vec![2.0, 12.0, 5.0],
        ])
        .unwrap();
        Dataset::new(
            m,
            alloc::vec!["a".to_string(), "b".to_string(), "c".to_string()],
        )
        .unwrap()
    }

    #[test]
    fn scaler_maps_to_unit_box_and_round_trips() {
        let ds = toy();
        let scaled = ds.scaled_points();
        for row in scaled.iter_rows() {
            for v in row {
                assert!((-1.0..=1.0).contains(v));
            }
        }
        // constant feature maps to zero
        assert!(scaled.column(2).iter().all(|v| *v == 0.0));
        let back = ds.scaler().inverse(&scaled).unwrap();
        for i in 0..ds.n_rows() {
            for j in 0..ds.n_features() {
                let orig = ds.points().get(i, j);
                let rel = (back.get(i, j) - orig).abs() / orig.abs().max(1.0);
                assert!(rel < 1e-12);
            }
        }
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        let one_row = Matrix::from_rows(&[alloc::vec![1.0, 2.0]]).unwrap();
        assert!(Dataset::new(one_row, alloc::vec!["a".into(), "b".into()]).is_err());
        let nan = Matrix::from_rows(&[alloc::vec![1.0], alloc::vec![f64::NAN]]).unwrap();
        assert!(Dataset::new(nan, alloc::vec!["a".into()]).is_err());
        let m = Matrix::from_rows(&[alloc::vec![1.0], alloc::vec![2.0]]).unwrap();
        assert!(Dataset::new(m, alloc::vec![]).is_err());
    }
}
