//! Row-major JSON representation for matrices, used by the file formats
//! (`solution.json`, `certificate.json`).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries, full double precision.
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixJson {
    fn from(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl TryFrom<MatrixJson> for DMatrix<f64> {
    type Error = Error;

    fn try_from(j: MatrixJson) -> Result<Self, Error> {
        if j.data.len() != j.rows * j.cols {
            return Err(Error::invalid(
                "MatrixJson",
                format!("{}x{} declared but {} entries", j.rows, j.cols, j.data.len()),
            ));
        }
        Ok(DMatrix::from_row_slice(j.rows, j.cols, &j.data))
    }
}
