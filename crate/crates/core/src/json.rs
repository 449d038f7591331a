//! JSON representations shared by the file formats: complex numbers are
//! always two-element `[re, im]` arrays and matrices are lists of rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, CMat, CVec, C64};

pub type ComplexJson = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatrixJson(pub Vec<Vec<ComplexJson>>);

impl MatrixJson {
    pub fn from_matrix(m: &CMat) -> Self {
        MatrixJson(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                .collect(),
        )
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        let rows = self.0.len();
        if rows == 0 {
            return Err(Error::InvalidInput("empty matrix".into()));
        }
        let cols = self.0[0].len();
        if self.0.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged matrix rows".into()));
        }
        Ok(CMat::from_fn(rows, cols, |i, j| c(self.0[i][j][0], self.0[i][j][1])))
    }
}

pub fn complex_to_json(z: C64) -> ComplexJson {
    [z.re, z.im]
}

pub fn complex_from_json(z: ComplexJson) -> C64 {
    c(z[0], z[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VectorJson(pub Vec<ComplexJson>);

impl VectorJson {
    pub fn from_vector(v: &CVec) -> Self {
        VectorJson(v.iter().map(|z| [z.re, z.im]).collect())
    }

    pub fn to_vector(&self) -> CVec {
        CVec::from_iterator(self.0.len(), self.0.iter().map(|z| c(z[0], z[1])))
    }
}
