use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Row-major matrix whose rows are points in data space.
///
/// Used both for the data matrix `Q` (one row per sample) and for the control
/// matrix `P` (one row per control point). Every coordinate column is iterated
/// simultaneously.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PointMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::Shape(format!("{} values cannot fill a {rows}x{dim} point matrix", data.len())));
        }
        Ok(Self { rows, dim, data })
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self { rows, dim, data: vec![0.0; rows * dim] }
    }

    /// Builds from a list of equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (j, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::Shape(format!("row {j} has {} coordinates, expected {dim}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), dim, data })
    }

    /// Single-coordinate column, handy for scalar examples.
    pub fn column(values: &[f64]) -> Self {
        Self { rows: values.len(), dim: 1, data: values.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, c: usize) -> f64 {
        self.data[i * self.dim + c]
    }

    pub fn same_shape(&self, other: &PointMatrix) -> bool {
        self.rows == other.rows && self.dim == other.dim
    }

    /// Largest componentwise absolute difference (the matrix max-norm of `self - other`).
    pub fn max_abs_diff(&self, other: &PointMatrix) -> f64 {
        assert!(self.same_shape(other), "max_abs_diff on mismatched shapes");
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, s: f64) -> PointMatrix {
        PointMatrix { rows: self.rows, dim: self.dim, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.dim, &self.data)
    }

    pub fn from_dense(m: &DMatrix<f64>) -> PointMatrix {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(i, c)]);
            }
        }
        PointMatrix { rows: m.nrows(), dim: m.ncols(), data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ragged_rows_rejected() {
        let err = PointMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn dense_round_trip_keeps_layout() {
        let p = PointMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let d = p.to_dense();
        assert_eq!(d[(2, 1)], 6.0);
        assert_eq!(PointMatrix::from_dense(&d), p);
    }
}
