//! Dense row-major f64 tensors.
//!
//! Shapes are rank 0 (scalar), 1 (vector) or 2 (matrix). The data buffer is
//! always `shape.iter().product()` long; an empty shape denotes a scalar.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking only that the buffer matches the shape.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expect,
                data.len()
            )));
        }
        if shape.len() > 2 {
            return Err(Error::Shape(format!(
                "rank {} unsupported (max 2)",
                shape.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Like [`Tensor::new`] but additionally rejects NaN/Inf entries.
    /// Use for values arriving from files or user input.
    pub fn checked(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let t = Tensor::new(shape, data)?;
        t.ensure_finite("tensor")?;
        Ok(t)
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Row count of a matrix.
    pub fn rows(&self) -> Option<usize> {
        (self.rank() == 2).then(|| self.shape[0])
    }

    /// Column count of a matrix.
    pub fn cols(&self) -> Option<usize> {
        (self.rank() == 2).then(|| self.shape[1])
    }

    /// The length of the last axis: vector length, matrix width, or 1 for a
    /// scalar. This is the per-sample dimension under the row-batch
    /// convention.
    pub fn last_dim(&self) -> usize {
        match self.shape.as_slice() {
            [] => 1,
            [n] => *n,
            [_, c] => *c,
            _ => unreachable!(),
        }
    }

    pub fn to_scalar(&self) -> Result<f64> {
        if self.numel() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::Shape(format!(
                "expected scalar, got shape {:?}",
                self.shape
            )))
        }
    }

    /// Row `r` of a matrix (or the whole buffer of a vector when `r == 0`).
    pub fn row(&self, r: usize) -> &[f64] {
        match self.shape.as_slice() {
            [_, c] => &self.data[r * c..(r + 1) * c],
            _ => {
                assert_eq!(r, 0, "row index on non-matrix");
                &self.data
            }
        }
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn hstack(parts: &[&Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("hstack of no tensors".into()));
        }
        let rows = parts[0]
            .rows()
            .ok_or_else(|| Error::Shape("hstack expects matrices".into()))?;
        let mut cols = 0;
        for p in parts {
            if p.rows() != Some(rows) {
                return Err(Error::Shape("hstack row counts differ".into()));
            }
            cols += p.cols().unwrap();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Tensor::matrix(rows, cols, data)
    }

    /// Bit patterns of the buffer, used for exact-equality dedup keys.
    pub fn bit_key(&self) -> Vec<u64> {
        self.data.iter().map(|v| v.to_bits()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_mismatch_rejected() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn checked_rejects_nan() {
        assert!(Tensor::checked(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::checked(vec![2], vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn hstack_rows() {
        let a = Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap();
        let b = Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = Tensor::hstack(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[2, 3]);
        assert_eq!(c.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
    }

    #[test]
    fn scalar_accessors() {
        let s = Tensor::scalar(4.5);
        assert!(s.is_scalar());
        assert_eq!(s.to_scalar().unwrap(), 4.5);
        assert_eq!(s.last_dim(), 1);
    }
}
