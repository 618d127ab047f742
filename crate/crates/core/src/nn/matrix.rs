use serde::{Deserialize, Serialize};

use super::NnError;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NnError> {
        if data.len() != rows * cols {
            return Err(NnError::Shape(format!("{rows}x{cols} matrix needs {} values, got {}", rows * cols, data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NnError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NnError::Shape("ragged rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self (n×k) · rhs (k×m)`.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, NnError> {
        if self.cols != rhs.rows {
            return Err(NnError::Shape(format!("matmul {:?} x {:?}", self.shape(), rhs.shape())));
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ (k×n)ᵀ · rhs (n×m)` without materializing the transpose.
    pub fn t_matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, NnError> {
        if self.rows != rhs.rows {
            return Err(NnError::Shape(format!("t_matmul {:?} x {:?}", self.shape(), rhs.shape())));
        }
        let mut out = DenseMatrix::zeros(self.cols, rhs.cols);
        for i in 0..self.rows {
            let rhs_row = rhs.row(i);
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out.row_mut(k).iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self (n×m) · rhsᵀ (k×m)ᵀ`.
    pub fn matmul_t(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, NnError> {
        if self.cols != rhs.cols {
            return Err(NnError::Shape(format!("matmul_t {:?} x {:?}", self.shape(), rhs.shape())));
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for k in 0..rhs.rows {
                out.data[i * rhs.rows + k] = a.iter().zip(rhs.row(k)).map(|(x, y)| x * y).sum();
            }
        }
        Ok(out)
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) -> Result<(), NnError> {
        if self.shape() != other.shape() {
            return Err(NnError::Shape(format!("add {:?} + {:?}", self.shape(), other.shape())));
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Columns `[start, end)` as a new matrix.
    pub fn columns(&self, start: usize, end: usize) -> DenseMatrix {
        let cols = end - start;
        let mut out = DenseMatrix::zeros(self.rows, cols);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[start..end]);
        }
        out
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        DenseMatrix { rows: idx.len(), cols: self.cols, data }
    }

    /// `[a | b]` side by side.
    pub fn hconcat(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, NnError> {
        if a.rows != b.rows {
            return Err(NnError::Shape(format!("hconcat {:?} | {:?}", a.shape(), b.shape())));
        }
        let mut out = DenseMatrix::zeros(a.rows, a.cols + b.cols);
        for i in 0..a.rows {
            let row = out.row_mut(i);
            row[..a.cols].copy_from_slice(a.row(i));
            row[a.cols..].copy_from_slice(b.row(i));
        }
        Ok(out)
    }

    /// `[a; b]` stacked.
    pub fn vconcat(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, NnError> {
        if a.cols != b.cols {
            return Err(NnError::Shape(format!("vconcat {:?} / {:?}", a.shape(), b.shape())));
        }
        let mut data = a.data.clone();
        data.extend_from_slice(&b.data);
        Ok(DenseMatrix { rows: a.rows + b.rows, cols: a.cols, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree_with_naive_loops() {
        let a = DenseMatrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 4.0]).unwrap();
        let b = DenseMatrix::from_vec(3, 2, vec![2.0, 0.0, 1.0, -1.0, 0.0, 3.0]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.as_slice(), &[4.0, 7.0, -1.5, 11.5]);
        let bt = DenseMatrix::from_vec(2, 3, vec![2.0, 1.0, 0.0, 0.0, -1.0, 3.0]).unwrap();
        assert_eq!(a.matmul_t(&bt).unwrap(), ab);
        let at = DenseMatrix::from_vec(3, 2, vec![1.0, -1.0, 2.0, 0.5, 3.0, 4.0]).unwrap();
        assert_eq!(at.t_matmul(&b).unwrap(), ab);
        assert!(a.matmul(&a).is_err());
    }
}
