use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Dense row-major matrix; rows are sample points, columns are variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Builds a matrix from row-major data. Panics if the length does not match.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_columns(cols: &[Vec<T>]) -> Self {
        let rows = cols.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            assert_eq!(c.len(), rows, "ragged columns");
            for (i, &v) in c.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: T) {
        self.data[row * self.cols + col] = v;
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<T> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    /// Sets every entry of `col` to `v`.
    pub fn fill_column(&mut self, col: usize, v: T) {
        for r in 0..self.rows {
            self.set(r, col, v);
        }
    }

    /// New matrix holding the given columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut m = Self::zeros(self.rows, cols.len());
        for r in 0..self.rows {
            for (j, &c) in cols.iter().enumerate() {
                m.set(r, j, self.get(r, c));
            }
        }
        m
    }

    /// New matrix holding the rows whose mask entry is true.
    pub fn filter_rows(&self, keep: &[bool]) -> Self {
        let mut data = Vec::new();
        let mut rows = 0;
        for (r, &k) in keep.iter().enumerate().take(self.rows) {
            if k {
                data.extend_from_slice(self.row(r));
                rows += 1;
            }
        }
        Self {
            rows,
            cols: self.cols,
            data,
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Serializes as CSV with header `x1..xn`.
    pub fn to_csv(&self) -> String {
        let mut out = (1..=self.cols)
            .map(|j| format!("x{j}"))
            .collect::<Vec<_>>()
            .join(",");
        out.push('\n');
        for r in 0..self.rows {
            let line = self
                .row(r)
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_and_filter() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let s = m.select_columns(&[2, 0]);
        assert_eq!(s.row(1), &[6.0, 4.0]);
        let f = m.filter_rows(&[false, true]);
        assert_eq!(f.nrows(), 1);
        assert_eq!(f.row(0), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn csv_header() {
        let m = Matrix::from_rows(&[vec![1.5f64, -2.0]]);
        assert_eq!(m.to_csv(), "x1,x2\n1.5,-2\n");
    }
}
