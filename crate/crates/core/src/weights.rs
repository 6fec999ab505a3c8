use alloc::vec::Vec;

use crate::{Error, Result};

/// Dense row-major weight matrix of one layer.
///
/// Rows are the input-side vertices, columns the output-side vertices. All
/// entries are finite.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LayerWeights {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl LayerWeights {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyLayer { rows, cols });
        }
        let expected = rows
            .checked_mul(cols)
            .ok_or(Error::ShapeMismatch { expected: usize::MAX, actual: values.len() })?;
        if values.len() != expected {
            return Err(Error::ShapeMismatch { expected, actual: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, alloc::vec![0.0; rows * cols])
    }

    /// Builds a matrix from row slices; every row must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::ShapeMismatch { expected: cols, actual: row.len() });
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, values)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    /// Mutable access for in-place updates. Callers must keep entries finite.
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    /// Largest absolute value, or 0 for an all-zero layer.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Returns `c * W`, rejecting results that overflow.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.rows, self.cols, self.values.iter().map(|v| v * c).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_bad_shapes() {
        assert_eq!(
            LayerWeights::new(0, 3, vec![]),
            Err(Error::EmptyLayer { rows: 0, cols: 3 })
        );
        assert_eq!(
            LayerWeights::new(2, 2, vec![1.0; 3]),
            Err(Error::ShapeMismatch { expected: 4, actual: 3 })
        );
    }

    #[test]
    fn reports_first_non_finite_index() {
        let err = LayerWeights::new(2, 2, vec![1.0, 2.0, f64::NAN, f64::INFINITY]).unwrap_err();
        assert_eq!(err, Error::NonFinite { index: 2 });
    }

    #[test]
    fn from_rows_is_row_major() {
        let w = LayerWeights::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(w.get(1, 0), 3.0);
        assert_eq!(w.max_abs(), 4.0);
    }
}
