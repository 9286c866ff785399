//! Compressed sparse row storage with the few dense products the pipeline
//! needs. Matrix-times-dense drives both similarity scoring and the
//! randomized decomposition, so it has a parallel path; both paths accumulate
//! each output row in the same order and are bit-identical.

use ndarray::Array2;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Immutable CSR matrix of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from (row, col, value) triples. Triples may arrive in
    /// any order; duplicates of one cell or out-of-bounds indices are errors.
    pub fn from_triples(
        rows: usize,
        cols: usize,
        mut triples: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(r, c, _) in &triples {
            if r >= rows || c >= cols {
                return Err(Error::InvalidInput(format!(
                    "triple ({r}, {c}) out of bounds for {rows}x{cols} matrix"
                )));
            }
        }
        triples.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for w in triples.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::InvalidInput(format!(
                    "duplicate cell ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }
        let mut row_ptr = vec![0usize; rows + 1];
        for &(r, _, _) in &triples {
            row_ptr[r + 1] += 1;
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let (col_idx, values) = triples.iter().map(|&(_, c, v)| (c, v)).unzip();
        Ok(CsrMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`, in ascending column order.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    /// All stored cells in (row, col) order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn row_norm(&self, r: usize) -> f64 {
        let (_, vals) = self.row(r);
        vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Dot product of two rows via sorted-index merge.
    pub fn row_dot(&self, i: usize, j: usize) -> f64 {
        let (ci, vi) = self.row(i);
        let (cj, vj) = self.row(j);
        let (mut a, mut b, mut acc) = (0, 0, 0.0);
        while a < ci.len() && b < cj.len() {
            match ci[a].cmp(&cj[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc += vi[a] * vj[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    /// `M · x` for a dense vector of length `cols`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "vector length mismatch");
        (0..self.rows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    fn mul_dense_into(&self, x: &Array2<f64>, r: usize, out_row: &mut [f64]) {
        let (cols, vals) = self.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            let xr = x.row(c);
            let xs = xr.as_slice().expect("dense operand must be row-major");
            for (o, xv) in out_row.iter_mut().zip(xs) {
                *o += v * xv;
            }
        }
    }

    /// `M · X` for a dense `cols × p` operand. Dispatches to the parallel
    /// path when the `parallel` feature is enabled; results are bit-identical
    /// either way.
    pub fn mul_dense(&self, x: &Array2<f64>) -> Array2<f64> {
        #[cfg(feature = "parallel")]
        {
            self.mul_dense_par(x)
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.mul_dense_seq(x)
        }
    }

    pub fn mul_dense_seq(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.cols, "operand row count mismatch");
        let p = x.ncols();
        let mut buf = vec![0.0; self.rows * p];
        for (r, out_row) in buf.chunks_mut(p.max(1)).enumerate() {
            self.mul_dense_into(x, r, out_row);
        }
        Array2::from_shape_vec((self.rows, p), buf).expect("shape fits buffer")
    }

    #[cfg(feature = "parallel")]
    pub fn mul_dense_par(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.cols, "operand row count mismatch");
        let p = x.ncols();
        let mut buf = vec![0.0; self.rows * p];
        buf.par_chunks_mut(p.max(1))
            .enumerate()
            .for_each(|(r, out_row)| self.mul_dense_into(x, r, out_row));
        Array2::from_shape_vec((self.rows, p), buf).expect("shape fits buffer")
    }

    /// The transpose as a new CSR matrix (counting sort; deterministic).
    pub fn transpose(&self) -> CsrMatrix {
        let mut row_ptr = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            row_ptr[c + 1] += 1;
        }
        for i in 0..self.cols {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut next = row_ptr.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (r, c, v) in self.iter() {
            let slot = next[c];
            col_idx[slot] = r;
            values[slot] = v;
            next[c] += 1;
        }
        CsrMatrix {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (r, c, v) in self.iter() {
            out[[r, c]] = v;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> CsrMatrix {
        // [[1, 0, 2], [0, 0, 0], [0, 3, 4]]
        CsrMatrix::from_triples(3, 3, vec![(2, 2, 4.0), (0, 0, 1.0), (2, 1, 3.0), (0, 2, 2.0)])
            .unwrap()
    }

    #[test]
    fn from_triples_sorts_and_indexes() {
        let m = sample();
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.row(0), (&[0usize, 2][..], &[1.0, 2.0][..]));
        assert_eq!(m.row(1), (&[][..], &[][..]));
        assert_eq!(m.row(2), (&[1usize, 2][..], &[3.0, 4.0][..]));
        let triples: Vec<_> = m.iter().collect();
        assert_eq!(
            triples,
            vec![(0, 0, 1.0), (0, 2, 2.0), (2, 1, 3.0), (2, 2, 4.0)]
        );
    }

    #[test]
    fn from_triples_rejects_bad_input() {
        assert!(CsrMatrix::from_triples(2, 2, vec![(2, 0, 1.0)]).is_err());
        assert!(CsrMatrix::from_triples(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0)]).is_err());
    }

    #[test]
    fn row_ops_match_dense() {
        let m = sample();
        let d = m.to_dense();
        assert_eq!(d, array![[1.0, 0.0, 2.0], [0.0, 0.0, 0.0], [0.0, 3.0, 4.0]]);
        assert!((m.row_norm(0) - 5.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.row_norm(1), 0.0);
        // rows 0 and 2 overlap only at column 2: 2*4
        assert_eq!(m.row_dot(0, 2), 8.0);
        assert_eq!(m.row_dot(0, 1), 0.0);
        assert!((m.frobenius_norm() - (1.0f64 + 4.0 + 9.0 + 16.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mul_vec_matches_dense() {
        let m = sample();
        let x = [1.0, -1.0, 0.5];
        assert_eq!(m.mul_vec(&x), vec![2.0, 0.0, -1.0]);
    }

    #[test]
    fn mul_dense_matches_ndarray_dot() {
        let m = sample();
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let got = m.mul_dense(&x);
        let want = m.to_dense().dot(&x);
        let diff = (&got - &want).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-12);
        assert_eq!(got, m.mul_dense_seq(&x));
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_product_is_bit_identical() {
        let m = sample();
        let x = array![[0.1, 0.2, 0.3], [0.4, 0.5, 0.6], [0.7, 0.8, 0.9]];
        assert_eq!(m.mul_dense_seq(&x), m.mul_dense_par(&x));
    }

    #[test]
    fn transpose_round_trips() {
        let m = sample();
        let t = m.transpose();
        assert_eq!(t.rows(), 3);
        assert_eq!(t.row(2), (&[0usize, 2][..], &[2.0, 4.0][..]));
        assert_eq!(t.transpose(), m);
        assert_eq!(t.to_dense(), m.to_dense().t().to_owned());
    }

    #[test]
    fn zero_column_matrix_products_work() {
        let m = CsrMatrix::from_triples(2, 0, vec![]).unwrap();
        let x = Array2::<f64>::zeros((0, 3));
        assert_eq!(m.mul_dense(&x), Array2::<f64>::zeros((2, 3)));
    }
}
