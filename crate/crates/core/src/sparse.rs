//! Compressed sparse row storage for the assembled Laplacians and the
//! multigrid transfer operators.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows above this count are processed with rayon.
pub(crate) const PAR_ROWS: usize = 16 * 1024;

/// Square CSR matrix. Column indices are strictly increasing within each row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_csr(
        n: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n + 1 || row_offsets[0] != 0 {
            return Err(Error::InvalidParameter("malformed row offsets".into()));
        }
        if *row_offsets.last().unwrap() != col_indices.len() || col_indices.len() != values.len() {
            return Err(Error::InvalidParameter("offset/index/value lengths disagree".into()));
        }
        for i in 0..n {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            if lo > hi {
                return Err(Error::InvalidParameter(format!("row {i} has negative length")));
            }
            let cols = &col_indices[lo..hi];
            if cols.iter().any(|&c| c >= n) || cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "row {i} has out-of-range or unsorted column indices"
                )));
            }
        }
        Ok(SparseMatrix {
            n,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Assembles from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n + 1];
        for &(i, j, _) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidParameter(format!(
                    "triplet ({i}, {j}) outside {n}x{n}"
                )));
            }
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }

        let mut row_offsets = Vec::with_capacity(n + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..n {
            scratch.clear();
            scratch.extend(
                cols[counts[i]..counts[i + 1]]
                    .iter()
                    .copied()
                    .zip(vals[counts[i]..counts[i + 1]].iter().copied()),
            );
            // Stable sort keeps the summation order of duplicates deterministic.
            scratch.sort_by_key(|&(c, _)| c);
            for &(c, v) in scratch.iter() {
                if col_indices.len() > *row_offsets.last().unwrap() && *col_indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix {
            n,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Two-pass row assembly: `count(i)` gives the exact number of entries of
    /// row `i`, then `fill(i, cols, vals)` writes them with sorted, unique
    /// columns. Rows are filled in parallel; each row is computed by exactly
    /// one call, so the output does not depend on the thread count.
    pub(crate) fn from_row_fn<C, F>(n: usize, count: C, fill: F) -> Self
    where
        C: Fn(usize) -> usize + Sync,
        F: Fn(usize, &mut [usize], &mut [f64]) + Sync,
    {
        let counts: Vec<usize> = if n >= PAR_ROWS {
            (0..n).into_par_iter().map(&count).collect()
        } else {
            (0..n).map(&count).collect()
        };
        let mut row_offsets = Vec::with_capacity(n + 1);
        row_offsets.push(0);
        let mut total = 0;
        for c in &counts {
            total += c;
            row_offsets.push(total);
        }
        let mut col_indices = vec![0usize; total];
        let mut values = vec![0.0; total];

        let mut rows: Vec<(usize, &mut [usize], &mut [f64])> = Vec::with_capacity(n);
        let (mut cols_rest, mut vals_rest) = (&mut col_indices[..], &mut values[..]);
        for (i, &c) in counts.iter().enumerate() {
            let (cols_row, cr) = cols_rest.split_at_mut(c);
            let (vals_row, vr) = vals_rest.split_at_mut(c);
            rows.push((i, cols_row, vals_row));
            cols_rest = cr;
            vals_rest = vr;
        }
        if n >= PAR_ROWS {
            rows.into_par_iter().for_each(|(i, c, v)| fill(i, c, v));
        } else {
            rows.into_iter().for_each(|(i, c, v)| fill(i, c, v));
        }
        debug_assert!((0..n).all(|i| {
            col_indices[row_offsets[i]..row_offsets[i + 1]]
                .windows(2)
                .all(|w| w[0] < w[1])
        }));
        SparseMatrix {
            n,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        SparseMatrix {
            n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|p| vals[p]).unwrap_or(0.0)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let row_dot = |i: usize| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum::<f64>()
        };
        if self.n >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = row_dot(i));
        } else {
            y.iter_mut().enumerate().for_each(|(i, yi)| *yi = row_dot(i));
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.n + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for i in 0..self.n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.n {
            let (rc, rv) = self.row(i);
            for (&j, &v) in rc.iter().zip(rv) {
                cols[next[j]] = i;
                vals[next[j]] = v;
                next[j] += 1;
            }
        }
        SparseMatrix {
            n: self.n,
            row_offsets: counts,
            col_indices: cols,
            values: vals,
        }
    }

    /// Returns `self + diag(d)`, inserting diagonal entries where missing.
    pub fn add_diagonal(&self, d: &[f64]) -> SparseMatrix {
        assert_eq!(d.len(), self.n);
        let mut row_offsets = Vec::with_capacity(self.n + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::with_capacity(self.nnz() + self.n);
        let mut values = Vec::with_capacity(self.nnz() + self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut placed = false;
            for (&j, &v) in cols.iter().zip(vals) {
                if !placed && j > i {
                    col_indices.push(i);
                    values.push(d[i]);
                    placed = true;
                }
                if j == i {
                    col_indices.push(i);
                    values.push(v + d[i]);
                    placed = true;
                } else {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            if !placed {
                col_indices.push(i);
                values.push(d[i]);
            }
            row_offsets.push(col_indices.len());
        }
        SparseMatrix {
            n: self.n,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn scaled(&self, s: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Sparse product `self · other` (Gustavson's row-by-row scheme).
    pub fn matmul(&self, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.n, other.n);
        rect_matmul(self, other, self.n)
    }

    /// Largest `|A_ij − A_ji|` over all stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn heap_bytes(&self) -> usize {
        (self.row_offsets.len() + self.col_indices.len()) * std::mem::size_of::<usize>()
            + self.values.len() * std::mem::size_of::<f64>()
    }

    /// Row-major dense copy; intended for small matrices in tests and for
    /// the coarsest multigrid level.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for (i, row) in dense.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        dense
    }

    /// Writes the matrix in Matrix Market coordinate format.
    pub fn write_matrix_market(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }
}

/// Rectangular CSR used for restriction/prolongation between grids.
#[derive(Clone, Debug)]
pub(crate) struct RectMatrix {
    pub rows: usize,
    pub cols: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub values: Vec<f64>,
}

pub(crate) trait CsrView {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn row_view(&self, i: usize) -> (&[usize], &[f64]);
}

impl CsrView for SparseMatrix {
    fn n_rows(&self) -> usize {
        self.n
    }
    fn n_cols(&self) -> usize {
        self.n
    }
    fn row_view(&self, i: usize) -> (&[usize], &[f64]) {
        self.row(i)
    }
}

impl CsrView for RectMatrix {
    fn n_rows(&self) -> usize {
        self.rows
    }
    fn n_cols(&self) -> usize {
        self.cols
    }
    fn row_view(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }
}

impl RectMatrix {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row_view(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    pub fn transpose(&self) -> RectMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.cols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let nnz = self.values.len();
        let mut cols = vec![0usize; nnz];
        let mut vals = vec![0.0; nnz];
        for i in 0..self.rows {
            let (rc, rv) = self.row_view(i);
            for (&j, &v) in rc.iter().zip(rv) {
                cols[next[j]] = i;
                vals[next[j]] = v;
                next[j] += 1;
            }
        }
        RectMatrix {
            rows: self.cols,
            cols: self.rows,
            row_offsets: counts,
            col_indices: cols,
            values: vals,
        }
    }

    pub fn heap_bytes(&self) -> usize {
        (self.row_offsets.len() + self.col_indices.len()) * std::mem::size_of::<usize>()
            + self.values.len() * std::mem::size_of::<f64>()
    }
}

/// Gustavson product of two CSR operands; the result is returned as a square
/// matrix of dimension `n` (callers only form square products).
pub(crate) fn rect_matmul(a: &impl CsrView, b: &impl CsrView, n: usize) -> SparseMatrix {
    let out = rect_matmul_general(a, b);
    debug_assert_eq!(out.rows, n);
    debug_assert_eq!(out.cols, n);
    SparseMatrix {
        n,
        row_offsets: out.row_offsets,
        col_indices: out.col_indices,
        values: out.values,
    }
}

pub(crate) fn rect_matmul_general(a: &impl CsrView, b: &impl CsrView) -> RectMatrix {
    assert_eq!(a.n_cols(), b.n_rows());
    let cols = b.n_cols();
    let mut acc = vec![0.0; cols];
    let mut marker = vec![usize::MAX; cols];
    let mut pattern: Vec<usize> = Vec::new();
    let mut row_offsets = Vec::with_capacity(a.n_rows() + 1);
    row_offsets.push(0);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    for i in 0..a.n_rows() {
        pattern.clear();
        let (ac, av) = a.row_view(i);
        for (&k, &aik) in ac.iter().zip(av) {
            let (bc, bv) = b.row_view(k);
            for (&j, &bkj) in bc.iter().zip(bv) {
                if marker[j] != i {
                    marker[j] = i;
                    acc[j] = 0.0;
                    pattern.push(j);
                }
                acc[j] += aik * bkj;
            }
        }
        pattern.sort_unstable();
        for &j in &pattern {
            col_indices.push(j);
            values.push(acc[j]);
        }
        row_offsets.push(col_indices.len());
    }
    RectMatrix {
        rows: a.n_rows(),
        cols,
        row_offsets,
        col_indices,
        values,
    }
}
