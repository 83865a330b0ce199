use super::Preconditioner;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

const NONE: usize = usize::MAX;
/// First shift tried after a pivot failure when the initial shift is smaller.
const MIN_RESTART_SHIFT: f64 = 1e-4;
const MAX_SHIFT: f64 = 1.0;

/// Lower-triangular incomplete Cholesky factor in compressed-column form.
/// The diagonal entry is stored first in each column, followed by the
/// off-diagonal rows in increasing order.
#[derive(Clone, Debug)]
pub struct IcholFactor {
    n: usize,
    col_offsets: Vec<usize>,
    row_indices: Vec<usize>,
    values: Vec<f64>,
    shift: f64,
}

impl IcholFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Relative diagonal shift that made the factorization succeed.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.values[self.col_offsets[j]]).collect()
    }

    /// `L̃[i, j]`, zero outside the stored pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = (self.col_offsets[j], self.col_offsets[j + 1]);
        self.row_indices[lo..hi]
            .iter()
            .position(|&r| r == i)
            .map_or(0.0, |p| self.values[lo + p])
    }

    pub fn heap_bytes(&self) -> usize {
        (self.col_offsets.len() + self.row_indices.len()) * std::mem::size_of::<usize>()
            + self.values.len() * std::mem::size_of::<f64>()
    }
}

/// Thresholded left-looking incomplete Cholesky factorization of
/// `A + shift·diag(A)`.
///
/// A candidate entry of column `j` is dropped when its magnitude (before the
/// division by the pivot) is at most `discard_threshold·‖A[:, j]‖₂`; the
/// diagonal is always kept. When a pivot is not positive the factorization
/// restarts with a larger shift (`1e-4` first, doubling after), and gives up
/// once the shift would exceed 1. `max_nnz` caps the total number of stored
/// entries.
pub fn ichol_decompose(
    a: &SparseMatrix,
    discard_threshold: f64,
    initial_shift: f64,
    max_nnz: Option<usize>,
) -> Result<IcholFactor> {
    if !(discard_threshold >= 0.0) || !(initial_shift >= 0.0) {
        return Err(Error::InvalidParameter(
            "discard threshold and shift must be >= 0".into(),
        ));
    }
    let n = a.dim();
    let mut col_norm = vec![0.0; n];
    for (j, norm) in col_norm.iter_mut().enumerate() {
        let (cols, vals) = a.row(j);
        *norm = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(a.get(j, j) > 0.0) || cols.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "incomplete Cholesky needs a positive diagonal; A[{j},{j}] = {}",
                a.get(j, j)
            )));
        }
    }

    let mut shift = initial_shift;
    loop {
        match factor(a, &col_norm, discard_threshold, shift, max_nnz)? {
            Some(f) => return Ok(f),
            None => {
                shift = if shift < MIN_RESTART_SHIFT { MIN_RESTART_SHIFT } else { 2.0 * shift };
                if shift > MAX_SHIFT {
                    return Err(Error::NotFactorizable { shift });
                }
                log::debug!("incomplete Cholesky pivot failure, retrying with shift {shift:e}");
            }
        }
    }
}

/// One factorization attempt; `Ok(None)` signals a non-positive pivot.
fn factor(
    a: &SparseMatrix,
    col_norm: &[f64],
    threshold: f64,
    shift: f64,
    max_nnz: Option<usize>,
) -> Result<Option<IcholFactor>> {
    let n = a.dim();
    let mut col_offsets = Vec::with_capacity(n + 1);
    col_offsets.push(0);
    let mut row_indices: Vec<usize> = Vec::with_capacity(a.nnz() / 2 + n);
    let mut values: Vec<f64> = Vec::with_capacity(a.nnz() / 2 + n);

    // Column k's next unused off-diagonal position, and per-row linked lists
    // of columns whose next entry lies in that row.
    let mut next_pos = vec![0usize; n];
    let mut head = vec![NONE; n];
    let mut link = vec![NONE; n];

    let mut work = vec![0.0; n];
    let mut in_pattern = vec![false; n];
    let mut pattern: Vec<usize> = Vec::new();

    for j in 0..n {
        pattern.clear();
        let (cols, vals) = a.row(j);
        for (&i, &v) in cols.iter().zip(vals) {
            if i < j {
                continue;
            }
            work[i] = if i == j { v * (1.0 + shift) } else { v };
            if i > j {
                in_pattern[i] = true;
                pattern.push(i);
            }
        }

        let mut k = head[j];
        head[j] = NONE;
        while k != NONE {
            let following = link[k];
            let p = next_pos[k];
            let ljk = values[p];
            for q in p..col_offsets[k + 1] {
                let i = row_indices[q];
                if i != j && !in_pattern[i] {
                    in_pattern[i] = true;
                    work[i] = 0.0;
                    pattern.push(i);
                }
                work[i] -= values[q] * ljk;
            }
            next_pos[k] = p + 1;
            if p + 1 < col_offsets[k + 1] {
                let row = row_indices[p + 1];
                link[k] = head[row];
                head[row] = k;
            }
            k = following;
        }

        let pivot = work[j];
        work[j] = 0.0;
        if !(pivot.is_finite() && pivot > 0.0) {
            return Ok(None);
        }
        let d = pivot.sqrt();
        row_indices.push(j);
        values.push(d);

        pattern.sort_unstable();
        let cutoff = threshold * col_norm[j];
        for &i in &pattern {
            let v = work[i];
            if v.abs() > cutoff {
                row_indices.push(i);
                values.push(v / d);
            }
            work[i] = 0.0;
            in_pattern[i] = false;
        }
        if let Some(cap) = max_nnz {
            if values.len() > cap {
                return Err(Error::FillLimitExceeded { cap });
            }
        }
        let start = col_offsets[j];
        col_offsets.push(values.len());
        next_pos[j] = start + 1;
        if start + 1 < values.len() {
            let row = row_indices[start + 1];
            link[j] = head[row];
            head[row] = j;
        }
    }

    Ok(Some(IcholFactor {
        n,
        col_offsets,
        row_indices,
        values,
        shift,
    }))
}

/// Solves `L̃ L̃ᵀ z = r` by forward then backward substitution.
pub fn ichol_apply(factor: &IcholFactor, r: &[f64]) -> Vec<f64> {
    let mut z = r.to_vec();
    factor.solve_in_place(&mut z);
    z
}

impl IcholFactor {
    fn solve_in_place(&self, z: &mut [f64]) {
        assert_eq!(z.len(), self.n);
        for j in 0..self.n {
            let (lo, hi) = (self.col_offsets[j], self.col_offsets[j + 1]);
            let yj = z[j] / self.values[lo];
            z[j] = yj;
            for q in lo + 1..hi {
                z[self.row_indices[q]] -= self.values[q] * yj;
            }
        }
        for j in (0..self.n).rev() {
            let (lo, hi) = (self.col_offsets[j], self.col_offsets[j + 1]);
            let mut s = z[j];
            for q in lo + 1..hi {
                s -= self.values[q] * z[self.row_indices[q]];
            }
            z[j] = s / self.values[lo];
        }
    }
}

impl Preconditioner for IcholFactor {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        self.solve_in_place(z);
    }

    fn heap_bytes(&self) -> usize {
        IcholFactor::heap_bytes(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::test_support::{poisson, random_spd, random_vec};
    use crate::solver::{cg_solve, CgConfig, Identity};
    use nalgebra::DMatrix;

    #[test]
    fn identity_factor() {
        let f = ichol_decompose(&SparseMatrix::identity(5), 0.0, 0.0, None).unwrap();
        assert_eq!(f.shift(), 0.0);
        assert_eq!(f.nnz(), 5);
        assert_eq!(f.diagonal(), vec![1.0; 5]);
        assert_eq!(ichol_apply(&f, &[1.0, 2.0, 3.0, 4.0, 5.0]), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn two_by_two_exact() {
        let a = SparseMatrix::from_triplets(2, &[(0, 0, 4.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 3.0)]).unwrap();
        let f = ichol_decompose(&a, 0.0, 0.0, None).unwrap();
        assert_eq!(f.get(0, 0), 2.0);
        assert_eq!(f.get(1, 0), 1.0);
        assert!((f.get(1, 1) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(f.get(0, 1), 0.0);
        // Dense solve of A z = (4, 5): z = (0.25, 1.5).
        let z = ichol_apply(&f, &[4.0, 5.0]);
        assert!((z[0] - 0.25).abs() < 1e-15 && (z[1] - 1.5).abs() < 1e-15, "{z:?}");
        assert_eq!(ichol_apply(&f, &[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_threshold_reproduces_dense_cholesky() {
        for (n, seed) in [(10, 1), (30, 2), (50, 3)] {
            let a = random_spd(n, 0.15, n as f64 * 0.6, seed);
            let f = ichol_decompose(&a, 0.0, 0.0, None).unwrap();
            assert_eq!(f.shift(), 0.0);
            let dense = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
            let chol = dense.cholesky().expect("test matrix is SPD").l();
            for j in 0..n {
                for i in j..n {
                    let stored = f.get(i, j);
                    if stored != 0.0 {
                        assert!((stored - chol[(i, j)]).abs() < 1e-10, "({i},{j})");
                    } else {
                        assert!(chol[(i, j)].abs() < 1e-10, "dropped nonzero ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn exact_factor_is_a_perfect_preconditioner() {
        let a = random_spd(30, 0.2, 18.0, 7);
        let b = random_vec(30, 8);
        let f = ichol_decompose(&a, 0.0, 0.0, None).unwrap();
        let cfg = CgConfig { atol: 0.0, rtol: 1e-10, max_iter: 100 };
        let rep = cg_solve(&a, &b, None, &f, &cfg).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
    }

    #[test]
    fn dropping_respects_relative_threshold() {
        let a = poisson(12, 12);
        let thr = 0.05;
        let f = ichol_decompose(&a, thr, 0.0, None).unwrap();
        let exact = ichol_decompose(&a, 0.0, 0.0, None).unwrap();
        assert!(f.nnz() < exact.nnz());
        assert!(f.diagonal().iter().all(|&d| d > 0.0));
        // Every kept off-diagonal came from a candidate above thr·‖A[:, j]‖.
        for j in 0..a.dim() {
            let norm = a.row(j).1.iter().map(|v| v * v).sum::<f64>().sqrt();
            let d = f.get(j, j);
            for i in j + 1..a.dim() {
                let v = f.get(i, j);
                if v != 0.0 {
                    assert!((v * d).abs() > thr * norm);
                }
            }
        }
        let b = random_vec(144, 2);
        let cfg = CgConfig { atol: 0.0, rtol: 1e-10, max_iter: 1000 };
        let plain = cg_solve(&a, &b, None, &Identity, &cfg).unwrap();
        let pre = cg_solve(&a, &b, None, &f, &cfg).unwrap();
        assert!(pre.iterations < plain.iterations);
    }

    #[test]
    fn shift_restart_rescues_indefinite_pivots() {
        // Positive diagonal but indefinite: exact Cholesky fails at the second pivot.
        let a = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let f = ichol_decompose(&a, 0.0, 0.0, None).unwrap();
        assert!(f.shift() >= 1e-4);
        assert!(f.diagonal().iter().all(|&d| d > 0.0));

        let bad = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 3.0), (1, 0, 3.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(
            ichol_decompose(&bad, 0.0, 0.0, None),
            Err(Error::NotFactorizable { .. })
        ));
    }

    #[test]
    fn fill_cap_and_argument_checks() {
        let a = random_spd(20, 0.3, 12.0, 4);
        assert!(matches!(
            ichol_decompose(&a, 0.0, 0.0, Some(25)),
            Err(Error::FillLimitExceeded { cap: 25 })
        ));
        assert!(ichol_decompose(&a, -1.0, 0.0, None).is_err());
        let neg = SparseMatrix::from_diagonal(&[1.0, -2.0]);
        assert!(ichol_decompose(&neg, 0.0, 0.0, None).is_err());
    }
}
