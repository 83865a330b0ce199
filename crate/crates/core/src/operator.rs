use crate::sparse::SparseMatrix;

/// A symmetric linear map `x ↦ A x` with an exactly known diagonal.
///
/// Assembled matrices and the matrix-free large-kernel Laplacian both
/// implement this, so the solver never needs to know which it has.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    /// Writes `A x` into `y`. Both slices have length [`dim`](Self::dim).
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn diagonal(&self) -> Vec<f64>;

    /// Bytes owned by the operator, for memory accounting.
    fn heap_bytes(&self) -> usize {
        0
    }

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        SparseMatrix::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }

    fn diagonal(&self) -> Vec<f64> {
        SparseMatrix::diagonal(self)
    }

    fn heap_bytes(&self) -> usize {
        SparseMatrix::heap_bytes(self)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
    fn diagonal(&self) -> Vec<f64> {
        (**self).diagonal()
    }
    fn heap_bytes(&self) -> usize {
        (**self).heap_bytes()
    }
}

/// `A + diag(shift)` without materializing the sum.
#[derive(Clone, Debug)]
pub struct ShiftedOperator<O> {
    inner: O,
    shift: Vec<f64>,
}

impl<O: LinearOperator> ShiftedOperator<O> {
    pub fn new(inner: O, shift: Vec<f64>) -> Self {
        assert_eq!(inner.dim(), shift.len());
        ShiftedOperator { inner, shift }
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }
}

impl<O: LinearOperator> LinearOperator for ShiftedOperator<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.inner.apply(x, y);
        for ((yi, &xi), &s) in y.iter_mut().zip(x).zip(&self.shift) {
            *yi += s * xi;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = self.inner.diagonal();
        d.iter_mut().zip(&self.shift).for_each(|(d, s)| *d += s);
        d
    }

    fn heap_bytes(&self) -> usize {
        self.inner.heap_bytes() + self.shift.len() * std::mem::size_of::<f64>()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
