//! Matting Laplacians.
//!
//! Four constructions are assembled into [`SparseMatrix`]: closed-form
//! ([`cf_laplacian`]), nearest-neighbor ([`knn_laplacian`]), random-walk
//! ([`rw_laplacian`]) and learning-based ([`lbdm_laplacian`]). The
//! large-kernel variant ([`lkm_operator`]) represents the closed-form
//! Laplacian matrix-free through box filters, so its cost does not grow with
//! the window radius.
//!
//! The windowed builders only use full `(2r+1)×(2r+1)` windows. Border pixels
//! are still covered, just by fewer windows than interior ones.

mod boxsum;
mod cf;
mod kdtree;
mod knn;
mod lbdm;
mod lkm;
mod rw;

pub use cf::cf_laplacian;
pub use knn::knn_laplacian;
pub use lbdm::lbdm_laplacian;
pub use lkm::{lkm_operator, LkmOperator};
pub use rw::rw_laplacian;

use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::sparse::SparseMatrix;

/// Geometry of the full windows of radius `r` on a `w×h` grid.
#[derive(Clone, Copy, Debug)]
pub(crate) struct WindowGrid {
    pub w: usize,
    pub h: usize,
    pub r: usize,
}

impl WindowGrid {
    pub fn new(w: usize, h: usize, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidParameter("window radius must be at least 1".into()));
        }
        let side = 2 * r + 1;
        if w < side || h < side {
            return Err(Error::InvalidParameter(format!(
                "image {w}x{h} is smaller than one {side}x{side} window"
            )));
        }
        Ok(WindowGrid { w, h, r })
    }

    /// Pixels per window.
    pub fn size(&self) -> usize {
        (2 * self.r + 1) * (2 * self.r + 1)
    }

    pub fn centers_w(&self) -> usize {
        self.w - 2 * self.r
    }

    pub fn centers_h(&self) -> usize {
        self.h - 2 * self.r
    }

    pub fn num_windows(&self) -> usize {
        self.centers_w() * self.centers_h()
    }

    /// Window centers whose window covers column `x`.
    pub fn centers_x(&self, x: usize) -> RangeInclusive<usize> {
        x.saturating_sub(self.r).max(self.r)..=(x + self.r).min(self.w - 1 - self.r)
    }

    pub fn centers_y(&self, y: usize) -> RangeInclusive<usize> {
        y.saturating_sub(self.r).max(self.r)..=(y + self.r).min(self.h - 1 - self.r)
    }

    pub fn window_index(&self, cx: usize, cy: usize) -> usize {
        (cy - self.r) * self.centers_w() + (cx - self.r)
    }

    /// Number of full windows containing pixel `(x, y)`.
    #[cfg(test)]
    pub fn coverage(&self, x: usize, y: usize) -> usize {
        let cx = self.centers_x(x);
        let cy = self.centers_y(y);
        (cx.end() - cx.start() + 1) * (cy.end() - cy.start() + 1)
    }
}

pub(crate) fn require_rgb(image: &Image) -> Result<()> {
    image.require_channels(3, "matting Laplacian")
}

pub(crate) fn rgb(image: &Image, i: usize) -> [f64; 3] {
    let p = image.pixel(i);
    [p[0], p[1], p[2]]
}

/// Assembles `L_ij = Σ_{k ∋ i,j} [δ_ij − left(k, i) · right(k, j)]` over all
/// full windows `k`. Each row is accumulated on its own, so the result is
/// independent of the thread count.
pub(crate) fn assemble_windowed<Lf, Rf>(grid: WindowGrid, left: Lf, right: Rf) -> SparseMatrix
where
    Lf: Fn(usize, usize) -> [f64; 4] + Sync,
    Rf: Fn(usize, usize) -> [f64; 4] + Sync,
{
    let WindowGrid { w, h, r } = grid;
    let span = |c: RangeInclusive<usize>| (*c.start() - r, *c.end() + r);
    let count = |i: usize| {
        let (x0, x1) = span(grid.centers_x(i % w));
        let (y0, y1) = span(grid.centers_y(i / w));
        (x1 - x0 + 1) * (y1 - y0 + 1)
    };
    let fill = |i: usize, cols: &mut [usize], vals: &mut [f64]| {
        let (x, y) = (i % w, i / w);
        let (x0, x1) = span(grid.centers_x(x));
        let (y0, _) = span(grid.centers_y(y));
        let row_w = x1 - x0 + 1;
        vals.iter_mut().for_each(|v| *v = 0.0);
        for cy in grid.centers_y(y) {
            for cx in grid.centers_x(x) {
                let k = grid.window_index(cx, cy);
                let u = left(k, i);
                for jy in cy - r..=cy + r {
                    for jx in cx - r..=cx + r {
                        let j = jy * w + jx;
                        let v = right(k, j);
                        let q = u[0] * v[0] + u[1] * v[1] + u[2] * v[2] + u[3] * v[3];
                        let delta = if i == j { 1.0 } else { 0.0 };
                        vals[(jy - y0) * row_w + (jx - x0)] += delta - q;
                    }
                }
            }
        }
        for (slot, c) in cols.iter_mut().enumerate() {
            *c = (y0 + slot / row_w) * w + x0 + slot % row_w;
        }
    };
    let m = SparseMatrix::from_row_fn(w * h, count, fill);
    symmetrize(m)
}

/// Averages a structurally symmetric matrix with its transpose so the values
/// are exactly symmetric.
pub(crate) fn symmetrize(m: SparseMatrix) -> SparseMatrix {
    let t = m.transpose();
    debug_assert_eq!(m.col_indices(), t.col_indices());
    let values = m
        .values()
        .iter()
        .zip(t.values())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    SparseMatrix::from_csr(
        m.dim(),
        m.row_offsets().to_vec(),
        m.col_indices().to_vec(),
        values,
    )
    .expect("transpose preserves a symmetric pattern")
}

#[cfg(test)]
pub(crate) mod test_support {
    use crate::image::Image;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random_rgb(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h * 3).map(|_| rng.random::<f64>()).collect();
        Image::new(w, h, 3, data).unwrap()
    }

    pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coverage_counts() {
        let g = WindowGrid::new(5, 4, 1).unwrap();
        assert_eq!(g.coverage(0, 0), 1);
        assert_eq!(g.coverage(2, 1), 6);
        assert_eq!(g.coverage(2, 2), 6);
        assert_eq!(g.num_windows(), 6);
        assert!(WindowGrid::new(2, 5, 1).is_err());
        assert!(WindowGrid::new(5, 5, 0).is_err());
    }
}
