use rayon::prelude::*;

use super::{assemble_windowed, require_rgb, rgb, WindowGrid};
use crate::dense::{sym3_inverse, sym3_mul, Sym3};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::sparse::{SparseMatrix, PAR_ROWS};

/// Per-window color mean and inverse of the regularized covariance
/// `Σ_k + (eps/|w|)·Id`.
pub(crate) struct WindowStats {
    pub mean: Vec<[f64; 3]>,
    pub inv_cov: Vec<Sym3>,
}

impl WindowStats {
    /// Centered two-pass statistics, computed directly per window.
    pub fn compute(image: &Image, grid: WindowGrid, eps: f64) -> Result<Self> {
        let WindowGrid { w, r, .. } = grid;
        let m = grid.size() as f64;
        let stats = |k: usize| -> Option<([f64; 3], Sym3)> {
            let cx = k % grid.centers_w() + r;
            let cy = k / grid.centers_w() + r;
            let mut mean = [0.0; 3];
            for y in cy - r..=cy + r {
                for x in cx - r..=cx + r {
                    let c = rgb(image, y * w + x);
                    (0..3).for_each(|a| mean[a] += c[a]);
                }
            }
            mean.iter_mut().for_each(|v| *v /= m);
            let mut cov = [0.0; 6];
            for y in cy - r..=cy + r {
                for x in cx - r..=cx + r {
                    let c = rgb(image, y * w + x);
                    let d = [c[0] - mean[0], c[1] - mean[1], c[2] - mean[2]];
                    cov[0] += d[0] * d[0];
                    cov[1] += d[0] * d[1];
                    cov[2] += d[0] * d[2];
                    cov[3] += d[1] * d[1];
                    cov[4] += d[1] * d[2];
                    cov[5] += d[2] * d[2];
                }
            }
            cov.iter_mut().for_each(|v| *v /= m);
            let reg = eps / m;
            cov[0] += reg;
            cov[3] += reg;
            cov[5] += reg;
            sym3_inverse(&cov).map(|inv| (mean, inv))
        };
        let n = grid.num_windows();
        let per_window: Vec<_> = if n >= PAR_ROWS {
            (0..n).into_par_iter().map(stats).collect()
        } else {
            (0..n).map(stats).collect()
        };
        let mut mean = Vec::with_capacity(n);
        let mut inv_cov = Vec::with_capacity(n);
        for s in per_window {
            let (mu, inv) = s.ok_or_else(|| {
                Error::InvalidParameter(
                    "singular window covariance; use a positive eps".into(),
                )
            })?;
            mean.push(mu);
            inv_cov.push(inv);
        }
        Ok(WindowStats { mean, inv_cov })
    }
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be >= 0, got {eps}")));
    }
    Ok(())
}

/// Closed-form matting Laplacian built from local color-line windows.
pub fn cf_laplacian(image: &Image, eps: f64, radius: usize) -> Result<SparseMatrix> {
    require_rgb(image)?;
    check_eps(eps)?;
    let grid = WindowGrid::new(image.width(), image.height(), radius)?;
    let stats = WindowStats::compute(image, grid, eps)?;
    let inv_m = 1.0 / grid.size() as f64;

    let left = |k: usize, i: usize| {
        let mu = stats.mean[k];
        let c = rgb(image, i);
        let d = sym3_mul(&stats.inv_cov[k], &[c[0] - mu[0], c[1] - mu[1], c[2] - mu[2]]);
        [d[0] * inv_m, d[1] * inv_m, d[2] * inv_m, inv_m]
    };
    let right = |k: usize, j: usize| {
        let mu = stats.mean[k];
        let c = rgb(image, j);
        [c[0] - mu[0], c[1] - mu[1], c[2] - mu[2], 1.0]
    };
    Ok(assemble_windowed(grid, left, right))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplacian::test_support::random_rgb;
    use nalgebra::{Matrix3, Vector3};

    /// Literal sum over windows, straight from the entry formula.
    fn oracle(image: &Image, eps: f64, r: usize) -> Vec<Vec<f64>> {
        let (w, h) = (image.width(), image.height());
        let n = w * h;
        let m = ((2 * r + 1) * (2 * r + 1)) as f64;
        let mut l = vec![vec![0.0; n]; n];
        for cy in r..h - r {
            for cx in r..w - r {
                let idx: Vec<usize> = (cy - r..=cy + r)
                    .flat_map(|y| (cx - r..=cx + r).map(move |x| y * w + x))
                    .collect();
                let px = |i: usize| Vector3::new(image.get(i % w, i / w, 0), image.get(i % w, i / w, 1), image.get(i % w, i / w, 2));
                let mu = idx.iter().map(|&i| px(i)).sum::<Vector3<f64>>() / m;
                let mut cov = Matrix3::zeros();
                for &i in &idx {
                    let d = px(i) - mu;
                    cov += d * d.transpose();
                }
                cov /= m;
                let inv = (cov + Matrix3::identity() * (eps / m)).try_inverse().unwrap();
                for &i in &idx {
                    for &j in &idx {
                        let q = (px(i) - mu).dot(&(inv * (px(j) - mu)));
                        let delta = if i == j { 1.0 } else { 0.0 };
                        l[i][j] += delta - (1.0 + q) / m;
                    }
                }
            }
        }
        l
    }

    #[test]
    fn constant_image_gives_centering_matrix() {
        let img = Image::filled(3, 3, 3, 0.4).unwrap();
        let l = cf_laplacian(&img, 1e-7, 1).unwrap().to_dense();
        for i in 0..9 {
            for j in 0..9 {
                let want = if i == j { 1.0 - 1.0 / 9.0 } else { -1.0 / 9.0 };
                assert!((l[i][j] - want).abs() < 1e-12, "({i},{j}) {} vs {want}", l[i][j]);
            }
        }
    }

    #[test]
    fn matches_window_oracle() {
        for (w, h, r, seed) in [(4, 4, 1, 1), (8, 8, 1, 2), (7, 5, 2, 3), (8, 8, 2, 4)] {
            let img = random_rgb(w, h, seed);
            let l = cf_laplacian(&img, 1e-7, r).unwrap().to_dense();
            let o = oracle(&img, 1e-7, r);
            let worst = l
                .iter()
                .flatten()
                .zip(o.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-10, "{w}x{h} r={r}: {worst:e}");
        }
    }

    #[test]
    fn four_by_four_oracle_tight() {
        let img = random_rgb(4, 4, 11);
        let l = cf_laplacian(&img, 1e-7, 1).unwrap().to_dense();
        let o = oracle(&img, 1e-7, 1);
        for i in 0..16 {
            for j in 0..16 {
                assert!((l[i][j] - o[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn annihilates_constants() {
        let img = random_rgb(9, 7, 5);
        let l = cf_laplacian(&img, 1e-7, 1).unwrap();
        let y = l.mul_vec(&vec![1.0; 63]);
        assert!(y.iter().all(|v| v.abs() < 1e-10), "{:?}", y);
    }

    #[test]
    fn rejects_bad_input() {
        let img = random_rgb(2, 5, 1);
        assert!(cf_laplacian(&img, 1e-7, 1).is_err());
        let img = random_rgb(5, 5, 1);
        assert!(cf_laplacian(&img, -1.0, 1).is_err());
        let gray = Image::filled(5, 5, 1, 0.5).unwrap();
        assert!(cf_laplacian(&gray, 1e-7, 1).is_err());
    }
}
