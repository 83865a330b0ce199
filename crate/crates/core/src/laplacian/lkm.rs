use super::boxsum::{gather, scatter};
use super::cf::check_eps;
use super::{require_rgb, WindowGrid};
use crate::dense::{sym3_inverse, sym3_mul, Sym3};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::operator::LinearOperator;

/// Matrix-free closed-form Laplacian. Every window statistic and every
/// window sum is a box filter, so both construction and [`apply`] cost O(N)
/// whatever the radius.
///
/// [`apply`]: LinearOperator::apply
#[derive(Clone, Debug)]
pub struct LkmOperator {
    grid: WindowGrid,
    /// Planar image channels.
    color: [Vec<f64>; 3],
    /// Per-window mean color, planar over the center grid.
    mean: [Vec<f64>; 3],
    /// Per-window inverse regularized covariance.
    inv_cov: Vec<Sym3>,
    /// Number of full windows containing each pixel.
    coverage: Vec<f64>,
    diag: Vec<f64>,
}

/// Builds the matrix-free operator for the same `L` as
/// [`cf_laplacian`](super::cf_laplacian) with identical `eps` and `radius`.
pub fn lkm_operator(image: &Image, eps: f64, radius: usize) -> Result<LkmOperator> {
    require_rgb(image)?;
    check_eps(eps)?;
    let grid = WindowGrid::new(image.width(), image.height(), radius)?;
    let m = grid.size() as f64;
    let color = [image.channel(0), image.channel(1), image.channel(2)];

    let sums: Vec<Vec<f64>> = color.iter().map(|c| gather(grid, c)).collect();
    let mut second = Vec::with_capacity(6);
    for a in 0..3 {
        for b in a..3 {
            let prod: Vec<f64> = color[a].iter().zip(&color[b]).map(|(x, y)| x * y).collect();
            second.push(gather(grid, &prod));
        }
    }

    let nw = grid.num_windows();
    let mean = [0, 1, 2].map(|c| sums[c].iter().map(|s| s / m).collect::<Vec<f64>>());
    let mut inv_cov = Vec::with_capacity(nw);
    for k in 0..nw {
        let mu = [mean[0][k], mean[1][k], mean[2][k]];
        let mut cov = [0.0; 6];
        let mut slot = 0;
        for a in 0..3 {
            for b in a..3 {
                cov[slot] = second[slot][k] / m - mu[a] * mu[b];
                slot += 1;
            }
        }
        let reg = eps / m;
        cov[0] += reg;
        cov[3] += reg;
        cov[5] += reg;
        inv_cov.push(sym3_inverse(&cov).ok_or_else(|| {
            Error::InvalidParameter("singular window covariance; use a positive eps".into())
        })?);
    }

    let coverage = scatter(grid, &vec![1.0; nw]);

    // diag_i = n_i − (1/m)[n_i + I_iᵀ(ΣD)I_i − 2 I_iᵀ(ΣDμ) + Σ μᵀDμ]
    let d_fields: Vec<Vec<f64>> = (0..6)
        .map(|s| scatter(grid, &inv_cov.iter().map(|d| d[s]).collect::<Vec<_>>()))
        .collect();
    let mut dmu = [vec![0.0; nw], vec![0.0; nw], vec![0.0; nw]];
    let mut mudmu = vec![0.0; nw];
    for k in 0..nw {
        let mu = [mean[0][k], mean[1][k], mean[2][k]];
        let v = sym3_mul(&inv_cov[k], &mu);
        for c in 0..3 {
            dmu[c][k] = v[c];
        }
        mudmu[k] = v[0] * mu[0] + v[1] * mu[1] + v[2] * mu[2];
    }
    let dmu_sum = dmu.map(|f| scatter(grid, &f));
    let mudmu_sum = scatter(grid, &mudmu);
    let n = grid.w * grid.h;
    let diag = (0..n)
        .map(|i| {
            let c = [color[0][i], color[1][i], color[2][i]];
            let d: Sym3 = [0, 1, 2, 3, 4, 5].map(|s| d_fields[s][i]);
            let dc = sym3_mul(&d, &c);
            let quad = c[0] * dc[0] + c[1] * dc[1] + c[2] * dc[2];
            let cross = c[0] * dmu_sum[0][i] + c[1] * dmu_sum[1][i] + c[2] * dmu_sum[2][i];
            coverage[i] - (coverage[i] + quad - 2.0 * cross + mudmu_sum[i]) / m
        })
        .collect();

    Ok(LkmOperator {
        grid,
        color,
        mean,
        inv_cov,
        coverage,
        diag,
    })
}

impl LkmOperator {
    pub fn radius(&self) -> usize {
        self.grid.r
    }
}

impl LinearOperator for LkmOperator {
    fn dim(&self) -> usize {
        self.grid.w * self.grid.h
    }

    fn apply(&self, p: &[f64], out: &mut [f64]) {
        let grid = self.grid;
        let m = grid.size() as f64;
        assert_eq!(p.len(), self.dim());
        assert_eq!(out.len(), self.dim());

        let sum_p = gather(grid, p);
        let sum_ip = [0, 1, 2].map(|c| {
            let prod: Vec<f64> = self.color[c].iter().zip(p).map(|(a, b)| a * b).collect();
            gather(grid, &prod)
        });

        let nw = grid.num_windows();
        let mut coef_a = [vec![0.0; nw], vec![0.0; nw], vec![0.0; nw]];
        let mut coef_b = vec![0.0; nw];
        for k in 0..nw {
            let mu = [self.mean[0][k], self.mean[1][k], self.mean[2][k]];
            let pbar = sum_p[k] / m;
            let cov = [0, 1, 2].map(|c| sum_ip[c][k] / m - mu[c] * pbar);
            let a = sym3_mul(&self.inv_cov[k], &cov);
            for c in 0..3 {
                coef_a[c][k] = a[c];
            }
            coef_b[k] = pbar - (a[0] * mu[0] + a[1] * mu[1] + a[2] * mu[2]);
        }

        let sa = coef_a.map(|f| scatter(grid, &f));
        let sb = scatter(grid, &coef_b);
        for (i, o) in out.iter_mut().enumerate() {
            let fit = sa[0][i] * self.color[0][i]
                + sa[1][i] * self.color[1][i]
                + sa[2][i] * self.color[2][i]
                + sb[i];
            *o = self.coverage[i] * p[i] - fit;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        self.diag.clone()
    }

    fn heap_bytes(&self) -> usize {
        let f = std::mem::size_of::<f64>();
        let n = self.dim();
        let nw = self.grid.num_windows();
        (3 * n + 3 * nw + 6 * nw + 2 * n) * f
    }
}
