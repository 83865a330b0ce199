use rayon::prelude::*;

use super::{assemble_windowed, require_rgb, rgb, WindowGrid};
use crate::dense::{mat4_mul, spd4_inverse};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::sparse::{SparseMatrix, PAR_ROWS};

/// Learning-based Laplacian: per window, alpha is regressed on the window
/// colors plus a bias, and `L` accumulates `(Id − F_k)ᵀ(Id − F_k)` with
/// `F_k = X (XᵀX + eps·Id)⁻¹ Xᵀ`.
///
/// With `M = (XᵀX + eps·Id)⁻¹` and `G = XᵀX`, the window block equals
/// `Id − X (2M − MGM) Xᵀ = Id − X M (G + 2·eps·Id) M Xᵀ`, so only a 4×4
/// matrix per window is kept.
pub fn lbdm_laplacian(image: &Image, eps: f64, radius: usize) -> Result<SparseMatrix> {
    require_rgb(image)?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "learning-based Laplacian needs eps > 0, got {eps}"
        )));
    }
    let grid = WindowGrid::new(image.width(), image.height(), radius)?;
    let WindowGrid { w, r, .. } = grid;

    let window_q = |k: usize| -> Option<[f64; 16]> {
        let cx = k % grid.centers_w() + r;
        let cy = k / grid.centers_w() + r;
        let mut g = [0.0; 16];
        for y in cy - r..=cy + r {
            for x in cx - r..=cx + r {
                let c = rgb(image, y * w + x);
                let row = [c[0], c[1], c[2], 1.0];
                for a in 0..4 {
                    for b in 0..4 {
                        g[a * 4 + b] += row[a] * row[b];
                    }
                }
            }
        }
        let mut reg = g;
        for d in 0..4 {
            reg[d * 5] += eps;
        }
        let m = spd4_inverse(&reg)?;
        let mut mid = g;
        for d in 0..4 {
            mid[d * 5] += 2.0 * eps;
        }
        let mut q = mat4_mul(&mat4_mul(&m, &mid), &m);
        for a in 0..4 {
            for b in a + 1..4 {
                let v = 0.5 * (q[a * 4 + b] + q[b * 4 + a]);
                q[a * 4 + b] = v;
                q[b * 4 + a] = v;
            }
        }
        Some(q)
    };
    let n = grid.num_windows();
    let qs: Option<Vec<[f64; 16]>> = if n >= PAR_ROWS {
        (0..n).into_par_iter().map(window_q).collect()
    } else {
        (0..n).map(window_q).collect()
    };
    let qs = qs.ok_or_else(|| Error::InvalidParameter("window regression is singular".into()))?;

    let left = |k: usize, i: usize| {
        let c = rgb(image, i);
        let x = [c[0], c[1], c[2], 1.0];
        let q = &qs[k];
        let mut out = [0.0; 4];
        for a in 0..4 {
            out[a] = q[a * 4] * x[0] + q[a * 4 + 1] * x[1] + q[a * 4 + 2] * x[2] + q[a * 4 + 3];
        }
        out
    };
    let right = |_k: usize, j: usize| {
        let c = rgb(image, j);
        [c[0], c[1], c[2], 1.0]
    };
    Ok(assemble_windowed(grid, left, right))
}
