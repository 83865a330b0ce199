use super::{require_rgb, rgb};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::sparse::SparseMatrix;

#[inline]
fn color_dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// Random-walk graph Laplacian `D − W` with Gaussian color weights between
/// all pixels within Chebyshev distance `radius`.
pub fn rw_laplacian(image: &Image, sigma: f64, radius: usize) -> Result<SparseMatrix> {
    require_rgb(image)?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
    }
    if radius == 0 {
        return Err(Error::InvalidParameter("radius must be at least 1".into()));
    }
    let (w, h) = (image.width(), image.height());
    let scale = 1.0 / (2.0 * sigma * sigma);
    let xs = |x: usize| x.saturating_sub(radius)..=(x + radius).min(w - 1);
    let ys = |y: usize| y.saturating_sub(radius)..=(y + radius).min(h - 1);

    let count = |i: usize| xs(i % w).count() * ys(i / w).count();
    let fill = |i: usize, cols: &mut [usize], vals: &mut [f64]| {
        let ci = rgb(image, i);
        let mut slot = 0;
        let mut diag_slot = 0;
        let mut degree = 0.0;
        for y in ys(i / w) {
            for x in xs(i % w) {
                let j = y * w + x;
                cols[slot] = j;
                if j == i {
                    diag_slot = slot;
                } else {
                    let wij = (-color_dist2(&ci, &rgb(image, j)) * scale).exp();
                    vals[slot] = -wij;
                    degree += wij;
                }
                slot += 1;
            }
        }
        vals[diag_slot] = degree;
    };
    Ok(SparseMatrix::from_row_fn(w * h, count, fill))
}
