use super::Preconditioner;
use crate::dense::{cholesky_in_place, cholesky_solve};
use crate::error::{Error, Result};
use crate::sparse::{rect_matmul, rect_matmul_general, RectMatrix, SparseMatrix};

/// Levels with at most this many unknowns are solved directly.
pub const COARSEST_MAX: usize = 32;

#[derive(Clone, Debug)]
struct Level {
    shape: (usize, usize),
    a: SparseMatrix,
    inv_diag: Vec<f64>,
    restrict: RectMatrix,
    prolong: RectMatrix,
}

#[derive(Clone, Debug)]
struct Coarsest {
    shape: (usize, usize),
    n: usize,
    factor: Vec<f64>,
}

/// Geometric multigrid hierarchy on a pixel grid, used as a CG
/// preconditioner (one V-cycle per application).
#[derive(Clone, Debug)]
pub struct VcycleHierarchy {
    levels: Vec<Level>,
    coarsest: Coarsest,
    pre_smooth: usize,
    post_smooth: usize,
    omega: f64,
}

impl VcycleHierarchy {
    /// Grid shapes `(height, width)` from fine to coarsest.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.levels
            .iter()
            .map(|l| l.shape)
            .chain(std::iter::once(self.coarsest.shape))
            .collect()
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len() + 1
    }

    /// Galerkin operator of level `level` (0 = finest), if it is not the
    /// directly solved coarsest level.
    pub fn operator(&self, level: usize) -> Option<&SparseMatrix> {
        self.levels.get(level).map(|l| &l.a)
    }

    pub fn heap_bytes(&self) -> usize {
        let f = std::mem::size_of::<f64>();
        self.levels
            .iter()
            .map(|l| l.a.heap_bytes() + l.inv_diag.len() * f + l.restrict.heap_bytes() + l.prolong.heap_bytes())
            .sum::<usize>()
            + self.coarsest.factor.len() * f
    }

    fn cycle(&self, level: usize, r: &[f64]) -> Vec<f64> {
        let Some(lv) = self.levels.get(level) else {
            let mut x = r.to_vec();
            cholesky_solve(&self.coarsest.factor, self.coarsest.n, &mut x);
            return x;
        };
        let n = r.len();
        let mut x = vec![0.0; n];
        let mut ax = vec![0.0; n];
        for _ in 0..self.pre_smooth {
            self.smooth(lv, r, &mut x, &mut ax);
        }
        lv.a.matvec(&x, &mut ax);
        let res: Vec<f64> = r.iter().zip(&ax).map(|(ri, ai)| ri - ai).collect();
        let mut coarse_r = vec![0.0; lv.restrict.rows];
        lv.restrict.matvec(&res, &mut coarse_r);
        let coarse_e = self.cycle(level + 1, &coarse_r);
        let mut fine_e = vec![0.0; n];
        lv.prolong.matvec(&coarse_e, &mut fine_e);
        x.iter_mut().zip(&fine_e).for_each(|(xi, ei)| *xi += ei);
        for _ in 0..self.post_smooth {
            self.smooth(lv, r, &mut x, &mut ax);
        }
        x
    }

    /// One damped Jacobi sweep `x += ω D⁻¹ (r − A x)`.
    fn smooth(&self, lv: &Level, r: &[f64], x: &mut [f64], ax: &mut [f64]) {
        lv.a.matvec(x, ax);
        for i in 0..x.len() {
            x[i] += self.omega * lv.inv_diag[i] * (r[i] - ax[i]);
        }
    }
}

/// Full-weighting restriction from an `h×w` grid onto its
/// `ceil(h/2)×ceil(w/2)` coarsening, with out-of-grid taps clamped onto the
/// border.
fn full_weighting(h: usize, w: usize) -> RectMatrix {
    let (hc, wc) = (h.div_ceil(2), w.div_ceil(2));
    const TAP: [f64; 3] = [0.25, 0.5, 0.25];
    let mut row_offsets = Vec::with_capacity(hc * wc + 1);
    row_offsets.push(0);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(9);
    for cy in 0..hc {
        for cx in 0..wc {
            entries.clear();
            for (dy, wy) in TAP.iter().enumerate() {
                let fy = (2 * cy + dy).saturating_sub(1).min(h - 1);
                for (dx, wx) in TAP.iter().enumerate() {
                    let fx = (2 * cx + dx).saturating_sub(1).min(w - 1);
                    entries.push((fy * w + fx, wy * wx));
                }
            }
            entries.sort_by_key(|e| e.0);
            let row_start = col_indices.len();
            for &(c, v) in &entries {
                if col_indices.len() > row_start && *col_indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
    }
    RectMatrix {
        rows: hc * wc,
        cols: h * w,
        row_offsets,
        col_indices,
        values,
    }
}

/// Builds the hierarchy: full-weighting restriction `R`, prolongation
/// `P = 4Rᵀ`, Galerkin coarse operators `R A P`, damped Jacobi smoothing,
/// and a dense Cholesky solve once a level has at most
/// [`COARSEST_MAX`] unknowns. Equal pre/post sweep counts make the cycle a
/// symmetric operator.
pub fn vcycle_build(
    a: &SparseMatrix,
    grid_shape: (usize, usize),
    pre_smooth: usize,
    post_smooth: usize,
    omega: f64,
) -> Result<VcycleHierarchy> {
    let (h, w) = grid_shape;
    if h * w != a.dim() || h == 0 || w == 0 {
        return Err(Error::DimensionMismatch(format!(
            "grid {h}x{w} does not match operator dimension {}",
            a.dim()
        )));
    }
    if !(omega > 0.0 && omega < 2.0) {
        return Err(Error::InvalidParameter(format!("damping {omega} outside (0, 2)")));
    }
    let mut levels = Vec::new();
    let mut current = a.clone();
    let mut shape = grid_shape;
    while current.dim() > COARSEST_MAX {
        let (h, w) = shape;
        let restrict = full_weighting(h, w);
        let mut prolong = restrict.transpose();
        prolong.values.iter_mut().for_each(|v| *v *= 4.0);
        let ap = rect_matmul_general(&current, &prolong);
        let coarse = rect_matmul(&restrict, &ap, restrict.rows);
        let diag = current.diagonal();
        if let Some(i) = diag.iter().position(|d| !(*d > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "V-cycle smoother needs a positive diagonal; entry {i} on level {} is {}",
                levels.len(),
                diag[i]
            )));
        }
        levels.push(Level {
            shape,
            inv_diag: diag.iter().map(|d| 1.0 / d).collect(),
            a: current,
            restrict,
            prolong,
        });
        current = coarse;
        shape = (h.div_ceil(2), w.div_ceil(2));
    }

    let n = current.dim();
    let mut factor: Vec<f64> = current.to_dense().into_iter().flatten().collect();
    cholesky_in_place(&mut factor, n).ok_or(Error::NotFactorizable { shift: 0.0 })?;
    Ok(VcycleHierarchy {
        levels,
        coarsest: Coarsest { shape, n, factor },
        pre_smooth,
        post_smooth,
        omega,
    })
}

pub fn vcycle_apply(h: &VcycleHierarchy, r: &[f64]) -> Vec<f64> {
    h.cycle(0, r)
}

impl Preconditioner for VcycleHierarchy {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(&self.cycle(0, r));
    }

    fn heap_bytes(&self) -> usize {
        VcycleHierarchy::heap_bytes(self)
    }
}
