//! Small dense kernels: 3×3 symmetric inverses for window covariances and a
//! Cholesky factorization for the 4×4 ridge systems and the coarsest grid.

/// Packed symmetric 3×3 matrix `[xx, xy, xz, yy, yz, zz]`.
pub(crate) type Sym3 = [f64; 6];

/// Inverse of a symmetric 3×3 matrix via the adjugate. Returns `None` when
/// the determinant is not strictly positive.
pub(crate) fn sym3_inverse(m: &Sym3) -> Option<Sym3> {
    let [a, b, c, d, e, f] = *m;
    let c00 = d * f - e * e;
    let c01 = c * e - b * f;
    let c02 = b * e - c * d;
    let c11 = a * f - c * c;
    let c12 = b * c - a * e;
    let c22 = a * d - b * b;
    let det = a * c00 + b * c01 + c * c02;
    if !(det.is_finite() && det > 0.0) {
        return None;
    }
    let inv = 1.0 / det;
    Some([
        c00 * inv,
        c01 * inv,
        c02 * inv,
        c11 * inv,
        c12 * inv,
        c22 * inv,
    ])
}

#[inline]
pub(crate) fn sym3_mul(m: &Sym3, v: &[f64; 3]) -> [f64; 3] {
    [
        m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
        m[1] * v[0] + m[3] * v[1] + m[4] * v[2],
        m[2] * v[0] + m[4] * v[1] + m[5] * v[2],
    ]
}

/// In-place dense Cholesky of a row-major `n×n` SPD matrix. On success the
/// lower triangle holds `L` with `A = L Lᵀ`.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize) -> Option<()> {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Some(())
}

/// Solves `L Lᵀ x = b` in place given the factor from [`cholesky_in_place`].
pub(crate) fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Inverse of a 4×4 SPD matrix (row-major).
pub(crate) fn spd4_inverse(m: &[f64; 16]) -> Option<[f64; 16]> {
    let mut l = *m;
    cholesky_in_place(&mut l, 4)?;
    let mut inv = [0.0; 16];
    for col in 0..4 {
        let mut e = [0.0; 4];
        e[col] = 1.0;
        cholesky_solve(&l, 4, &mut e);
        for row in 0..4 {
            inv[row * 4 + col] = e[row];
        }
    }
    // Symmetrize the rounding noise.
    for i in 0..4 {
        for j in i + 1..4 {
            let v = 0.5 * (inv[i * 4 + j] + inv[j * 4 + i]);
            inv[i * 4 + j] = v;
            inv[j * 4 + i] = v;
        }
    }
    Some(inv)
}

pub(crate) fn mat4_mul(a: &[f64; 16], b: &[f64; 16]) -> [f64; 16] {
    let mut out = [0.0; 16];
    for i in 0..4 {
        for j in 0..4 {
            out[i * 4 + j] = (0..4).map(|k| a[i * 4 + k] * b[k * 4 + j]).sum();
        }
    }
    out
}
