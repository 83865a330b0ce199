//! Window sums in O(1) per output via compensated (double-double) prefix
//! sums, so the rounding error does not grow with the line length the way a
//! plain prefix difference would.

use super::WindowGrid;

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Prefix sums of `line` as (high, low) pairs; entry `t` sums `line[..t]`.
struct Prefix {
    hi: Vec<f64>,
    lo: Vec<f64>,
}

impl Prefix {
    fn new() -> Self {
        Prefix { hi: Vec::new(), lo: Vec::new() }
    }

    fn fill(&mut self, line: impl Iterator<Item = f64>) {
        self.hi.clear();
        self.lo.clear();
        let (mut hi, mut lo) = (0.0, 0.0);
        self.hi.push(hi);
        self.lo.push(lo);
        for v in line {
            let (s, e) = two_sum(hi, v);
            hi = s;
            lo += e;
            self.hi.push(hi);
            self.lo.push(lo);
        }
    }

    /// Sum of entries `a..=b`.
    #[inline]
    fn range(&self, a: usize, b: usize) -> f64 {
        (self.hi[b + 1] - self.hi[a]) + (self.lo[b + 1] - self.lo[a])
    }
}

/// Sums a pixel-grid field over every full window; output is indexed by
/// window (center grid, row-major).
pub(crate) fn gather(grid: WindowGrid, field: &[f64]) -> Vec<f64> {
    let WindowGrid { w, h, r } = grid;
    let (cw, ch) = (grid.centers_w(), grid.centers_h());
    debug_assert_eq!(field.len(), w * h);
    let mut rows = vec![0.0; cw * h];
    let mut prefix = Prefix::new();
    for y in 0..h {
        prefix.fill(field[y * w..(y + 1) * w].iter().copied());
        for c in 0..cw {
            rows[y * cw + c] = prefix.range(c, c + 2 * r);
        }
    }
    let mut out = vec![0.0; cw * ch];
    for c in 0..cw {
        prefix.fill((0..h).map(|y| rows[y * cw + c]));
        for cy in 0..ch {
            out[cy * cw + c] = prefix.range(cy, cy + 2 * r);
        }
    }
    out
}

/// For every pixel, sums a window-indexed field over the windows that
/// contain it.
pub(crate) fn scatter(grid: WindowGrid, field: &[f64]) -> Vec<f64> {
    let WindowGrid { w, h, r } = grid;
    let (cw, ch) = (grid.centers_w(), grid.centers_h());
    debug_assert_eq!(field.len(), cw * ch);
    // Center coordinate range covering pixel coordinate x, in center-grid units.
    let span = |x: usize, cn: usize| (x.saturating_sub(2 * r), x.min(cn - 1));
    let mut cols = vec![0.0; w * ch];
    let mut prefix = Prefix::new();
    for cy in 0..ch {
        prefix.fill(field[cy * cw..(cy + 1) * cw].iter().copied());
        for x in 0..w {
            let (a, b) = span(x, cw);
            cols[cy * w + x] = prefix.range(a, b);
        }
    }
    let mut out = vec![0.0; w * h];
    for x in 0..w {
        prefix.fill((0..ch).map(|cy| cols[cy * w + x]));
        for y in 0..h {
            let (a, b) = span(y, ch);
            out[y * w + x] = prefix.range(a, b);
        }
    }
    out
}
