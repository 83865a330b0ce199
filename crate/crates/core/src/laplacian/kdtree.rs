//! Exact k-nearest-neighbor search over small fixed-dimension feature
//! vectors. Ties in distance go to the lower point index.

const LEAF_SIZE: usize = 16;

#[inline]
pub(crate) fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for d in 0..D {
        let t = a[d] - b[d];
        s += t * t;
    }
    s
}

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

pub(crate) struct KdTree<'a, const D: usize> {
    points: &'a [[f64; D]],
    perm: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a, const D: usize> KdTree<'a, D> {
    pub fn new(points: &'a [[f64; D]]) -> Self {
        let mut tree = KdTree {
            points,
            perm: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }
        let points = self.points;
        let slice = &mut self.perm[start..end];
        let mut dim = 0;
        let mut best_spread = -1.0;
        for d in 0..D {
            let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(points[i][d]), hi.max(points[i][d]))
            });
            if hi - lo > best_spread {
                best_spread = hi - lo;
                dim = d;
            }
        }
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| {
            points[a][dim].total_cmp(&points[b][dim]).then(a.cmp(&b))
        });
        let value = points[slice[mid]][dim];
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, start + mid);
        let right = self.build(start + mid, end);
        self.nodes[me] = Node::Split { dim, value, left, right };
        me
    }

    /// The `k` nearest points to `points[query]`, excluding `query` itself,
    /// as `(squared distance, index)` sorted ascending.
    pub fn nearest_excluding(&self, query: usize, k: usize) -> Vec<(f64, usize)> {
        let mut best = Vec::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, &self.points[query], query, k, &mut best);
        }
        best
    }

    fn search(&self, node: usize, q: &[f64; D], skip: usize, k: usize, best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    if i == skip {
                        continue;
                    }
                    let cand = (dist2(q, &self.points[i]), i);
                    if best.len() < k || less(cand, best[best.len() - 1]) {
                        let pos = best.partition_point(|&b| less(b, cand));
                        best.insert(pos, cand);
                        best.truncate(k);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, skip, k, best);
                // Equal distances must still be visited so the tie rule holds.
                if best.len() < k || diff * diff <= best[best.len() - 1].0 {
                    self.search(far, q, skip, k, best);
                }
            }
        }
    }
}

#[inline]
fn less(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[[f64; 3]], q: usize, k: usize) -> Vec<(f64, usize)> {
        let mut all: Vec<(f64, usize)> = (0..points.len())
            .filter(|&i| i != q)
            .map(|i| (dist2(&points[q], &points[i]), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(k);
        all
    }

    #[test]
    fn matches_brute_force_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // Coarse grid values force many exact ties.
        let points: Vec<[f64; 3]> = (0..300)
            .map(|_| [0, 1, 2].map(|_| (rng.random_range(0..4) as f64) * 0.25))
            .collect();
        let tree = KdTree::new(&points);
        for q in 0..points.len() {
            for k in [1, 5, 17] {
                assert_eq!(tree.nearest_excluding(q, k), brute(&points, q, k), "q={q} k={k}");
            }
        }
    }
}
