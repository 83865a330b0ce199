use rayon::prelude::*;

use super::kdtree::KdTree;
use super::{require_rgb, rgb};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::sparse::{SparseMatrix, PAR_ROWS};

pub(crate) fn features(image: &Image, spatial_weight: f64) -> Vec<[f64; 5]> {
    let (w, h) = (image.width() as f64, image.height() as f64);
    (0..image.num_pixels())
        .map(|i| {
            let c = rgb(image, i);
            let x = (i % image.width()) as f64;
            let y = (i / image.width()) as f64;
            [c[0], c[1], c[2], spatial_weight * x / w, spatial_weight * y / h]
        })
        .collect()
}

/// Nonlocal nearest-neighbor Laplacian `D − A`.
///
/// For each `(k, weight)` pair, every pixel is linked to its `k` nearest
/// neighbors in `(R, G, B, weight·x/w, weight·y/h)` space with affinity
/// `1 − dist / C`, where `C` is the largest distance found for that pair.
/// Links from all pairs are summed and symmetrized as `(A + Aᵀ)/2`.
pub fn knn_laplacian(image: &Image, k_list: &[usize], distance_weights: &[f64]) -> Result<SparseMatrix> {
    require_rgb(image)?;
    let n = image.num_pixels();
    if k_list.is_empty() {
        return Err(Error::InvalidParameter("k_list is empty".into()));
    }
    if k_list.len() != distance_weights.len() {
        return Err(Error::InvalidParameter(format!(
            "{} neighbor counts but {} distance weights",
            k_list.len(),
            distance_weights.len()
        )));
    }
    if let Some(&k) = k_list.iter().find(|&&k| k == 0 || k >= n) {
        return Err(Error::InvalidParameter(format!(
            "neighbor count {k} must be in 1..{n}"
        )));
    }

    let mut triplets = Vec::with_capacity(2 * n * k_list.iter().sum::<usize>());
    for (&k, &weight) in k_list.iter().zip(distance_weights) {
        let feats = features(image, weight);
        let tree = KdTree::new(&feats);
        let query = |i: usize| tree.nearest_excluding(i, k);
        let neighbors: Vec<Vec<(f64, usize)>> = if n >= PAR_ROWS {
            (0..n).into_par_iter().map(query).collect()
        } else {
            (0..n).map(query).collect()
        };
        let max_dist = neighbors
            .iter()
            .flatten()
            .fold(0.0f64, |m, &(d2, _)| m.max(d2.sqrt()));
        for (i, list) in neighbors.iter().enumerate() {
            for &(d2, j) in list {
                let a = if max_dist == 0.0 { 1.0 } else { 1.0 - d2.sqrt() / max_dist };
                triplets.push((i, j, 0.5 * a));
                triplets.push((j, i, 0.5 * a));
            }
        }
    }
    let affinity = SparseMatrix::from_triplets(n, &triplets)?;
    let degree: Vec<f64> = (0..n).map(|i| affinity.row(i).1.iter().sum()).collect();
    Ok(affinity.scaled(-1.0).add_diagonal(&degree))
}
