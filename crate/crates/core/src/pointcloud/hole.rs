use super::PointCloud;
use crate::{Error, Result};

/// Cuts a hole around `seed_index`: the seed plus its `k - 1` nearest
/// neighbours (Euclidean, ties by lower index) are removed.
///
/// Returns `(remaining, removed)`. Both keep input order, and together they
/// are exactly the input as a multiset.
pub fn knn_remove_hole(
    pc: &PointCloud,
    seed_index: usize,
    k: usize,
) -> Result<(PointCloud, PointCloud)> {
    let n = pc.len();
    if seed_index >= n {
        return Err(Error::pre(format!("seed index {seed_index} out of range for {n} points")));
    }
    if k == 0 || k >= n {
        return Err(Error::pre(format!("hole size {k} must be in 1..{n}")));
    }
    let seed = pc.points()[seed_index];
    let mut order: Vec<(f64, usize)> = pc
        .points()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != seed_index)
        .map(|(i, p)| {
            let d2 = (0..3).map(|c| (p[c] - seed[c]).powi(2)).sum::<f64>();
            (d2, i)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut removed_mask = vec![false; n];
    removed_mask[seed_index] = true;
    for &(_, i) in order.iter().take(k - 1) {
        removed_mask[i] = true;
    }
    let (mut keep, mut drop) = (Vec::with_capacity(n - k), Vec::with_capacity(k));
    for (i, &r) in removed_mask.iter().enumerate() {
        if r {
            drop.push(i);
        } else {
            keep.push(i);
        }
    }
    Ok((pc.select(&keep)?, pc.select(&drop)?))
}
