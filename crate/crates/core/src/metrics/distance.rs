use super::kdtree::KdTree;
use crate::{par, Error, PointCloud, Result};

/// Distance from each point of `a` to its nearest neighbour in `b`,
/// in `a`'s order.
pub fn nearest_distances(a: &PointCloud, b: &PointCloud) -> Vec<f64> {
    let tree = KdTree::new(b.points());
    par::map_slice(a.points(), |p| tree.nearest_dist(p))
}

/// Mean over `a` of the distance to the nearest point of `b`.
pub fn directional_chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::pre("chamfer distance of an empty cloud"));
    }
    let d = nearest_distances(a, b);
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Sum of the two directional Chamfer means. Symmetric by construction.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    Ok(directional_chamfer(a, b)? + directional_chamfer(b, a)?)
}

/// Mean distance between corresponding points `a[i]` and `b[i]`.
pub fn paired_euclidean(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::CardinalityMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let s: f64 = a
        .points()
        .iter()
        .zip(b.points())
        .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
        .sum();
    Ok(s / a.len() as f64)
}
