use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::{Error, Result};

/// How a cloud is scaled after centering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormalizationPolicy {
    /// Center at the centroid, then divide by the given quantile (in `(0, 1]`)
    /// of the per-point max-absolute coordinate.
    CentroidQuantile(f64),
}

impl Default for NormalizationPolicy {
    fn default() -> Self {
        NormalizationPolicy::CentroidQuantile(0.995)
    }
}

/// `normalized = (raw - offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTransform {
    pub scale: f64,
    pub offset: [f64; 3],
}

impl NormalizationTransform {
    pub fn apply(&self, pc: &PointCloud) -> Result<PointCloud> {
        let pts = pc
            .points()
            .iter()
            .map(|p| std::array::from_fn(|k| (p[k] - self.offset[k]) / self.scale))
            .collect();
        Ok(PointCloud::new(pts)?.with_label(pc.label()))
    }

    pub fn invert(&self, pc: &PointCloud) -> Result<PointCloud> {
        let pts = pc
            .points()
            .iter()
            .map(|p| std::array::from_fn(|k| p[k] * self.scale + self.offset[k]))
            .collect();
        Ok(PointCloud::new(pts)?.with_label(pc.label()))
    }
}

/// Centers `pc` and rescales it so the chosen quantile of max-abs coordinates
/// lands on 1.0, i.e. nearly all points fall inside `[-1, 1]^3`.
///
/// The quantile uses the nearest-rank definition: with `n` points and
/// quantile `q`, at most `n - ceil(q n)` points end up outside the unit cube.
pub fn normalize(
    pc: &PointCloud,
    policy: NormalizationPolicy,
) -> Result<(PointCloud, NormalizationTransform)> {
    if pc.len() < 2 {
        return Err(Error::pre("normalization needs at least two points"));
    }
    let NormalizationPolicy::CentroidQuantile(q) = policy;
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::pre(format!("quantile {q} outside (0, 1]")));
    }
    let offset = pc.centroid();
    let mut extents: Vec<f64> = pc
        .points()
        .iter()
        .map(|p| (0..3).map(|k| (p[k] - offset[k]).abs()).fold(0.0, f64::max))
        .collect();
    let rank = ((q * extents.len() as f64).ceil() as usize).clamp(1, extents.len());
    let (_, scale, _) = extents.select_nth_unstable_by(rank - 1, |a, b| a.total_cmp(b));
    let scale = *scale;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::DegenerateGeometry(
            "points coincide with their centroid; cannot choose a scale".into(),
        ));
    }
    let t = NormalizationTransform { scale, offset };
    Ok((t.apply(pc)?, t))
}
