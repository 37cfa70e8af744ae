//! Point-cloud data model and preprocessing.

mod hole;
mod io;
mod normalize;
mod synth;

pub use hole::knn_remove_hole;
pub use io::{load_point_cloud, save_point_cloud, PointFormat};
pub use normalize::{normalize, NormalizationPolicy, NormalizationTransform};
pub use synth::{family_dataset, flatten_bump_tops, synth_patch, PatchFamily, SyntheticPatchSpec};

use ndarray::Array2;
use rand::Rng;

use crate::{Error, Result};

pub type Point3 = [f64; 3];

/// An ordered set of finite 3D points with an optional class tag.
///
/// Order is significant: the model keeps a one-to-one correspondence between
/// input index `i` and reconstructed index `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    label: Option<i64>,
}

impl PointCloud {
    /// Builds a cloud, rejecting empty input and non-finite coordinates.
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::pre("a point cloud needs at least one point"));
        }
        if let Some(i) = points
            .iter()
            .position(|p| p.iter().any(|c| !c.is_finite()))
        {
            return Err(Error::NonFinite(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points, label: None })
    }

    pub fn with_label(mut self, label: Option<i64>) -> Self {
        self.label = label;
        self
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn label(&self) -> Option<i64> {
        self.label
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false for a constructed cloud; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3 {
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        let n = self.points.len() as f64;
        c.map(|v| v / n)
    }

    /// Rows are points, columns are x, y, z.
    pub fn to_matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.points.len(), 3));
        for (i, p) in self.points.iter().enumerate() {
            for k in 0..3 {
                m[[i, k]] = p[k];
            }
        }
        m
    }

    pub fn from_matrix(m: &Array2<f64>) -> Result<Self> {
        if m.ncols() != 3 {
            return Err(Error::pre(format!("expected 3 columns, got {}", m.ncols())));
        }
        Self::new(m.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect())
    }

    /// Points at the given indices, in the given order. Keeps the label.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let pts = indices.iter().map(|&i| self.points[i]).collect();
        Ok(Self::new(pts)?.with_label(self.label))
    }
}

/// Draws `n` points uniformly without replacement. The selected points keep
/// their relative input order.
pub fn subsample<R: Rng + ?Sized>(pc: &PointCloud, n: usize, rng: &mut R) -> Result<PointCloud> {
    if n == 0 || n > pc.len() {
        return Err(Error::pre(format!(
            "cannot subsample {n} points from a cloud of {}",
            pc.len()
        )));
    }
    let mut idx = rand::seq::index::sample(rng, pc.len(), n).into_vec();
    idx.sort_unstable();
    pc.select(&idx)
}
