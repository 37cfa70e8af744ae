use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::directional_chamfer;
use crate::model::{PointEncodings, VfNet};
use crate::{Error, PointCloud, Result};

/// Counts of encodings per cell of an `R × R` grid over `[-1, 1]^2`,
/// row-major with the first coordinate selecting the row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    resolution: usize,
    counts: Vec<usize>,
}

impl OccupancyGrid {
    pub fn new(resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::pre("occupancy resolution must be positive"));
        }
        Ok(Self { resolution, counts: vec![0; resolution * resolution] })
    }

    pub fn from_encodings(g: &PointEncodings, resolution: usize) -> Result<Self> {
        let mut grid = Self::new(resolution)?;
        for i in 0..g.len() {
            grid.insert(g.get(i));
        }
        Ok(grid)
    }

    pub fn cell_of(&self, p: [f64; 2]) -> (usize, usize) {
        let idx = |v: f64| (((v + 1.0) * 0.5 * self.resolution as f64).floor().max(0.0) as usize).min(self.resolution - 1);
        (idx(p[0]), idx(p[1]))
    }

    pub fn insert(&mut self, p: [f64; 2]) {
        let (a, b) = self.cell_of(p);
        self.counts[a * self.resolution + b] += 1;
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn count(&self, a: usize, b: usize) -> usize {
        self.counts[a * self.resolution + b]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Lower corner and side length of a cell.
    pub fn cell_bounds(&self, a: usize, b: usize) -> ([f64; 2], f64) {
        let h = 2.0 / self.resolution as f64;
        ([-1.0 + a as f64 * h, -1.0 + b as f64 * h], h)
    }

    /// Smallest cell rectangle containing every occupied cell.
    pub fn occupied_bounds(&self) -> Option<((usize, usize), (usize, usize))> {
        let r = self.resolution;
        let occ: Vec<(usize, usize)> = (0..r * r).filter(|&k| self.counts[k] > 0).map(|k| (k / r, k % r)).collect();
        if occ.is_empty() {
            return None;
        }
        let lo = (occ.iter().map(|c| c.0).min().unwrap(), occ.iter().map(|c| c.1).min().unwrap());
        let hi = (occ.iter().map(|c| c.0).max().unwrap(), occ.iter().map(|c| c.1).max().unwrap());
        Some((lo, hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionOptions {
    /// Generated points as a multiple of the partial cloud's size.
    pub oversample_factor: f64,
    pub occupancy_resolution: usize,
    /// Use the least occupied cells when no cell is empty.
    pub fallback: bool,
}

impl Default for CompletionOptions {
    fn default() -> Self {
        Self { oversample_factor: 3.0, occupancy_resolution: 32, fallback: true }
    }
}

/// Convex hull of a planar point set, counter-clockwise (monotone chain).
fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn inside_hull(hull: &[[f64; 2]], p: [f64; 2]) -> bool {
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|i| {
        let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
    })
}

/// Cells eligible for completion: empty cells whose centre lies inside the
/// convex hull of the encodings, or failing that the least occupied cells
/// there. Degenerate hulls fall back to the occupied bounding rectangle.
fn candidate_cells(grid: &OccupancyGrid, hull: &[[f64; 2]], fallback: bool) -> Result<Vec<(usize, usize)>> {
    let ((a0, b0), (a1, b1)) = grid.occupied_bounds().ok_or_else(|| Error::pre("no encodings to complete"))?;
    let rect: Vec<(usize, usize)> = (a0..=a1).flat_map(|a| (b0..=b1).map(move |b| (a, b))).collect();
    let centre = |(a, b): (usize, usize)| {
        let (lo, h) = grid.cell_bounds(a, b);
        [lo[0] + 0.5 * h, lo[1] + 0.5 * h]
    };
    let mut cells: Vec<(usize, usize)> = rect.iter().copied().filter(|&c| inside_hull(hull, centre(c))).collect();
    if cells.is_empty() {
        cells = rect;
    }
    let empty: Vec<(usize, usize)> = cells.iter().copied().filter(|&(a, b)| grid.count(a, b) == 0).collect();
    if !empty.is_empty() {
        return Ok(empty);
    }
    if !fallback {
        return Err(Error::Saturated);
    }
    let least = cells.iter().map(|&(a, b)| grid.count(a, b)).min().expect("nonempty");
    Ok(cells.into_iter().filter(|&(a, b)| grid.count(a, b) == least).collect())
}

/// Generates points for the unobserved part of `partial`: encodings are drawn
/// uniformly from empty occupancy cells inside the encodings' convex hull and folded with the partial cloud's
/// posterior mean. Only the generated points are returned.
pub fn complete_shape<R: Rng + ?Sized>(
    model: &VfNet,
    partial: &PointCloud,
    options: &CompletionOptions,
    rng: &mut R,
) -> Result<PointCloud> {
    if !(options.oversample_factor > 0.0) {
        return Err(Error::pre("oversample factor must be positive"));
    }
    let count = (options.oversample_factor * partial.len() as f64).round() as usize;
    if count == 0 {
        return Err(Error::pre("completion would generate no points"));
    }
    let x = partial.to_matrix();
    let z = model.encode_matrix(&x)?.mean_code();
    let g = model.project_matrix(&x, &z)?;
    let grid = OccupancyGrid::from_encodings(&g, options.occupancy_resolution)?;
    let hull = convex_hull(&(0..g.len()).map(|i| g.get(i)).collect::<Vec<_>>());
    let cells = candidate_cells(&grid, &hull, options.fallback)?;
    let mut enc = ndarray::Array2::zeros((count, 2));
    for i in 0..count {
        let (a, b) = cells[rng.random_range(0..cells.len())];
        let (lo, h) = grid.cell_bounds(a, b);
        enc[[i, 0]] = (lo[0] + h * rng.random::<f64>()).clamp(-1.0, 1.0);
        enc[[i, 1]] = (lo[1] + h * rng.random::<f64>()).clamp(-1.0, 1.0);
    }
    model.fold(&z, &PointEncodings::new(enc)?)
}

/// One-directional Chamfer from the completion to the removed points.
pub fn evaluate_completion(completed: &PointCloud, removed: &PointCloud) -> Result<f64> {
    directional_chamfer(completed, removed)
}
