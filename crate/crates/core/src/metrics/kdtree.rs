//! Static 3D k-d tree for exact nearest-neighbour distance queries.
//!
//! The tree is implicit: points are permuted in place so that every range
//! `[lo, hi)` splits at its midpoint on axis `depth % 3`.

use crate::Point3;

const LEAF: usize = 8;

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3>,
}

#[inline]
fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl KdTree {
    pub fn new(points: &[Point3]) -> Self {
        let mut points = points.to_vec();
        let n = points.len();
        build(&mut points, 0, n, 0);
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Squared distance from `q` to its nearest stored point
    /// (`INFINITY` for an empty tree).
    pub fn nearest_dist2(&self, q: &Point3) -> f64 {
        let mut best = f64::INFINITY;
        self.search(q, 0, self.points.len(), 0, &mut best);
        best
    }

    pub fn nearest_dist(&self, q: &Point3) -> f64 {
        self.nearest_dist2(q).sqrt()
    }

    fn search(&self, q: &Point3, lo: usize, hi: usize, depth: usize, best: &mut f64) {
        if hi - lo <= LEAF {
            for p in &self.points[lo..hi] {
                let d = dist2(p, q);
                if d < *best {
                    *best = d;
                }
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let axis = depth % 3;
        let pivot = &self.points[mid];
        let d = dist2(pivot, q);
        if d < *best {
            *best = d;
        }
        let diff = q[axis] - pivot[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, depth + 1, best);
        if diff * diff < *best {
            self.search(q, far.0, far.1, depth + 1, best);
        }
    }
}

fn build(points: &mut [Point3], lo: usize, hi: usize, depth: usize) {
    if hi - lo <= LEAF {
        return;
    }
    let mid = (lo + hi) / 2;
    let axis = depth % 3;
    points[lo..hi].select_nth_unstable_by(mid - lo, |a, b| a[axis].total_cmp(&b[axis]));
    build(points, lo, mid, depth + 1);
    build(points, mid + 1, hi, depth + 1);
}
