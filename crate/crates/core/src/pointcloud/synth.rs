//! Synthetic disk-topology surfaces: Gaussian-bump height fields over the
//! square `[-1, 1]^2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPatchSpec {
    /// Points per side; the patch has `grid_resolution^2` points.
    pub grid_resolution: usize,
    pub bump_count: usize,
    pub amplitude_range: (f64, f64),
    pub width_range: (f64, f64),
    pub rng_seed: u64,
    /// Fixed bump centers, cycled if shorter than `bump_count`. Centers are
    /// drawn uniformly from `[-0.7, 0.7]^2` when absent.
    pub anchors: Option<Vec<[f64; 2]>>,
    /// Uniform perturbation applied to each anchor, per axis.
    pub anchor_jitter: f64,
}

impl Default for SyntheticPatchSpec {
    fn default() -> Self {
        Self {
            grid_resolution: 32,
            bump_count: 2,
            amplitude_range: (0.15, 0.45),
            width_range: (0.2, 0.35),
            rng_seed: 0,
            anchors: None,
            anchor_jitter: 0.1,
        }
    }
}

/// Four shape families that differ in bump layout, used as labelled data for
/// representation experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatchFamily {
    /// One central bump.
    Dome,
    /// Two bumps along x.
    PairX,
    /// Two bumps along y.
    PairY,
    /// Four bumps on the diagonals.
    Quad,
}

impl PatchFamily {
    pub const ALL: [PatchFamily; 4] = [
        PatchFamily::Dome,
        PatchFamily::PairX,
        PatchFamily::PairY,
        PatchFamily::Quad,
    ];

    pub fn label(self) -> i64 {
        self as i64
    }

    pub fn from_label(label: i64) -> Option<Self> {
        Self::ALL.get(usize::try_from(label).ok()?).copied()
    }

    pub fn anchors(self) -> Vec<[f64; 2]> {
        match self {
            PatchFamily::Dome => vec![[0.0, 0.0]],
            PatchFamily::PairX => vec![[-0.5, 0.0], [0.5, 0.0]],
            PatchFamily::PairY => vec![[0.0, -0.5], [0.0, 0.5]],
            PatchFamily::Quad => vec![[-0.5, -0.5], [0.5, -0.5], [-0.5, 0.5], [0.5, 0.5]],
        }
    }

    pub fn spec(self, grid_resolution: usize, rng_seed: u64) -> SyntheticPatchSpec {
        let anchors = self.anchors();
        SyntheticPatchSpec {
            grid_resolution,
            bump_count: anchors.len(),
            anchors: Some(anchors),
            rng_seed,
            ..SyntheticPatchSpec::default()
        }
    }
}

impl SyntheticPatchSpec {
    fn validate(&self) -> Result<()> {
        if self.grid_resolution < 4 {
            return Err(Error::pre(format!(
                "grid resolution must be at least 4, got {}",
                self.grid_resolution
            )));
        }
        for (name, (lo, hi)) in [("amplitude", self.amplitude_range), ("width", self.width_range)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::pre(format!("{name} range ({lo}, {hi}) must satisfy 0 < lo <= hi")));
            }
        }
        if matches!(&self.anchors, Some(a) if a.is_empty()) && self.bump_count > 0 {
            return Err(Error::pre("anchor list is empty"));
        }
        Ok(())
    }
}

struct Bump {
    center: [f64; 2],
    amplitude: f64,
    width: f64,
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Samples `grid_resolution^2` points of the height field, each lattice
/// position jittered by up to half a cell in x and y.
pub fn synth_patch(spec: &SyntheticPatchSpec) -> Result<PointCloud> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let bumps: Vec<Bump> = (0..spec.bump_count)
        .map(|i| {
            let center = match &spec.anchors {
                Some(a) => {
                    let c = a[i % a.len()];
                    let j = spec.anchor_jitter;
                    let mut jit = || if j > 0.0 { rng.random_range(-j..j) } else { 0.0 };
                    [c[0] + jit(), c[1] + jit()]
                }
                None => [rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7)],
            };
            Bump {
                center,
                amplitude: draw(&mut rng, spec.amplitude_range),
                width: draw(&mut rng, spec.width_range),
            }
        })
        .collect();

    let r = spec.grid_resolution;
    let step = 2.0 / (r - 1) as f64;
    let mut points = Vec::with_capacity(r * r);
    for i in 0..r {
        for j in 0..r {
            let x = (-1.0 + i as f64 * step + rng.random_range(-0.5..0.5) * step).clamp(-1.0, 1.0);
            let y = (-1.0 + j as f64 * step + rng.random_range(-0.5..0.5) * step).clamp(-1.0, 1.0);
            let z = bumps
                .iter()
                .map(|b| {
                    let d2 = (x - b.center[0]).powi(2) + (y - b.center[1]).powi(2);
                    b.amplitude * (-d2 / (2.0 * b.width * b.width)).exp()
                })
                .sum();
            points.push([x, y, z]);
        }
    }
    PointCloud::new(points)
}

/// Synthetic wear: clips heights above `keep_fraction` of the maximum.
/// Expects a raw patch whose base plane is `z = 0`.
pub fn flatten_bump_tops(pc: &PointCloud, keep_fraction: f64) -> Result<PointCloud> {
    if !(0.0..=1.0).contains(&keep_fraction) {
        return Err(Error::pre(format!("keep fraction {keep_fraction} outside [0, 1]")));
    }
    let top = pc.points().iter().map(|p| p[2]).fold(f64::NEG_INFINITY, f64::max);
    let cap = keep_fraction * top;
    let pts = pc
        .points()
        .iter()
        .map(|p| [p[0], p[1], p[2].min(cap)])
        .collect();
    Ok(PointCloud::new(pts)?.with_label(pc.label()))
}

/// Labelled mixture of the four [`PatchFamily`] shapes (cycled in order),
/// each normalized and subsampled to `points` points.
pub fn family_dataset(count: usize, grid_resolution: usize, points: usize, seed: u64) -> Result<Vec<PointCloud>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let family = PatchFamily::ALL[i % PatchFamily::ALL.len()];
            let raw = synth_patch(&family.spec(grid_resolution, rng.random()))?;
            let (pc, _) = super::normalize(&raw, super::NormalizationPolicy::default())?;
            Ok(super::subsample(&pc, points, &mut rng)?.with_label(Some(family.label())))
        })
        .collect()
}
