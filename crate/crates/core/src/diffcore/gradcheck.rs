//! Central finite-difference verification of analytic gradients.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Network, ParameterBlock};

/// A scalar function of a set of parameter blocks with an analytic gradient.
pub trait Objective {
    fn blocks(&self) -> Vec<&ParameterBlock>;
    fn blocks_mut(&mut self) -> Vec<&mut ParameterBlock>;
    fn value(&self) -> f64;
    /// Gradient blocks aligned with [`Objective::blocks`].
    fn value_and_gradient(&self) -> (f64, Vec<Vec<f64>>);
}

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Coordinates sampled per block (all of them for smaller blocks).
    pub coords_per_block: usize,
    pub step: f64,
    /// Denominator floor for the relative error, so that entries that are
    /// zero up to rounding do not report huge ratios.
    pub abs_floor: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { coords_per_block: 64, step: 1e-5, abs_floor: 1e-6, tolerance: 1e-4, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientReport {
    pub blocks: Vec<BlockCheck>,
    pub tolerance: f64,
}

impl GradientReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    /// Blocks whose worst coordinate exceeds the tolerance.
    pub fn flagged(&self) -> Vec<&BlockCheck> {
        self.blocks.iter().filter(|b| b.max_rel_error >= self.tolerance).collect()
    }

    pub fn passed(&self) -> bool {
        self.flagged().is_empty()
    }
}

/// Compares the analytic gradient of `obj` with central differences
/// `(f(θ + h) - f(θ - h)) / 2h` on a random subset of coordinates per block.
/// Parameters are restored exactly afterwards.
pub fn check_gradients<O: Objective + ?Sized>(obj: &mut O, opts: &GradCheckOptions) -> GradientReport {
    let (_, analytic) = obj.value_and_gradient();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let sizes: Vec<(String, usize)> = obj.blocks().iter().map(|b| (b.name.clone(), b.len())).collect();
    let mut report = Vec::with_capacity(sizes.len());
    for (bi, (name, len)) in sizes.into_iter().enumerate() {
        let coords: Vec<usize> = if len <= opts.coords_per_block {
            (0..len).collect()
        } else {
            rand::seq::index::sample(&mut rng, len, opts.coords_per_block).into_vec()
        };
        let mut check = BlockCheck {
            name,
            checked: coords.len(),
            max_rel_error: 0.0,
            max_abs_analytic: 0.0,
            max_abs_numeric: 0.0,
        };
        for c in coords {
            let orig = obj.blocks()[bi].values[c];
            obj.blocks_mut()[bi].values[c] = orig + opts.step;
            let up = obj.value();
            obj.blocks_mut()[bi].values[c] = orig - opts.step;
            let down = obj.value();
            obj.blocks_mut()[bi].values[c] = orig;
            let numeric = (up - down) / (2.0 * opts.step);
            let a = analytic[bi][c];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.abs_floor);
            check.max_rel_error = check.max_rel_error.max(rel);
            check.max_abs_analytic = check.max_abs_analytic.max(a.abs());
            check.max_abs_numeric = check.max_abs_numeric.max(numeric.abs());
        }
        report.push(check);
    }
    GradientReport { blocks: report, tolerance: opts.tolerance }
}

/// `sum((net(input, side) - target)^2)`, the standard fixture for checking a
/// single network.
#[derive(Debug, Clone)]
pub struct SquaredErrorObjective {
    pub network: Network,
    pub input: Array2<f64>,
    pub side: Option<Array1<f64>>,
    pub target: Array2<f64>,
}

impl Objective for SquaredErrorObjective {
    fn blocks(&self) -> Vec<&ParameterBlock> {
        self.network.blocks().iter().collect()
    }

    fn blocks_mut(&mut self) -> Vec<&mut ParameterBlock> {
        self.network.blocks_mut().iter_mut().collect()
    }

    fn value(&self) -> f64 {
        let y = self.network.forward(self.input.view(), self.side.as_ref().map(|s| s.view())).expect("forward");
        (&y - &self.target).mapv(|v| v * v).sum()
    }

    fn value_and_gradient(&self) -> (f64, Vec<Vec<f64>>) {
        let (y, tape) = self
            .network
            .forward_recorded(self.input.view(), self.side.as_ref().map(|s| s.view()))
            .expect("forward");
        let r = &y - &self.target;
        let b = self.network.backward(&tape, (2.0 * &r).view()).expect("backward");
        (r.mapv(|v| v * v).sum(), b.params)
    }
}
