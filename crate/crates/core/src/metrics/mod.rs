//! Reconstruction distances and generative-evaluation scores.
//!
//! Every metric here is unscaled; any ×100 / ×1000 presentation factor
//! belongs to the reporting layer.

mod distance;
mod emd;
pub mod kdtree;
mod sets;

pub use distance::{chamfer, directional_chamfer, nearest_distances, paired_euclidean};
pub use emd::{emd_exact, emd_exact_capped, emd_mean, solve_assignment, AssignmentPlan, DEFAULT_EMD_CAP};
pub use sets::{
    coverage, cross_distances, evaluate_sets, mmd, one_nna, pairwise_distances, BaseMetric, MetricReport,
};
