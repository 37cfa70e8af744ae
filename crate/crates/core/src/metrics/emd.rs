//! Exact earth mover's distance between equal-size clouds via the
//! Hungarian algorithm (shortest augmenting paths with potentials, O(n^3)).

use serde::{Deserialize, Serialize};

use crate::{par, Error, PointCloud, Result};

pub const DEFAULT_EMD_CAP: usize = 1024;

/// An optimal one-to-one matching: `permutation[i]` is the index in the
/// second cloud assigned to point `i` of the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub permutation: Vec<usize>,
    pub total_cost: f64,
}

/// Minimum-cost perfect matching on a dense square cost matrix (row-major).
/// Returns the column assigned to each row.
pub fn solve_assignment(costs: &[f64], n: usize) -> Vec<usize> {
    debug_assert_eq!(costs.len(), n * n);
    if n == 0 {
        return Vec::new();
    }
    // 1-based potentials; column 0 is the virtual source.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|f| *f = false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let row = &costs[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    assignment
}

/// Exact EMD with the default size cap.
pub fn emd_exact(a: &PointCloud, b: &PointCloud) -> Result<(f64, AssignmentPlan)> {
    emd_exact_capped(a, b, DEFAULT_EMD_CAP)
}

/// Returns the minimal total Euclidean transport cost and the plan that
/// achieves it. Clouds larger than `cap` are refused rather than
/// approximated.
pub fn emd_exact_capped(a: &PointCloud, b: &PointCloud, cap: usize) -> Result<(f64, AssignmentPlan)> {
    if a.len() != b.len() {
        return Err(Error::CardinalityMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n > cap {
        return Err(Error::CapExceeded { n, cap });
    }
    let (pa, pb) = (a.points(), b.points());
    let rows = par::map_indexed(n, |i| {
        pb.iter()
            .map(|q| ((pa[i][0] - q[0]).powi(2) + (pa[i][1] - q[1]).powi(2) + (pa[i][2] - q[2]).powi(2)).sqrt())
            .collect::<Vec<f64>>()
    });
    let costs: Vec<f64> = rows.concat();
    let permutation = solve_assignment(&costs, n);
    let total_cost = permutation.iter().enumerate().map(|(i, &j)| costs[i * n + j]).sum();
    Ok((total_cost, AssignmentPlan { permutation, total_cost }))
}

/// Per-point EMD (total cost divided by the cloud size), the scale on which
/// EMD is compared with Chamfer means.
pub fn emd_mean(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let (total, _) = emd_exact(a, b)?;
    Ok(total / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pc(v: Vec<[f64; 3]>) -> PointCloud {
        PointCloud::new(v).unwrap()
    }

    #[test]
    fn identity_costs_nothing() {
        let a = pc((0..9).map(|i| [i as f64, (i * i) as f64, 1.0]).collect());
        let (cost, plan) = emd_exact(&a, &a).unwrap();
        assert_eq!(cost, 0.0);
        assert_eq!(plan.permutation, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn two_point_example() {
        let a = pc(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let b = pc(vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let (cost, plan) = emd_exact(&a, &b).unwrap();
        assert_eq!(cost, 1.0);
        assert_eq!(plan.permutation, vec![0, 1]);
    }

    #[test]
    fn small_integer_matrix() {
        let costs = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let asg = solve_assignment(&costs, 3);
        let total: f64 = asg.iter().enumerate().map(|(i, &j)| costs[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn errors_are_explicit() {
        let a = pc(vec![[0.0; 3]; 3]);
        let b = pc(vec![[0.0; 3]; 4]);
        assert!(matches!(emd_exact(&a, &b), Err(Error::CardinalityMismatch { .. })));
        assert!(matches!(
            emd_exact_capped(&b, &b, 3),
            Err(Error::CapExceeded { n: 4, cap: 3 })
        ));
    }

    #[test]
    fn plan_is_a_bijection_with_consistent_cost() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| pc((0..60).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect());
        let (a, b) = (mk(&mut rng), mk(&mut rng));
        let (cost, plan) = emd_exact(&a, &b).unwrap();
        let mut seen = plan.permutation.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..60).collect::<Vec<_>>());
        let recomputed: f64 = plan
            .permutation
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                let (p, q) = (a.points()[i], b.points()[j]);
                ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
            })
            .sum();
        assert!((recomputed - cost).abs() <= 1e-9 * cost.max(1.0));
        assert_eq!(cost, plan.total_cost);
    }
}
