//! Set-level generative scores over collections of clouds.

use serde::{Deserialize, Serialize};

use super::{chamfer, emd_mean};
use crate::{par, Error, PointCloud, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseMetric {
    Chamfer,
    /// Per-point exact EMD.
    Emd,
}

impl BaseMetric {
    pub fn distance(self, a: &PointCloud, b: &PointCloud) -> Result<f64> {
        match self {
            BaseMetric::Chamfer => chamfer(a, b),
            BaseMetric::Emd => emd_mean(a, b),
        }
    }
}

impl std::str::FromStr for BaseMetric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "chamfer" | "cd" => Ok(BaseMetric::Chamfer),
            "emd" => Ok(BaseMetric::Emd),
            other => Err(format!("unknown metric `{other}` (expected chamfer or emd)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mmd: f64,
    pub cov: f64,
    pub one_nna: f64,
    pub base_metric: BaseMetric,
    pub gen_count: usize,
    pub ref_count: usize,
    pub seed: Option<u64>,
}

fn check_nonempty(gen: &[PointCloud], refs: &[PointCloud]) -> Result<()> {
    if gen.is_empty() || refs.is_empty() {
        return Err(Error::pre("generated and reference sets must be nonempty"));
    }
    Ok(())
}

fn check_emd_sizes(base: BaseMetric, sets: &[&[PointCloud]]) -> Result<()> {
    if base != BaseMetric::Emd {
        return Ok(());
    }
    let mut all = sets.iter().flat_map(|s| s.iter());
    if let Some(first) = all.next() {
        for pc in all {
            if pc.len() != first.len() {
                return Err(Error::CardinalityMismatch {
                    left: first.len(),
                    right: pc.len(),
                });
            }
        }
    }
    Ok(())
}

/// `d[g][r] = base(gen[g], refs[r])`, computed in parallel.
pub fn cross_distances(gen: &[PointCloud], refs: &[PointCloud], base: BaseMetric) -> Result<Vec<Vec<f64>>> {
    check_emd_sizes(base, &[gen, refs])?;
    let r = refs.len();
    let flat = par::map_indexed(gen.len() * r, |k| base.distance(&gen[k / r], &refs[k % r]));
    let flat: Vec<f64> = flat.into_iter().collect::<Result<_>>()?;
    Ok(flat.chunks(r.max(1)).map(|c| c.to_vec()).collect())
}

/// Symmetric pairwise matrix over `clouds`, zero diagonal.
pub fn pairwise_distances(clouds: &[PointCloud], base: BaseMetric) -> Result<Vec<Vec<f64>>> {
    check_emd_sizes(base, &[clouds])?;
    let n = clouds.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let vals = par::map_slice(&pairs, |&(i, j)| base.distance(&clouds[i], &clouds[j]));
    let mut m = vec![vec![0.0; n]; n];
    for (&(i, j), v) in pairs.iter().zip(vals) {
        let v = v?;
        m[i][j] = v;
        m[j][i] = v;
    }
    Ok(m)
}

/// Index of the smallest entry; ties go to the lower index.
fn argmin(values: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

fn mmd_from(cross: &[Vec<f64>], ref_count: usize) -> f64 {
    let total: f64 = (0..ref_count)
        .map(|r| cross.iter().map(|row| row[r]).fold(f64::INFINITY, f64::min))
        .sum();
    total / ref_count as f64
}

fn coverage_from(cross: &[Vec<f64>], ref_count: usize) -> f64 {
    let mut covered = vec![false; ref_count];
    for row in cross {
        if let Some(r) = argmin(row.iter().copied().enumerate()) {
            covered[r] = true;
        }
    }
    covered.iter().filter(|&&c| c).count() as f64 / ref_count as f64
}

fn one_nna_from(union: &[Vec<f64>], gen_count: usize) -> f64 {
    let n = union.len();
    let correct = (0..n)
        .filter(|&i| {
            let j = argmin((0..n).filter(|&j| j != i).map(|j| (j, union[i][j]))).expect("n >= 2");
            (i < gen_count) == (j < gen_count)
        })
        .count();
    correct as f64 / n as f64
}

/// Mean over reference clouds of the distance to the closest generated cloud.
pub fn mmd(gen: &[PointCloud], refs: &[PointCloud], base: BaseMetric) -> Result<f64> {
    check_nonempty(gen, refs)?;
    Ok(mmd_from(&cross_distances(gen, refs, base)?, refs.len()))
}

/// Fraction of reference clouds that are the nearest reference of at least
/// one generated cloud.
pub fn coverage(gen: &[PointCloud], refs: &[PointCloud], base: BaseMetric) -> Result<f64> {
    check_nonempty(gen, refs)?;
    Ok(coverage_from(&cross_distances(gen, refs, base)?, refs.len()))
}

/// Leave-one-out 1-nearest-neighbour accuracy of telling generated from
/// reference clouds over their union (generated first, then reference;
/// ties by lower union index). 0.5 means indistinguishable.
pub fn one_nna(gen: &[PointCloud], refs: &[PointCloud], base: BaseMetric) -> Result<f64> {
    if gen.len() < 2 || refs.len() < 2 {
        return Err(Error::pre("1-NNA needs at least two clouds in each set"));
    }
    let union: Vec<PointCloud> = gen.iter().chain(refs).cloned().collect();
    Ok(one_nna_from(&pairwise_distances(&union, base)?, gen.len()))
}

/// All three scores from one pairwise pass over the union.
pub fn evaluate_sets(
    gen: &[PointCloud],
    refs: &[PointCloud],
    base: BaseMetric,
    seed: Option<u64>,
) -> Result<MetricReport> {
    if gen.len() < 2 || refs.len() < 2 {
        return Err(Error::pre("evaluation needs at least two clouds in each set"));
    }
    let union: Vec<PointCloud> = gen.iter().chain(refs).cloned().collect();
    let m = pairwise_distances(&union, base)?;
    let g = gen.len();
    let cross: Vec<Vec<f64>> = m[..g].iter().map(|row| row[g..].to_vec()).collect();
    Ok(MetricReport {
        mmd: mmd_from(&cross, refs.len()),
        cov: coverage_from(&cross, refs.len()),
        one_nna: one_nna_from(&m, g),
        base_metric: base,
        gen_count: g,
        ref_count: refs.len(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(center: f64, n: usize, rng: &mut ChaCha8Rng) -> PointCloud {
        PointCloud::new((0..n).map(|_| std::array::from_fn(|_| center + rng.random_range(-0.5..0.5))).collect()).unwrap()
    }

    #[test]
    fn self_match_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let set: Vec<_> = (0..6).map(|_| blob(0.0, 20, &mut rng)).collect();
        assert_eq!(mmd(&set, &set, BaseMetric::Chamfer).unwrap(), 0.0);
        assert_eq!(coverage(&set, &set, BaseMetric::Chamfer).unwrap(), 1.0);
    }

    #[test]
    fn singletons() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b) = (blob(0.0, 10, &mut rng), blob(1.0, 10, &mut rng));
        let d = chamfer(&a, &b).unwrap();
        assert_eq!(mmd(&[a.clone()], &[b.clone()], BaseMetric::Chamfer).unwrap(), d);
        let refs: Vec<_> = (0..5).map(|_| blob(0.0, 10, &mut rng)).collect();
        assert!(coverage(&[a], &refs, BaseMetric::Chamfer).unwrap() <= 1.0 / 5.0);
    }

    #[test]
    fn disjoint_clusters_are_perfectly_separable() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gen: Vec<_> = (0..5).map(|_| blob(10.0, 16, &mut rng)).collect();
        let refs: Vec<_> = (0..5).map(|_| blob(-10.0, 16, &mut rng)).collect();
        assert_eq!(one_nna(&gen, &refs, BaseMetric::Chamfer).unwrap(), 1.0);
        let r = evaluate_sets(&gen, &refs, BaseMetric::Emd, Some(3)).unwrap();
        assert_eq!(r.one_nna, 1.0);
        assert_eq!((r.gen_count, r.ref_count, r.seed), (5, 5, Some(3)));
    }

    #[test]
    fn size_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let one = vec![blob(0.0, 4, &mut rng)];
        assert!(one_nna(&one, &one, BaseMetric::Chamfer).is_err());
        assert!(mmd(&[], &one, BaseMetric::Chamfer).is_err());
        let mixed = vec![blob(0.0, 4, &mut rng), blob(0.0, 5, &mut rng)];
        assert!(matches!(
            mmd(&mixed, &mixed, BaseMetric::Emd),
            Err(Error::CardinalityMismatch { .. })
        ));
        assert!(mmd(&mixed, &mixed, BaseMetric::Chamfer).is_ok());
    }

    #[test]
    fn json_keys() {
        let r = MetricReport {
            mmd: 1.0,
            cov: 0.5,
            one_nna: 0.5,
            base_metric: BaseMetric::Emd,
            gen_count: 2,
            ref_count: 3,
            seed: Some(7),
        };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["base_metric", "cov", "gen_count", "mmd", "one_nna", "ref_count", "seed"]);
        assert_eq!(v["base_metric"], "emd");
    }
}
