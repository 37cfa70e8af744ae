//! Multinomial logistic regression on latent codes.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub accuracy: f64,
    pub train_count: usize,
    pub test_count: usize,
    pub classes: Vec<i64>,
}

const MAX_ITERS: usize = 5000;
const STEP: f64 = 0.5;
const L2: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-7;

/// Stratified split, standardization on the training part, full-batch
/// gradient descent, then accuracy on the held-out part.
pub fn linear_probe(latents: &[Vec<f64>], labels: &[i64], train_fraction: f64, seed: u64) -> Result<ProbeReport> {
    if latents.len() != labels.len() {
        return Err(Error::CardinalityMismatch { left: latents.len(), right: labels.len() });
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::pre(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let dim = latents.first().map_or(0, Vec::len);
    if dim == 0 || latents.iter().any(|v| v.len() != dim) {
        return Err(Error::pre("latents must share a positive dimension"));
    }
    let mut by_class: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(Error::pre("linear probe needs at least two classes"));
    }
    if let Some((c, v)) = by_class.iter().find(|(_, v)| v.len() < 4) {
        return Err(Error::pre(format!("class {c} has {} samples, need at least 4", v.len())));
    }
    let classes: Vec<i64> = by_class.keys().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (ci, idx) in by_class.values().enumerate() {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng);
        let k = ((train_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        train.extend(idx[..k].iter().map(|&i| (i, ci)));
        test.extend(idx[k..].iter().map(|&i| (i, ci)));
    }

    let mean: Vec<f64> = (0..dim).map(|j| train.iter().map(|&(i, _)| latents[i][j]).sum::<f64>() / train.len() as f64).collect();
    let sd: Vec<f64> = (0..dim)
        .map(|j| {
            let v = train.iter().map(|&(i, _)| (latents[i][j] - mean[j]).powi(2)).sum::<f64>() / train.len() as f64;
            if v > 1e-24 { v.sqrt() } else { 1.0 }
        })
        .collect();
    let feat = |i: usize| -> Vec<f64> { (0..dim).map(|j| (latents[i][j] - mean[j]) / sd[j]).collect() };
    let xs: Vec<(Vec<f64>, usize)> = train.iter().map(|&(i, c)| (feat(i), c)).collect();

    let k = classes.len();
    // weights[c] = [w_0 .. w_{dim-1}, bias]
    let mut w = vec![vec![0.0; dim + 1]; k];
    let scores = |w: &[Vec<f64>], x: &[f64]| -> Vec<f64> {
        w.iter().map(|wc| wc[dim] + wc[..dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).collect()
    };
    for _ in 0..MAX_ITERS {
        let mut grad = vec![vec![0.0; dim + 1]; k];
        for (x, c) in &xs {
            let s = scores(&w, x);
            let mx = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|v| (v - mx).exp()).collect();
            let z: f64 = e.iter().sum();
            for (cl, g) in grad.iter_mut().enumerate() {
                let p = e[cl] / z - if cl == *c { 1.0 } else { 0.0 };
                for j in 0..dim {
                    g[j] += p * x[j];
                }
                g[dim] += p;
            }
        }
        let n = xs.len() as f64;
        let mut norm = 0.0;
        for (g, wc) in grad.iter_mut().zip(&w) {
            for j in 0..=dim {
                g[j] /= n;
                if j < dim {
                    g[j] += L2 * wc[j];
                }
                norm += g[j] * g[j];
            }
        }
        for (wc, g) in w.iter_mut().zip(&grad) {
            for j in 0..=dim {
                wc[j] -= STEP * g[j];
            }
        }
        if norm.sqrt() < GRAD_TOL {
            break;
        }
    }
    let correct = test
        .iter()
        .filter(|&&(i, c)| {
            let s = scores(&w, &feat(i));
            let best = (0..k).fold(0, |b, cl| if s[cl] > s[b] { cl } else { b });
            best == c
        })
        .count();
    Ok(ProbeReport { accuracy: correct as f64 / test.len() as f64, train_count: train.len(), test_count: test.len(), classes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn separable_blobs_are_classified_perfectly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..60 {
            let c = (i % 2) as i64;
            let off = if c == 0 { -3.0 } else { 3.0 };
            x.push(vec![off + 0.3 * rng.sample::<f64, _>(StandardNormal), rng.sample(StandardNormal)]);
            y.push(c);
        }
        let r = linear_probe(&x, &y, 0.5, 2).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.train_count + r.test_count, 60);
    }

    #[test]
    fn shuffled_labels_are_near_chance() {
        // averaged over repetitions so the check is about the estimator, not one draw
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut acc = 0.0;
        let reps = 20;
        for r in 0..reps {
            let x: Vec<Vec<f64>> = (0..100).map(|_| (0..4).map(|_| rng.sample(StandardNormal)).collect()).collect();
            let mut y: Vec<i64> = (0..100).map(|i| (i % 2) as i64).collect();
            y.shuffle(&mut rng);
            acc += linear_probe(&x, &y, 0.5, r).unwrap().accuracy;
        }
        let acc = acc / reps as f64;
        assert!((0.35..=0.65).contains(&acc), "{acc}");
    }

    #[test]
    fn class_count_preconditions() {
        let x = vec![vec![0.0]; 8];
        assert!(linear_probe(&x, &[0; 8], 0.5, 0).is_err());
        assert!(linear_probe(&x, &[0, 0, 0, 0, 0, 1, 1, 1], 0.5, 0).is_err());
        assert!(linear_probe(&x, &[0, 0, 0, 0, 1, 1, 1, 1], 0.5, 0).is_ok());
    }
}
