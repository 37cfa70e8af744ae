//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). The end-to-end criteria share
//! one toy training run; a second identical run checks determinism.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vfnet_core::diffcore::{check_gradients, GradCheckOptions};
use vfnet_core::generation::{
    apply_direction, complete_shape, evaluate_completion, generate_mesh, latent_direction, linear_probe, sample_cloud,
    CompletionOptions, EncodingSource,
};
use vfnet_core::metrics::{
    chamfer, coverage, directional_chamfer, emd_exact, evaluate_sets, mmd, one_nna, paired_euclidean, BaseMetric,
};
use vfnet_core::model::{FlowPrior, ModelConfig, VarianceMode, VfNet};
use vfnet_core::objective::{
    elbo_with_noise, sample_noise, student_t_logpdf, train, ElboObjective, TrainConfig,
};
use vfnet_core::pointcloud::{
    family_dataset, flatten_bump_tops, knn_remove_hole, normalize, synth_patch, NormalizationPolicy, PatchFamily,
};
use vfnet_core::{Point3, PointCloud};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Equal to `1e-9` relative, or within `1e-15` absolute for values at zero.
fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-15 || rel_err(a, b) <= 1e-9
}

fn random_cloud(n: usize, rng: &mut ChaCha8Rng) -> PointCloud {
    PointCloud::new((0..n).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect()).unwrap()
}

fn dist(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

// ---------------------------------------------------------------------------
// brute-force oracles

fn oracle_directional(a: &PointCloud, b: &PointCloud) -> f64 {
    let total: f64 =
        a.points().iter().map(|p| b.points().iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min)).sum();
    total / a.len() as f64
}

fn oracle_chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
    oracle_directional(a, b) + oracle_directional(b, a)
}

fn argmin_lowest(values: impl Iterator<Item = (usize, f64)>) -> usize {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, v) in values {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn oracle_mmd(gen: &[PointCloud], refs: &[PointCloud]) -> f64 {
    refs.iter().map(|r| gen.iter().map(|g| oracle_chamfer(r, g)).fold(f64::INFINITY, f64::min)).sum::<f64>()
        / refs.len() as f64
}

fn oracle_coverage(gen: &[PointCloud], refs: &[PointCloud]) -> f64 {
    let mut covered = vec![false; refs.len()];
    for g in gen {
        covered[argmin_lowest(refs.iter().enumerate().map(|(j, r)| (j, oracle_chamfer(g, r))))] = true;
    }
    covered.iter().filter(|&&c| c).count() as f64 / refs.len() as f64
}

fn oracle_one_nna(gen: &[PointCloud], refs: &[PointCloud]) -> f64 {
    let all: Vec<(&PointCloud, bool)> = gen.iter().map(|c| (c, true)).chain(refs.iter().map(|c| (c, false))).collect();
    let correct = (0..all.len())
        .filter(|&i| {
            let j = argmin_lowest((0..all.len()).filter(|&j| j != i).map(|j| (j, oracle_chamfer(all[i].0, all[j].0))));
            all[j].1 == all[i].1
        })
        .count();
    correct as f64 / all.len() as f64
}

/// Minimum over all permutations (Heap's algorithm).
fn oracle_emd(a: &PointCloud, b: &PointCloud) -> f64 {
    let n = a.len();
    let cost: Vec<Vec<f64>> = a.points().iter().map(|p| b.points().iter().map(|q| dist(p, q)).collect()).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let eval = |perm: &[usize]| perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>();
    let mut best = eval(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(eval(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// oracle and invariant criteria

fn c1_metric_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..200 {
        let a = random_cloud(rng.random_range(1..=512), &mut rng);
        let b = random_cloud(rng.random_range(1..=512), &mut rng);
        for (got, want) in [
            (directional_chamfer(&a, &b).unwrap(), oracle_directional(&a, &b)),
            (chamfer(&a, &b).unwrap(), oracle_chamfer(&a, &b)),
        ] {
            worst = worst.max(rel_err(got, want));
            failures += usize::from(!close(got, want));
        }
    }
    for _ in 0..200 {
        let gen: Vec<_> = (0..rng.random_range(2..=10)).map(|_| random_cloud(rng.random_range(4..=64), &mut rng)).collect();
        let refs: Vec<_> = (0..rng.random_range(2..=10)).map(|_| random_cloud(rng.random_range(4..=64), &mut rng)).collect();
        for (got, want) in [
            (mmd(&gen, &refs, BaseMetric::Chamfer).unwrap(), oracle_mmd(&gen, &refs)),
            (coverage(&gen, &refs, BaseMetric::Chamfer).unwrap(), oracle_coverage(&gen, &refs)),
            (one_nna(&gen, &refs, BaseMetric::Chamfer).unwrap(), oracle_one_nna(&gen, &refs)),
        ] {
            if want != 0.0 {
                worst = worst.max(rel_err(got, want));
            }
            failures += usize::from(!close(got, want));
        }
    }
    verdict(failures == 0, format!("{failures} mismatches over 200 pair + 200 set instances, worst rel err {worst:.2e} (tol 1e-9)"))
}

fn c2_emd_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let a = random_cloud(n, &mut rng);
        let b = random_cloud(n, &mut rng);
        let (got, plan) = emd_exact(&a, &b).unwrap();
        let want = oracle_emd(&a, &b);
        let plan_cost: f64 = plan.permutation.iter().enumerate().map(|(i, &j)| dist(&a.points()[i], &b.points()[j])).sum();
        worst = worst.max((got - want).abs());
        mismatches += usize::from((got - want).abs() > 1e-12 * want.max(1.0) || (plan_cost - got).abs() > 1e-9);
    }
    let mut self_nonzero = 0;
    let mut bound_violations = 0;
    for _ in 0..500 {
        let n = rng.random_range(1..=64);
        let a = random_cloud(n, &mut rng);
        let b = random_cloud(n, &mut rng);
        let (total, _) = emd_exact(&a, &b).unwrap();
        let emd_mean = total / n as f64;
        let lower = directional_chamfer(&a, &b).unwrap().max(directional_chamfer(&b, &a).unwrap());
        bound_violations += usize::from(lower > emd_mean + 1e-9);
        self_nonzero += usize::from(emd_exact(&a, &a).unwrap().0 != 0.0);
    }
    verdict(
        mismatches == 0 && self_nonzero == 0 && bound_violations == 0,
        format!(
            "brute force n<=8: {mismatches}/100 mismatches (max abs diff {worst:.1e}); emd(X,X)!=0: {self_nonzero}/500; \
             chamfer>emd: {bound_violations}/500"
        ),
    )
}

fn c3_bound_random(rng: &mut ChaCha8Rng) -> (usize, usize) {
    let mut violations = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=128);
        let a = random_cloud(n, rng);
        let b = random_cloud(n, rng);
        let p = paired_euclidean(&a, &b).unwrap();
        violations += usize::from(directional_chamfer(&a, &b).unwrap() > p + 1e-12);
        violations += usize::from(directional_chamfer(&b, &a).unwrap() > p + 1e-12);
    }
    (violations, 1000)
}

fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        latent_dim: 4,
        encoder_widths: vec![12, 16],
        encoder_head_widths: vec![12],
        projector_widths: vec![12],
        decoder_widths: vec![12, 12],
        variance_widths: vec![8],
        flow_layers: 2,
        flow_hidden: 8,
        grid_widths: vec![8],
        grid_template_size: 16,
        ..ModelConfig::default()
    }
}

fn c4_gradients() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut model = VfNet::new(tiny_model_config(), 9).unwrap();
    // move the flow off the identity so its gradients are exercised
    for b in model.flow.blocks_mut() {
        b.values.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
    let clouds = family_dataset(3, 8, 20, 4).unwrap();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for mode in [VarianceMode::Learned, VarianceMode::Constant(0.2)] {
        let mut obj = ElboObjective::new(model.clone(), &clouds, 0.8, mode, &mut rng);
        let report = check_gradients(&mut obj, &GradCheckOptions { coords_per_block: 48, ..GradCheckOptions::default() });
        worst = worst.max(report.max_rel_error());
        ok &= report.max_rel_error() < 1e-4;
    }
    verdict(ok, format!("max relative error {worst:.2e} over all blocks (tol 1e-4)"))
}

/// `∫ 4π r² p(r) dr` over `[0, ∞)` via `r = t / (1 - t)` and composite Simpson.
fn student_t_mass(sigma: f64) -> f64 {
    let n = 200_000;
    let h = 1.0 / n as f64;
    let f = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let r = t / (1.0 - t);
        let jac = 1.0 / (1.0 - t).powi(2);
        let p = student_t_logpdf(&[r, 0.0, 0.0], &[0.0; 3], sigma, 3.0).unwrap().exp();
        4.0 * std::f64::consts::PI * r * r * p * jac
    };
    let mut s = f(0.0) + f(1.0);
    for k in 1..n {
        s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Encoder head set to a constant posterior so the library KL path can be
/// checked against the closed form.
fn fixed_posterior_model(mean: &[f64], log_variance: &[f64]) -> VfNet {
    let d = mean.len();
    let mut model = VfNet::new(ModelConfig { latent_dim: d, ..tiny_model_config() }, 3).unwrap();
    model.encoder.zero_output_layer();
    let blocks = model.encoder.blocks_mut();
    let bias = blocks.last_mut().unwrap();
    bias.values[..d].copy_from_slice(mean);
    bias.values[d..].copy_from_slice(log_variance);
    model
}

fn mc_kl(model: &VfNet, draws: usize, seed: u64) -> (f64, f64) {
    let x = family_dataset(1, 4, 6, 0).unwrap()[0].to_matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..draws {
        let eps = sample_noise(model.latent_dim(), &mut rng);
        let k = elbo_with_noise(model, &x, &eps, 1.0, VarianceMode::Constant(0.1)).unwrap().kl;
        s += k;
        s2 += k * k;
    }
    let m = s / draws as f64;
    (m, ((s2 / draws as f64 - m * m) / draws as f64).sqrt())
}

fn det(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            d = -d;
        }
        d *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    d
}

fn c5_probabilistic() -> Verdict {
    let masses: Vec<f64> = [1.0, 0.3].iter().map(|&s| student_t_mass(s)).collect();
    let mass_ok = masses.iter().all(|m| (m - 1.0).abs() < 1e-4);

    let mean = [0.5, -1.0, 0.2];
    let lv = [-0.5, 0.3, -1.2];
    let analytic: f64 = mean.iter().zip(&lv).map(|(m, l): (&f64, &f64)| 0.5 * (l.exp() + m * m - 1.0 - l)).sum();
    let (kl, se) = mc_kl(&fixed_posterior_model(&mean, &lv), 100_000, 5);
    let (kl0, se0) = mc_kl(&fixed_posterior_model(&[0.0; 3], &[0.0; 3]), 100_000, 6);
    let kl_ok = (kl - analytic).abs() <= 3.0 * se && kl0.abs() <= 3.0 * se0.max(1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut inv_err, mut logdet_err): (f64, f64) = (0.0, 0.0);
    for dim in 2..=4 {
        let mut flow = FlowPrior::new(dim, 4, 8, vfnet_core::model::Activation::Tanh, &mut rng).unwrap();
        for b in flow.blocks_mut() {
            b.values.iter_mut().for_each(|v| *v = rng.random_range(-0.6..0.6));
        }
        for _ in 0..20 {
            let z: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (u, log_det) = flow.inverse(&z);
            let back = flow.forward(&u);
            inv_err = inv_err.max(back.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            let h = 1e-6;
            let jac: Vec<Vec<f64>> = (0..dim)
                .map(|i| {
                    (0..dim)
                        .map(|j| {
                            let mut p = z.clone();
                            p[j] += h;
                            let mut m = z.clone();
                            m[j] -= h;
                            (flow.inverse(&p).0[i] - flow.inverse(&m).0[i]) / (2.0 * h)
                        })
                        .collect()
                })
                .collect();
            logdet_err = logdet_err.max((det(jac).abs().ln() - log_det).abs());
        }
    }
    let flow_ok = inv_err < 1e-6 && logdet_err < 1e-4;
    verdict(
        mass_ok && kl_ok && flow_ok,
        format!(
            "student-t mass {:.7}/{:.7} (tol 1e-4); MC KL {kl:.4} vs {analytic:.4} (3 SE = {:.4}), N(0,I) {kl0:.4} ± {se0:.4}; \
             flow inverse err {inv_err:.1e} (tol 1e-6), log-det err {logdet_err:.1e} (tol 1e-4)",
            masses[0],
            masses[1],
            3.0 * se
        ),
    )
}

fn c6_permutation() -> Verdict {
    let model = VfNet::new(ModelConfig { latent_dim: 8, ..tiny_model_config() }, 6).unwrap();
    let clouds = family_dataset(20, 16, 128, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut differing = 0;
    for pc in &clouds {
        let reference = model.encode(pc).unwrap();
        let mut idx: Vec<usize> = (0..pc.len()).collect();
        for _ in 0..100 {
            idx.shuffle(&mut rng);
            let p = model.encode(&pc.select(&idx).unwrap()).unwrap();
            let same = p.mean.iter().zip(&reference.mean).all(|(a, b)| a.to_bits() == b.to_bits())
                && p.log_variance.iter().zip(&reference.log_variance).all(|(a, b)| a.to_bits() == b.to_bits());
            differing += usize::from(!same);
        }
    }
    verdict(differing == 0, format!("{differing}/2000 permutations changed the encoding bits"))
}

fn mesh_check(model: &VfNet, dir: &std::path::Path, tag: &str, rng: &mut ChaCha8Rng) -> Result<(), String> {
    for r in [2usize, 8, 32] {
        let z = model.flow_sample(rng);
        let mesh = generate_mesh(model, &z, r).map_err(|e| e.to_string())?;
        let path = dir.join(format!("{tag}_{r}.obj"));
        mesh.save_obj(&path).map_err(|e| e.to_string())?;
        let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
        let nv = text.lines().filter(|l| l.starts_with("v ")).count();
        let faces: Vec<[usize; 3]> = text
            .lines()
            .filter_map(|l| l.strip_prefix("f "))
            .map(|l| {
                let v: Vec<usize> = l.split_whitespace().map(|t| t.parse().unwrap()).collect();
                [v[0], v[1], v[2]]
            })
            .collect();
        if faces.len() != 2 * (r - 1) * (r - 1) {
            return Err(format!("R={r}: {} faces", faces.len()));
        }
        for f in &faces {
            if f.iter().any(|&i| i == 0 || i > nv) {
                return Err(format!("R={r}: index out of range in {f:?}"));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(format!("R={r}: degenerate face {f:?}"));
            }
        }
    }
    Ok(())
}

fn c11_meshes(trained: Option<&VfNet>) -> Verdict {
    let dir = std::env::temp_dir().join(format!("vfnet-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let fresh = VfNet::new(tiny_model_config(), 11).unwrap();
    let mut result = mesh_check(&fresh, &dir, "fresh", &mut rng);
    if let (Ok(()), Some(m)) = (&result, trained) {
        result = mesh_check(m, &dir, "trained", &mut rng);
    }
    let _ = std::fs::remove_dir_all(&dir);
    match result {
        Ok(()) => verdict(true, "R in {2, 8, 32}: 2(R-1)^2 faces, valid 1-based indices, no repeated vertices"),
        Err(e) => verdict(false, e),
    }
}

// ---------------------------------------------------------------------------
// end-to-end toy run

const TRAIN_COUNT: usize = 200;
const HELD_OUT: usize = 100;
const POINTS: usize = 512;

fn toy_config() -> TrainConfig {
    let mut c = TrainConfig::with_epochs(300);
    c.warmup_epochs = 75;
    c.learning_rate = 1e-3;
    c.batch_size = 64;
    c.variance_phase_epochs = 20;
    c.grid_phase_epochs = 30;
    c.seed = 2024;
    c.model = ModelConfig {
        latent_dim: 8,
        encoder_widths: vec![32, 64],
        encoder_head_widths: vec![32],
        projector_widths: vec![32, 32],
        decoder_widths: vec![64, 64],
        variance_widths: vec![32],
        flow_layers: 4,
        flow_hidden: 32,
        grid_widths: vec![32, 32],
        grid_template_size: POINTS,
        ..ModelConfig::default()
    };
    c
}

struct ToyRun {
    init: VfNet,
    model: VfNet,
    train_set: Vec<PointCloud>,
    held: Vec<PointCloud>,
    identical: bool,
    minutes: f64,
    log_finite: bool,
}

fn toy_run() -> ToyRun {
    let data = family_dataset(TRAIN_COUNT + HELD_OUT, 32, POINTS, 77).unwrap();
    let (train_set, held) = data.split_at(TRAIN_COUNT);
    let config = toy_config();
    let mut zero = config.clone();
    (zero.epochs, zero.warmup_epochs, zero.variance_phase_epochs, zero.grid_phase_epochs) = (0, 0, 0, 0);
    let init = train(train_set, &zero).unwrap().checkpoint.model;

    let start = Instant::now();
    let first = train(train_set, &config).unwrap();
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let second = train(train_set, &config).unwrap();
    let identical = first.checkpoint.to_bytes() == second.checkpoint.to_bytes();
    let log_finite = first.log.iter().all(|r| [r.elbo, r.recon, r.kl, r.grid_chamfer].iter().flatten().all(|v| v.is_finite()));
    ToyRun {
        init,
        model: first.checkpoint.model,
        train_set: train_set.to_vec(),
        held: held.to_vec(),
        identical,
        minutes,
        log_finite,
    }
}

fn mean_paired_error(model: &VfNet, clouds: &[PointCloud]) -> f64 {
    clouds.iter().map(|pc| paired_euclidean(pc, &model.reconstruct(pc).unwrap()).unwrap()).sum::<f64>() / clouds.len() as f64
}

/// Mean over clouds of `(d(A→B) + d(B→A)) / 2` divided by the paired distance.
fn chamfer_ratio(model: &VfNet, clouds: &[PointCloud]) -> f64 {
    clouds
        .iter()
        .map(|pc| {
            let r = model.reconstruct(pc).unwrap();
            0.5 * chamfer(pc, &r).unwrap() / paired_euclidean(pc, &r).unwrap()
        })
        .sum::<f64>()
        / clouds.len() as f64
}

fn c3_bound(run: &ToyRun) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (violations, pairs) = c3_bound_random(&mut rng);
    let init = chamfer_ratio(&run.init, &run.held);
    let fin = chamfer_ratio(&run.model, &run.held);
    verdict(
        violations == 0 && fin >= 0.5 && fin > init,
        format!("{violations} bound violations over {pairs} correspondences; held-out ratio init {init:.3} -> trained {fin:.3} (need >= 0.5 and increase)"),
    )
}

fn c7_training(run: &ToyRun) -> Verdict {
    let before = mean_paired_error(&run.init, &run.held);
    let after = mean_paired_error(&run.model, &run.held);
    let factor = before / after;
    verdict(
        factor >= 10.0 && run.identical && run.log_finite && run.minutes < 30.0,
        format!(
            "held-out paired error {before:.4} -> {after:.4} ({factor:.1}x, need >= 10x); two runs byte-identical: {}; \
             finite log: {}; one run {:.1} min (limit 30)",
            run.identical, run.log_finite, run.minutes
        ),
    )
}

fn c8_completion(run: &ToyRun) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    // 512-point clouds: a 16x16 grid keeps the per-cell density of 2048 points on 32x32
    let options = CompletionOptions { oversample_factor: 3.0, occupancy_resolution: 16, fallback: true };
    let mut wins = 0;
    let (mut sum_c, mut sum_p) = (0.0, 0.0);
    for pc in run.held.iter().take(20) {
        let seed_index = rng.random_range(0..pc.len());
        let (partial, removed) = knn_remove_hole(pc, seed_index, 200).unwrap();
        let completion = complete_shape(&run.model, &partial, &options, &mut rng).unwrap();
        let c = evaluate_completion(&completion, &removed).unwrap();
        let p = evaluate_completion(&partial, &removed).unwrap();
        wins += usize::from(c < p);
        sum_c += c;
        sum_p += p;
    }
    verdict(
        wins >= 16,
        format!("completion beats partial-as-prediction in {wins}/20 (need >= 16); mean {:.4} vs {:.4}", sum_c / 20.0, sum_p / 20.0),
    )
}

fn c9_sampling(run: &ToyRun) -> Verdict {
    let refs = &run.held;
    let sub = &run.train_set[..HELD_OUT];
    let baseline = evaluate_sets(sub, refs, BaseMetric::Chamfer, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut detail = format!("train-subsample vs held-out 1-NNA {:.3} (need [0.38, 0.62])", baseline.one_nna);
    let mut ok = (0.38..=0.62).contains(&baseline.one_nna);
    for (name, source) in [("grid predictor", EncodingSource::GridPredictor), ("uniform grid", EncodingSource::UniformGrid)] {
        let samples: Vec<_> = (0..HELD_OUT).map(|_| sample_cloud(&run.model, POINTS, source, false, &mut rng).unwrap()).collect();
        let r = evaluate_sets(&samples, refs, BaseMetric::Chamfer, None).unwrap();
        detail.push_str(&format!("; samples ({name}) 1-NNA {:.3} COV {:.3} MMD {:.4}", r.one_nna, r.cov, r.mmd));
        if source == EncodingSource::GridPredictor {
            ok &= r.one_nna < 0.95 && r.cov > 0.1;
        }
    }
    verdict(ok, format!("{detail} (need grid-predictor 1-NNA < 0.95, COV > 0.1)"))
}

/// Mean height of the highest 5% of points above the median height.
fn bump_top_height(pc: &PointCloud) -> f64 {
    let mut z: Vec<f64> = pc.points().iter().map(|p| p[2]).collect();
    z.sort_by(f64::total_cmp);
    let k = (z.len() / 20).max(1);
    z[z.len() - k..].iter().sum::<f64>() / k as f64 - z[z.len() / 2]
}

/// An original patch and its worn copy, normalized with the original's
/// transform and subsampled at the same indices.
fn wear_pair(family: PatchFamily, rng: &mut ChaCha8Rng) -> (PointCloud, PointCloud) {
    let raw = synth_patch(&family.spec(32, rng.random())).unwrap();
    let worn = flatten_bump_tops(&raw, 0.6).unwrap();
    let (orig, t) = normalize(&raw, NormalizationPolicy::default()).unwrap();
    let worn = t.apply(&worn).unwrap();
    let idx = rand::seq::index::sample(rng, orig.len(), POINTS).into_vec();
    (orig.select(&idx).unwrap(), worn.select(&idx).unwrap())
}

fn c10_representation(run: &ToyRun) -> Verdict {
    let probe_set = family_dataset(200, 32, POINTS, 1010).unwrap();
    let latents: Vec<Vec<f64>> = probe_set.iter().map(|pc| run.model.encode(pc).unwrap().mean).collect();
    let labels: Vec<i64> = probe_set.iter().map(|pc| pc.label().unwrap()).collect();
    let probe = linear_probe(&latents, &labels, 0.5, 10).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(1011);
    let pairs: Vec<_> = (0..10).map(|i| wear_pair(PatchFamily::ALL[i % 4], &mut rng)).collect();
    let direction = latent_direction(&run.model, &pairs).unwrap();
    let mut monotone = 0;
    let mut heights = Vec::new();
    for pc in run.held.iter().skip(20).take(10) {
        let z = run.model.encode(pc).unwrap().mean_code();
        let h: Vec<f64> = [-1.0, 0.0, 1.0]
            .iter()
            .map(|&s| {
                let moved = apply_direction(&z, &direction, s);
                let g = run.model.project_points(pc, &moved).unwrap();
                bump_top_height(&run.model.fold(&moved, &g).unwrap())
            })
            .collect();
        // the direction points towards wear, so heights fall as the scale grows
        monotone += usize::from(h[0] > h[1] && h[1] > h[2]);
        heights.push(format!("{:.5}/{:.5}/{:.5}", h[0], h[1], h[2]));
    }
    verdict(
        probe.accuracy >= 0.9 && monotone >= 8,
        format!(
            "probe accuracy {:.3} on {} held-out codes (need >= 0.9); wear direction monotone for {monotone}/10 (need >= 8) [{}]",
            probe.accuracy,
            probe.test_count,
            heights.join(" ")
        ),
    )
}

fn main() {
    let mut failed = Vec::new();
    let mut report = |id: usize, name: &str, v: Verdict| {
        println!("{} [{id:>2}] {name}: {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
        if !v.passed {
            failed.push(id);
        }
    };
    report(1, "metric oracle equivalence", c1_metric_oracles());
    report(2, "EMD exactness", c2_emd_exactness());
    report(4, "gradient correctness", c4_gradients());
    report(5, "probabilistic components", c5_probabilistic());
    report(6, "permutation invariance", c6_permutation());

    let run = toy_run();
    report(3, "chamfer-euclidean bound", c3_bound(&run));
    report(7, "end-to-end toy training", c7_training(&run));
    report(8, "shape completion", c8_completion(&run));
    report(9, "sampling sanity", c9_sampling(&run));
    report(10, "representation", c10_representation(&run));
    report(11, "mesh validity", c11_meshes(Some(&run.model)));

    if failed.is_empty() {
        println!("acceptance: all 11 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
    }
}
