use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use vfnet_core::diffcore::{check_gradients, GradCheckOptions};
use vfnet_core::generation::{
    complete_shape, evaluate_completion, generate_mesh, interpolate as interpolate_meshes, linear_probe, sample_cloud,
    CompletionOptions, EncodingSource,
};
use vfnet_core::metrics::{chamfer, directional_chamfer, emd_exact_capped, evaluate_sets, BaseMetric, MetricReport};
use vfnet_core::model::{Activation, ModelConfig, VarianceMode, VfNet};
use vfnet_core::objective::{load_checkpoint, save_checkpoint, train_with, ElboObjective, TrainError};
use vfnet_core::pointcloud::{
    family_dataset, flatten_bump_tops, knn_remove_hole, normalize, save_point_cloud, synth_patch, NormalizationPolicy,
    PatchFamily, PointFormat,
};
use vfnet_core::{Error as CoreError, PointCloud};

use crate::artifacts::{ensure_dir, write_json, write_sidecar};
use crate::config::{RawConfig, TrainSettings};
use crate::data::{cloud_files, load_dir, prepare, read_labels, LABELS_FILE};
use crate::error::CliError;
use crate::{
    CheckArgs, CompleteArgs, EvaluateArgs, InterpolateArgs, MeshArgs, MetricArg, ProbeArgs, ReconstructArgs,
    SampleArgs, SourceArg, SynthArgs, TrainArgs,
};

pub const CHECKPOINT_FILE: &str = "checkpoint.vfn";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const RESOLVED_CONFIG_FILE: &str = "resolved.cfg";

pub fn set_threads(threads: usize) -> Result<(), CliError> {
    if threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))?;
    Ok(())
}

fn load_model(path: &Path) -> Result<VfNet, CliError> {
    Ok(load_checkpoint(path)?.model)
}

fn source(s: SourceArg) -> EncodingSource {
    match s {
        SourceArg::UniformGrid => EncodingSource::UniformGrid,
        SourceArg::GridPredictor => EncodingSource::GridPredictor,
    }
}

fn save_xyz(pc: &PointCloud, path: &Path) -> Result<(), CliError> {
    Ok(save_point_cloud(pc, path, PointFormat::Xyz)?)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let mut raw = RawConfig::load(&args.config)?;
    for o in &args.overrides {
        raw.set(o)?;
    }
    let settings = TrainSettings::resolve(&raw, args.seed)?;
    ensure_dir(&args.out)?;
    let resolved = args.out.join(RESOLVED_CONFIG_FILE);
    std::fs::write(&resolved, settings.render()).map_err(|e| CliError::io(&resolved, e))?;

    let mut data_rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (_, clouds) = load_dir(&settings.train_dir, Some(settings.points), &mut data_rng)?;

    let log_path = args.out.join(TRAIN_LOG_FILE);
    let file = std::fs::File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    let mut log = std::io::BufWriter::new(file);
    let mut log_error = None;
    let result = train_with(&clouds, &settings.train, |rec| {
        if log_error.is_none() {
            if let Err(e) = writeln!(log, "{}", rec.to_json_line()) {
                log_error = Some(e);
            }
        }
    });
    if let Some(e) = log_error {
        return Err(CliError::io(&log_path, e));
    }
    log.flush().map_err(|e| CliError::io(&log_path, e))?;

    let ckpt_path = args.out.join(CHECKPOINT_FILE);
    match result {
        Ok(outcome) => {
            save_checkpoint(&outcome.checkpoint, &ckpt_path)?;
            println!("{}", ckpt_path.display());
            Ok(())
        }
        Err(TrainError::Diverged { epoch, last_finite }) => {
            save_checkpoint(&last_finite, &ckpt_path)?;
            Err(CliError::Diverged { epoch, path: ckpt_path })
        }
        Err(TrainError::Other(e)) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct Spread {
    mean: f64,
    sd: f64,
}

fn spread(values: &[f64]) -> Spread {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Spread { mean, sd }
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let base = match args.metric {
        MetricArg::Chamfer => BaseMetric::Chamfer,
        MetricArg::Emd => BaseMetric::Emd,
    };
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let model = match (&args.gen_dir, args.sample, &args.checkpoint) {
        (Some(_), None, _) => None,
        (None, Some(0), _) => return Err(CliError::Usage("--sample must be positive".into())),
        (None, Some(_), Some(c)) => Some(load_model(c)?),
        (None, Some(_), None) => return Err(CliError::Usage("--sample requires --checkpoint".into())),
        _ => return Err(CliError::Usage("exactly one of --gen-dir and --sample is required".into())),
    };

    let mut reports: Vec<MetricReport> = Vec::new();
    for seed in args.seed..args.seed + args.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, refs) = load_dir(&args.ref_dir, args.points, &mut rng)?;
        let gen = match (&args.gen_dir, &model) {
            (Some(dir), _) => load_dir(dir, args.points, &mut rng)?.1,
            (None, Some(m)) => {
                let n = args.points.unwrap_or(refs[0].len());
                (0..args.sample.unwrap_or(0))
                    .map(|_| sample_cloud(m, n, source(args.source), false, &mut rng))
                    .collect::<Result<Vec<_>, _>>()?
            }
            (None, None) => unreachable!("checked above"),
        };
        reports.push(evaluate_sets(&gen, &refs, base, Some(seed))?);
    }

    let doc = if reports.len() == 1 {
        serde_json::to_value(&reports[0]).expect("serializable")
    } else {
        let pick = |f: fn(&MetricReport) -> f64| spread(&reports.iter().map(f).collect::<Vec<_>>());
        json!({
            "base_metric": base,
            "seeds": reports.iter().map(|r| r.seed).collect::<Vec<_>>(),
            "mmd": pick(|r| r.mmd),
            "cov": pick(|r| r.cov),
            "one_nna": pick(|r| r.one_nna),
            "runs": reports,
        })
    };
    let text = serde_json::to_string_pretty(&doc).expect("serializable");
    println!("{text}");
    if let Some(out) = &args.out {
        write_json(out, &doc)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ReconRow {
    file: String,
    points: usize,
    chamfer: f64,
    emd: Option<f64>,
}

pub fn reconstruct(args: ReconstructArgs) -> Result<(), CliError> {
    let model = load_model(&args.checkpoint)?;
    ensure_dir(&args.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (files, clouds) = load_dir(&args.input_dir, args.points, &mut rng)?;
    let mut rows = Vec::with_capacity(files.len());
    for (f, pc) in files.iter().zip(&clouds) {
        let rec = model.reconstruct(pc)?;
        let name = file_name(f);
        let stem = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        save_xyz(&rec, &args.out.join(format!("{stem}.xyz")))?;
        let emd = match emd_exact_capped(pc, &rec, args.emd_cap) {
            Ok((total, _)) => Some(total / pc.len() as f64),
            Err(CoreError::CapExceeded { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        rows.push(ReconRow { file: name, points: pc.len(), chamfer: chamfer(pc, &rec)?, emd });
    }
    let mean_cd = rows.iter().map(|r| r.chamfer).sum::<f64>() / rows.len() as f64;
    let emds: Option<Vec<f64>> = rows.iter().map(|r| r.emd).collect();
    let mean_emd = emds.map(|v| v.iter().sum::<f64>() / v.len() as f64);

    let mut table = String::from("file\tpoints\tchamfer\temd\n");
    for r in &rows {
        let emd = r.emd.map_or("-".to_string(), |v| format!("{v:.6e}"));
        table.push_str(&format!("{}\t{}\t{:.6e}\t{}\n", r.file, r.points, r.chamfer, emd));
    }
    let emd = mean_emd.map_or("-".to_string(), |v| format!("{v:.6e}"));
    table.push_str(&format!("mean\t\t{mean_cd:.6e}\t{emd}\n"));
    print!("{table}");
    let tsv = args.out.join("reconstruct.tsv");
    std::fs::write(&tsv, &table).map_err(|e| CliError::io(&tsv, e))?;
    write_sidecar(
        &args.out.join("reconstruct.json"),
        "reconstruct",
        args.seed,
        Some(&args.checkpoint),
        json!({ "rows": rows, "mean_chamfer": mean_cd, "mean_emd": mean_emd }),
    )
}

pub fn sample(args: SampleArgs) -> Result<(), CliError> {
    let model = load_model(&args.checkpoint)?;
    ensure_dir(&args.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut files = Vec::with_capacity(args.count);
    for i in 0..args.count {
        let pc = sample_cloud(&model, args.points, source(args.source), args.noise, &mut rng)?;
        let name = format!("sample_{i:04}.xyz");
        save_xyz(&pc, &args.out.join(&name))?;
        files.push(name);
    }
    write_sidecar(
        &args.out.join("sample.json"),
        "sample",
        args.seed,
        Some(&args.checkpoint),
        json!({ "files": files, "points": args.points, "noise": args.noise, "source": format!("{:?}", args.source) }),
    )
}

pub fn mesh(args: MeshArgs) -> Result<(), CliError> {
    let model = load_model(&args.checkpoint)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let z = match &args.input {
        Some(p) => model.encode(&prepare(p, args.points, &mut rng)?)?.mean_code(),
        None => model.flow_sample(&mut rng),
    };
    let mesh = generate_mesh(&model, &z, args.resolution)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    mesh.save_obj(&args.out)?;
    write_sidecar(
        &args.out.with_extension("json"),
        "mesh",
        args.seed,
        Some(&args.checkpoint),
        json!({
            "resolution": args.resolution,
            "vertices": mesh.vertices.len(),
            "faces": mesh.faces.len(),
            "input": args.input.as_ref().map(|p| p.display().to_string()),
            "z": z.z,
        }),
    )
}

pub fn complete(args: CompleteArgs) -> Result<(), CliError> {
    let model = load_model(&args.checkpoint)?;
    ensure_dir(&args.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let pc = prepare(&args.input, args.points, &mut rng)?;
    let (partial, removed) = match args.hole_size {
        Some(k) => {
            let seed_index = rng.random_range(0..pc.len());
            let (remaining, removed) = knn_remove_hole(&pc, seed_index, k)?;
            (remaining, Some(removed))
        }
        None => (pc, None),
    };
    let options = CompletionOptions {
        oversample_factor: args.factor,
        occupancy_resolution: args.occupancy,
        fallback: !args.no_fallback,
    };
    let completion = complete_shape(&model, &partial, &options, &mut rng)?;
    save_xyz(&partial, &args.out.join("partial.xyz"))?;
    save_xyz(&completion, &args.out.join("completion.xyz"))?;
    let mut details = json!({
        "input": args.input.display().to_string(),
        "partial_points": partial.len(),
        "completion_points": completion.len(),
        "factor": args.factor,
        "occupancy": args.occupancy,
    });
    if let Some(removed) = &removed {
        save_xyz(removed, &args.out.join("removed.xyz"))?;
        let score = evaluate_completion(&completion, removed)?;
        let baseline = directional_chamfer(&partial, removed)?;
        println!("completion_to_removed {score:.6e}");
        println!("partial_to_removed {baseline:.6e}");
        details["hole_size"] = json!(removed.len());
        details["completion_to_removed"] = json!(score);
        details["partial_to_removed"] = json!(baseline);
    }
    write_sidecar(&args.out.join("complete.json"), "complete", args.seed, Some(&args.checkpoint), details)
}

pub fn interpolate(args: InterpolateArgs) -> Result<(), CliError> {
    let model = load_model(&args.checkpoint)?;
    ensure_dir(&args.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let a = prepare(&args.from, args.points, &mut rng)?;
    let b = prepare(&args.to, args.points, &mut rng)?;
    let meshes = interpolate_meshes(&model, &a, &b, args.steps, args.resolution)?;
    let mut files = Vec::with_capacity(meshes.len());
    for (k, m) in meshes.iter().enumerate() {
        let name = format!("interp_{k:03}.obj");
        m.save_obj(&args.out.join(&name))?;
        files.push(name);
    }
    write_sidecar(
        &args.out.join("interpolate.json"),
        "interpolate",
        args.seed,
        Some(&args.checkpoint),
        json!({
            "from": args.from.display().to_string(),
            "to": args.to.display().to_string(),
            "steps": args.steps,
            "resolution": args.resolution,
            "files": files,
        }),
    )
}

pub fn probe(args: ProbeArgs) -> Result<(), CliError> {
    let model = load_model(&args.checkpoint)?;
    let labels = read_labels(&args.data_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut latents = Vec::new();
    let mut ys = Vec::new();
    for f in cloud_files(&args.data_dir)? {
        let Some(&label) = labels.get(&file_name(&f)) else { continue };
        let pc = prepare(&f, args.points, &mut rng)?;
        latents.push(model.encode(&pc)?.mean);
        ys.push(label);
    }
    if latents.is_empty() {
        return Err(CliError::Usage(format!("no file in {} is listed in {LABELS_FILE}", args.data_dir.display())));
    }
    let report = linear_probe(&latents, &ys, args.train_fraction, args.seed)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    if let Some(out) = &args.out {
        write_sidecar(out, "probe", args.seed, Some(&args.checkpoint), &report)?;
    }
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    if args.resolution < 2 {
        return Err(CliError::Usage("--resolution must be at least 2".into()));
    }
    ensure_dir(&args.out)?;
    let worn_dir = args.out.join("worn");
    if args.worn {
        ensure_dir(&worn_dir)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut labels = String::from("file,label\n");
    for i in 0..args.count {
        let family = PatchFamily::ALL[i % PatchFamily::ALL.len()];
        let raw = synth_patch(&family.spec(args.resolution, rng.random()))?;
        let (pc, transform) = normalize(&raw, NormalizationPolicy::default())?;
        let name = format!("patch_{i:04}.xyz");
        save_xyz(&pc, &args.out.join(&name))?;
        labels.push_str(&format!("{name},{}\n", family.label()));
        if args.worn {
            let worn = transform.apply(&flatten_bump_tops(&raw, WORN_KEEP_FRACTION)?)?;
            save_xyz(&worn, &worn_dir.join(&name))?;
        }
    }
    let path = args.out.join(LABELS_FILE);
    std::fs::write(&path, labels).map_err(|e| CliError::io(&path, e))?;
    write_sidecar(
        &args.out.join("synth.json"),
        "synth",
        args.seed,
        None,
        json!({ "count": args.count, "resolution": args.resolution, "worn": args.worn }),
    )
}

const WORN_KEEP_FRACTION: f64 = 0.6;

#[derive(Serialize)]
struct CheckLine {
    name: &'static str,
    passed: bool,
    detail: String,
}

pub fn check(args: CheckArgs) -> Result<(), CliError> {
    let mut lines = Vec::new();
    let config = ModelConfig {
        latent_dim: 4,
        encoder_widths: vec![8, 8],
        encoder_head_widths: vec![8],
        projector_widths: vec![8],
        decoder_widths: vec![8, 8],
        variance_widths: vec![8],
        flow_layers: 2,
        flow_hidden: 6,
        grid_widths: vec![8],
        grid_template_size: 16,
        activation: Activation::Tanh,
        ..ModelConfig::default()
    };
    let model = VfNet::new(config, args.seed)?;
    let clouds = family_dataset(3, 8, 24, args.seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    for (name, mode) in [("gradient_elbo_learned_sigma", VarianceMode::Learned), ("gradient_elbo_constant_sigma", VarianceMode::Constant(0.1))] {
        let mut obj = ElboObjective::new(model.clone(), &clouds, 0.7, mode, &mut rng);
        let report = check_gradients(&mut obj, &GradCheckOptions { seed: args.seed, ..GradCheckOptions::default() });
        lines.push(CheckLine {
            name,
            passed: report.passed(),
            detail: format!("max relative error {:.3e}", report.max_rel_error()),
        });
    }

    let pc = &clouds[0];
    let reference = model.encode(pc)?;
    let mut idx: Vec<usize> = (0..pc.len()).collect();
    let mut same = true;
    for _ in 0..20 {
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
        same &= model.encode(&pc.select(&idx)?)? == reference;
    }
    lines.push(CheckLine { name: "encoder_permutation_invariance", passed: same, detail: "20 permutations".into() });

    let z = model.flow_sample(&mut rng);
    let g = model.project_points(pc, &z)?;
    let inside = g.matrix().iter().all(|v| (-1.0..=1.0).contains(v));
    lines.push(CheckLine { name: "encodings_in_unit_square", passed: inside, detail: format!("{} points", g.len()) });

    let failed: Vec<&str> = lines.iter().filter(|l| !l.passed).map(|l| l.name).collect();
    for l in &lines {
        println!("{} {} ({})", if l.passed { "ok  " } else { "FAIL" }, l.name, l.detail);
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!("self-test failed: {}", failed.join(", "))))
    }
}
