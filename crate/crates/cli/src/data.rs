//! Reading point-cloud directories and labels.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use vfnet_core::pointcloud::{load_point_cloud, normalize, subsample, NormalizationPolicy, PointFormat};
use vfnet_core::PointCloud;

use crate::error::CliError;

pub const LABELS_FILE: &str = "labels.csv";

/// Point-cloud files in `dir` (`.xyz`, `.txt`, `.ply`), sorted by name.
pub fn cloud_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && PointFormat::from_path(p).is_some())
        .collect();
    files.sort();
    Ok(files)
}

/// Loads, normalizes and (when `points` is given) subsamples one cloud.
pub fn prepare<R: Rng + ?Sized>(path: &Path, points: Option<usize>, rng: &mut R) -> Result<PointCloud, CliError> {
    let format = PointFormat::from_path(path)
        .ok_or_else(|| CliError::Usage(format!("{}: unknown point-cloud extension", path.display())))?;
    let raw = load_point_cloud(path, format)?;
    let (pc, _) = normalize(&raw, NormalizationPolicy::default())?;
    match points {
        Some(n) if n < pc.len() => Ok(subsample(&pc, n, rng)?),
        Some(n) if n > pc.len() => Err(CliError::Usage(format!(
            "{} has {} points, fewer than the requested {n}",
            path.display(),
            pc.len()
        ))),
        _ => Ok(pc),
    }
}

pub fn load_dir<R: Rng + ?Sized>(
    dir: &Path,
    points: Option<usize>,
    rng: &mut R,
) -> Result<(Vec<PathBuf>, Vec<PointCloud>), CliError> {
    let files = cloud_files(dir)?;
    if files.is_empty() {
        return Err(CliError::Usage(format!("{} contains no point-cloud files", dir.display())));
    }
    let clouds = files.iter().map(|f| prepare(f, points, rng)).collect::<Result<Vec<_>, _>>()?;
    Ok((files, clouds))
}

/// `file,label` lines; file names are relative to `dir`.
pub fn read_labels(dir: &Path) -> Result<BTreeMap<String, i64>, CliError> {
    let path = dir.join(LABELS_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line == "file,label") {
            continue;
        }
        let (f, l) = line
            .split_once(',')
            .ok_or_else(|| CliError::Usage(format!("{}:{}: expected `file,label`", path.display(), i + 1)))?;
        let label = l
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{}:{}: bad label `{}`", path.display(), i + 1, l.trim())))?;
        out.insert(f.trim().to_string(), label);
    }
    Ok(out)
}
