//! Flat `key = value` configuration with dotted keys and optional
//! `[section]` headers that prefix the keys below them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use vfnet_core::model::{Activation, ModelConfig};
use vfnet_core::objective::{KlScaling, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| CliError::Config {
                key: format!("line {}", i + 1),
                message: "expected `key = value`".into(),
            })?;
            let key = if section.is_empty() { k.trim().to_string() } else { format!("{section}.{}", k.trim()) };
            entries.insert(key, v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            key: "--config".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    /// Applies a `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| CliError::Config {
            key: assignment.into(),
            message: "override must look like key=value".into(),
        })?;
        self.entries.insert(k.trim().to_string(), v.trim().to_string());
        Ok(())
    }
}

/// Everything `train` needs, resolved from a [`RawConfig`].
#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub train_dir: PathBuf,
    pub points: usize,
    pub train: TrainConfig,
}

struct Reader {
    entries: BTreeMap<String, String>,
}

impl Reader {
    fn take<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Config { key: key.into(), message: format!("cannot parse `{v}`: {e}") }),
        }
    }

    fn take_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    fn take_list(&mut self, key: &str, default: Vec<usize>) -> Result<Vec<usize>, CliError> {
        match self.entries.remove(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Config { key: key.into(), message: format!("cannot parse `{v}`: {e}") }),
        }
    }
}

impl TrainSettings {
    pub fn resolve(raw: &RawConfig, seed: u64) -> Result<Self, CliError> {
        let mut r = Reader { entries: raw.entries.clone() };
        let train_dir: PathBuf = r
            .take("data.train_dir")?
            .ok_or_else(|| CliError::Config { key: "data.train_dir".into(), message: "missing".into() })?;
        if !train_dir.is_dir() {
            return Err(CliError::Config {
                key: "data.train_dir".into(),
                message: format!("{} is not a directory", train_dir.display()),
            });
        }
        let points = r.take_or("data.points", 2048usize)?;
        let m = ModelConfig::default();
        let model = ModelConfig {
            latent_dim: r.take_or("model.latent_dim", m.latent_dim)?,
            encoder_widths: r.take_list("model.encoder_widths", m.encoder_widths)?,
            encoder_head_widths: r.take_list("model.encoder_head_widths", m.encoder_head_widths)?,
            projector_widths: r.take_list("model.projector_widths", m.projector_widths)?,
            decoder_widths: r.take_list("model.decoder_widths", m.decoder_widths)?,
            variance_widths: r.take_list("model.variance_widths", m.variance_widths)?,
            flow_layers: r.take_or("model.flow_layers", m.flow_layers)?,
            flow_hidden: r.take_or("model.flow_hidden", m.flow_hidden)?,
            grid_widths: r.take_list("model.grid_widths", m.grid_widths)?,
            grid_template_size: r.take_or("model.grid_template_size", m.grid_template_size)?,
            activation: r.take_or::<Activation>("model.activation", m.activation)?,
            initial_log_variance: r.take_or("model.initial_log_variance", m.initial_log_variance)?,
            nu: r.take_or("model.nu", m.nu)?,
        };
        let epochs = r.take_or("train.epochs", TrainConfig::default().epochs)?;
        let d = TrainConfig::with_epochs(epochs);
        let train = TrainConfig {
            learning_rate: r.take_or("train.learning_rate", d.learning_rate)?,
            batch_size: r.take_or("train.batch_size", d.batch_size)?,
            epochs,
            warmup_epochs: r.take_or("train.warmup_epochs", d.warmup_epochs)?,
            constant_sigma: r.take_or("train.constant_sigma", d.constant_sigma)?,
            variance_phase_epochs: r.take_or("train.variance_phase_epochs", d.variance_phase_epochs)?,
            grid_phase_epochs: r.take_or("train.grid_phase_epochs", d.grid_phase_epochs)?,
            kl_scaling: r.take_or::<KlScaling>("train.kl_scaling", d.kl_scaling)?,
            seed,
            model,
        };
        if let Some(key) = r.entries.keys().next() {
            return Err(CliError::Config { key: key.clone(), message: "unknown key".into() });
        }
        train.validate().map_err(|e| CliError::Config { key: "train".into(), message: e.to_string() })?;
        if points == 0 {
            return Err(CliError::Config { key: "data.points".into(), message: "must be positive".into() });
        }
        Ok(Self { train_dir, points, train })
    }

    /// The fully resolved configuration in the input format.
    pub fn render(&self) -> String {
        let t = &self.train;
        let m = &t.model;
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let act = match m.activation {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
        };
        format!(
            "[data]\ntrain_dir = {}\npoints = {}\n\n# seed = {} (from --seed)\n[train]\nlearning_rate = {}\nbatch_size = {}\nepochs = {}\nwarmup_epochs = {}\nconstant_sigma = {}\nvariance_phase_epochs = {}\ngrid_phase_epochs = {}\nkl_scaling = {}\n\n[model]\nlatent_dim = {}\nencoder_widths = {}\nencoder_head_widths = {}\nprojector_widths = {}\ndecoder_widths = {}\nvariance_widths = {}\nflow_layers = {}\nflow_hidden = {}\ngrid_widths = {}\ngrid_template_size = {}\nactivation = {}\ninitial_log_variance = {}\nnu = {}\n",
            self.train_dir.display(),
            self.points,
            t.seed,
            t.learning_rate,
            t.batch_size,
            t.epochs,
            t.warmup_epochs,
            t.constant_sigma,
            t.variance_phase_epochs,
            t.grid_phase_epochs,
            match t.kl_scaling {
                KlScaling::PerPoint => "per_point",
                KlScaling::PerCloud => "per_cloud",
            },
            m.latent_dim,
            list(&m.encoder_widths),
            list(&m.encoder_head_widths),
            list(&m.projector_widths),
            list(&m.decoder_widths),
            list(&m.variance_widths),
            m.flow_layers,
            m.flow_hidden,
            list(&m.grid_widths),
            m.grid_template_size,
            act,
            m.initial_log_variance,
            m.nu,
        )
    }
}
