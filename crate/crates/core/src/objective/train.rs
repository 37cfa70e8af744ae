//! Phased trainer.
//!
//! 1. ELBO with a constant per-point scale and KL warm-up (encoder, projector,
//!    decoder, flow).
//! 2. Variance network only, full likelihood, `beta = 1`.
//! 3. Grid predictor only, squared 2D Chamfer against the projected
//!    encodings.

use std::time::Instant;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adamax::Adamax;
use super::checkpoint::Checkpoint;
use super::elbo::{cloud_objective, sample_noise, ElboBreakdown, ModelGrads, Trainable};
use super::schedule::kl_warmup_beta;
use crate::model::{ModelConfig, ParamGroup, VarianceMode, VfNet};
use crate::{par, Error, PointCloud, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_epochs: usize,
    /// Per-point scale during the first phase.
    pub constant_sigma: f64,
    pub variance_phase_epochs: usize,
    pub grid_phase_epochs: usize,
    pub kl_scaling: KlScaling,
    pub seed: u64,
    pub model: ModelConfig,
}

/// How the KL term is weighted against the per-point mean log-likelihood
/// during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlScaling {
    /// `beta * kl / n`: the summed log-likelihood of all `n` points against
    /// one KL term, rescaled by `1/n`.
    PerPoint,
    /// `beta * kl` against the mean log-likelihood.
    PerCloud,
}

impl std::str::FromStr for KlScaling {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "per_point" => Ok(KlScaling::PerPoint),
            "per_cloud" => Ok(KlScaling::PerCloud),
            _ => Err(format!("unknown KL scaling `{s}` (expected per_point or per_cloud)")),
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::with_epochs(1250)
    }
}

impl TrainConfig {
    /// Defaults with the warm-up set to a quarter of `epochs`.
    pub fn with_epochs(epochs: usize) -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs,
            warmup_epochs: epochs / 4,
            constant_sigma: 0.05,
            variance_phase_epochs: 100,
            grid_phase_epochs: 100,
            kl_scaling: KlScaling::PerPoint,
            seed: 0,
            model: ModelConfig::default(),
        }
    }

    pub fn nu(&self) -> f64 {
        self.model.nu
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::pre("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::pre("batch_size must be positive"));
        }
        if self.warmup_epochs > self.epochs {
            return Err(Error::pre(format!(
                "warmup_epochs ({}) exceeds epochs ({})",
                self.warmup_epochs, self.epochs
            )));
        }
        if !(self.constant_sigma > 0.0) {
            return Err(Error::pre("constant_sigma must be positive"));
        }
        self.model.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Elbo,
    Variance,
    Grid,
}

/// One line of the training log. The ELBO fields are absent in the grid
/// phase, which reports `grid_chamfer` instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub beta: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub elbo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub recon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub grid_chamfer: Option<f64>,
    pub wall_ms: u64,
}

impl EpochRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize, last_finite: Box<Checkpoint> },
    #[error(transparent)]
    Other(#[from] Error),
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochRecord>,
}

/// Trains from scratch and returns the final checkpoint and per-epoch log.
pub fn train(dataset: &[PointCloud], config: &TrainConfig) -> std::result::Result<TrainOutcome, TrainError> {
    train_with(dataset, config, |_| {})
}

/// [`train`], calling `observe` after every epoch.
pub fn train_with<F: FnMut(&EpochRecord)>(
    dataset: &[PointCloud],
    config: &TrainConfig,
    mut observe: F,
) -> std::result::Result<TrainOutcome, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::pre("training set is empty").into());
    }
    let n = dataset[0].len();
    if let Some(pc) = dataset.iter().find(|pc| pc.len() != n) {
        return Err(Error::CardinalityMismatch { left: n, right: pc.len() }.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = VfNet::new(config.model.clone(), rng.random())?;
    let xs: Vec<Array2<f64>> = dataset.iter().map(PointCloud::to_matrix).collect();
    let mut trainer = Trainer { model: &mut model, xs: &xs, config, rng: &mut rng, epoch: 0, log: Vec::new() };

    let groups_for = |phase: Phase| -> Vec<ParamGroup> {
        match phase {
            Phase::Elbo => vec![ParamGroup::Encoder, ParamGroup::Projector, ParamGroup::Decoder, ParamGroup::Flow],
            Phase::Variance => vec![ParamGroup::VarianceNet],
            Phase::Grid => vec![ParamGroup::GridPredictor],
        }
    };
    for (phase, epochs) in [
        (Phase::Elbo, config.epochs),
        (Phase::Variance, config.variance_phase_epochs),
        (Phase::Grid, config.grid_phase_epochs),
    ] {
        let mut opt = Adamax::new(config.learning_rate);
        let groups = groups_for(phase);
        for local in 0..epochs {
            let rec = trainer.run_epoch(phase, local, &groups, &mut opt)?;
            observe(&rec);
        }
    }
    let epoch = trainer.epoch as u64;
    let log = std::mem::take(&mut trainer.log);
    Ok(TrainOutcome { checkpoint: Checkpoint::new(model, config.clone(), epoch, &rng), log })
}

struct Trainer<'a> {
    model: &'a mut VfNet,
    xs: &'a [Array2<f64>],
    config: &'a TrainConfig,
    rng: &'a mut ChaCha8Rng,
    epoch: usize,
    log: Vec<EpochRecord>,
}

enum StepResult {
    Elbo(ElboBreakdown, ModelGrads),
    Grid(f64, ModelGrads),
}

impl Trainer<'_> {
    fn run_epoch(
        &mut self,
        phase: Phase,
        local: usize,
        groups: &[ParamGroup],
        opt: &mut Adamax,
    ) -> std::result::Result<EpochRecord, TrainError> {
        let start = Instant::now();
        let snapshot = self.model.clone();
        let beta = match phase {
            Phase::Elbo => kl_warmup_beta(local, self.config.warmup_epochs),
            _ => 1.0,
        };
        let active: Vec<bool> = self.model.block_groups().iter().map(|g| groups.contains(g)).collect();
        let mut order: Vec<usize> = (0..self.xs.len()).collect();
        order.shuffle(self.rng);

        let (mut elbo, mut recon, mut kl, mut grid) = (0.0, 0.0, 0.0, 0.0);
        for batch in order.chunks(self.config.batch_size) {
            let seeds: Vec<u64> = batch.iter().map(|_| self.rng.random()).collect();
            let w = 1.0 / batch.len() as f64;
            let model: &VfNet = self.model;
            let xs = self.xs;
            let sigma = self.config.constant_sigma;
            let kl_scaling = self.config.kl_scaling;
            let results = par::map_indexed(batch.len(), |k| {
                let mut r = ChaCha8Rng::seed_from_u64(seeds[k]);
                let eps = sample_noise(model.latent_dim(), &mut r);
                let x = &xs[batch[k]];
                let beta = match kl_scaling {
                    KlScaling::PerPoint => beta / x.nrows() as f64,
                    KlScaling::PerCloud => beta,
                };
                match phase {
                    Phase::Elbo => cloud_objective(model, x, &eps, beta, VarianceMode::Constant(sigma), w, Trainable {
                        variance_net: false,
                        ..Trainable::ALL
                    })
                    .map(|(b, g)| StepResult::Elbo(b, g)),
                    Phase::Variance => {
                        cloud_objective(model, x, &eps, beta, VarianceMode::Learned, w, Trainable::VARIANCE_ONLY)
                            .map(|(b, g)| StepResult::Elbo(b, g))
                    }
                    Phase::Grid => grid_objective(model, x, &eps, w).map(|(l, g)| StepResult::Grid(l, g)),
                }
            });
            let mut total = ModelGrads::zeros(self.model);
            let mut finite = true;
            for r in results {
                match r {
                    Ok(StepResult::Elbo(b, g)) => {
                        finite &= b.elbo.is_finite();
                        elbo += b.elbo;
                        recon += b.recon_log_likelihood;
                        kl += b.kl;
                        total.add_assign(&g);
                    }
                    Ok(StepResult::Grid(l, g)) => {
                        finite &= l.is_finite();
                        grid += l;
                        total.add_assign(&g);
                    }
                    Err(Error::NonFinite(_)) => finite = false,
                    Err(e) => return Err(e.into()),
                }
            }
            if !finite || !total.is_finite() {
                return Err(TrainError::Diverged {
                    epoch: self.epoch,
                    last_finite: Box::new(Checkpoint::new(
                        snapshot,
                        self.config.clone(),
                        self.epoch as u64,
                        self.rng,
                    )),
                });
            }
            opt.step(&mut self.model.blocks_mut(), &total.into_blocks(), &active)?;
        }
        let m = self.xs.len() as f64;
        let rec = EpochRecord {
            epoch: self.epoch,
            phase,
            beta,
            elbo: (phase != Phase::Grid).then_some(elbo / m),
            recon: (phase != Phase::Grid).then_some(recon / m),
            kl: (phase != Phase::Grid).then_some(kl / m),
            grid_chamfer: (phase == Phase::Grid).then_some(grid / m),
            wall_ms: start.elapsed().as_millis() as u64,
        };
        self.epoch += 1;
        self.log.push(rec.clone());
        Ok(rec)
    }
}

/// Squared 2D Chamfer between nearest points of two small planar sets,
/// returning per-row gradients for `pred`.
pub(crate) fn squared_chamfer_2d(pred: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
    let (m, n) = (pred.nrows(), target.nrows());
    let d2 = |i: usize, j: usize| {
        let dx = pred[[i, 0]] - target[[j, 0]];
        let dy = pred[[i, 1]] - target[[j, 1]];
        dx * dx + dy * dy
    };
    let mut grad = Array2::zeros((m, 2));
    let mut loss = 0.0;
    for i in 0..m {
        let (j, d) = (0..n).map(|j| (j, d2(i, j))).fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        loss += d / m as f64;
        for k in 0..2 {
            grad[[i, k]] += 2.0 * (pred[[i, k]] - target[[j, k]]) / m as f64;
        }
    }
    for j in 0..n {
        let (i, d) = (0..m).map(|i| (i, d2(i, j))).fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        loss += d / n as f64;
        for k in 0..2 {
            grad[[i, k]] += 2.0 * (pred[[i, k]] - target[[j, k]]) / n as f64;
        }
    }
    (loss, grad)
}

/// Grid-predictor loss for one cloud at a sampled code; only the grid
/// predictor receives gradients.
fn grid_objective(model: &VfNet, x: &Array2<f64>, eps: &[f64], weight: f64) -> Result<(f64, ModelGrads)> {
    let z = model.encode_matrix(x)?.reparameterize_with(eps);
    let target = model.project_matrix(x, &z)?;
    let template = model.grid_template();
    let (pred, tape) =
        model.grid_predictor.forward_recorded(template.matrix().view(), Some(ArrayView1::from(&z.z[..])))?;
    let (loss, mut grad) = squared_chamfer_2d(&pred, target.matrix());
    grad *= weight;
    let mut grads = ModelGrads::zeros(model);
    model.grid_predictor.backward_into(&tape, grad.view(), &mut grads.grid_predictor)?;
    Ok((loss, grads))
}
