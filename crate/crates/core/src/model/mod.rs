//! The variational folding network.
//!
//! - encoder `e`: per-point MLP → set max-pool → MLP → `(mean, log_var)`
//! - projector: per-point MLP on `point ⊕ z` → tanh → encoding in `[-1, 1]^2`
//! - decoder `f`: per-encoding MLP on `g ⊕ z` → 3D point
//! - variance net: per-encoding MLP on `g ⊕ z` → softplus scale
//! - flow prior `p(z)`: affine couplings over the latent
//! - grid predictor: fixed lattice template ⊕ z → encodings
//!
//! Reconstruction index `i` always corresponds to input point `i`.

mod flow;

pub use flow::{CouplingLayer, FlowPrior};

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffcore::{LayerKind, LayerSpec, Network, ParameterBlock};
use crate::{Error, PointCloud, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Softplus,
}

impl Activation {
    pub fn kind(self) -> LayerKind {
        match self {
            Activation::Relu => LayerKind::Relu,
            Activation::Tanh => LayerKind::Tanh,
            Activation::Softplus => LayerKind::Softplus,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "softplus" => Ok(Activation::Softplus),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

/// `input → widths... → output` with `activation` between affine layers and
/// no activation after the last one.
pub fn mlp_layers(input: usize, widths: &[usize], output: usize, activation: Activation) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let mut prev = input;
    for &w in widths {
        layers.push(LayerSpec::affine(prev, w));
        layers.push(LayerSpec::elementwise(activation.kind(), w));
        prev = w;
    }
    layers.push(LayerSpec::affine(prev, output));
    layers
}

/// Architecture sizes. Nothing about the network widths is fixed by the
/// method; these defaults are toy-scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub encoder_widths: Vec<usize>,
    pub encoder_head_widths: Vec<usize>,
    pub projector_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    pub variance_widths: Vec<usize>,
    pub flow_layers: usize,
    pub flow_hidden: usize,
    pub grid_widths: Vec<usize>,
    pub grid_template_size: usize,
    pub activation: Activation,
    /// Initial bias of the encoder's log-variance head.
    pub initial_log_variance: f64,
    /// Student-t degrees of freedom.
    pub nu: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            encoder_widths: vec![64, 128],
            encoder_head_widths: vec![64],
            projector_widths: vec![64, 64],
            decoder_widths: vec![128, 128],
            variance_widths: vec![64],
            flow_layers: 4,
            flow_hidden: 32,
            grid_widths: vec![64, 64],
            grid_template_size: 2048,
            activation: Activation::Tanh,
            initial_log_variance: -6.0,
            nu: 3.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim < 2 {
            return Err(Error::pre("latent_dim must be at least 2"));
        }
        if !(self.nu > 0.0) {
            return Err(Error::pre(format!("nu must be positive, got {}", self.nu)));
        }
        if !self.initial_log_variance.is_finite() {
            return Err(Error::pre("initial_log_variance must be finite"));
        }
        if self.grid_template_size == 0 {
            return Err(Error::pre("grid_template_size must be positive"));
        }
        let all = [
            &self.encoder_widths,
            &self.encoder_head_widths,
            &self.projector_widths,
            &self.decoder_widths,
            &self.variance_widths,
            &self.grid_widths,
        ];
        if all.iter().any(|w| w.contains(&0)) || self.flow_hidden == 0 {
            return Err(Error::pre("layer widths must be positive"));
        }
        if self.encoder_widths.is_empty() {
            return Err(Error::pre("encoder needs at least one per-point layer"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPosterior {
    pub mean: Vec<f64>,
    pub log_variance: Vec<f64>,
}

impl LatentPosterior {
    /// `z = mean + exp(log_var / 2) * eps` for the given standard-normal noise.
    pub fn reparameterize_with(&self, eps: &[f64]) -> LatentCode {
        LatentCode::new(
            self.mean
                .iter()
                .zip(&self.log_variance)
                .zip(eps)
                .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
                .collect(),
        )
    }

    pub fn reparameterize<R: Rng + ?Sized>(&self, rng: &mut R) -> LatentCode {
        let eps: Vec<f64> = (0..self.mean.len()).map(|_| rng.sample(StandardNormal)).collect();
        self.reparameterize_with(&eps)
    }

    pub fn mean_code(&self) -> LatentCode {
        LatentCode::new(self.mean.clone())
    }
}

/// Free-function form of [`LatentPosterior::reparameterize`].
pub fn reparameterize<R: Rng + ?Sized>(post: &LatentPosterior, rng: &mut R) -> LatentCode {
    post.reparameterize(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCode {
    pub z: Vec<f64>,
}

impl LatentCode {
    pub fn new(z: Vec<f64>) -> Self {
        Self { z }
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.z[..])
    }
}

/// Per-point 2D coordinates in the planar patch, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEncodings {
    g: Array2<f64>,
}

impl PointEncodings {
    pub fn new(g: Array2<f64>) -> Result<Self> {
        if g.ncols() != 2 {
            return Err(Error::pre(format!("encodings need 2 columns, got {}", g.ncols())));
        }
        if g.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::pre("encodings must lie in [-1, 1]^2"));
        }
        Ok(Self { g })
    }

    pub fn len(&self) -> usize {
        self.g.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.g.nrows() == 0
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.g
    }

    pub fn get(&self, i: usize) -> [f64; 2] {
        [self.g[[i, 0]], self.g[[i, 1]]]
    }

    /// The encodings as a flat cloud (z = 0), for 2D Chamfer comparisons.
    pub fn to_planar_cloud(&self) -> Result<PointCloud> {
        PointCloud::new(self.g.rows().into_iter().map(|r| [r[0], r[1], 0.0]).collect())
    }
}

/// `ceil(sqrt(n))^2` lattice over `[-1, 1]^2` (row-major), truncated to `n`.
pub fn uniform_grid(n: usize) -> PointEncodings {
    let side = (n as f64).sqrt().ceil().max(1.0) as usize;
    let step = if side > 1 { 2.0 / (side - 1) as f64 } else { 0.0 };
    let coord = |i: usize| if side > 1 { -1.0 + i as f64 * step } else { 0.0 };
    let g = Array2::from_shape_fn((n, 2), |(k, c)| if c == 0 { coord(k / side) } else { coord(k % side) });
    PointEncodings::new(g).expect("lattice lies in the patch")
}

/// Where the per-point scale comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VarianceMode {
    /// Fixed scale for every point (first training phase).
    Constant(f64),
    Learned,
}

pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Encoder,
    Projector,
    Decoder,
    VarianceNet,
    Flow,
    GridPredictor,
}

/// All trainable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VfNet {
    pub config: ModelConfig,
    pub encoder: Network,
    pub projector: Network,
    pub decoder: Network,
    pub variance_net: Network,
    pub flow: FlowPrior,
    pub grid_predictor: Network,
}

impl VfNet {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.latent_dim;
        let act = config.activation;

        let mut enc = mlp_layers(3, &config.encoder_widths[..config.encoder_widths.len() - 1], *config.encoder_widths.last().unwrap(), act);
        enc.push(LayerSpec::elementwise(act.kind(), *config.encoder_widths.last().unwrap()));
        enc.push(LayerSpec::set_max_pool(*config.encoder_widths.last().unwrap()));
        enc.extend(mlp_layers(*config.encoder_widths.last().unwrap(), &config.encoder_head_widths, 2 * d, act));
        let mut encoder = Network::new("encoder", enc, &mut rng)?;
        if let Some(bias) = encoder.blocks_mut().last_mut() {
            bias.values[d..].iter_mut().for_each(|v| *v = config.initial_log_variance);
        }

        let with_side = |input: usize, widths: &[usize], output: usize, tail: Option<LayerKind>| {
            let mut l = vec![LayerSpec::concat(input, d)];
            l.extend(mlp_layers(input + d, widths, output, act));
            if let Some(k) = tail {
                l.push(LayerSpec::elementwise(k, output));
            }
            l
        };
        let projector = Network::new("projector", with_side(3, &config.projector_widths, 2, Some(LayerKind::Tanh)), &mut rng)?;
        let decoder = Network::new("decoder", with_side(2, &config.decoder_widths, 3, None), &mut rng)?;
        let variance_net =
            Network::new("variance", with_side(2, &config.variance_widths, 1, Some(LayerKind::Softplus)), &mut rng)?;
        let flow = FlowPrior::new(d, config.flow_layers, config.flow_hidden, act, &mut rng)?;
        let grid_predictor =
            Network::new("grid", with_side(2, &config.grid_widths, 2, Some(LayerKind::Tanh)), &mut rng)?;

        Ok(Self { config, encoder, projector, decoder, variance_net, flow, grid_predictor })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn nu(&self) -> f64 {
        self.config.nu
    }

    /// Parameter blocks in canonical order: encoder, projector, decoder,
    /// variance net, flow, grid predictor.
    pub fn blocks(&self) -> Vec<&ParameterBlock> {
        let mut v: Vec<&ParameterBlock> = Vec::new();
        v.extend(self.encoder.blocks());
        v.extend(self.projector.blocks());
        v.extend(self.decoder.blocks());
        v.extend(self.variance_net.blocks());
        v.extend(self.flow.blocks());
        v.extend(self.grid_predictor.blocks());
        v
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut ParameterBlock> {
        let mut v: Vec<&mut ParameterBlock> = Vec::new();
        v.extend(self.encoder.blocks_mut().iter_mut());
        v.extend(self.projector.blocks_mut().iter_mut());
        v.extend(self.decoder.blocks_mut().iter_mut());
        v.extend(self.variance_net.blocks_mut().iter_mut());
        v.extend(self.flow.blocks_mut());
        v.extend(self.grid_predictor.blocks_mut().iter_mut());
        v
    }

    /// Group of each block, aligned with [`VfNet::blocks`].
    pub fn block_groups(&self) -> Vec<ParamGroup> {
        let mut v = Vec::new();
        v.extend(std::iter::repeat_n(ParamGroup::Encoder, self.encoder.blocks().len()));
        v.extend(std::iter::repeat_n(ParamGroup::Projector, self.projector.blocks().len()));
        v.extend(std::iter::repeat_n(ParamGroup::Decoder, self.decoder.blocks().len()));
        v.extend(std::iter::repeat_n(ParamGroup::VarianceNet, self.variance_net.blocks().len()));
        v.extend(std::iter::repeat_n(ParamGroup::Flow, self.flow.blocks().len()));
        v.extend(std::iter::repeat_n(ParamGroup::GridPredictor, self.grid_predictor.blocks().len()));
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    /// Rounds every parameter to the nearest `f32`, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        for b in self.blocks_mut() {
            for v in &mut b.values {
                *v = *v as f32 as f64;
            }
        }
    }

    pub fn encode_matrix(&self, points: &Array2<f64>) -> Result<LatentPosterior> {
        let out = self.encoder.forward(points.view(), None)?;
        let d = self.latent_dim();
        Ok(LatentPosterior {
            mean: (0..d).map(|j| out[[0, j]]).collect(),
            log_variance: (0..d).map(|j| out[[0, d + j]]).collect(),
        })
    }

    pub fn encode(&self, pc: &PointCloud) -> Result<LatentPosterior> {
        self.encode_matrix(&pc.to_matrix())
    }

    fn check_code(&self, z: &LatentCode) -> Result<()> {
        if z.dim() != self.latent_dim() {
            return Err(Error::pre(format!("latent code has dimension {}, model uses {}", z.dim(), self.latent_dim())));
        }
        Ok(())
    }

    pub fn project_matrix(&self, points: &Array2<f64>, z: &LatentCode) -> Result<PointEncodings> {
        self.check_code(z)?;
        PointEncodings::new(self.projector.forward(points.view(), Some(z.view()))?)
    }

    pub fn project_points(&self, pc: &PointCloud, z: &LatentCode) -> Result<PointEncodings> {
        self.project_matrix(&pc.to_matrix(), z)
    }

    pub fn fold_matrix(&self, z: &LatentCode, g: &PointEncodings) -> Result<Array2<f64>> {
        self.check_code(z)?;
        Ok(self.decoder.forward(g.matrix().view(), Some(z.view()))?)
    }

    pub fn fold(&self, z: &LatentCode, g: &PointEncodings) -> Result<PointCloud> {
        PointCloud::from_matrix(&self.fold_matrix(z, g)?)
    }

    /// Per-point scale `σ(z, g)` (softplus output plus a small floor), or the
    /// constant in [`VarianceMode::Constant`].
    pub fn predict_variance(&self, z: &LatentCode, g: &PointEncodings, mode: VarianceMode) -> Result<Vec<f64>> {
        self.check_code(z)?;
        Ok(match mode {
            VarianceMode::Constant(c) => vec![c; g.len()],
            VarianceMode::Learned => self
                .variance_net
                .forward(g.matrix().view(), Some(z.view()))?
                .iter()
                .map(|s| s + VARIANCE_FLOOR)
                .collect(),
        })
    }

    pub fn flow_log_prob(&self, z: &LatentCode) -> f64 {
        self.flow.log_prob(&z.z)
    }

    pub fn flow_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LatentCode {
        LatentCode::new(self.flow.sample(rng))
    }

    pub fn grid_template(&self) -> PointEncodings {
        uniform_grid(self.config.grid_template_size)
    }

    /// Maps a `uniform_grid(m)` template through the grid predictor. Training
    /// uses `m = grid_template_size`, but any size works.
    pub fn grid_predict(&self, z: &LatentCode, m: usize) -> Result<PointEncodings> {
        self.check_code(z)?;
        if m == 0 {
            return Err(Error::pre("grid predictor needs at least one point"));
        }
        let t = uniform_grid(m);
        PointEncodings::new(self.grid_predictor.forward(t.matrix().view(), Some(z.view()))?)
    }

    /// Deterministic autoencoding through the posterior mean.
    pub fn reconstruct(&self, pc: &PointCloud) -> Result<PointCloud> {
        let x = pc.to_matrix();
        let z = self.encode_matrix(&x)?.mean_code();
        let g = self.project_matrix(&x, &z)?;
        self.fold(&z, &g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            latent_dim: 4,
            encoder_widths: vec![16, 32],
            encoder_head_widths: vec![16],
            projector_widths: vec![16],
            decoder_widths: vec![16, 16],
            variance_widths: vec![8],
            flow_layers: 2,
            flow_hidden: 8,
            grid_widths: vec![16],
            grid_template_size: 30,
            activation: Activation::Tanh,
            initial_log_variance: -6.0,
            nu: 3.0,
        }
    }

    fn cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new((0..n).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect()).unwrap()
    }

    #[test]
    fn encode_is_permutation_and_duplication_invariant() {
        let net = VfNet::new(small(), 1).unwrap();
        let pc = cloud(40, 2);
        let post = net.encode(&pc).unwrap();
        let mut idx: Vec<usize> = (0..40).rev().collect();
        idx.swap(3, 17);
        assert_eq!(net.encode(&pc.select(&idx).unwrap()).unwrap(), post);
        let doubled: Vec<usize> = (0..40).chain(0..40).collect();
        assert_eq!(net.encode(&pc.select(&doubled).unwrap()).unwrap(), post);
        assert_ne!(net.encode(&cloud(40, 3)).unwrap().mean, post.mean);
    }

    #[test]
    fn projector_is_equivariant_and_bounded() {
        let net = VfNet::new(small(), 4).unwrap();
        let pc = cloud(25, 5);
        let z = LatentCode::new(vec![3.0, -4.0, 10.0, 0.5]);
        let g = net.project_points(&pc, &z).unwrap();
        assert_eq!(g.len(), 25);
        assert!(g.matrix().iter().all(|v| (-1.0..=1.0).contains(v)));
        let idx: Vec<usize> = (0..25).map(|i| (i * 7) % 25).collect();
        let gp = net.project_points(&pc.select(&idx).unwrap(), &z).unwrap();
        for (k, &i) in idx.iter().enumerate() {
            assert_eq!(gp.get(k), g.get(i));
        }
        let folded = net.fold(&z, &g).unwrap();
        assert_eq!(folded.len(), 25);
    }

    #[test]
    fn variance_is_positive_or_constant() {
        let net = VfNet::new(small(), 6).unwrap();
        let z = LatentCode::new(vec![0.0; 4]);
        let g = uniform_grid(50);
        assert!(net.predict_variance(&z, &g, VarianceMode::Learned).unwrap().iter().all(|&s| s > 0.0));
        assert_eq!(net.predict_variance(&z, &g, VarianceMode::Constant(0.05)).unwrap(), vec![0.05; 50]);
    }

    #[test]
    fn reparameterize_limits() {
        let post = LatentPosterior { mean: vec![1.0, -2.0], log_variance: vec![-40.0, -40.0] };
        let z = reparameterize(&post, &mut ChaCha8Rng::seed_from_u64(1));
        assert!((z.z[0] - 1.0).abs() < 1e-8 && (z.z[1] + 2.0).abs() < 1e-8);
        let post = LatentPosterior { mean: vec![0.0, 0.0], log_variance: vec![0.0, 1.0] };
        assert_eq!(
            post.reparameterize(&mut ChaCha8Rng::seed_from_u64(5)),
            post.reparameterize(&mut ChaCha8Rng::seed_from_u64(5))
        );
    }

    #[test]
    fn grid_predictor_size_contract() {
        let net = VfNet::new(small(), 7).unwrap();
        let z = LatentCode::new(vec![0.1; 4]);
        let g = net.grid_predict(&z, 30).unwrap();
        assert_eq!(g.len(), 30);
        assert!(g.matrix().iter().all(|v| v.abs() <= 1.0));
        assert_eq!(net.grid_predict(&z, 31).unwrap().len(), 31);
        assert!(net.grid_predict(&z, 0).is_err());
    }

    #[test]
    fn uniform_grid_is_a_lattice() {
        let g = uniform_grid(16);
        assert_eq!(g.get(0), [-1.0, -1.0]);
        assert_eq!(g.get(15), [1.0, 1.0]);
        assert_eq!(g.get(1), [-1.0, -1.0 + 2.0 / 3.0]);
        let t = uniform_grid(10);
        assert_eq!(t.len(), 10);
    }

    #[test]
    fn wrong_latent_dimension_is_rejected() {
        let net = VfNet::new(small(), 8).unwrap();
        let bad = LatentCode::new(vec![0.0; 3]);
        assert!(net.project_points(&cloud(5, 1), &bad).is_err());
    }
}
