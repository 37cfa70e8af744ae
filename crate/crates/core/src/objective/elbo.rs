//! Single-sample ELBO for one cloud, with its reverse pass.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::student_t::{logpdf_with_grad, student_t_log_normalizer};
use crate::diffcore::ParameterBlock;
use crate::model::{LatentPosterior, VarianceMode, VfNet, VARIANCE_FLOOR};
use crate::{Error, PointCloud, Result};

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboBreakdown {
    pub elbo: f64,
    /// Mean per-point Student-t log-likelihood.
    pub recon_log_likelihood: f64,
    /// Single-sample estimate of `log q(z|x) - log p(z)`; can be negative.
    pub kl: f64,
    pub beta: f64,
}

impl ElboBreakdown {
    fn new(recon: f64, kl: f64, beta: f64) -> Self {
        Self { elbo: recon - beta * kl, recon_log_likelihood: recon, kl, beta }
    }
}

/// Gradient buffers for every network, each aligned with that network's
/// blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub encoder: Vec<Vec<f64>>,
    pub projector: Vec<Vec<f64>>,
    pub decoder: Vec<Vec<f64>>,
    pub variance_net: Vec<Vec<f64>>,
    pub flow: Vec<Vec<f64>>,
    pub grid_predictor: Vec<Vec<f64>>,
}

impl ModelGrads {
    pub fn zeros(model: &VfNet) -> Self {
        Self {
            encoder: model.encoder.zero_grads(),
            projector: model.projector.zero_grads(),
            decoder: model.decoder.zero_grads(),
            variance_net: model.variance_net.zero_grads(),
            flow: model.flow.zero_grads(),
            grid_predictor: model.grid_predictor.zero_grads(),
        }
    }

    fn parts(&self) -> [&Vec<Vec<f64>>; 6] {
        [&self.encoder, &self.projector, &self.decoder, &self.variance_net, &self.flow, &self.grid_predictor]
    }

    fn parts_mut(&mut self) -> [&mut Vec<Vec<f64>>; 6] {
        [
            &mut self.encoder,
            &mut self.projector,
            &mut self.decoder,
            &mut self.variance_net,
            &mut self.flow,
            &mut self.grid_predictor,
        ]
    }

    pub fn add_assign(&mut self, other: &ModelGrads) {
        for (a, b) in self.parts_mut().into_iter().zip(other.parts()) {
            for (x, y) in a.iter_mut().zip(b) {
                for (p, q) in x.iter_mut().zip(y) {
                    *p += q;
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for part in self.parts_mut() {
            part.iter_mut().flatten().for_each(|v| *v *= s);
        }
    }

    /// Flattened in [`VfNet::blocks`] order.
    pub fn into_blocks(self) -> Vec<Vec<f64>> {
        let [a, b, c, d, e, f] =
            [self.encoder, self.projector, self.decoder, self.variance_net, self.flow, self.grid_predictor];
        a.into_iter().chain(b).chain(c).chain(d).chain(e).chain(f).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.parts().iter().all(|p| p.iter().flatten().all(|v| v.is_finite()))
    }
}

/// Which networks receive gradients from [`cloud_objective`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub encoder: bool,
    pub projector: bool,
    pub decoder: bool,
    pub variance_net: bool,
    pub flow: bool,
}

impl Trainable {
    pub const ALL: Trainable = Trainable { encoder: true, projector: true, decoder: true, variance_net: true, flow: true };
    pub const VARIANCE_ONLY: Trainable =
        Trainable { encoder: false, projector: false, decoder: false, variance_net: true, flow: false };
}

pub fn sample_noise<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// `log q(z|x)` for `z = mean + exp(lv/2) eps`.
fn log_q(post: &LatentPosterior, eps: &[f64]) -> f64 {
    eps.iter().zip(&post.log_variance).map(|(e, lv)| -0.5 * e * e - 0.5 * lv - HALF_LOG_2PI).sum()
}

fn row_of(m: &Array2<f64>, i: usize) -> [f64; 3] {
    [m[[i, 0]], m[[i, 1]], m[[i, 2]]]
}

fn check_sigma(sigma: &[f64]) -> Result<()> {
    if let Some(s) = sigma.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(Error::NonFinite(format!("predicted scale {s}")));
    }
    Ok(())
}

/// ELBO of one cloud for fixed standard-normal noise `eps`.
pub fn elbo_with_noise(
    model: &VfNet,
    x: &Array2<f64>,
    eps: &[f64],
    beta: f64,
    mode: VarianceMode,
) -> Result<ElboBreakdown> {
    let post = model.encode_matrix(x)?;
    let z = post.reparameterize_with(eps);
    let g = model.project_matrix(x, &z)?;
    let y = model.fold_matrix(&z, &g)?;
    let sigma = model.predict_variance(&z, &g, mode)?;
    check_sigma(&sigma)?;
    let nu = model.nu();
    let norm = student_t_log_normalizer(nu);
    let n = x.nrows();
    let recon = (0..n)
        .map(|i| super::student_t::logpdf_unchecked(norm, &row_of(x, i), &row_of(&y, i), sigma[i], nu))
        .sum::<f64>()
        / n as f64;
    let kl = log_q(&post, eps) - model.flow_log_prob(&z);
    Ok(ElboBreakdown::new(recon, kl, beta))
}

/// Single-sample ELBO of `pc`; the noise is drawn from `rng`.
pub fn elbo<R: Rng + ?Sized>(
    pc: &PointCloud,
    model: &VfNet,
    beta: f64,
    mode: VarianceMode,
    rng: &mut R,
) -> Result<ElboBreakdown> {
    let eps = sample_noise(model.latent_dim(), rng);
    elbo_with_noise(model, &pc.to_matrix(), &eps, beta, mode)
}

fn add_side(acc: &mut [f64], side: Option<ndarray::Array1<f64>>) {
    if let Some(s) = side {
        for (a, v) in acc.iter_mut().zip(s.iter()) {
            *a += v;
        }
    }
}

/// ELBO of one cloud plus the gradient of `-weight * elbo` with respect to
/// every trainable network. Noise `eps` is held fixed.
pub fn cloud_objective(
    model: &VfNet,
    x: &Array2<f64>,
    eps: &[f64],
    beta: f64,
    mode: VarianceMode,
    weight: f64,
    trainable: Trainable,
) -> Result<(ElboBreakdown, ModelGrads)> {
    let d = model.latent_dim();
    let n = x.nrows();
    let (enc_out, enc_tape) = model.encoder.forward_recorded(x.view(), None)?;
    let post = LatentPosterior {
        mean: (0..d).map(|j| enc_out[[0, j]]).collect(),
        log_variance: (0..d).map(|j| enc_out[[0, d + j]]).collect(),
    };
    let z = post.reparameterize_with(eps);
    let zv = ArrayView1::from(&z.z[..]);
    let (g, proj_tape) = model.projector.forward_recorded(x.view(), Some(zv))?;
    let (y, dec_tape) = model.decoder.forward_recorded(g.view(), Some(zv))?;
    let (sigma, var_tape) = match mode {
        VarianceMode::Constant(c) => (vec![c; n], None),
        VarianceMode::Learned => {
            let (s, tape) = model.variance_net.forward_recorded(g.view(), Some(zv))?;
            (s.iter().map(|v| v + VARIANCE_FLOOR).collect(), Some(tape))
        }
    };
    check_sigma(&sigma)?;

    let nu = model.nu();
    let norm = student_t_log_normalizer(nu);
    let mut recon = 0.0;
    let mut dy = Array2::zeros((n, 3));
    let mut dsigma = Array2::zeros((n, 1));
    let c = -weight / n as f64;
    for i in 0..n {
        let (v, dmu, ds) = logpdf_with_grad(norm, &row_of(x, i), &row_of(&y, i), sigma[i], nu);
        recon += v;
        for k in 0..3 {
            dy[[i, k]] = c * dmu[k];
        }
        dsigma[[i, 0]] = c * ds;
    }
    recon /= n as f64;

    let mut grads = ModelGrads::zeros(model);
    let lq = log_q(&post, eps);
    let need_z = trainable.encoder;
    let need_g = need_z || trainable.projector;
    let mut gz = vec![0.0; d];

    // -weight * (-beta) * log p(z)
    let (lp, flow_gz) = if trainable.flow || need_z {
        let mut scratch;
        let buf = if trainable.flow {
            &mut grads.flow
        } else {
            scratch = model.flow.zero_grads();
            &mut scratch
        };
        model.flow.log_prob_backward(&z.z, -weight * beta, buf)
    } else {
        (model.flow_log_prob(&z), vec![0.0; d])
    };
    let kl = lq - lp;

    let mut dg = Array2::<f64>::zeros((n, 2));
    if let Some(tape) = &var_tape {
        if trainable.variance_net || need_g {
            let (gg, gs) = model.variance_net.backward_into(tape, dsigma.view(), &mut grads.variance_net)?;
            dg += &gg;
            add_side(&mut gz, gs);
        }
    }
    if trainable.decoder || need_g {
        let (gg, gs) = model.decoder.backward_into(&dec_tape, dy.view(), &mut grads.decoder)?;
        dg += &gg;
        add_side(&mut gz, gs);
    }
    if need_g {
        let (_, gs) = model.projector.backward_into(&proj_tape, dg.view(), &mut grads.projector)?;
        add_side(&mut gz, gs);
    }
    if need_z {
        for j in 0..d {
            gz[j] += flow_gz[j];
        }
        let mut up = Array2::zeros((1, 2 * d));
        for j in 0..d {
            up[[0, j]] = gz[j];
            let dz_dlv = 0.5 * (0.5 * post.log_variance[j]).exp() * eps[j];
            // d(-weight * -beta * log q)/d lv = weight * beta * (-1/2)
            up[[0, d + j]] = gz[j] * dz_dlv - 0.5 * weight * beta;
        }
        model.encoder.backward_into(&enc_tape, up.view(), &mut grads.encoder)?;
    }
    if !trainable.projector {
        grads.projector.iter_mut().flatten().for_each(|v| *v = 0.0);
    }
    if !trainable.decoder {
        grads.decoder.iter_mut().flatten().for_each(|v| *v = 0.0);
    }
    if !trainable.variance_net {
        grads.variance_net.iter_mut().flatten().for_each(|v| *v = 0.0);
    }
    Ok((ElboBreakdown::new(recon, kl, beta), grads))
}

/// Mean negative ELBO over a fixed micro-batch with frozen noise, as a
/// [`crate::diffcore::Objective`] for gradient checking.
#[derive(Debug, Clone)]
pub struct ElboObjective {
    pub model: VfNet,
    pub clouds: Vec<Array2<f64>>,
    pub noise: Vec<Vec<f64>>,
    pub beta: f64,
    pub mode: VarianceMode,
}

impl ElboObjective {
    pub fn new<R: Rng + ?Sized>(model: VfNet, clouds: &[PointCloud], beta: f64, mode: VarianceMode, rng: &mut R) -> Self {
        let noise = clouds.iter().map(|_| sample_noise(model.latent_dim(), rng)).collect();
        Self { clouds: clouds.iter().map(PointCloud::to_matrix).collect(), model, noise, beta, mode }
    }
}

impl crate::diffcore::Objective for ElboObjective {
    fn blocks(&self) -> Vec<&ParameterBlock> {
        self.model.blocks()
    }

    fn blocks_mut(&mut self) -> Vec<&mut ParameterBlock> {
        self.model.blocks_mut()
    }

    fn value(&self) -> f64 {
        let w = 1.0 / self.clouds.len() as f64;
        self.clouds
            .iter()
            .zip(&self.noise)
            .map(|(x, e)| -w * elbo_with_noise(&self.model, x, e, self.beta, self.mode).expect("forward").elbo)
            .sum()
    }

    fn value_and_gradient(&self) -> (f64, Vec<Vec<f64>>) {
        let w = 1.0 / self.clouds.len() as f64;
        let mut total = ModelGrads::zeros(&self.model);
        let mut value = 0.0;
        for (x, e) in self.clouds.iter().zip(&self.noise) {
            let (b, g) = cloud_objective(&self.model, x, e, self.beta, self.mode, w, Trainable::ALL).expect("backward");
            value -= w * b.elbo;
            total.add_assign(&g);
        }
        (value, total.into_blocks())
    }
}
