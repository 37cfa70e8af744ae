//! Affine-coupling normalizing flow over the shape latent.
//!
//! Sampling runs base → latent through layers `0..K`; density evaluation
//! inverts latent → base through `K..0` and accumulates `-Σ s` per layer.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{mlp_layers, Activation};
use crate::diffcore::{Network, ParameterBlock, Tape};
use crate::{Error, Result};

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingLayer {
    /// Coordinates passed through unchanged and fed to the network.
    cond: Vec<usize>,
    /// Coordinates scaled and shifted.
    trans: Vec<usize>,
    /// `cond -> [raw_scale, shift]`; scale is `tanh(raw_scale)`.
    net: Network,
}

impl CouplingLayer {
    fn scale_shift(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (s, t, _) = self.scale_shift_impl(x, false);
        (s, t)
    }

    fn scale_shift_impl(&self, x: &[f64], record: bool) -> (Vec<f64>, Vec<f64>, Option<Tape>) {
        let a = Array2::from_shape_fn((1, self.cond.len()), |(_, j)| x[self.cond[j]]);
        let (out, tape) = if record {
            let (o, t) = self.net.forward_recorded(a.view(), None).expect("coupling shapes are fixed");
            (o, Some(t))
        } else {
            (self.net.forward(a.view(), None).expect("coupling shapes are fixed"), None)
        };
        let m = self.trans.len();
        let s = (0..m).map(|j| out[[0, j]].tanh()).collect();
        let t = (0..m).map(|j| out[[0, m + j]]).collect();
        (s, t, tape)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowPrior {
    dim: usize,
    layers: Vec<CouplingLayer>,
}

struct InverseStep {
    s: Vec<f64>,
    output: Vec<f64>,
    tape: Tape,
}

impl FlowPrior {
    /// `num_layers` couplings with alternating halves. Output layers start at
    /// zero, so a fresh flow is the identity map.
    pub fn new<R: Rng + ?Sized>(
        dim: usize,
        num_layers: usize,
        hidden: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::pre("flow prior needs a latent dimension of at least 2"));
        }
        let half = dim / 2;
        let layers = (0..num_layers)
            .map(|k| {
                let (cond, trans): (Vec<usize>, Vec<usize>) = if k % 2 == 0 {
                    ((0..half).collect(), (half..dim).collect())
                } else {
                    ((half..dim).collect(), (0..half).collect())
                };
                let specs = mlp_layers(cond.len(), &[hidden, hidden], 2 * trans.len(), activation);
                let mut net = Network::new(format!("flow.{k}"), specs, rng)?;
                net.zero_output_layer();
                Ok(CouplingLayer { cond, trans, net })
            })
            .collect::<Result<_>>()?;
        Ok(Self { dim, layers })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn blocks(&self) -> Vec<&ParameterBlock> {
        self.layers.iter().flat_map(|l| l.net.blocks()).collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut ParameterBlock> {
        self.layers.iter_mut().flat_map(|l| l.net.blocks_mut()).collect()
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.layers.iter().flat_map(|l| l.net.zero_grads()).collect()
    }

    /// Base sample `u` → latent `z`.
    pub fn forward(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.dim, "flow input width");
        let mut x = u.to_vec();
        for layer in &self.layers {
            let (s, t) = layer.scale_shift(&x);
            for (j, &i) in layer.trans.iter().enumerate() {
                x[i] = x[i] * s[j].exp() + t[j];
            }
        }
        x
    }

    /// Latent `z` → base `u`, plus `log |det ∂u/∂z|`.
    pub fn inverse(&self, z: &[f64]) -> (Vec<f64>, f64) {
        assert_eq!(z.len(), self.dim, "flow input width");
        let mut x = z.to_vec();
        let mut log_det = 0.0;
        for layer in self.layers.iter().rev() {
            let (s, t) = layer.scale_shift(&x);
            for (j, &i) in layer.trans.iter().enumerate() {
                x[i] = (x[i] - t[j]) * (-s[j]).exp();
                log_det -= s[j];
            }
        }
        (x, log_det)
    }

    fn base_log_density(u: &[f64]) -> f64 {
        u.iter().map(|v| -0.5 * v * v - HALF_LOG_2PI).sum()
    }

    pub fn log_prob(&self, z: &[f64]) -> f64 {
        let (u, log_det) = self.inverse(z);
        Self::base_log_density(&u) + log_det
    }

    /// Returns `log p(z)` and the gradient of `scale * log p(z)` w.r.t. `z`.
    /// Parameter gradients of `scale * log p(z)` are added into `grads`
    /// (aligned with [`FlowPrior::blocks`]).
    pub fn log_prob_backward(&self, z: &[f64], scale: f64, grads: &mut [Vec<f64>]) -> (f64, Vec<f64>) {
        let mut x = z.to_vec();
        let mut log_det = 0.0;
        let mut steps: Vec<InverseStep> = Vec::with_capacity(self.layers.len());
        for layer in self.layers.iter().rev() {
            let (s, t, tape) = layer.scale_shift_impl(&x, true);
            for (j, &i) in layer.trans.iter().enumerate() {
                x[i] = (x[i] - t[j]) * (-s[j]).exp();
                log_det -= s[j];
            }
            steps.push(InverseStep { s, output: x.clone(), tape: tape.expect("recorded") });
        }
        let value = Self::base_log_density(&x) + log_det;

        // dL/du for the base density, then walk the inverse pass backwards
        let mut g: Vec<f64> = x.iter().map(|u| -u * scale).collect();
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for l in &self.layers {
            offsets.push(acc);
            acc += l.net.blocks().len();
        }
        for (step, k) in steps.iter().rev().zip(0..self.layers.len()) {
            let layer = &self.layers[k];
            let m = layer.trans.len();
            let mut upstream = Array2::zeros((1, 2 * m));
            let mut next = g.clone();
            for (j, &i) in layer.trans.iter().enumerate() {
                let e = (-step.s[j]).exp();
                let gs = -g[i] * step.output[i] - scale;
                upstream[[0, j]] = gs * (1.0 - step.s[j] * step.s[j]);
                upstream[[0, m + j]] = -g[i] * e;
                next[i] = g[i] * e;
            }
            let nb = layer.net.blocks().len();
            let (ga, _) = layer
                .net
                .backward_into(&step.tape, upstream.view(), &mut grads[offsets[k]..offsets[k] + nb])
                .expect("coupling shapes are fixed");
            for (j, &i) in layer.cond.iter().enumerate() {
                next[i] += ga[[0, j]];
            }
            g = next;
        }
        (value, g)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        self.forward(&u)
    }
}
