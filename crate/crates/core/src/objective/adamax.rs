//! Adamax: Adam with an infinity-norm second moment.

use serde::{Deserialize, Serialize};

use crate::diffcore::ParameterBlock;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adamax {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
}

impl Adamax {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), u: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update of every block whose `active` flag is set. Inactive blocks
    /// keep their values and moments.
    pub fn step(&mut self, blocks: &mut [&mut ParameterBlock], grads: &[Vec<f64>], active: &[bool]) -> Result<()> {
        if blocks.len() != grads.len() || blocks.len() != active.len() {
            return Err(Error::pre(format!(
                "{} blocks, {} gradients, {} flags",
                blocks.len(),
                grads.len(),
                active.len()
            )));
        }
        if self.m.is_empty() {
            self.m = blocks.iter().map(|b| vec![0.0; b.len()]).collect();
            self.u = self.m.clone();
        }
        for (i, (b, g)) in blocks.iter().zip(grads).enumerate() {
            if b.len() != g.len() || self.m[i].len() != g.len() {
                return Err(Error::Shape {
                    layer: b.name.clone(),
                    message: format!("gradient has {} entries, block has {}", g.len(), b.len()),
                });
            }
        }
        self.t += 1;
        let step = self.lr / (1.0 - self.beta1.powi(self.t as i32));
        for (i, (b, g)) in blocks.iter_mut().zip(grads).enumerate() {
            if !active[i] {
                continue;
            }
            let (m, u) = (&mut self.m[i], &mut self.u[i]);
            for k in 0..g.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                u[k] = (self.beta2 * u[k]).max(g[k].abs());
                b.values[k] -= step * m[k] / (u[k] + self.eps);
            }
        }
        Ok(())
    }
}

/// Single-call form: `state` is created on first use.
pub fn adamax_step(
    blocks: &mut [&mut ParameterBlock],
    grads: &[Vec<f64>],
    state: &mut Adamax,
    active: &[bool],
) -> Result<()> {
    state.step(blocks, grads, active)
}
