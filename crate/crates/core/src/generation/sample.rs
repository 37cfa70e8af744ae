use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::{uniform_grid, LatentCode, VarianceMode, VfNet};
use crate::{Error, PointCloud, Result};

/// Where the point encodings of a generated cloud come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingSource {
    UniformGrid,
    GridPredictor,
}

impl std::str::FromStr for EncodingSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uniform_grid" | "uniform" => Ok(EncodingSource::UniformGrid),
            "grid_predictor" | "predictor" => Ok(EncodingSource::GridPredictor),
            other => Err(format!("unknown encoding source `{other}`")),
        }
    }
}

/// A draw from the standard 3D Student-t with `nu` degrees of freedom.
pub fn student_t_noise<R: Rng + ?Sized>(nu: f64, rng: &mut R) -> [f64; 3] {
    let chi = ChiSquared::new(nu).expect("nu is positive");
    let n: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let w = (chi.sample(rng) / nu).sqrt();
    n.map(|v| v / w)
}

/// Decodes `n` points for the code `z`, optionally adding Student-t noise
/// scaled by the variance network.
pub fn decode_cloud<R: Rng + ?Sized>(
    model: &VfNet,
    z: &LatentCode,
    n: usize,
    source: EncodingSource,
    noise: bool,
    rng: &mut R,
) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::pre("cannot sample an empty cloud"));
    }
    let g = match source {
        EncodingSource::UniformGrid => uniform_grid(n),
        EncodingSource::GridPredictor => model.grid_predict(z, n)?,
    };
    let mean = model.fold(z, &g)?;
    if !noise {
        return Ok(mean);
    }
    let sigma = model.predict_variance(z, &g, VarianceMode::Learned)?;
    let pts = mean
        .points()
        .iter()
        .zip(&sigma)
        .map(|(p, s)| {
            let t = student_t_noise(model.nu(), rng);
            [p[0] + s * t[0], p[1] + s * t[1], p[2] + s * t[2]]
        })
        .collect();
    PointCloud::new(pts)
}

/// Draws `z` from the flow prior and decodes `n` points.
pub fn sample_cloud<R: Rng + ?Sized>(
    model: &VfNet,
    n: usize,
    source: EncodingSource,
    noise: bool,
    rng: &mut R,
) -> Result<PointCloud> {
    let z = model.flow_sample(rng);
    decode_cloud(model, &z, n, source, noise, rng)
}
