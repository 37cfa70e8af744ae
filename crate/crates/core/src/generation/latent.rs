use super::mesh::{generate_mesh, Mesh};
use crate::model::{LatentCode, VfNet};
use crate::{Error, PointCloud, Result};

/// Meshes decoded along the straight line between the posterior means of
/// `a` and `b`, endpoints included.
pub fn interpolate(model: &VfNet, a: &PointCloud, b: &PointCloud, steps: usize, resolution: usize) -> Result<Vec<Mesh>> {
    if steps < 2 {
        return Err(Error::pre(format!("interpolation needs at least 2 steps, got {steps}")));
    }
    let za = model.encode(a)?.mean;
    let zb = model.encode(b)?.mean;
    (0..steps)
        .map(|k| {
            let t = k as f64 / (steps - 1) as f64;
            let z = za.iter().zip(&zb).map(|(p, q)| if k == steps - 1 { *q } else { (1.0 - t) * p + t * q }).collect();
            generate_mesh(model, &LatentCode::new(z), resolution)
        })
        .collect()
}

/// Mean change of posterior mean from each original to its modified
/// counterpart.
pub fn latent_direction(model: &VfNet, pairs: &[(PointCloud, PointCloud)]) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(Error::pre("latent direction needs at least one pair"));
    }
    let mut dir = vec![0.0; model.latent_dim()];
    for (orig, modified) in pairs {
        let a = model.encode(orig)?.mean;
        let b = model.encode(modified)?.mean;
        for j in 0..dir.len() {
            dir[j] += b[j] - a[j];
        }
    }
    dir.iter_mut().for_each(|v| *v /= pairs.len() as f64);
    Ok(dir)
}

pub fn apply_direction(z: &LatentCode, direction: &[f64], scale: f64) -> LatentCode {
    LatentCode::new(z.z.iter().zip(direction).map(|(v, d)| v + scale * d).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::generation::generate_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (VfNet, PointCloud, PointCloud) {
        let model = VfNet::new(ModelConfig { latent_dim: 4, ..ModelConfig::default() }, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut cloud = || PointCloud::new((0..30).map(|_| [rng.random(), rng.random(), rng.random()]).collect()).unwrap();
        (model, cloud(), cloud())
    }

    #[test]
    fn interpolation_endpoints() {
        let (model, a, b) = setup();
        let meshes = interpolate(&model, &a, &b, 2, 4).unwrap();
        assert_eq!(meshes.len(), 2);
        assert_eq!(meshes[0], generate_mesh(&model, &model.encode(&a).unwrap().mean_code(), 4).unwrap());
        let five = interpolate(&model, &a, &b, 5, 4).unwrap();
        assert_eq!(five[4], generate_mesh(&model, &model.encode(&b).unwrap().mean_code(), 4).unwrap());
        assert!(interpolate(&model, &a, &b, 1, 4).is_err());
    }

    #[test]
    fn direction_of_pairs() {
        let (model, a, b) = setup();
        assert!(latent_direction(&model, &[(a.clone(), a.clone())]).unwrap().iter().all(|v| *v == 0.0));
        let d = latent_direction(&model, &[(a.clone(), b.clone())]).unwrap();
        let (za, zb) = (model.encode(&a).unwrap().mean, model.encode(&b).unwrap().mean);
        for j in 0..4 {
            assert_eq!(d[j], zb[j] - za[j]);
        }
        assert!(latent_direction(&model, &[]).is_err());
    }

    #[test]
    fn direction_arithmetic() {
        let z = LatentCode::new(vec![0.3, -1.2, 5.0]);
        let d = [0.7, 0.1, -2.0];
        assert_eq!(apply_direction(&z, &d, 0.0), z);
        let back = apply_direction(&apply_direction(&z, &d, 1.7), &d, -1.7);
        assert!(back.z.iter().zip(&z.z).all(|(a, b)| (a - b).abs() < 1e-12));
        let two = apply_direction(&apply_direction(&z, &d, 0.5), &d, 0.25);
        let one = apply_direction(&z, &d, 0.75);
        assert!(two.z.iter().zip(&one.z).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
