//! Everything a trained model is used for after training: sampling, meshes,
//! completion of partial clouds, latent arithmetic and the linear probe.

mod completion;
mod latent;
mod mesh;
mod probe;
mod sample;

pub use completion::{complete_shape, evaluate_completion, CompletionOptions, OccupancyGrid};
pub use latent::{apply_direction, interpolate, latent_direction};
pub use mesh::{generate_mesh, lattice_faces, Mesh};
pub use probe::{linear_probe, ProbeReport};
pub use sample::{decode_cloud, sample_cloud, student_t_noise, EncodingSource};
