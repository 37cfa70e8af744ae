use std::io::Write;
use std::path::Path;

use crate::model::{uniform_grid, LatentCode, VfNet};
use crate::{Error, Point3, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    /// Indices in range and pairwise distinct for every face.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (k, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::pre(format!("face {k} references a vertex outside 0..{n}")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::pre(format!("face {k} repeats a vertex")));
            }
        }
        Ok(())
    }

    pub fn write_obj<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
        }
        for f in &self.faces {
            writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        Ok(())
    }

    pub fn save_obj(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_obj(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }
}

/// Two triangles per cell of an `r × r` row-major lattice, wound the same way.
pub fn lattice_faces(r: usize) -> Vec<[usize; 3]> {
    let mut faces = Vec::with_capacity(2 * (r - 1) * (r - 1));
    for a in 0..r - 1 {
        for b in 0..r - 1 {
            let v00 = a * r + b;
            let v01 = v00 + 1;
            let v10 = v00 + r;
            let v11 = v10 + 1;
            faces.push([v00, v10, v11]);
            faces.push([v00, v11, v01]);
        }
    }
    faces
}

/// Folds an `r × r` lattice over the patch and connects neighbouring
/// vertices.
pub fn generate_mesh(model: &VfNet, z: &LatentCode, resolution: usize) -> Result<Mesh> {
    if resolution < 2 {
        return Err(Error::pre(format!("mesh resolution must be at least 2, got {resolution}")));
    }
    let g = uniform_grid(resolution * resolution);
    let vertices = model.fold(z, &g)?.into_points();
    Ok(Mesh { vertices, faces: lattice_faces(resolution) })
}
