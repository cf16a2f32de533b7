//! Online surface sampling: Poisson-disk points, their approximate mass,
//! interpolated eigenvectors, farthest-point subsets and colours.

mod color;
mod fps;
mod pds;

pub use color::{effective_texture, sample_colors, sample_colors_with, texture_scale_factor, DEFAULT_SCALE_TRIANGLES};
pub use fps::farthest_point_sample;
pub use pds::{
    achieved_quality, implied_target, pds_radius, poisson_disk_sample, poisson_disk_sample_with, PdsOptions,
    PdsSamples, PDS_QUALITY,
};

use log::debug;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mesh::{mesh_stats, Mesh, Vec3};
use crate::spectral::{sihks, Mass, SpectralBasis};

/// Scalar mass shared by all samples: `0.7^2 Q Area / (6 P*)`.
pub fn approx_mass(target: usize, mean_incident_faces: f64, area: f64) -> Result<f64> {
    if target == 0 || !(mean_incident_faces > 0.0) || !(area > 0.0) {
        return Err(Error::invalid("approximate mass needs positive inputs"));
    }
    Ok(PDS_QUALITY * PDS_QUALITY * mean_incident_faces * area / (6.0 * target as f64))
}

/// Barycentric interpolation of a per-vertex field at surface locations.
pub fn interpolate_field(
    mesh: &Mesh,
    values: &DMatrix<f64>,
    face_ids: &[usize],
    barycentric: &[[f64; 3]],
) -> Result<DMatrix<f64>> {
    if face_ids.len() != barycentric.len() {
        return Err(Error::DimensionMismatch {
            expected: face_ids.len(),
            got: barycentric.len(),
        });
    }
    if values.nrows() != mesh.vertex_count() {
        return Err(Error::DimensionMismatch {
            expected: mesh.vertex_count(),
            got: values.nrows(),
        });
    }
    let mut out = DMatrix::zeros(face_ids.len(), values.ncols());
    for (row, (&f, b)) in face_ids.iter().zip(barycentric).enumerate() {
        let face = mesh
            .faces()
            .get(f)
            .ok_or_else(|| Error::invalid(format!("face id {f} out of range")))?;
        for (corner, w) in face.iter().zip(b) {
            for c in 0..values.ncols() {
                out[(row, c)] += w * values[(*corner, c)];
            }
        }
    }
    Ok(out)
}

/// Eigenvectors at the samples, interpolated from the mesh vertices.
pub fn interpolate_eigenvectors(
    basis: &SpectralBasis,
    mesh: &Mesh,
    face_ids: &[usize],
    barycentric: &[[f64; 3]],
) -> Result<DMatrix<f64>> {
    interpolate_field(mesh, basis.eigenvectors(), face_ids, barycentric)
}

#[derive(Debug, Clone)]
pub struct SamplingConfig {
    pub target_count: usize,
    pub fps_count: usize,
    pub n_signatures: usize,
    pub pds: PdsOptions,
    pub scale_triangles: usize,
    pub with_colors: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            target_count: 5000,
            fps_count: 250,
            n_signatures: 32,
            pds: PdsOptions::default(),
            scale_triangles: DEFAULT_SCALE_TRIANGLES,
            with_colors: true,
        }
    }
}

/// Everything a denoiser pass needs about one sampled instance of a surface.
#[derive(Debug, Clone)]
pub struct SurfaceSamples {
    pub points: Vec<Vec3>,
    pub face_ids: Vec<usize>,
    pub barycentric: Vec<[f64; 3]>,
    pub radius: f64,
    pub phi_p: DMatrix<f64>,
    pub mass_scalar: f64,
    pub fps_indices: Vec<usize>,
    pub sihks_p: DMatrix<f64>,
    pub colors: Option<Vec<[f64; 3]>>,
}

impl SurfaceSamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Spectral basis on the samples: mesh eigenvalues, interpolated vectors, scalar mass.
    pub fn basis(&self, eigenvalues: &[f64]) -> Result<SpectralBasis> {
        SpectralBasis::new(eigenvalues.to_vec(), self.phi_p.clone(), Mass::Scalar(self.mass_scalar))
    }

    /// Unit normal of the face under each sample.
    pub fn normals(&self, mesh: &Mesh) -> Vec<Vec3> {
        self.face_ids.iter().map(|&f| mesh.face_normal(f)).collect()
    }

    pub fn colors_matrix(&self) -> Option<DMatrix<f64>> {
        let c = self.colors.as_ref()?;
        Some(DMatrix::from_fn(c.len(), 3, |i, j| c[i][j]))
    }

    /// Runs the whole pipeline for one seed.
    pub fn sample(mesh: &Mesh, basis: &SpectralBasis, cfg: &SamplingConfig, seed: u64) -> Result<Self> {
        let area = mesh.total_area();
        let r = pds_radius(cfg.target_count, area)?;
        let pds = poisson_disk_sample_with(mesh, r, seed, &cfg.pds)?;
        debug!(
            "{} samples for target {} (quality {:.3})",
            pds.points.len(),
            cfg.target_count,
            achieved_quality(pds.points.len(), r, area)
        );
        let phi_p = interpolate_eigenvectors(basis, mesh, &pds.face_ids, &pds.barycentric)?;
        let mass_scalar = approx_mass(cfg.target_count, mesh_stats(mesh).mean_incident_faces, area)?;
        let fps_indices = farthest_point_sample(&pds.points, cfg.fps_count.min(pds.points.len()))?;
        let sample_basis = basis.with_vectors(phi_p.clone(), Mass::Scalar(mass_scalar))?;
        let sihks_p = sihks(&sample_basis, cfg.n_signatures)?;
        let colors = if cfg.with_colors {
            Some(sample_colors_with(mesh, &pds, cfg.scale_triangles)?)
        } else {
            None
        };
        Ok(Self {
            points: pds.points,
            face_ids: pds.face_ids,
            barycentric: pds.barycentric,
            radius: r,
            phi_p,
            mass_scalar,
            fps_indices,
            sihks_p,
            colors,
        })
    }
}
