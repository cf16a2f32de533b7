use std::collections::HashMap;

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Vec3};

/// Target sampling quality: the ratio of the disk radius to that of a
/// hexagonal packing with the same point count.
pub const PDS_QUALITY: f64 = 0.7;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Radius giving roughly `target` samples on a surface of the given area.
pub fn pds_radius(target: usize, area: f64) -> Result<f64> {
    if target == 0 {
        return Err(Error::invalid("target sample count must be positive"));
    }
    if !(area > 0.0 && area.is_finite()) {
        return Err(Error::invalid(format!("surface area must be positive, got {area}")));
    }
    Ok(2.0 * PDS_QUALITY * (area / (2.0 * SQRT_3 * target as f64)).sqrt())
}

/// Quality actually achieved by `count` samples of radius `r`.
pub fn achieved_quality(count: usize, r: f64, area: f64) -> f64 {
    0.5 * r * (2.0 * SQRT_3 * count as f64 / area).sqrt()
}

/// Sample count the radius was designed for (inverse of [`pds_radius`]).
pub fn implied_target(r: f64, area: f64) -> f64 {
    area * (2.0 * PDS_QUALITY / r).powi(2) / (2.0 * SQRT_3)
}

#[derive(Debug, Clone)]
pub struct PdsOptions {
    /// Total dart budget as a multiple of `P*`.
    pub budget_factor: f64,
}

impl Default for PdsOptions {
    fn default() -> Self {
        Self { budget_factor: 30.0 }
    }
}

/// Dart-throwing output: positions with their face ids and barycentric coordinates.
#[derive(Debug, Clone)]
pub struct PdsSamples {
    pub points: Vec<Vec3>,
    pub face_ids: Vec<usize>,
    pub barycentric: Vec<[f64; 3]>,
    pub radius: f64,
    pub darts: usize,
}

struct HashGrid {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl HashGrid {
    fn key(&self, p: &Vec3) -> (i64, i64, i64) {
        (
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
            (p.z / self.cell).floor() as i64,
        )
    }

    fn is_free(&self, p: &Vec3, points: &[Vec3], r2: f64) -> bool {
        let (x, y, z) = self.key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&(x + dx, y + dy, z + dz)) {
                        if ids.iter().any(|&i| (points[i] - p).norm_squared() < r2) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    fn insert(&mut self, p: &Vec3, id: usize) {
        let key = self.key(p);
        self.cells.entry(key).or_default().push(id);
    }
}

pub fn poisson_disk_sample(mesh: &Mesh, r: f64, seed: u64) -> Result<PdsSamples> {
    poisson_disk_sample_with(mesh, r, seed, &PdsOptions::default())
}

/// Uniform-radius dart throwing on the surface.
///
/// Darts are area-uniform; a dart is kept when no accepted sample lies closer
/// than `r` (Euclidean). Throwing ends after `budget_factor * P*` darts, where
/// `P*` is the count `r` was designed for; at the default budget this lands
/// the achieved quality near 0.7 instead of at the jamming limit (~0.78).
pub fn poisson_disk_sample_with(mesh: &Mesh, r: f64, seed: u64, opts: &PdsOptions) -> Result<PdsSamples> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!("sampling radius must be positive, got {r}")));
    }
    if r > mesh.bounding_diagonal() {
        warn!("sampling radius {r} exceeds the bounding diagonal; expect a single sample");
    }
    let areas = mesh.face_areas();
    let faces = WeightedIndex::new(&areas).map_err(|e| Error::InvalidMesh(format!("face areas: {e}")))?;
    let target = implied_target(r, mesh.total_area()).max(1.0);
    let budget = ((opts.budget_factor * target).ceil() as usize).max(1);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grid = HashGrid {
        cell: r,
        cells: HashMap::new(),
    };
    let mut out = PdsSamples {
        points: Vec::new(),
        face_ids: Vec::new(),
        barycentric: Vec::new(),
        radius: r,
        darts: 0,
    };
    let r2 = r * r;
    while out.darts < budget {
        let face = faces.sample(&mut rng);
        let s = rng.random::<f64>().sqrt();
        let t = rng.random::<f64>();
        let bary = [1.0 - s, s * (1.0 - t), s * t];
        let p = mesh.point_at(face, bary);
        out.darts += 1;
        if grid.is_free(&p, &out.points, r2) {
            grid.insert(&p, out.points.len());
            out.points.push(p);
            out.face_ids.push(face);
            out.barycentric.push(bary);
        }
    }
    Ok(out)
}
