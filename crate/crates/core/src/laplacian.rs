//! Weak Laplacians: a mollified cotangent operator on the mesh, a Gaussian
//! k-NN graph operator on the same vertices, and their convex mix.
//!
//! Every operator is positive semi-definite with constants in its kernel.

use crate::error::{Error, Result};
use crate::knn::KdTree;
use crate::mesh::{Mesh, Vec3};
use crate::sparse::{MassMatrix, SparseOperator};

/// Relative slack enforced on every triangle inequality.
pub const MOLLIFY_EPS: f64 = 1e-6;

/// Neighbour count of the point-cloud operator.
pub const DEFAULT_KNN: usize = 30;

/// Shifts the three edge lengths of a face by the smallest `delta` that makes
/// every triangle inequality hold with the given slack.
pub fn mollify_lengths(l: [f64; 3], slack: f64) -> [f64; 3] {
    let mut delta = 0.0f64;
    for i in 0..3 {
        let (a, b, c) = (l[i], l[(i + 1) % 3], l[(i + 2) % 3]);
        // (a + d) + (b + d) >= (c + d) + slack
        delta = delta.max(slack + c - a - b);
    }
    l.map(|x| x + delta)
}

/// Cotangents of the corner angles, corner `i` being opposite edge `l[i]`.
fn corner_cotangents(l: [f64; 3]) -> [f64; 3] {
    let [a, b, c] = l;
    let s = 0.5 * (a + b + c);
    let area = (s * (s - a) * (s - b) * (s - c)).max(0.0).sqrt();
    let denom = 4.0 * area;
    [
        (b * b + c * c - a * a) / denom,
        (c * c + a * a - b * b) / denom,
        (a * a + b * b - c * c) / denom,
    ]
}

/// Weak cotangent Laplacian and lumped (one-third area) mass matrix.
pub fn mesh_laplacian(mesh: &Mesh) -> Result<(SparseOperator, MassMatrix)> {
    if mesh.face_count() == 0 {
        return Err(Error::InvalidMesh("mesh has no faces".into()));
    }
    let n = mesh.vertex_count();
    let slack = MOLLIFY_EPS * mesh.mean_edge_length();
    let mut triplets = Vec::with_capacity(mesh.face_count() * 12);
    let mut mass = vec![0.0; n];
    for (fi, f) in mesh.faces().iter().enumerate() {
        let p = f.map(|i| mesh.vertices()[i]);
        // edge i is opposite corner i
        let lengths = [
            (p[2] - p[1]).norm(),
            (p[0] - p[2]).norm(),
            (p[1] - p[0]).norm(),
        ];
        let cot = corner_cotangents(mollify_lengths(lengths, slack));
        for i in 0..3 {
            let (j, k) = (f[(i + 1) % 3], f[(i + 2) % 3]);
            let w = 0.5 * cot[i];
            triplets.extend([(j, k, -w), (k, j, -w), (j, j, w), (k, k, w)]);
        }
        let third = mesh.face_area(fi) / 3.0;
        for &v in f {
            mass[v] += third;
        }
    }
    Ok((SparseOperator::from_triplets(n, &triplets)?, MassMatrix::new(mass)?))
}

/// Gaussian-weighted symmetrized k-NN graph Laplacian `D - W` with a uniform
/// mass of `total_area / n` per point.
pub fn pointcloud_laplacian(
    points: &[Vec3],
    k: usize,
    total_area: f64,
) -> Result<(SparseOperator, MassMatrix)> {
    let n = points.len();
    if k == 0 || n < k + 1 {
        return Err(Error::invalid(format!(
            "point-cloud Laplacian needs at least k+1 = {} points, got {n}",
            k + 1
        )));
    }
    if !(total_area > 0.0) {
        return Err(Error::invalid("total area must be positive"));
    }
    let tree = KdTree::new(points);
    let neighbours = tree.knn_graph(k);
    let sigma = neighbours
        .iter()
        .enumerate()
        .map(|(i, nb)| (points[nb[k - 1]] - points[i]).norm())
        .sum::<f64>()
        / n as f64;
    let sigma2 = sigma.max(1e-12).powi(2);

    let mut edges: Vec<(usize, usize)> = neighbours
        .iter()
        .enumerate()
        .flat_map(|(i, nb)| nb.iter().map(move |&j| (i.min(j), i.max(j))))
        .collect();
    edges.sort_unstable();
    edges.dedup();

    let mut triplets = Vec::with_capacity(edges.len() * 4);
    for (i, j) in edges {
        let d = (points[i] - points[j]).norm().max(1e-12);
        let w = (-d * d / sigma2).exp();
        triplets.extend([(i, j, -w), (j, i, -w), (i, i, w), (j, j, w)]);
    }
    Ok((
        SparseOperator::from_triplets(n, &triplets)?,
        MassMatrix::uniform(n, total_area / n as f64)?,
    ))
}

/// `(1 - rho) * mesh_op + rho * cloud_op`.
pub fn mixed_laplacian(
    mesh_op: &SparseOperator,
    cloud_op: &SparseOperator,
    rho: f64,
) -> Result<SparseOperator> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("mixing weight {rho} outside [0, 1]")));
    }
    if rho == 0.0 {
        if mesh_op.dim() != cloud_op.dim() {
            return Err(Error::DimensionMismatch {
                expected: mesh_op.dim(),
                got: cloud_op.dim(),
            });
        }
        return Ok(mesh_op.clone());
    }
    if rho == 1.0 {
        if mesh_op.dim() != cloud_op.dim() {
            return Err(Error::DimensionMismatch {
                expected: mesh_op.dim(),
                got: cloud_op.dim(),
            });
        }
        return Ok(cloud_op.clone());
    }
    mesh_op.linear_combination(1.0 - rho, cloud_op, rho)
}

/// The three operators used by the pipeline, built on the mesh vertices.
#[derive(Debug, Clone)]
pub struct LaplacianSet {
    pub mesh: SparseOperator,
    pub cloud: SparseOperator,
    pub mixed: SparseOperator,
    pub mass: MassMatrix,
}

/// Builds mesh, point-cloud and mixed operators; `k` is clamped to `V - 1`.
pub fn build_laplacians(mesh: &Mesh, k: usize, rho: f64) -> Result<LaplacianSet> {
    let (lm, mass) = mesh_laplacian(mesh)?;
    let k = k.min(mesh.vertex_count() - 1).max(1);
    let (lp, _) = pointcloud_laplacian(mesh.vertices(), k, mass.total())?;
    let mixed = mixed_laplacian(&lm, &lp, rho)?;
    Ok(LaplacianSet {
        mesh: lm,
        cloud: lp,
        mixed,
        mass,
    })
}
