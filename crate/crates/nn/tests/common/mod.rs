#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uv3_core::gradients::build_gradient_operator;
use uv3_core::laplacian::build_laplacians;
use uv3_core::sampling::{farthest_point_sample, SamplingConfig};
use uv3_core::spectral::{eigendecompose, Mass};
use uv3_core::{Mesh, SpectralBasis, Vec3};
use uv3_nn::toy::two_tone_sphere;
use uv3_nn::{DenoiserConfig, ShapeContext, TrainingShape};

/// Smallest configuration that still exercises every layer.
pub fn tiny_config() -> DenoiserConfig {
    DenoiserConfig {
        width: 8,
        mlp_width: 8,
        levels: 2,
        groups: 2,
        heads: 2,
        head_dim: 4,
        time_dim: 8,
        time_hidden: 8,
        k_eigs: 8,
        n_sihks: 4,
        cond_hidden: 6,
        cond_dim: 4,
        fps_count: 6,
        ..DenoiserConfig::default()
    }
}

pub fn mesh_basis(mesh: &Mesh, k: usize) -> SpectralBasis {
    let set = build_laplacians(mesh, 10, 0.05).unwrap();
    eigendecompose(&set.mixed, &set.mass, k).unwrap()
}

/// A context on random points with a random orthonormal-ish basis; enough for exercising the network.
pub fn random_context(points: &[Vec3], cfg: &DenoiserConfig, seed: u64) -> ShapeContext {
    let (phi, lam, sihks) = random_spectral_data(points.len(), cfg, seed);
    context_with(points, phi, &lam, sihks, cfg)
}

/// An `M`-orthonormal basis (scalar mass `1/P`) with a constant first vector, and random signatures.
pub fn random_spectral_data(p: usize, cfg: &DenoiserConfig, seed: u64) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = cfg.k_eigs;
    let mut phi = DMatrix::from_fn(p, k, |_, _| rng.random_range(-1.0..1.0));
    phi.column_mut(0).fill(1.0);
    let q = phi.qr().q() * (p as f64).sqrt();
    let lam: Vec<f64> = (0..k).map(|i| i as f64 * 1.5).collect();
    let sihks = DMatrix::from_fn(p, cfg.n_sihks, |_, _| rng.random_range(0.0..1.0));
    (q, lam, sihks)
}

pub fn sphere_points(n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            v.normalize()
        })
        .collect()
}

pub fn toy_shape(cfg: &DenoiserConfig, target: usize) -> TrainingShape {
    let mesh = two_tone_sphere(3);
    // signatures need a wider basis than the tiny network consumes
    let basis = mesh_basis(&mesh, cfg.k_eigs.max(16));
    TrainingShape {
        mesh,
        basis,
        sampling: SamplingConfig {
            target_count: target,
            fps_count: cfg.fps_count,
            n_signatures: cfg.n_sihks,
            ..SamplingConfig::default()
        },
    }
}

/// Context from explicit per-point data; gradients and attention points are derived from `points`.
pub fn context_with(
    points: &[Vec3],
    phi: DMatrix<f64>,
    lam: &[f64],
    sihks: DMatrix<f64>,
    cfg: &DenoiserConfig,
) -> ShapeContext {
    let p = points.len();
    let basis = SpectralBasis::new(lam.to_vec(), phi, Mass::Scalar(1.0 / p as f64)).unwrap();
    let normals: Vec<Vec3> = points.iter().map(|x| x.normalize()).collect();
    let grad = build_gradient_operator(points, &normals, 6.min(p - 1)).unwrap();
    let fps = farthest_point_sample(points, cfg.fps_count.min(p)).unwrap();
    ShapeContext::new(basis, &grad, fps, sihks, lam.to_vec()).unwrap()
}

/// Moves every parameter away from its structured initialization (closed gates, zero output layer).
pub fn perturbed(params: &uv3_nn::DenoiserParams, scale: f64, seed: u64) -> uv3_nn::DenoiserParams {
    let mut p = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, m) in p.iter_mut() {
        for v in m.iter_mut() {
            *v += rng.random_range(-scale..scale);
        }
    }
    p
}
