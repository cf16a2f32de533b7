mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uv3_core::laplacian::mesh_laplacian;
use uv3_core::mesh::{mesh_stats, Mesh, Vec3};
use uv3_core::sampling::*;
use uv3_core::shapes;
use uv3_core::spectral::{eigendecompose, heat_diffuse};
use uv3_core::texture::RgbImage;

use common::pearson;

fn min_pairwise(points: &[Vec3]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min((points[i] - points[j]).norm());
        }
    }
    best
}

#[test]
fn radius_examples() {
    let r = pds_radius(1, 2.0 * 3f64.sqrt()).unwrap();
    assert!((r - 1.4).abs() < 1e-12);
    let r = pds_radius(5000, 1.0).unwrap();
    assert!((r - 1.4 * (1.0 / (2.0 * 3f64.sqrt() * 5000.0)).sqrt()).abs() < 1e-15);
    assert!((r - 0.010_638).abs() < 1e-6);
    let r2 = pds_radius(5000, 2.0).unwrap();
    assert!((r2 / r - 2f64.sqrt()).abs() < 1e-12);
    assert!(pds_radius(0, 1.0).is_err());
    assert!(pds_radius(10, -1.0).is_err());
    assert!((achieved_quality(5000, r, 1.0) - PDS_QUALITY).abs() < 1e-12);
}

#[test]
fn oversized_radius_gives_one_sample() {
    let s = poisson_disk_sample(&shapes::unit_square(), 1.5, 3).unwrap();
    assert_eq!(s.points.len(), 1);
}

#[test]
fn unit_square_count_and_hard_core() {
    let mesh = shapes::unit_square();
    let r = pds_radius(100, mesh.total_area()).unwrap();
    for seed in 0..10 {
        let s = poisson_disk_sample(&mesh, r, seed).unwrap();
        assert!((70..=130).contains(&s.points.len()), "{}", s.points.len());
        assert!(min_pairwise(&s.points) >= r * (1.0 - 1e-9));
        for b in &s.barycentric {
            assert!(b.iter().all(|&w| (0.0..=1.0).contains(&w)));
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn quality_band_on_icosphere() {
    let mesh = shapes::icosphere(3, 1.0);
    let area = mesh.total_area();
    let r = pds_radius(1000, area).unwrap();
    for seed in 0..10 {
        let s = poisson_disk_sample(&mesh, r, seed).unwrap();
        let q = achieved_quality(s.points.len(), r, area);
        assert!((0.55..=0.85).contains(&q), "seed {seed}: {q}");
    }
}

#[test]
fn deterministic_per_seed() {
    let mesh = shapes::icosphere(2, 1.0);
    let a = poisson_disk_sample(&mesh, 0.1, 11).unwrap();
    let b = poisson_disk_sample(&mesh, 0.1, 11).unwrap();
    let c = poisson_disk_sample(&mesh, 0.1, 12).unwrap();
    assert_eq!(a.points, b.points);
    assert_ne!(a.points, c.points);
}

#[test]
fn area_uniform_across_triangles() {
    let mesh = shapes::unit_square();
    let r = pds_radius(200, 1.0).unwrap();
    let mut counts = [0usize; 2];
    for seed in 0..20 {
        for f in poisson_disk_sample(&mesh, r, seed).unwrap().face_ids {
            counts[f] += 1;
        }
    }
    let (a, b) = (counts[0] as f64, counts[1] as f64);
    assert!((a - b).abs() / a.max(b) < 0.2, "{counts:?}");
}

#[test]
fn mass_examples() {
    assert!((approx_mass(5000, 6.0, 1.0).unwrap() - 9.8e-5).abs() < 1e-18);
    assert!((approx_mass(1000, 4.5, 6.0).unwrap() - 2.205e-3).abs() < 1e-15);
    let q = mesh_stats(&shapes::cube()).mean_incident_faces;
    assert!((q - 4.5).abs() < 1e-12);
    let half = approx_mass(2000, 6.0, 1.0).unwrap() / approx_mass(1000, 6.0, 1.0).unwrap();
    assert!((half - 0.5).abs() < 1e-15);
    assert!(approx_mass(0, 6.0, 1.0).is_err());
}

#[test]
fn eigenvector_interpolation() {
    let mesh = shapes::icosphere(2, 1.0);
    let (l, m) = mesh_laplacian(&mesh).unwrap();
    let basis = eigendecompose(&l, &m, 8).unwrap();
    let f = 17;
    let face = mesh.faces()[f];
    let third = 1.0 / 3.0;
    let phi = interpolate_eigenvectors(&basis, &mesh, &[f, f], &[[1.0, 0.0, 0.0], [third; 3]]).unwrap();
    let v = basis.eigenvectors();
    for k in 0..8 {
        assert_eq!(phi[(0, k)], v[(face[0], k)]);
        let mean = (v[(face[0], k)] + v[(face[1], k)] + v[(face[2], k)]) / 3.0;
        assert!((phi[(1, k)] - mean).abs() < 1e-14);
    }
    let s = poisson_disk_sample(&mesh, 0.1, 1).unwrap();
    let phi = interpolate_eigenvectors(&basis, &mesh, &s.face_ids, &s.barycentric).unwrap();
    let c = v[(0, 0)];
    assert!(phi.column(0).iter().all(|x| (x - c).abs() < 1e-12));
    assert!(interpolate_eigenvectors(&basis, &mesh, &[10_000], &[[1.0, 0.0, 0.0]]).is_err());

    // commutes with linear combinations
    let comb = v.column(1) * 2.0 - v.column(3) * 0.5;
    let direct = interpolate_field(&mesh, &DMatrix::from_columns(&[comb]), &s.face_ids, &s.barycentric).unwrap();
    let after = phi.column(1) * 2.0 - phi.column(3) * 0.5;
    assert!((direct.column(0) - after).amax() < 1e-13);
}

fn reference_fps(points: &[Vec3], count: usize) -> Vec<usize> {
    let c = points.iter().sum::<Vec3>() / points.len() as f64;
    let key = |i: usize| (points[i].x, points[i].y, points[i].z);
    let better = |a: usize, b: usize, da: f64, db: f64| da > db || (da == db && key(a) < key(b));
    let mut start = 0;
    for i in 1..points.len() {
        if better(i, start, (points[i] - c).norm(), (points[start] - c).norm()) {
            start = i;
        }
    }
    let mut out = vec![start];
    while out.len() < count {
        let score = |i: usize| out.iter().map(|&j| (points[i] - points[j]).norm()).fold(f64::INFINITY, f64::min);
        let mut best = None;
        for i in (0..points.len()).filter(|i| !out.contains(i)) {
            best = match best {
                Some(b) if !better(i, b, score(i), score(b)) => Some(b),
                _ => Some(i),
            };
        }
        out.push(best.unwrap());
    }
    out
}

#[test]
fn fps_examples() {
    let corners = [
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(1.0, 1.0, 0.0),
    ];
    let sel = farthest_point_sample(&corners, 2).unwrap();
    assert_eq!(sel, vec![0, 3]);
    let mut all = farthest_point_sample(&corners, 4).unwrap();
    all.sort();
    assert_eq!(all, vec![0, 1, 2, 3]);
    assert!(farthest_point_sample(&corners, 5).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pts: Vec<Vec3> = (0..100).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
    assert_eq!(farthest_point_sample(&pts, 10).unwrap(), reference_fps(&pts, 10));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fps_permutation_invariant(seed in 0u64..1000, s in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts: Vec<Vec3> = (0..40).map(|_| Vec3::new(rng.random(), rng.random(), 0.0)).collect();
        // duplicates and grid-aligned points to exercise ties
        pts.push(pts[3]);
        pts.push(Vec3::new(0.5, 0.5, 0.0));
        let a: Vec<Vec3> = farthest_point_sample(&pts, s).unwrap().into_iter().map(|i| pts[i]).collect();
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        perm.reverse();
        perm.rotate_left((seed % 7) as usize);
        let shuffled: Vec<Vec3> = perm.iter().map(|&i| pts[i]).collect();
        let b: Vec<Vec3> = farthest_point_sample(&shuffled, s).unwrap().into_iter().map(|i| shuffled[i]).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn hard_core_for_any_seed(seed in 0u64..10_000) {
        let mesh = shapes::icosphere(1, 1.0);
        let r = pds_radius(150, mesh.total_area()).unwrap();
        let s = poisson_disk_sample(&mesh, r, seed).unwrap();
        prop_assert!(min_pairwise(&s.points) >= r * (1.0 - 1e-9));
    }
}

fn textured_square(tex: RgbImage) -> Mesh {
    shapes::unit_square().with_texture(tex)
}

#[test]
fn colour_examples() {
    let red = textured_square(RgbImage::filled(1, 1, [1.0, 0.0, 0.0]));
    let s = poisson_disk_sample(&red, 0.2, 0).unwrap();
    assert!(sample_colors(&red, &s).unwrap().iter().all(|c| *c == [1.0, 0.0, 0.0]));

    let gray = shapes::unit_square().with_base_color([0.5; 3]);
    assert!(sample_colors(&gray, &s).unwrap().iter().all(|c| *c == [0.5; 3]));

    let bare = Mesh::new(gray.vertices().to_vec(), gray.faces().to_vec()).unwrap();
    assert!(sample_colors(&bare, &s).is_err());

    let split = RgbImage::from_fn(2, 1, |x, _| if x == 0 { [0.0; 3] } else { [1.0; 3] });
    let c = split.sample_bilinear(0.5, 0.5);
    assert!((c[0] - 0.5).abs() < 1e-12);
}

#[test]
fn texture_scale_examples() {
    // one triangle with UV area 1 and 3D area 100 sample triangles
    let r = 0.01;
    let sample_area = r * r * 3f64.sqrt() / 4.0;
    let side = (100.0 * sample_area * 4.0 / 3f64.sqrt()).sqrt();
    let tri = shapes::equilateral_triangle(side)
        .with_uvs(vec![[[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]]])
        .unwrap();
    let s = texture_scale_factor(&tri, r, 100, 100, 250).unwrap();
    assert!((s - 0.1).abs() < 1e-12, "{s}");
    let s_half = texture_scale_factor(&tri, r, 50, 50, 250).unwrap();
    assert!((s_half / s - 2.0).abs() < 1e-12);

    // 3s >= 1 leaves the texture untouched, 3s = 0.3 shrinks 100 -> 30
    let tex = RgbImage::from_fn(100, 100, |x, y| [x as f32 / 99.0, y as f32 / 99.0, 0.0]);
    let big = tri.clone().with_texture(tex.clone());
    let eff = effective_texture(&big, r, 250).unwrap().unwrap();
    assert_eq!((eff.width(), eff.height()), (30, 30));
    let coarse = tri.with_texture(RgbImage::filled(4, 4, [0.2; 3]));
    let eff = effective_texture(&coarse, r, 250).unwrap().unwrap();
    assert_eq!(eff.width(), 4);
    assert!(texture_scale_factor(&shapes::cube(), r, 10, 10, 5).is_err());
}

#[test]
fn sampled_operator_matches_mesh_diffusion() {
    let mesh = shapes::icosphere(3, 1.0);
    let (l, m) = mesh_laplacian(&mesh).unwrap();
    let basis = eigendecompose(&l, &m, 128).unwrap();
    let cfg = SamplingConfig {
        target_count: 2000,
        with_colors: false,
        ..Default::default()
    };
    let s = SurfaceSamples::sample(&mesh, &basis, &cfg, 7).unwrap();
    assert_eq!(s.fps_indices.len(), 250);
    assert_eq!(s.sihks_p.shape(), (s.len(), 32));

    let mut y = DMatrix::zeros(mesh.vertex_count(), 1);
    y[(0, 0)] = 1.0;
    let on_mesh = heat_diffuse(&basis, &y, &[0.05]).unwrap();
    let expected = interpolate_field(&mesh, &on_mesh, &s.face_ids, &s.barycentric).unwrap();
    let y_p = interpolate_field(&mesh, &y, &s.face_ids, &s.barycentric).unwrap();
    let sampled = heat_diffuse(&s.basis(basis.eigenvalues()).unwrap(), &y_p, &[0.05]).unwrap();
    let r = pearson(expected.as_slice(), sampled.as_slice());
    assert!(r >= 0.99, "{r}");
}
