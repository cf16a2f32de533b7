mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use uv3_core::laplacian::{build_laplacians, mesh_laplacian, DEFAULT_KNN};
use uv3_core::shapes;
use uv3_core::spectral::{
    eigendecompose, heat_diffuse, normalize_eigenvalues, sihks, SpectralBasis,
};
use uv3_core::{Error, MassMatrix, SparseOperator};

use common::{dense_eigen, expm};

fn check_basis(l: &SparseOperator, m: &MassMatrix, b: &SpectralBasis) {
    let phi = b.eigenvectors();
    let mphi = b.mass().apply(phi);
    let gram = phi.tr_mul(&mphi);
    let k = b.k();
    assert!((gram - DMatrix::identity(k, k)).amax() < 1e-6);
    let lam = b.eigenvalues();
    let lphi = l.mul_dense(phi);
    let resid = lphi - mphi * DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(lam));
    assert!(resid.amax() <= 1e-6 * lam[k - 1], "residual {}", resid.amax());
    assert!(lam.windows(2).all(|w| w[0] <= w[1]));
    assert!(lam.iter().all(|&x| x >= 0.0));
    assert_eq!(m.dim(), b.dim());
}

#[test]
fn path_graph_spectrum() {
    let l = SparseOperator::from_triplets(
        3,
        &[(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 1.0)],
    )
    .unwrap();
    let m = MassMatrix::uniform(3, 1.0).unwrap();
    let b = eigendecompose(&l, &m, 3).unwrap();
    for (got, want) in b.eigenvalues().iter().zip([0.0, 1.0, 3.0]) {
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
    assert!(matches!(eigendecompose(&l, &m, 4), Err(Error::InvalidArgument(_))));
}

#[test]
fn matches_dense_oracle_on_icosphere() {
    let mesh = shapes::icosphere(2, 1.0);
    let (l, m) = mesh_laplacian(&mesh).unwrap();
    let b = eigendecompose(&l, &m, 40).unwrap();
    let (dense, _) = dense_eigen(&l, &m);
    for (got, want) in b.eigenvalues().iter().zip(&dense) {
        assert!((got - want).abs() <= 1e-8 * dense[39].max(1.0), "{got} vs {want}");
    }
    check_basis(&l, &m, &b);
}

#[test]
fn constant_mode_first() {
    let mesh = shapes::icosphere(2, 1.0);
    let (l, m) = mesh_laplacian(&mesh).unwrap();
    let b = eigendecompose(&l, &m, 10).unwrap();
    let lam = b.eigenvalues();
    assert!(lam[0] <= 1e-8 * lam[9]);
    let c = b.eigenvectors()[(0, 0)];
    assert!(c > 0.0);
    for v in b.eigenvectors().column(0).iter() {
        assert!((v - c).abs() < 1e-8);
    }
    assert!((c * c * m.total() - 1.0).abs() < 1e-8);
}

#[test]
fn sphere_spectrum_near_spherical_harmonics() {
    let mesh = shapes::icosphere(3, 1.0);
    let (l, m) = mesh_laplacian(&mesh).unwrap();
    let b = eigendecompose(&l, &m, 9).unwrap();
    let want = [0.0, 2.0, 2.0, 2.0, 6.0, 6.0, 6.0, 6.0, 6.0];
    for (got, w) in b.eigenvalues().iter().zip(want) {
        if w == 0.0 {
            assert!(got.abs() < 1e-8);
        } else {
            assert!((got - w).abs() / w < 0.05, "{got} vs {w}");
        }
    }
}

#[test]
fn residuals_on_mixed_operator_with_many_modes() {
    let mesh = shapes::sliced_sphere(2);
    let set = build_laplacians(&mesh, DEFAULT_KNN, 0.05).unwrap();
    let b = eigendecompose(&set.mixed, &set.mass, 64).unwrap();
    check_basis(&set.mixed, &set.mass, &b);
    let (dense, _) = dense_eigen(&set.mixed, &set.mass);
    for (got, want) in b.eigenvalues().iter().zip(&dense) {
        assert!((got - want).abs() <= 1e-8 * dense[63], "{got} vs {want}");
    }
}

#[test]
fn heat_matches_dense_exponential() {
    let mesh = shapes::icosphere(1, 1.0);
    let (l, m) = mesh_laplacian(&mesh).unwrap();
    let n = mesh.vertex_count();
    let k = 20;
    let b = eigendecompose(&l, &m, k).unwrap();
    let mut y = DMatrix::zeros(n, 1);
    y[(5, 0)] = 1.0;
    let h = 0.1;
    let out = heat_diffuse(&b, &y, &[h]).unwrap();

    // exp(-h M^-1 L) Y, projected onto the K-space
    let minv_l = DMatrix::from_fn(n, n, |i, j| l.get(i, j) / m.diag()[i]);
    let full = expm(&(minv_l * -h)) * &y;
    let phi = b.eigenvectors();
    let projected = phi * phi.tr_mul(&b.mass().apply(&full));
    assert!((out - projected).amax() < 1e-5);
}

#[test]
fn heat_long_time_and_normalization_scale_invariance() {
    let mesh = shapes::icosphere(2, 1.0);
    let (l, m) = mesh_laplacian(&mesh).unwrap();
    let b = eigendecompose(&l, &m, 16).unwrap();
    let y = DMatrix::from_fn(mesh.vertex_count(), 2, |i, c| ((i * 7 + c * 3) % 11) as f64);
    let out = heat_diffuse(&b, &y, &[1e6, 1e6]).unwrap();
    let mean = b.weighted_mean(&y);
    for c in 0..2 {
        for v in out.column(c).iter() {
            assert!((v - mean[c]).abs() < 1e-9 * mean[c].abs().max(1.0));
        }
    }

    let scaled = mesh.scaled(3.0).unwrap();
    let (l2, m2) = mesh_laplacian(&scaled).unwrap();
    let b2 = eigendecompose(&l2, &m2, 16).unwrap();
    let n1 = normalize_eigenvalues(b.eigenvalues(), mesh.total_area()).unwrap();
    let n2 = normalize_eigenvalues(b2.eigenvalues(), scaled.total_area()).unwrap();
    for (a, c) in n1.iter().zip(&n2) {
        assert!((a - c).abs() <= 1e-5 * a.abs().max(1.0), "{a} vs {c}");
    }
}

#[test]
fn sihks_on_sphere_and_scaled_mesh() {
    // coarser icospheres are too inhomogeneous for 1e-3
    let mesh = shapes::icosphere(5, 1.0);
    let (l, m) = mesh_laplacian(&mesh).unwrap();
    let b = eigendecompose(&l, &m, 16).unwrap();
    let s = sihks(&b, 32).unwrap();
    assert_eq!(s.shape(), (mesh.vertex_count(), 32));
    for c in 0..32 {
        let col = s.column(c);
        assert!(col.max() - col.min() < 1e-3 * s.amax(), "channel {c}");
    }
    for r in 0..s.nrows() {
        let row = s.row(r);
        assert!(row.iter().all(|&v| v <= row[0] + 1e-12));
    }

    let split = shapes::sliced_sphere(2);
    let (l, m) = mesh_laplacian(&split).unwrap();
    let b = eigendecompose(&l, &m, 16).unwrap();
    assert!(matches!(sihks(&b, 8), Err(Error::DegenerateSpectrum(_))));
    assert!(sihks(&b.truncated(8), 4).is_err());
}

#[test]
fn sihks_scale_invariant() {
    let mesh = shapes::uv_sphere(10, 16, 1.0).map_vertices(|p| nalgebra::Vector3::new(p.x * 1.5, p.y, p.z * 0.7)).unwrap();
    let (l, m) = mesh_laplacian(&mesh).unwrap();
    let s1 = sihks(&eigendecompose(&l, &m, 32).unwrap(), 16).unwrap();
    let scaled = mesh.scaled(2.0).unwrap();
    let (l, m) = mesh_laplacian(&scaled).unwrap();
    let s2 = sihks(&eigendecompose(&l, &m, 32).unwrap(), 16).unwrap();
    let rel = (&s1 - &s2).amax() / s1.amax();
    assert!(rel < 1e-6, "{rel}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn heat_conserves_mean_and_contracts(
        vals in prop::collection::vec(-5.0f64..5.0, 42),
        h1 in 0.0f64..2.0,
        h2 in 0.0f64..2.0,
    ) {
        let mesh = shapes::icosphere(1, 1.0);
        let (l, m) = mesh_laplacian(&mesh).unwrap();
        let b = eigendecompose(&l, &m, 42).unwrap();
        let y = DMatrix::from_column_slice(42, 1, &vals);
        let a = heat_diffuse(&b, &y, &[h1]).unwrap();
        let mean0 = b.weighted_mean(&y)[0];
        let mean1 = b.weighted_mean(&a)[0];
        prop_assert!((mean0 - mean1).abs() <= 1e-6 * mean0.abs().max(1e-3));
        prop_assert!(b.m_norms(&a)[0] <= b.m_norms(&y)[0] * (1.0 + 1e-12));
        let two = heat_diffuse(&b, &a, &[h2]).unwrap();
        let once = heat_diffuse(&b, &y, &[h1 + h2]).unwrap();
        prop_assert!((two - once).amax() < 1e-6);
    }
}
