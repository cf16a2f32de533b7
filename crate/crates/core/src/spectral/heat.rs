use nalgebra::DMatrix;

use super::SpectralBasis;
use crate::error::{Error, Result};

/// Spectral heat diffusion `Phi diag(exp(-lambda h_c)) Phi^T M Y`, one time per channel.
pub fn heat_diffuse(basis: &SpectralBasis, y: &DMatrix<f64>, h: &[f64]) -> Result<DMatrix<f64>> {
    if y.nrows() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: y.nrows(),
        });
    }
    if h.len() != y.ncols() {
        return Err(Error::DimensionMismatch {
            expected: y.ncols(),
            got: h.len(),
        });
    }
    if let Some(bad) = h.iter().find(|t| !t.is_finite() || **t < 0.0) {
        return Err(Error::invalid(format!("diffusion time must be finite and non-negative, got {bad}")));
    }
    let phi = basis.eigenvectors();
    let mut coeffs = phi.transpose() * basis.mass().apply(y);
    for (c, mut col) in coeffs.column_iter_mut().enumerate() {
        for (k, v) in col.iter_mut().enumerate() {
            *v *= (-basis.eigenvalues()[k].max(0.0) * h[c]).exp();
        }
    }
    Ok(phi * coeffs)
}

/// Removes the Weyl slope: `lambda'_k = lambda_k * area - 4 pi k`, k from 1.
///
/// `lambda * area` is dimensionless, which is what makes the result invariant
/// under uniform scaling of the shape.
pub fn normalize_eigenvalues(eigenvalues: &[f64], area: f64) -> Result<Vec<f64>> {
    if !(area > 0.0 && area.is_finite()) {
        return Err(Error::invalid(format!("surface area must be positive, got {area}")));
    }
    Ok(eigenvalues
        .iter()
        .enumerate()
        .map(|(i, l)| l * area - 4.0 * std::f64::consts::PI * (i + 1) as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Mass;

    fn toy_basis() -> SpectralBasis {
        // path graph 0-1-2 with unit masses, analytic eigenvectors
        let s2 = 2f64.sqrt();
        let s3 = 3f64.sqrt();
        let s6 = 6f64.sqrt();
        let phi = DMatrix::from_row_slice(3, 3, &[
            1.0 / s3, 1.0 / s2, 1.0 / s6,
            1.0 / s3, 0.0, -2.0 / s6,
            1.0 / s3, -1.0 / s2, 1.0 / s6,
        ]);
        SpectralBasis::new(vec![0.0, 1.0, 3.0], phi, Mass::Scalar(1.0)).unwrap()
    }

    #[test]
    fn zero_time_is_identity_on_full_basis() {
        let b = toy_basis();
        let y = DMatrix::from_column_slice(3, 2, &[1.0, -2.0, 0.5, 3.0, 0.0, 1.0]);
        let out = heat_diffuse(&b, &y, &[0.0, 0.0]).unwrap();
        assert!((out - y).amax() < 1e-12);
    }

    #[test]
    fn long_time_reaches_mean() {
        let b = toy_basis();
        let y = DMatrix::from_column_slice(3, 1, &[3.0, 0.0, 0.0]);
        let out = heat_diffuse(&b, &y, &[1e6]).unwrap();
        for v in out.iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_times() {
        let b = toy_basis();
        let y = DMatrix::zeros(3, 1);
        assert!(heat_diffuse(&b, &y, &[-1.0]).is_err());
        assert!(heat_diffuse(&b, &y, &[f64::NAN]).is_err());
        assert!(heat_diffuse(&b, &y, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn normalization_cancels_slope() {
        let area = 2.5;
        let l: Vec<f64> = (1..=8).map(|k| 4.0 * std::f64::consts::PI * k as f64 / area).collect();
        for v in normalize_eigenvalues(&l, area).unwrap() {
            assert!(v.abs() < 1e-12);
        }
        assert!(normalize_eigenvalues(&l, 0.0).is_err());
    }
}
