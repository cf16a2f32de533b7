use nalgebra::DMatrix;

use super::SpectralBasis;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SihksOptions {
    /// Number of log-spaced time samples.
    pub samples: usize,
    /// Time window is `[c / lambda_K, c / lambda_2]`.
    pub window: f64,
}

impl Default for SihksOptions {
    fn default() -> Self {
        Self {
            samples: 64,
            window: 4.0 * std::f64::consts::LN_10,
        }
    }
}

pub fn sihks(basis: &SpectralBasis, n_signatures: usize) -> Result<DMatrix<f64>> {
    sihks_with(basis, n_signatures, &SihksOptions::default())
}

/// Scale-invariant heat kernel signatures.
///
/// Scaling the shape rescales both the spectrum and the time window, so the
/// sampled log-HKS curve only shifts by a constant which the finite difference
/// removes.
pub fn sihks_with(basis: &SpectralBasis, n_signatures: usize, opts: &SihksOptions) -> Result<DMatrix<f64>> {
    let lam = basis.eigenvalues();
    let k = lam.len();
    if k < 16 {
        return Err(Error::invalid(format!("sihks needs at least 16 eigenpairs, got {k}")));
    }
    if opts.samples < 3 {
        return Err(Error::invalid("sihks needs at least 3 time samples"));
    }
    let diffs = opts.samples - 1;
    if n_signatures == 0 || n_signatures > diffs {
        return Err(Error::invalid(format!(
            "n_signatures must be in 1..={diffs}, got {n_signatures}"
        )));
    }
    if lam[1] <= 0.0 {
        return Err(Error::DegenerateSpectrum(
            "second eigenvalue is zero; the operator is disconnected".into(),
        ));
    }
    let tau_min = (opts.window / lam[k - 1]).log2();
    let tau_max = (opts.window / lam[1]).log2();
    let dtau = (tau_max - tau_min) / (opts.samples - 1) as f64;
    // decay[s][k] = exp(-lambda_k t_s)
    let decay: Vec<Vec<f64>> = (0..opts.samples)
        .map(|s| {
            let t = (tau_min + s as f64 * dtau).exp2();
            lam.iter().map(|l| (-l.max(0.0) * t).exp()).collect()
        })
        .collect();

    let phi = basis.eigenvectors();
    let n = basis.dim();
    let twiddle: Vec<Vec<(f64, f64)>> = (0..n_signatures)
        .map(|f| {
            (0..diffs)
                .map(|j| {
                    let a = -2.0 * std::f64::consts::PI * (f * j) as f64 / diffs as f64;
                    (a.cos(), a.sin())
                })
                .collect()
        })
        .collect();
    let mut out = DMatrix::zeros(n, n_signatures);
    let mut curve = vec![0.0; opts.samples];
    for p in 0..n {
        let sq: Vec<f64> = phi.row(p).iter().map(|v| v * v).collect();
        for (s, d) in decay.iter().enumerate() {
            let hks: f64 = d.iter().zip(&sq).map(|(a, b)| a * b).sum();
            curve[s] = hks.max(f64::MIN_POSITIVE).ln();
        }
        for (f, tw) in twiddle.iter().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, (c, s)) in tw.iter().enumerate() {
                let g = (curve[j + 1] - curve[j]) / dtau;
                re += g * c;
                im += g * s;
            }
            out[(p, f)] = re.hypot(im);
        }
    }
    Ok(out)
}
