//! Block shift-invert Lanczos for the smallest eigenpairs of `L x = lambda M x`.
//!
//! The Krylov space of `(L - sigma M)^-1 M` is grown a block at a time with
//! full `M`-reorthogonalization, Rayleigh-Ritz is applied to the whole basis,
//! and the converged Ritz vectors get a final Rayleigh-Ritz pass on the
//! original pencil. Blocks (rather than a single start vector) let the solver
//! resolve repeated eigenvalues, which symmetric meshes produce exactly.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Mass, SpectralBasis};
use crate::cholesky::LdlFactor;
use crate::error::{Error, Result};
use crate::sparse::{MassMatrix, SparseOperator};

#[derive(Debug, Clone)]
pub struct EigenOptions {
    pub block_size: usize,
    /// Residual `|L x - rho M x|_(M^-1)` relative to the largest wanted
    /// eigenvalue at which a pair counts as converged.
    pub tol: f64,
    /// Shift is `-shift_scale * trace(L) / trace(M)`.
    pub shift_scale: f64,
    pub factorization_retries: usize,
    pub seed: u64,
    /// Krylov basis cap as a multiple of `k`.
    pub max_basis_factor: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            block_size: 8,
            tol: 1e-8,
            shift_scale: 1e-8,
            factorization_retries: 3,
            seed: 0x5eed_e16e,
            max_basis_factor: 8,
        }
    }
}

pub fn eigendecompose(l: &SparseOperator, m: &MassMatrix, k: usize) -> Result<SpectralBasis> {
    eigendecompose_with(l, m, k, &EigenOptions::default())
}

struct Krylov<'a> {
    mass: &'a [f64],
    v: Vec<DVector<f64>>,
    mv: Vec<DVector<f64>>,
    z: Vec<DVector<f64>>,
    // h[i][j] = v_i^T M z_j for j <= i; symmetric because OP is M-self-adjoint
    h: Vec<Vec<f64>>,
}

impl Krylov<'_> {
    fn m_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(x.len(), x.iter().zip(self.mass).map(|(a, m)| a * m))
    }

    /// M-orthonormalizes `cands` against the basis and each other. Vectors that
    /// collapse are replaced by random directions while room remains.
    fn orthonormalize(&self, cands: Vec<DVector<f64>>, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
        let n = self.mass.len();
        let mut accepted: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
        for cand in cands {
            let mut c = cand;
            for _attempt in 0..4 {
                if self.v.len() + accepted.len() >= n {
                    return accepted.into_iter().map(|(a, _)| a).collect();
                }
                let before = self.m_apply(&c).dot(&c).sqrt();
                for _ in 0..2 {
                    for (q, mq) in self.v.iter().zip(&self.mv) {
                        let coef = mq.dot(&c);
                        c.axpy(-coef, q, 1.0);
                    }
                    for (q, mq) in &accepted {
                        let coef = mq.dot(&c);
                        c.axpy(-coef, q, 1.0);
                    }
                }
                let mc = self.m_apply(&c);
                let norm = mc.dot(&c).sqrt();
                if norm > 1e-10 * before && norm.is_finite() {
                    accepted.push((c / norm, mc / norm));
                    break;
                }
                c = random_vector(n, rng);
            }
        }
        accepted.into_iter().map(|(a, _)| a).collect()
    }
}

fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

fn factor_shifted(
    l: &SparseOperator,
    m: &MassMatrix,
    opts: &EigenOptions,
) -> Result<(LdlFactor, f64)> {
    let base = -opts.shift_scale * l.trace().abs().max(f64::MIN_POSITIVE) / m.total();
    let mut shift = base;
    let mut last_err = None;
    for attempt in 0..=opts.factorization_retries {
        match LdlFactor::new(&l.add_diagonal(-shift, m.diag())) {
            Ok(f) => return Ok((f, shift)),
            Err(e) => {
                warn!("factorization with shift {shift:e} failed (attempt {attempt}): {e}");
                last_err = Some(e);
                shift *= 10.0;
            }
        }
    }
    Err(last_err.unwrap())
}

pub fn eigendecompose_with(
    l: &SparseOperator,
    m: &MassMatrix,
    k: usize,
    opts: &EigenOptions,
) -> Result<SpectralBasis> {
    let n = l.dim();
    if m.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.dim(),
        });
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot compute {k} eigenpairs of a {n}-dimensional operator")));
    }
    let (factor, shift) = factor_shifted(l, m, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let b = opts.block_size.clamp(1, n);

    let mut kr = Krylov {
        mass: m.diag(),
        v: Vec::new(),
        mv: Vec::new(),
        z: Vec::new(),
        h: Vec::new(),
    };
    let mut block = kr.orthonormalize((0..b).map(|_| random_vector(n, &mut rng)).collect(), &mut rng);
    let cap = n.min((opts.max_basis_factor * k).max(k + 30 * b));
    let mut ritz: Option<DMatrix<f64>> = None;

    while !block.is_empty() {
        let mut new_z = Vec::with_capacity(block.len());
        for v in block {
            let mv = kr.m_apply(&v);
            let z = DVector::from_vec(factor.solve(mv.as_slice()));
            let j = kr.v.len();
            kr.v.push(v);
            kr.mv.push(mv);
            kr.z.push(z.clone());
            let row: Vec<f64> = (0..=j).map(|i| kr.mv[j].dot(&kr.z[i])).collect();
            kr.h.push(row);
            new_z.push(z);
        }
        let dim = kr.v.len();
        if dim >= k + b.min(n - k) || dim == n {
            let (y, converged) = rayleigh_ritz(&kr, l, k, opts.tol);
            debug!("basis {dim}: {converged}/{k} Ritz pairs converged");
            if converged == k || dim == n {
                ritz = Some(y);
                break;
            }
            if dim >= cap {
                return Err(Error::NoConvergence(format!(
                    "only {converged} of {k} eigenpairs converged with a basis of {dim}"
                )));
            }
        }
        block = kr.orthonormalize(new_z, &mut rng);
    }
    // the basis can run out before the first convergence check
    let y = ritz.unwrap_or_else(|| rayleigh_ritz(&kr, l, k, opts.tol).0);
    let vmat = DMatrix::from_columns(&kr.v);
    let x = &vmat * y;
    let (eigenvalues, eigenvectors) = refine(l, m, &x)?;
    debug!("eigendecomposition with shift {shift:e}: lambda_1 = {:e}, lambda_K = {:e}", eigenvalues[0], eigenvalues[k - 1]);
    SpectralBasis::new(eigenvalues, eigenvectors, Mass::Diagonal(m.diag().to_vec()))
}

/// Ritz coefficient vectors for the `k` largest Ritz values of the shifted
/// operator, and how many of them satisfy the original pencil to `tol`.
///
/// Convergence is judged on `L x - rho M x` rather than on the shifted
/// operator: the near-null modes have Ritz values around `1/|sigma|`, whose
/// roundoff would otherwise swamp the residuals of every other pair.
fn rayleigh_ritz(kr: &Krylov, l: &SparseOperator, k: usize, tol: f64) -> (DMatrix<f64>, usize) {
    let dim = kr.v.len();
    let h = DMatrix::from_fn(dim, dim, |i, j| if j <= i { kr.h[i][j] } else { kr.h[j][i] });
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let kk = k.min(dim);
    let y = DMatrix::from_fn(dim, kk, |r, c| eig.eigenvectors[(r, order[c])]);

    let x = DMatrix::from_columns(&kr.v) * &y;
    let lx = l.mul_dense(&x);
    let rho: Vec<f64> = x.column_iter().zip(lx.column_iter()).map(|(a, b)| a.dot(&b)).collect();
    let scale = rho.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    let converged = (0..kk)
        .filter(|&c| {
            let norm = (0..x.nrows())
                .map(|i| {
                    let r = lx[(i, c)] - rho[c] * kr.mass[i] * x[(i, c)];
                    r * r / kr.mass[i]
                })
                .sum::<f64>()
                .sqrt();
            norm <= tol * scale
        })
        .count();
    (y, converged)
}

/// Rayleigh-Ritz of the original pencil on `span(x)`; returns ascending
/// eigenvalues (clamped at zero) and `M`-orthonormal vectors.
fn refine(l: &SparseOperator, m: &MassMatrix, x: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let lx = l.mul_dense(x);
    let mut mx = x.clone();
    for (i, mut row) in mx.row_iter_mut().enumerate() {
        row *= m.diag()[i];
    }
    let a = x.tr_mul(&lx);
    let bm = x.tr_mul(&mx);
    let a = (&a + a.transpose()) * 0.5;
    let bm = (&bm + bm.transpose()) * 0.5;
    let chol = bm
        .cholesky()
        .ok_or_else(|| Error::NoConvergence("Ritz vectors lost M-independence".into()))?;
    let linv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::NoConvergence("singular Ritz Gram matrix".into()))?;
    let g = &linv * a * linv.transpose();
    let g = (&g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));
    let u = DMatrix::from_fn(order.len(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    let mut phi = x * linv.transpose() * u;
    for mut col in phi.column_iter_mut() {
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
    }
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    Ok((values, phi))
}
