#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use uv3_core::{MassMatrix, SparseOperator};

/// Dense generalized eigenpairs via `M^-1/2 L M^-1/2`; ascending, `M`-orthonormal.
pub fn dense_eigen(l: &SparseOperator, m: &MassMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let n = l.dim();
    let s: Vec<f64> = m.diag().iter().map(|x| 1.0 / x.sqrt()).collect();
    let a = DMatrix::from_fn(n, n, |i, j| s[i] * l.get(i, j) * s[j]);
    let eig = SymmetricEigen::new((&a + a.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| s[r] * eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// `exp(a)` by scaling and squaring a truncated Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = a.abs().column_sum().max();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);
    let n = a.nrows();
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
