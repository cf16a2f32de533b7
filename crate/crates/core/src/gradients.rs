//! Tangent-plane gradients on point samples.
//!
//! Each point fits the directional derivatives of a field over its `k`
//! nearest neighbours by least squares in its tangent plane. The fit is linear
//! in the field values, so it is stored once as a sparse complex operator:
//! the real part gives the derivative along the first tangent axis, the
//! imaginary part along the second.

use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, Matrix2, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::knn::KdTree;
use crate::mesh::Vec3;
use crate::sparse::SparseOperator;

pub const DEFAULT_GRADIENT_KNN: usize = 30;
const TIKHONOV: f64 = 1e-8;
const RANK_TOL: f64 = 1e-12;

/// Orthonormal tangent frame `[e1, e2, n]`.
pub type Frame = [Vec3; 3];

/// `e1 = normalize(axis x n)` with the coordinate axis least aligned with `n`.
pub fn tangent_frame(normal: &Vec3) -> Frame {
    let n = normal.normalize();
    let a = n.abs();
    let axis = if a.x <= a.y && a.x <= a.z {
        Vec3::x()
    } else if a.y <= a.z {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let e1 = axis.cross(&n).normalize();
    let e2 = n.cross(&e1);
    [e1, e2, n]
}

#[derive(Debug, Clone)]
pub struct GradientOperator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
    frames: Vec<Frame>,
    regularized: Vec<usize>,
}

/// Real and imaginary parts of a complex per-point field.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
}

impl ComplexField {
    pub fn magnitude(&self) -> DMatrix<f64> {
        self.re.zip_map(&self.im, |a, b| a.hypot(b))
    }
}

impl GradientOperator {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    /// Points whose neighbourhood needed the Tikhonov term.
    pub fn regularized_rows(&self) -> &[usize] {
        &self.regularized
    }

    /// `(column, re, im)` entries of a row; the diagonal comes first.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |i| (self.cols[i], self.re[i], self.im[i]))
    }

    /// Real (first tangent axis) and imaginary (second axis) parts as real operators.
    pub fn to_parts(&self) -> Result<(SparseOperator, SparseOperator)> {
        let mut re = Vec::with_capacity(self.nnz());
        let mut im = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            for (c, a, b) in self.row(r) {
                re.push((r, c, a));
                im.push((r, c, b));
            }
        }
        Ok((
            SparseOperator::from_triplets(self.n, &re)?,
            SparseOperator::from_triplets(self.n, &im)?,
        ))
    }

    /// Writes the operator as a complex coordinate MatrixMarket file.
    pub fn write_matrix_market(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate complex general")?;
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for r in 0..self.n {
            for (c, re, im) in self.row(r) {
                writeln!(w, "{} {} {:e} {:e}", r + 1, c + 1, re, im)?;
            }
        }
        Ok(())
    }
}

fn check_inputs(points: &[Vec3], frames_len: usize, k: usize) -> Result<()> {
    if frames_len != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: frames_len,
        });
    }
    if k == 0 || points.len() <= k {
        return Err(Error::invalid(format!(
            "gradient stencil needs more than k = {k} points, got {}",
            points.len()
        )));
    }
    Ok(())
}

fn frames_from_normals(normals: &[Vec3]) -> Result<Vec<Frame>> {
    normals
        .iter()
        .map(|n| {
            let len = n.norm();
            if !(len > 1e-12 && len.is_finite()) {
                return Err(Error::invalid("normals must be non-zero and finite"));
            }
            Ok(tangent_frame(n))
        })
        .collect()
}

pub fn build_gradient_operator(points: &[Vec3], normals: &[Vec3], k: usize) -> Result<GradientOperator> {
    build_with_frames(points, frames_from_normals(normals)?, k)
}

/// Batched construction over flat neighbour arrays, parallel over points.
pub fn build_with_frames(points: &[Vec3], frames: Vec<Frame>, k: usize) -> Result<GradientOperator> {
    check_inputs(points, frames.len(), k)?;
    let n = points.len();
    let tree = KdTree::new(points);
    let nbrs: Vec<usize> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            tree.nearest(&points[i], k + 1)
                .into_iter()
                .map(|(j, _)| j)
                .filter(move |&j| j != i)
                .take(k)
        })
        .collect();

    // per neighbour: tangent coordinates of the offset
    let coords: Vec<[f64; 2]> = nbrs
        .par_iter()
        .enumerate()
        .map(|(e, &j)| {
            let i = e / k;
            let d = points[j] - points[i];
            [d.dot(&frames[i][0]), d.dot(&frames[i][1])]
        })
        .collect();
    // per point: normal matrix A^T A and its (regularized) inverse
    let inverses: Vec<([f64; 4], bool)> = coords
        .par_chunks(k)
        .map(|c| {
            let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
            for [x, y] in c {
                a += x * x;
                b += x * y;
                d += y * y;
            }
            inverse_2x2(a, b, d)
        })
        .collect();
    let rows: Vec<Vec<(f64, f64)>> = coords
        .par_chunks(k)
        .zip(&inverses)
        .map(|(c, (inv, _))| {
            c.iter()
                .map(|[x, y]| (inv[0] * x + inv[1] * y, inv[2] * x + inv[3] * y))
                .collect()
        })
        .collect();

    let mut op = GradientOperator {
        n,
        row_ptr: Vec::with_capacity(n + 1),
        cols: Vec::with_capacity(n * (k + 1)),
        re: Vec::with_capacity(n * (k + 1)),
        im: Vec::with_capacity(n * (k + 1)),
        frames,
        regularized: Vec::new(),
    };
    op.row_ptr.push(0);
    for (i, w) in rows.iter().enumerate() {
        let (sr, si) = w.iter().fold((0.0, 0.0), |acc, (a, b)| (acc.0 + a, acc.1 + b));
        op.cols.push(i);
        op.re.push(-sr);
        op.im.push(-si);
        for (e, (a, b)) in w.iter().enumerate() {
            op.cols.push(nbrs[i * k + e]);
            op.re.push(*a);
            op.im.push(*b);
        }
        op.row_ptr.push(op.cols.len());
        if inverses[i].1 {
            op.regularized.push(i);
        }
    }
    if !op.regularized.is_empty() {
        warn!("{} gradient neighbourhoods were rank deficient and regularized", op.regularized.len());
    }
    Ok(op)
}

/// Inverse of `[[a, b], [b, d]]` row-major, with `1e-8 I` added when near singular.
fn inverse_2x2(a: f64, b: f64, d: f64) -> ([f64; 4], bool) {
    let det = a * d - b * b;
    let scale = (a + d).max(f64::MIN_POSITIVE);
    let deficient = det <= RANK_TOL * scale * scale;
    let (a, d) = if deficient { (a + TIKHONOV, d + TIKHONOV) } else { (a, d) };
    let det = a * d - b * b;
    ([d / det, -b / det, -b / det, a / det], deficient)
}

/// Per-point reference construction with dense local solves.
pub fn build_reference(points: &[Vec3], normals: &[Vec3], k: usize) -> Result<GradientOperator> {
    let frames = frames_from_normals(normals)?;
    check_inputs(points, frames.len(), k)?;
    let n = points.len();
    let tree = KdTree::new(points);
    let mut op = GradientOperator {
        n,
        row_ptr: vec![0],
        cols: Vec::new(),
        re: Vec::new(),
        im: Vec::new(),
        frames,
        regularized: Vec::new(),
    };
    for i in 0..n {
        let nb: Vec<usize> = tree
            .nearest(&points[i], k + 1)
            .into_iter()
            .map(|(j, _)| j)
            .filter(|&j| j != i)
            .take(k)
            .collect();
        let [e1, e2, _] = op.frames[i];
        let a = DMatrix::from_fn(k, 2, |r, c| {
            let d = points[nb[r]] - points[i];
            if c == 0 {
                d.dot(&e1)
            } else {
                d.dot(&e2)
            }
        });
        // [-1 | I] maps field values to differences against the centre
        let mut diff = DMatrix::zeros(k, k + 1);
        for r in 0..k {
            diff[(r, 0)] = -1.0;
            diff[(r, r + 1)] = 1.0;
        }
        let ata = a.tr_mul(&a);
        let (inv, deficient) = inverse_2x2(ata[(0, 0)], ata[(0, 1)], ata[(1, 1)]);
        let inv = Matrix2::new(inv[0], inv[1], inv[2], inv[3]);
        let weights = DMatrix::from_fn(2, k, |r, c| {
            let g = inv * Vector2::new(a[(c, 0)], a[(c, 1)]);
            g[r]
        }) * diff;
        for (c, col) in std::iter::once(i).chain(nb.iter().copied()).enumerate() {
            op.cols.push(col);
            op.re.push(weights[(0, c)]);
            op.im.push(weights[(1, c)]);
        }
        op.row_ptr.push(op.cols.len());
        if deficient {
            op.regularized.push(i);
        }
    }
    Ok(op)
}

/// Complex gradient of every channel of a real field.
pub fn apply_gradient(op: &GradientOperator, y: &DMatrix<f64>) -> Result<ComplexField> {
    if y.nrows() != op.n {
        return Err(Error::DimensionMismatch {
            expected: op.n,
            got: y.nrows(),
        });
    }
    let mut re = DMatrix::zeros(op.n, y.ncols());
    let mut im = DMatrix::zeros(op.n, y.ncols());
    for c in 0..y.ncols() {
        for r in 0..op.n {
            let (mut a, mut b) = (0.0, 0.0);
            for (col, wr, wi) in op.row(r) {
                a += wr * y[(col, c)];
                b += wi * y[(col, c)];
            }
            re[(r, c)] = a;
            im[(r, c)] = b;
        }
    }
    Ok(ComplexField { re, im })
}
