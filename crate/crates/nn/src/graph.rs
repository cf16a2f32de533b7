//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Nodes are reference counted and hold their operands, so a graph lives
//! exactly as long as the variables that reach it. With gradients disabled
//! operands are not retained and intermediate values are freed as soon as
//! they go out of scope, which keeps inference memory flat.

use std::cell::Cell;
use std::collections::HashMap;
use std::rc::Rc;

use nalgebra::DMatrix;
use uv3_core::{SparseOperator, SpectralBasis};

type Mat = DMatrix<f64>;

#[derive(Clone)]
pub struct Var(Rc<Node>);

struct Node {
    id: usize,
    value: Mat,
    op: Op,
}

impl Var {
    pub fn value(&self) -> &Mat {
        &self.0.value
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.value.shape()
    }
}

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.0.id, self.shape())
    }
}

/// A sparse constant together with its transpose (used by the backward pass).
#[derive(Debug, Clone)]
pub struct SparseConst {
    op: SparseOperator,
    op_t: SparseOperator,
}

impl SparseConst {
    pub fn new(op: SparseOperator) -> Self {
        let t: Vec<_> = op.triplets().map(|(r, c, v)| (c, r, v)).collect();
        let op_t = SparseOperator::from_triplets(op.dim(), &t).expect("transpose keeps the dimension");
        Self { op, op_t }
    }

    pub fn operator(&self) -> &SparseOperator {
        &self.op
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Silu(Var),
    Tanh(Var),
    Softplus(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Gather(Var, Rc<[usize]>),
    Scatter(Var, Rc<[usize]>),
    Softmax(Var),
    Broadcast(Var),
    GroupNorm {
        x: Var,
        gamma: Var,
        groups: usize,
        beta: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    Sparse(Rc<SparseConst>, Var),
    Heat {
        basis: Rc<SpectralBasis>,
        y: Var,
        h: Var,
        coeffs: Mat,
        decay: Mat,
    },
    Mse(Var, Rc<Mat>),
    Sum(Var),
}

impl Op {
    fn children(&self) -> Vec<&Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::MatMulNt(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulRow(a, b) => vec![a, b],
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Silu(a)
            | Op::Tanh(a)
            | Op::Softplus(a)
            | Op::Slice(a, _)
            | Op::Gather(a, _)
            | Op::Scatter(a, _)
            | Op::Softmax(a)
            | Op::Broadcast(a)
            | Op::Sparse(_, a)
            | Op::Mse(a, _)
            | Op::Sum(a) => vec![a],
            Op::Concat(v) => v.iter().collect(),
            Op::GroupNorm { x, gamma, beta, .. } => vec![x, gamma, beta],
            Op::Heat { y, h, .. } => vec![y, h],
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `softplus^-1`, for initializing parameters that pass through softplus.
pub fn inverse_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

fn col_sums(m: &Mat) -> Mat {
    Mat::from_fn(1, m.ncols(), |_, c| m.column(c).sum())
}

fn map(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    Mat::from_vec(m.nrows(), m.ncols(), m.as_slice().iter().map(|&x| f(x)).collect())
}

fn zip_map(a: &Mat, b: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    debug_assert_eq!(a.shape(), b.shape());
    let v = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
    Mat::from_vec(a.nrows(), a.ncols(), v)
}

fn row_broadcast(m: &Mat, row: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    let n = m.nrows();
    let mut out = Vec::with_capacity(m.len());
    for (c, col) in m.as_slice().chunks(n.max(1)).enumerate().take(m.ncols()) {
        let r = row[(0, c)];
        out.extend(col.iter().map(|&x| f(x, r)));
    }
    Mat::from_vec(n, m.ncols(), out)
}

/// Builds graphs. With `grad` off every result is a leaf.
pub struct Graph {
    grad: bool,
    next: Cell<usize>,
}

impl Graph {
    pub fn new() -> Self {
        Self {
            grad: true,
            next: Cell::new(0),
        }
    }

    pub fn inference() -> Self {
        Self {
            grad: false,
            next: Cell::new(0),
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad
    }

    fn node(&self, value: Mat, op: Op) -> Var {
        let id = self.next.get();
        self.next.set(id + 1);
        let op = if self.grad { op } else { Op::Leaf };
        Var(Rc::new(Node { id, value, op }))
    }

    pub fn leaf(&self, value: Mat) -> Var {
        self.node(value, Op::Leaf)
    }

    pub fn matmul(&self, a: &Var, b: &Var) -> Var {
        self.node(a.value() * b.value(), Op::MatMul(a.clone(), b.clone()))
    }

    /// `a * b^T`.
    pub fn matmul_nt(&self, a: &Var, b: &Var) -> Var {
        self.node(a.value() * b.value().transpose(), Op::MatMulNt(a.clone(), b.clone()))
    }

    pub fn add(&self, a: &Var, b: &Var) -> Var {
        self.node(a.value() + b.value(), Op::Add(a.clone(), b.clone()))
    }

    pub fn sub(&self, a: &Var, b: &Var) -> Var {
        self.node(a.value() - b.value(), Op::Sub(a.clone(), b.clone()))
    }

    pub fn mul(&self, a: &Var, b: &Var) -> Var {
        self.node(zip_map(a.value(), b.value(), |x, y| x * y), Op::Mul(a.clone(), b.clone()))
    }

    /// Adds a `1 x C` row to every row of `a`.
    pub fn add_row(&self, a: &Var, row: &Var) -> Var {
        self.node(row_broadcast(a.value(), row.value(), |x, r| x + r), Op::AddRow(a.clone(), row.clone()))
    }

    /// Scales every row of `a` elementwise by a `1 x C` row.
    pub fn mul_row(&self, a: &Var, row: &Var) -> Var {
        self.node(row_broadcast(a.value(), row.value(), |x, r| x * r), Op::MulRow(a.clone(), row.clone()))
    }

    pub fn scale(&self, a: &Var, s: f64) -> Var {
        self.node(a.value() * s, Op::Scale(a.clone(), s))
    }

    pub fn relu(&self, a: &Var) -> Var {
        self.node(map(a.value(), |x| x.max(0.0)), Op::Relu(a.clone()))
    }

    pub fn silu(&self, a: &Var) -> Var {
        self.node(map(a.value(), |x| x * sigmoid(x)), Op::Silu(a.clone()))
    }

    pub fn tanh(&self, a: &Var) -> Var {
        self.node(map(a.value(), f64::tanh), Op::Tanh(a.clone()))
    }

    pub fn softplus(&self, a: &Var) -> Var {
        self.node(map(a.value(), softplus), Op::Softplus(a.clone()))
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        let rows = parts[0].value().nrows();
        let cols = parts.iter().map(|p| p.value().ncols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            assert_eq!(p.value().nrows(), rows, "concat_cols row mismatch");
            data.extend_from_slice(p.value().as_slice());
        }
        let out = Mat::from_vec(rows, cols, data);
        self.node(out, Op::Concat(parts.to_vec()))
    }

    pub fn slice_cols(&self, a: &Var, start: usize, len: usize) -> Var {
        let n = a.value().nrows();
        let v = Mat::from_column_slice(n, len, &a.value().as_slice()[start * n..(start + len) * n]);
        self.node(v, Op::Slice(a.clone(), start))
    }

    pub fn gather_rows(&self, a: &Var, idx: &Rc<[usize]>) -> Var {
        let v = a.value();
        let out = Mat::from_fn(idx.len(), v.ncols(), |r, c| v[(idx[r], c)]);
        self.node(out, Op::Gather(a.clone(), idx.clone()))
    }

    /// Places the rows of `a` at `idx` in an `n`-row zero matrix. `idx` must be distinct.
    pub fn scatter_rows(&self, a: &Var, idx: &Rc<[usize]>, n: usize) -> Var {
        let v = a.value();
        let mut out = Mat::zeros(n, v.ncols());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(i).copy_from(&v.row(r));
        }
        self.node(out, Op::Scatter(a.clone(), idx.clone()))
    }

    pub fn softmax_rows(&self, a: &Var) -> Var {
        let mut out = a.value().clone();
        for mut row in out.row_iter_mut() {
            let m = row.max();
            row.apply(|x| *x = (*x - m).exp());
            let s = row.sum();
            row /= s;
        }
        self.node(out, Op::Softmax(a.clone()))
    }

    /// Repeats a `1 x C` row `n` times.
    pub fn broadcast_rows(&self, a: &Var, n: usize) -> Var {
        let v = a.value();
        self.node(Mat::from_fn(n, v.ncols(), |_, c| v[(0, c)]), Op::Broadcast(a.clone()))
    }

    /// Group normalization over all rows and the channels of each group.
    pub fn group_norm(&self, x: &Var, gamma: &Var, beta: &Var, groups: usize, eps: f64) -> Var {
        let v = x.value();
        let (n, c) = v.shape();
        assert!(groups > 0 && c % groups == 0, "{c} channels do not split into {groups} groups");
        let w = c / groups;
        let count = (n * w) as f64;
        let mut xhat = Mat::zeros(n, c);
        let mut inv_std = Vec::with_capacity(groups);
        // a group of channels is one contiguous column block
        for (src, dst) in v.as_slice().chunks(n * w).zip(xhat.as_mut_slice().chunks_mut(n * w)) {
            let mean = src.iter().sum::<f64>() / count;
            let var = src.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / count;
            let is = 1.0 / (var + eps).sqrt();
            for (d, x) in dst.iter_mut().zip(src) {
                *d = (x - mean) * is;
            }
            inv_std.push(is);
        }
        let out = row_broadcast(&row_broadcast(&xhat, gamma.value(), |x, g| x * g), beta.value(), |x, b| x + b);
        self.node(
            out,
            Op::GroupNorm {
                x: x.clone(),
                gamma: gamma.clone(),
                beta: beta.clone(),
                groups,
                xhat,
                inv_std,
            },
        )
    }

    pub fn sparse_matmul(&self, s: &Rc<SparseConst>, a: &Var) -> Var {
        self.node(s.op.mul_dense(a.value()), Op::Sparse(s.clone(), a.clone()))
    }

    /// Spectral heat diffusion with one (already positive) time per channel; `h` is `1 x C`.
    pub fn heat_diffuse(&self, basis: &Rc<SpectralBasis>, y: &Var, h: &Var) -> Var {
        let phi = basis.eigenvectors();
        let coeffs = phi.transpose() * basis.mass().apply(y.value());
        let lam = basis.eigenvalues();
        let hv = h.value();
        let decay = Mat::from_fn(coeffs.nrows(), coeffs.ncols(), |k, c| (-lam[k].max(0.0) * hv[(0, c)]).exp());
        let out = phi * coeffs.component_mul(&decay);
        self.node(
            out,
            Op::Heat {
                basis: basis.clone(),
                y: y.clone(),
                h: h.clone(),
                coeffs,
                decay,
            },
        )
    }

    /// Mean squared error against a constant target, as a `1 x 1` value.
    pub fn mse(&self, a: &Var, target: &Rc<Mat>) -> Var {
        let d = a.value() - target.as_ref();
        let v = d.norm_squared() / d.len() as f64;
        self.node(Mat::from_element(1, 1, v), Op::Mse(a.clone(), target.clone()))
    }

    pub fn sum(&self, a: &Var) -> Var {
        self.node(Mat::from_element(1, 1, a.value().sum()), Op::Sum(a.clone()))
    }

    /// Gradients of the scalar `root` with respect to every node reaching it.
    pub fn backward(&self, root: &Var) -> Gradients {
        assert!(self.grad, "backward on an inference graph");
        assert_eq!(root.shape(), (1, 1), "backward needs a scalar root");
        let mut order = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![root.clone()];
        while let Some(v) = stack.pop() {
            if seen.insert(v.id()) {
                for c in v.0.op.children() {
                    stack.push(c.clone());
                }
                order.push(v);
            }
        }
        // children are always created before their parents
        order.sort_by_key(|v| std::cmp::Reverse(v.id()));
        let mut grads: HashMap<usize, Mat> = HashMap::new();
        grads.insert(root.id(), Mat::from_element(1, 1, 1.0));
        for v in &order {
            if let Op::Leaf = v.0.op {
                continue;
            }
            let Some(g) = grads.remove(&v.id()) else {
                continue;
            };
            for (child, cg) in local_grads(&v.0, &g) {
                match grads.get_mut(&child.id()) {
                    Some(acc) => *acc += cg,
                    None => {
                        grads.insert(child.id(), cg);
                    }
                }
            }
        }
        Gradients(grads)
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

pub struct Gradients(HashMap<usize, Mat>);

impl Gradients {
    pub fn get(&self, v: &Var) -> Option<&Mat> {
        self.0.get(&v.id())
    }

    /// Gradient of `v`, zero if the root does not depend on it.
    pub fn get_or_zero(&self, v: &Var) -> Mat {
        self.get(v).cloned().unwrap_or_else(|| Mat::zeros(v.shape().0, v.shape().1))
    }
}

fn local_grads<'a>(node: &'a Node, g: &Mat) -> Vec<(&'a Var, Mat)> {
    let out = &node.value;
    match &node.op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) => vec![(a, g * b.value().transpose()), (b, a.value().transpose() * g)],
        Op::MatMulNt(a, b) => vec![(a, g * b.value()), (b, g.transpose() * a.value())],
        Op::Add(a, b) => vec![(a, g.clone()), (b, g.clone())],
        Op::Sub(a, b) => vec![(a, g.clone()), (b, -g)],
        Op::Mul(a, b) => vec![(a, zip_map(g, b.value(), |x, y| x * y)), (b, zip_map(g, a.value(), |x, y| x * y))],
        Op::AddRow(a, r) => vec![(a, g.clone()), (r, col_sums(g))],
        Op::MulRow(a, r) => vec![
            (a, row_broadcast(g, r.value(), |x, s| x * s)),
            (r, col_sums(&zip_map(g, a.value(), |x, y| x * y))),
        ],
        Op::Scale(a, s) => vec![(a, g * *s)],
        Op::Relu(a) => vec![(a, zip_map(g, a.value(), |g, x| if x > 0.0 { g } else { 0.0 }))],
        Op::Silu(a) => vec![(
            a,
            zip_map(g, a.value(), |g, x| {
                let s = sigmoid(x);
                g * (s + x * s * (1.0 - s))
            }),
        )],
        Op::Tanh(a) => vec![(a, zip_map(g, out, |g, t| g * (1.0 - t * t)))],
        Op::Softplus(a) => vec![(a, zip_map(g, a.value(), |g, x| g * sigmoid(x)))],
        Op::Concat(parts) => {
            let n = g.nrows();
            let mut at = 0;
            parts
                .iter()
                .map(|p| {
                    let w = p.value().ncols();
                    let part = Mat::from_column_slice(n, w, &g.as_slice()[at * n..(at + w) * n]);
                    at += w;
                    (p, part)
                })
                .collect()
        }
        Op::Slice(a, start) => {
            let mut full = Mat::zeros(a.value().nrows(), a.value().ncols());
            let n = g.nrows();
            full.as_mut_slice()[start * n..(start + g.ncols()) * n].copy_from_slice(g.as_slice());
            vec![(a, full)]
        }
        Op::Gather(a, idx) => {
            let mut full = Mat::zeros(a.value().nrows(), a.value().ncols());
            for (r, &i) in idx.iter().enumerate() {
                let row = full.row(i) + g.row(r);
                full.row_mut(i).copy_from(&row);
            }
            vec![(a, full)]
        }
        Op::Scatter(a, idx) => {
            let back = Mat::from_fn(idx.len(), g.ncols(), |r, c| g[(idx[r], c)]);
            vec![(a, back)]
        }
        Op::Softmax(a) => {
            let mut d = Mat::zeros(out.nrows(), out.ncols());
            for r in 0..out.nrows() {
                let dot: f64 = (0..out.ncols()).map(|c| g[(r, c)] * out[(r, c)]).sum();
                for c in 0..out.ncols() {
                    d[(r, c)] = out[(r, c)] * (g[(r, c)] - dot);
                }
            }
            vec![(a, d)]
        }
        Op::Broadcast(a) => vec![(a, col_sums(g))],
        Op::GroupNorm {
            x,
            gamma,
            beta,
            groups,
            xhat,
            inv_std,
        } => {
            let (n, c) = xhat.shape();
            let w = c / groups;
            let count = (n * w) as f64;
            let dxhat = row_broadcast(g, gamma.value(), |a, b| a * b);
            let mut dx = Mat::zeros(n, c);
            let chunks = dxhat
                .as_slice()
                .chunks(n * w)
                .zip(xhat.as_slice().chunks(n * w))
                .zip(dx.as_mut_slice().chunks_mut(n * w));
            for (gi, ((dh, xh), out)) in chunks.enumerate() {
                let sum_d: f64 = dh.iter().sum();
                let sum_dx: f64 = dh.iter().zip(xh).map(|(a, b)| a * b).sum();
                let k = inv_std[gi] / count;
                for ((o, d), x) in out.iter_mut().zip(dh).zip(xh) {
                    *o = k * (count * d - sum_d - x * sum_dx);
                }
            }
            vec![(x, dx), (gamma, col_sums(&zip_map(g, xhat, |x, y| x * y))), (beta, col_sums(g))]
        }
        Op::Sparse(s, a) => vec![(a, s.op_t.mul_dense(g))],
        Op::Heat {
            basis,
            y,
            h,
            coeffs,
            decay,
        } => {
            let phi = basis.eigenvectors();
            let gc = phi.transpose() * g;
            let dy = basis.mass().apply(&(phi * gc.component_mul(decay)));
            let lam = basis.eigenvalues();
            let dh = Mat::from_fn(1, coeffs.ncols(), |_, c| {
                -(0..coeffs.nrows())
                    .map(|k| lam[k].max(0.0) * decay[(k, c)] * coeffs[(k, c)] * gc[(k, c)])
                    .sum::<f64>()
            });
            vec![(y, dy), (h, dh)]
        }
        Op::Mse(a, target) => {
            let n = a.value().len() as f64;
            vec![(a, (a.value() - target.as_ref()) * (2.0 * g[(0, 0)] / n))]
        }
        Op::Sum(a) => vec![(a, Mat::from_element(a.value().nrows(), a.value().ncols(), g[(0, 0)]))],
    }
}
