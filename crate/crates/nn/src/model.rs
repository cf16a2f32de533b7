//! Forward pass of the U-shaped heat-diffusion denoiser.

use std::collections::HashMap;
use std::rc::Rc;

use nalgebra::DMatrix;
use uv3_core::gradients::{build_gradient_operator, DEFAULT_GRADIENT_KNN};
use uv3_core::sampling::SurfaceSamples;
use uv3_core::spectral::normalize_eigenvalues;
use uv3_core::{Mesh, SpectralBasis};

use crate::error::{Error, Result};
use crate::graph::{Graph, SparseConst, Var};
use crate::params::{DenoiserConfig, DenoiserParams};

/// Precomputed, immutable structures of one sampled surface.
#[derive(Debug, Clone)]
pub struct ShapeContext {
    pub basis: Rc<SpectralBasis>,
    pub grad_re: Rc<SparseConst>,
    pub grad_im: Rc<SparseConst>,
    pub fps: Rc<[usize]>,
    /// `P x n_sihks`
    pub sihks: DMatrix<f64>,
    /// `1 x K` normalized eigenvalues.
    pub lambda_norm: DMatrix<f64>,
}

impl ShapeContext {
    pub fn new(
        basis: SpectralBasis,
        gradient: &uv3_core::gradients::GradientOperator,
        fps: Vec<usize>,
        sihks: DMatrix<f64>,
        lambda_norm: Vec<f64>,
    ) -> Result<Self> {
        let p = basis.dim();
        if gradient.dim() != p || sihks.nrows() != p {
            return Err(Error::Shape {
                what: "per-point inputs".into(),
                expected: (p, sihks.ncols()),
                got: (gradient.dim(), sihks.nrows()),
            });
        }
        if let Some(&bad) = fps.iter().find(|&&i| i >= p) {
            return Err(uv3_core::Error::invalid(format!("fps index {bad} out of range for {p} points")).into());
        }
        let (re, im) = gradient.to_parts()?;
        Ok(Self {
            basis: Rc::new(basis),
            grad_re: Rc::new(SparseConst::new(re)),
            grad_im: Rc::new(SparseConst::new(im)),
            fps: fps.into(),
            sihks,
            lambda_norm: DMatrix::from_row_slice(1, lambda_norm.len(), &lambda_norm),
        })
    }

    /// Builds the context from a sampling pass over `mesh` whose basis has the given eigenvalues.
    pub fn from_samples(mesh: &Mesh, samples: &SurfaceSamples, eigenvalues: &[f64], k: usize) -> Result<Self> {
        if eigenvalues.len() < k {
            return Err(Error::Config(format!("need {k} eigenvalues, have {}", eigenvalues.len())));
        }
        let basis = samples.basis(eigenvalues)?.truncated(k);
        let normals = samples.normals(mesh);
        let knn = DEFAULT_GRADIENT_KNN.min(samples.len().saturating_sub(1));
        let gradient = build_gradient_operator(&samples.points, &normals, knn)?;
        let lambda_norm = normalize_eigenvalues(&eigenvalues[..k], mesh.total_area())?;
        Self::new(
            basis,
            &gradient,
            samples.fps_indices.clone(),
            samples.sihks_p.clone(),
            lambda_norm,
        )
    }

    pub fn len(&self) -> usize {
        self.basis.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parameters bound as graph leaves.
pub struct BoundParams {
    vars: HashMap<String, Var>,
}

impl BoundParams {
    pub fn bind(g: &Graph, params: &DenoiserParams) -> Self {
        let vars = params.iter().map(|(k, v)| (k.clone(), g.leaf(v.clone()))).collect();
        Self { vars }
    }

    pub fn get(&self, name: &str) -> &Var {
        self.vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} is not declared"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardOptions {
    /// Disables every attention layer (the diffusion-block-only network).
    pub attention: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self { attention: true }
    }
}

/// Sinusoidal embedding of a step index, `1 x dim`.
pub fn timestep_embedding(t: usize, dim: usize) -> DMatrix<f64> {
    let half = dim / 2;
    let mut e = DMatrix::zeros(1, dim);
    for i in 0..half {
        let freq = (-(10000f64).ln() * i as f64 / (half - 1) as f64).exp();
        let a = t as f64 * freq;
        e[(0, i)] = a.sin();
        e[(0, half + i)] = a.cos();
    }
    e
}

fn linear(g: &Graph, p: &BoundParams, name: &str, x: &Var) -> Var {
    let y = g.matmul(x, p.get(&format!("{name}.w")));
    g.add_row(&y, p.get(&format!("{name}.b")))
}

fn check(v: &Var, stage: &str) -> Result<()> {
    if v.value().iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { stage: stage.into() })
    }
}

/// Embedded conditioning shared by all attention layers.
pub struct Conditioning {
    /// `1 x time_hidden`
    pub time: Var,
    /// `P x cond_dim`
    pub sihks: Var,
    /// `1 x cond_dim`
    pub lambda: Var,
}

pub fn embed_conditioning(
    g: &Graph,
    p: &BoundParams,
    cfg: &DenoiserConfig,
    ctx: &ShapeContext,
    t: usize,
) -> Result<Conditioning> {
    if ctx.sihks.ncols() != cfg.n_sihks || ctx.lambda_norm.ncols() != cfg.k_eigs {
        return Err(Error::Shape {
            what: "conditioning (sihks, eigenvalues)".into(),
            expected: (cfg.n_sihks, cfg.k_eigs),
            got: (ctx.sihks.ncols(), ctx.lambda_norm.ncols()),
        });
    }
    let te = g.leaf(timestep_embedding(t, cfg.time_dim));
    let h = g.silu(&linear(g, p, "time.0", &te));
    let time = linear(g, p, "time.1", &h);
    let s = g.leaf(ctx.sihks.clone());
    let s = linear(g, p, "sihks.1", &g.silu(&linear(g, p, "sihks.0", &s)));
    let l = g.leaf(ctx.lambda_norm.clone());
    let l = linear(g, p, "lambda.1", &g.silu(&linear(g, p, "lambda.0", &l)));
    let c = Conditioning { time, sihks: s, lambda: l };
    check(&c.time, "time embedding")?;
    check(&c.sihks, "sihks embedding")?;
    check(&c.lambda, "eigenvalue embedding")?;
    Ok(c)
}

/// Learned per-channel rotation and scaling of the tangent gradients, reduced by an inner product.
fn gradient_features(g: &Graph, p: &BoundParams, name: &str, ctx: &ShapeContext, x: &Var) -> Var {
    let gx = g.sparse_matmul(&ctx.grad_re, x);
    let gy = g.sparse_matmul(&ctx.grad_im, x);
    let are = p.get(&format!("{name}.grad_re"));
    let aim = p.get(&format!("{name}.grad_im"));
    let bre = g.sub(&g.matmul(&gx, are), &g.matmul(&gy, aim));
    let bim = g.add(&g.matmul(&gy, are), &g.matmul(&gx, aim));
    g.tanh(&g.add(&g.mul(&gx, &bre), &g.mul(&gy, &bim)))
}

/// One diffusion block: diffusion, gradient features, per-point MLP, time injection, group norm, residual.
pub fn diffusion_block(
    g: &Graph,
    p: &BoundParams,
    cfg: &DenoiserConfig,
    name: &str,
    ctx: &ShapeContext,
    x: &Var,
    time: &Var,
) -> Var {
    let h = g.softplus(p.get(&format!("{name}.h")));
    let diffused = g.heat_diffuse(&ctx.basis, x, &h);
    let grad = gradient_features(g, p, name, ctx, x);
    let m = g.concat_cols(&[x.clone(), diffused, grad]);
    let m = g.relu(&linear(g, p, &format!("{name}.mlp0"), &m));
    let m = g.relu(&linear(g, p, &format!("{name}.mlp1"), &m));
    let m = linear(g, p, &format!("{name}.mlp2"), &m);
    let tp = linear(g, p, &format!("{name}.time"), &g.silu(time));
    let gamma = p.get(&format!("{name}.norm.gamma"));
    let beta = p.get(&format!("{name}.norm.beta"));
    let m = if cfg.norm_after_time {
        g.group_norm(&g.add_row(&m, &tp), gamma, beta, cfg.groups, cfg.norm_eps)
    } else {
        g.add_row(&g.group_norm(&m, gamma, beta, cfg.groups, cfg.norm_eps), &tp)
    };
    let skip_w = format!("{name}.skip");
    let skip = if x.shape().1 != m.shape().1 {
        linear(g, p, &skip_w, x)
    } else {
        x.clone()
    };
    g.add(&skip, &m)
}

/// Multi-head scaled dot-product self-attention over the rows of `z`.
pub fn multi_head_attention(g: &Graph, p: &BoundParams, cfg: &DenoiserConfig, name: &str, z: &Var) -> Var {
    let q = linear(g, p, &format!("{name}.q"), z);
    let k = linear(g, p, &format!("{name}.k"), z);
    let v = linear(g, p, &format!("{name}.v"), z);
    let scale = 1.0 / (cfg.head_dim as f64).sqrt();
    let heads: Vec<Var> = (0..cfg.heads)
        .map(|i| {
            let at = i * cfg.head_dim;
            let qh = g.slice_cols(&q, at, cfg.head_dim);
            let kh = g.slice_cols(&k, at, cfg.head_dim);
            let vh = g.slice_cols(&v, at, cfg.head_dim);
            let a = g.softmax_rows(&g.scale(&g.matmul_nt(&qh, &kh), scale));
            g.matmul(&a, &vh)
        })
        .collect();
    let o = g.concat_cols(&heads);
    linear(g, p, &format!("{name}.out"), &o)
}

/// Diffused farthest-sampled attention, before the per-channel gate.
pub fn attention_path(
    g: &Graph,
    p: &BoundParams,
    cfg: &DenoiserConfig,
    name: &str,
    ctx: &ShapeContext,
    cond: &Conditioning,
    y: &Var,
) -> Result<Var> {
    let n = ctx.len();
    let s = ctx.fps.len();
    if s > n || s == 0 {
        return Err(uv3_core::Error::invalid(format!("{s} attention points for {n} samples")).into());
    }
    let d = g.heat_diffuse(&ctx.basis, y, &g.softplus(p.get(&format!("{name}.h_in"))));
    let z = g.concat_cols(&[
        g.gather_rows(&d, &ctx.fps),
        g.gather_rows(&cond.sihks, &ctx.fps),
        g.broadcast_rows(&cond.lambda, s),
    ]);
    let z = g.group_norm(
        &z,
        p.get(&format!("{name}.norm.gamma")),
        p.get(&format!("{name}.norm.beta")),
        cfg.groups,
        cfg.norm_eps,
    );
    let a = multi_head_attention(g, p, cfg, name, &z);
    let full = g.scatter_rows(&a, &ctx.fps, n);
    Ok(g.heat_diffuse(&ctx.basis, &full, &g.softplus(p.get(&format!("{name}.h_out")))))
}

/// Three diffusion blocks followed by gated attention.
pub fn enhanced_block(
    g: &Graph,
    p: &BoundParams,
    cfg: &DenoiserConfig,
    name: &str,
    ctx: &ShapeContext,
    cond: &Conditioning,
    x: &Var,
    opts: ForwardOptions,
) -> Result<Var> {
    let mut y = x.clone();
    for j in 0..3 {
        y = diffusion_block(g, p, cfg, &format!("{name}.db{j}"), ctx, &y, &cond.time);
    }
    if opts.attention {
        let a = attention_path(g, p, cfg, &format!("{name}.attn"), ctx, cond, &y)?;
        y = g.add(&y, &g.mul_row(&a, p.get(&format!("{name}.attn.gate"))));
    }
    check(&y, &format!("block {name}"))?;
    Ok(y)
}

/// Predicts the noise in `x_t` (`P x 3`) at step `t`.
pub fn denoiser_forward(
    g: &Graph,
    p: &BoundParams,
    cfg: &DenoiserConfig,
    ctx: &ShapeContext,
    x_t: &Var,
    t: usize,
    opts: ForwardOptions,
) -> Result<Var> {
    let (rows, cols) = x_t.shape();
    if rows != ctx.len() || cols != 3 {
        return Err(Error::Shape {
            what: "noisy colors".into(),
            expected: (ctx.len(), 3),
            got: (rows, cols),
        });
    }
    let cond = embed_conditioning(g, p, cfg, ctx, t)?;
    let mut h = linear(g, p, "input", x_t);
    let mut skips = Vec::with_capacity(cfg.levels);
    for i in 0..cfg.levels {
        h = enhanced_block(g, p, cfg, &format!("down{i}"), ctx, &cond, &h, opts)?;
        skips.push(h.clone());
    }
    h = enhanced_block(g, p, cfg, "mid", ctx, &cond, &h, opts)?;
    for i in 0..cfg.levels {
        let skip = skips.pop().expect("one skip per level");
        let cat = g.concat_cols(&[h, skip]);
        h = enhanced_block(g, p, cfg, &format!("up{i}"), ctx, &cond, &cat, opts)?;
    }
    let out = linear(g, p, "output", &h);
    check(&out, "output layer")?;
    Ok(out)
}

/// Inference-only evaluation holding bound parameters across calls.
pub struct Denoiser<'a> {
    graph: Graph,
    bound: BoundParams,
    params: &'a DenoiserParams,
    pub options: ForwardOptions,
}

impl<'a> Denoiser<'a> {
    pub fn new(params: &'a DenoiserParams) -> Self {
        let graph = Graph::inference();
        let bound = BoundParams::bind(&graph, params);
        Self {
            graph,
            bound,
            params,
            options: ForwardOptions::default(),
        }
    }

    pub fn predict(&self, ctx: &ShapeContext, x_t: &DMatrix<f64>, t: usize) -> Result<DMatrix<f64>> {
        let x = self.graph.leaf(x_t.clone());
        let out = denoiser_forward(&self.graph, &self.bound, &self.params.config, ctx, &x, t, self.options)?;
        Ok(out.value().clone())
    }
}
