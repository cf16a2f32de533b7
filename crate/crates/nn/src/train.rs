//! AdamW training of the denoiser on resampled surfaces, and texture generation.

use std::rc::Rc;

use log::{debug, info};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uv3_core::sampling::{SamplingConfig, SurfaceSamples};
use uv3_core::seeds;
use uv3_core::{Mesh, SpectralBasis};

use crate::ddpm::{colors_to_data, DdpmSchedule};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{denoiser_forward, BoundParams, Denoiser, ForwardOptions, ShapeContext};
use crate::params::DenoiserParams;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub warmup: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Draw a fresh set of surface samples every this many steps.
    pub resample_every: usize,
    /// Abort when a loss exceeds this multiple of the first one.
    pub divergence_factor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 1e-4,
            warmup: 500,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            resample_every: 1,
            divergence_factor: 1e3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Linear warmup, then cosine annealing to zero.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup {
            return self.lr * (step + 1) as f64 / self.warmup as f64;
        }
        let span = self.steps.saturating_sub(self.warmup).max(1) as f64;
        let p = ((step - self.warmup) as f64 / span).min(1.0);
        0.5 * self.lr * (1.0 + (std::f64::consts::PI * p).cos())
    }
}

/// Adam with decoupled weight decay.
pub struct AdamW {
    m: Vec<DMatrix<f64>>,
    v: Vec<DMatrix<f64>>,
    t: i32,
}

impl AdamW {
    pub fn new(params: &DenoiserParams) -> Self {
        let zeros: Vec<_> = params.iter().map(|(_, m)| DMatrix::zeros(m.nrows(), m.ncols())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// `grads` follows the iteration order of `params`.
    pub fn step(&mut self, params: &mut DenoiserParams, grads: &[DMatrix<f64>], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (i, (_, p)) in params.iter_mut().enumerate() {
            let g = &grads[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..p.len() {
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
                let update = (m[j] / c1) / ((v[j] / c2).sqrt() + cfg.eps);
                p[j] -= lr * (update + cfg.weight_decay * p[j]);
            }
        }
    }
}

/// A training surface with its mesh eigenbasis; colors come from its texture or base color.
pub struct TrainingShape {
    pub mesh: Mesh,
    pub basis: SpectralBasis,
    pub sampling: SamplingConfig,
}

impl TrainingShape {
    fn draw(&self, k: usize, seed: u64) -> Result<(ShapeContext, DMatrix<f64>)> {
        let cfg = SamplingConfig {
            with_colors: true,
            ..self.sampling.clone()
        };
        let samples = SurfaceSamples::sample(&self.mesh, &self.basis, &cfg, seed)?;
        let ctx = ShapeContext::from_samples(&self.mesh, &samples, self.basis.eigenvalues(), k)?;
        let colors = samples.colors_matrix().expect("colors were requested");
        Ok((ctx, colors_to_data(&colors)))
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub losses: Vec<f64>,
}

impl TrainReport {
    /// Mean loss over `n` steps starting at `from`.
    pub fn window_mean(&self, from: usize, n: usize) -> f64 {
        let w = &self.losses[from.min(self.losses.len())..(from + n).min(self.losses.len())];
        w.iter().sum::<f64>() / w.len().max(1) as f64
    }
}

/// Minimizes the noise-prediction error; deterministic for a fixed seed.
pub fn train(
    params: &mut DenoiserParams,
    data: &[TrainingShape],
    schedule: &DdpmSchedule,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(uv3_core::Error::invalid("empty training set").into());
    }
    let k = params.config.k_eigs;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::substream(cfg.seed, "ddpm"));
    let mut opt = AdamW::new(params);
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut current: Option<(usize, ShapeContext, DMatrix<f64>)> = None;
    let every = cfg.resample_every.max(1);
    for step in 0..cfg.steps {
        let which = step % data.len();
        if step % every == 0 || current.as_ref().map(|c| c.0) != Some(which) {
            let seed = seeds::indexed(cfg.seed, "pds", step as u64);
            let (ctx, x0) = data[which].draw(k, seed)?;
            current = Some((which, ctx, x0));
        }
        let (_, ctx, x0) = current.as_ref().expect("drawn above");
        let (x_t, t, eps) = schedule.training_pair(x0, &mut rng)?;

        let g = Graph::new();
        let bound = BoundParams::bind(&g, params);
        let x = g.leaf(x_t);
        let out = denoiser_forward(&g, &bound, &params.config, ctx, &x, t, ForwardOptions::default())?;
        let loss = g.mse(&out, &Rc::new(eps));
        let value = loss.value()[(0, 0)];
        let grads = g.backward(&loss);
        let flat: Vec<DMatrix<f64>> = params
            .iter()
            .map(|(name, _)| grads.get_or_zero(bound.get(name)))
            .collect();
        drop(bound);

        let initial = losses.first().copied().unwrap_or(value);
        if !value.is_finite() || value > cfg.divergence_factor * initial {
            return Err(Error::Diverged {
                step,
                loss: value,
                initial,
            });
        }
        losses.push(value);
        opt.step(params, &flat, cfg.lr_at(step), cfg);
        if step % 100 == 0 {
            debug!("step {step}: t={t} loss={value:.4} lr={:.2e}", cfg.lr_at(step));
        }
    }
    if !params.is_finite() {
        return Err(Error::NonFinite {
            stage: "parameter update".into(),
        });
    }
    info!(
        "trained {} steps; loss {:.4} -> {:.4}",
        cfg.steps,
        losses.first().copied().unwrap_or(f64::NAN),
        losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(TrainReport { losses })
}

/// Samples a color per surface point from noise; values are in `[0, 1]`.
pub fn generate(
    params: &DenoiserParams,
    ctx: &ShapeContext,
    schedule: &DdpmSchedule,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let net = Denoiser::new(params);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::substream(seed, "ddpm"));
    schedule.reverse_sample((ctx.len(), 3), |x, t| net.predict(ctx, x, t), &mut rng)
}
