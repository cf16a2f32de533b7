//! Noise schedule, closed-form forward noising and the ancestral reverse sampler.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSchedule {
    Linear { start: f64, end: f64 },
    /// Squared-cosine `alpha_bar` with a small offset near `t = 0`.
    Cosine { offset: f64 },
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule::Linear { start: 1e-4, end: 2e-2 }
    }
}

pub const DEFAULT_STEPS: usize = 1000;

/// Steps are numbered `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DdpmSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl DdpmSchedule {
    pub fn new(steps: usize, kind: BetaSchedule) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        let beta: Vec<f64> = match kind {
            BetaSchedule::Linear { start, end } => {
                if !(start > 0.0 && start <= end && end < 1.0) {
                    return Err(Error::Config(format!("invalid beta range [{start}, {end}]")));
                }
                if steps == 1 {
                    vec![start]
                } else {
                    (0..steps)
                        .map(|i| start + (end - start) * i as f64 / (steps - 1) as f64)
                        .collect()
                }
            }
            BetaSchedule::Cosine { offset } => {
                if !(offset >= 0.0) {
                    return Err(Error::Config(format!("invalid cosine offset {offset}")));
                }
                let f = |t: f64| ((t / steps as f64 + offset) / (1.0 + offset) * std::f64::consts::FRAC_PI_2).cos().powi(2);
                (1..=steps)
                    .map(|t| (1.0 - f(t as f64) / f(t as f64 - 1.0)).clamp(1e-8, 0.999))
                    .collect()
            }
        };
        Self::from_betas(beta)
    }

    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() || beta.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::Config("betas must lie in (0, 1)".into()));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let alpha_bar = alpha
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self { beta, alpha, alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    fn index(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            return Err(uv3_core::Error::invalid(format!("step {t} outside 1..={}", self.steps())).into());
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// `sqrt(ab) x0 + sqrt(1 - ab) eps`
    pub fn forward_noise(&self, x0: &DMatrix<f64>, t: usize, eps: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let ab = self.alpha_bar[self.index(t)?];
        if x0.shape() != eps.shape() {
            return Err(Error::Shape {
                what: "noise".into(),
                expected: x0.shape(),
                got: eps.shape(),
            });
        }
        Ok(x0 * ab.sqrt() + eps * (1.0 - ab).sqrt())
    }

    /// One forward kernel step `x_{t-1} -> x_t`.
    pub fn forward_step(&self, x_prev: &DMatrix<f64>, t: usize, eps: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let b = self.beta[self.index(t)?];
        Ok(x_prev * (1.0 - b).sqrt() + eps * b.sqrt())
    }

    /// Uniform step, standard normal noise and the matching noisy sample.
    pub fn training_pair(
        &self,
        x0: &DMatrix<f64>,
        rng: &mut impl Rng,
    ) -> Result<(DMatrix<f64>, usize, DMatrix<f64>)> {
        let t = rng.random_range(1..=self.steps());
        let eps = standard_normal(x0.nrows(), x0.ncols(), rng);
        let x_t = self.forward_noise(x0, t, &eps)?;
        Ok((x_t, t, eps))
    }

    /// Posterior mean step with fixed variance `beta_t`; no noise is added at `t = 1`.
    pub fn reverse_step(
        &self,
        x_t: &DMatrix<f64>,
        t: usize,
        eps_hat: &DMatrix<f64>,
        rng: &mut impl Rng,
    ) -> Result<DMatrix<f64>> {
        let i = self.index(t)?;
        let coef = self.beta[i] / (1.0 - self.alpha_bar[i]).sqrt();
        let mut x = (x_t - eps_hat * coef) / self.alpha[i].sqrt();
        if t > 1 {
            x += standard_normal(x.nrows(), x.ncols(), rng) * self.beta[i].sqrt();
        }
        Ok(x)
    }

    /// Posterior step through the clamped clean estimate: `x0_hat` is cut to `[-1, 1]`
    /// before forming the mean of `q(x_{t-1} | x_t, x0_hat)`.
    pub fn reverse_step_clipped(
        &self,
        x_t: &DMatrix<f64>,
        t: usize,
        eps_hat: &DMatrix<f64>,
        rng: &mut impl Rng,
    ) -> Result<DMatrix<f64>> {
        let i = self.index(t)?;
        let (ab, b) = (self.alpha_bar[i], self.beta[i]);
        let ab_prev = if i == 0 { 1.0 } else { self.alpha_bar[i - 1] };
        let x0 = ((x_t - eps_hat * (1.0 - ab).sqrt()) / ab.sqrt()).map(|v| v.clamp(-1.0, 1.0));
        let c0 = ab_prev.sqrt() * b / (1.0 - ab);
        let ct = self.alpha[i].sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        let mut x = x0 * c0 + x_t * ct;
        if t > 1 {
            x += standard_normal(x.nrows(), x.ncols(), rng) * b.sqrt();
        }
        Ok(x)
    }

    fn run_chain<R: Rng>(
        &self,
        shape: (usize, usize),
        mut denoiser: impl FnMut(&DMatrix<f64>, usize) -> Result<DMatrix<f64>>,
        rng: &mut R,
        step: impl Fn(&Self, &DMatrix<f64>, usize, &DMatrix<f64>, &mut R) -> Result<DMatrix<f64>>,
    ) -> Result<DMatrix<f64>> {
        let mut x = standard_normal(shape.0, shape.1, rng);
        for t in (1..=self.steps()).rev() {
            let eps = denoiser(&x, t)?;
            if eps.shape() != x.shape() {
                return Err(Error::Shape {
                    what: format!("noise prediction at step {t}"),
                    expected: x.shape(),
                    got: eps.shape(),
                });
            }
            x = step(self, &x, t, &eps, rng)?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    stage: format!("reverse step {t}"),
                });
            }
        }
        Ok(x)
    }

    /// Runs the full chain from `x_T ~ N(0, I)` without clamping.
    pub fn reverse_sample_raw(
        &self,
        shape: (usize, usize),
        denoiser: impl FnMut(&DMatrix<f64>, usize) -> Result<DMatrix<f64>>,
        rng: &mut impl Rng,
    ) -> Result<DMatrix<f64>> {
        self.run_chain(shape, denoiser, rng, |s, x, t, e, r| s.reverse_step(x, t, e, r))
    }

    /// Chain with clamped clean estimates, mapped into the `[0, 1]` color range.
    pub fn reverse_sample(
        &self,
        shape: (usize, usize),
        denoiser: impl FnMut(&DMatrix<f64>, usize) -> Result<DMatrix<f64>>,
        rng: &mut impl Rng,
    ) -> Result<DMatrix<f64>> {
        let x = self.run_chain(shape, denoiser, rng, |s, x, t, e, r| s.reverse_step_clipped(x, t, e, r))?;
        Ok(data_to_colors(&x))
    }
}

impl Default for DdpmSchedule {
    fn default() -> Self {
        Self::new(DEFAULT_STEPS, BetaSchedule::default()).expect("default schedule is valid")
    }
}

pub fn standard_normal(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `[0, 1] -> [-1, 1]`
pub fn colors_to_data(c: &DMatrix<f64>) -> DMatrix<f64> {
    c.map(|v| 2.0 * v - 1.0)
}

/// Clamp to `[-1, 1]`, then map to `[0, 1]`.
pub fn data_to_colors(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.map(|v| (v.clamp(-1.0, 1.0) + 1.0) * 0.5)
}
