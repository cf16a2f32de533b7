//! Command implementations behind the `uv3` binary.
//!
//! Every command is a plain function taking a [`PipelineConfig`]; all
//! randomness is derived from its seed through named sub-streams, so the
//! same arguments always produce the same bytes.

pub mod colormap;
pub mod commands;
pub mod error;

use uv3_core::io::Provenance;
use uv3_core::laplacian::DEFAULT_KNN;
use uv3_core::sampling::{SamplingConfig, DEFAULT_SCALE_TRIANGLES};
use uv3_nn::{BetaSchedule, DdpmSchedule};

pub use commands::*;
pub use error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Eigenpairs kept per shape.
    pub k: usize,
    /// Target Poisson-disk sample count.
    pub target: usize,
    /// Attention anchor points per shape.
    pub fps: usize,
    /// Weight of the point-cloud operator in the mixed Laplacian.
    pub rho: f64,
    pub n_sihks: usize,
    /// Diffusion steps.
    pub steps: usize,
    /// Neighbors for the point-cloud Laplacian.
    pub knn: usize,
    /// Triangles per texel scale used when resolving sample colors.
    pub scale_triangles: usize,
    pub seed: u64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub cosine: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 128,
            target: 5000,
            fps: 250,
            rho: 0.05,
            n_sihks: 32,
            steps: uv3_nn::ddpm::DEFAULT_STEPS,
            knn: DEFAULT_KNN,
            scale_triangles: DEFAULT_SCALE_TRIANGLES,
            seed: 0,
            beta_start: 1e-4,
            beta_end: 2e-2,
            cosine: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("k", self.k),
            ("target", self.target),
            ("fps", self.fps),
            ("n-sihks", self.n_sihks),
            ("steps", self.steps),
            ("knn", self.knn),
            ("scale-triangles", self.scale_triangles),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(CliError::Usage(format!("--{name} must be positive")));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(CliError::Usage(format!("--rho {} outside [0, 1]", self.rho)));
        }
        if !(self.beta_start > 0.0 && self.beta_start <= self.beta_end && self.beta_end < 1.0) {
            return Err(CliError::Usage(format!(
                "beta range [{}, {}] must satisfy 0 < start <= end < 1",
                self.beta_start, self.beta_end
            )));
        }
        Ok(())
    }

    /// The `key=value` lines written into every artifact.
    pub fn provenance(&self, command: &str) -> Provenance {
        let mut p: Provenance = vec![
            ("tool".into(), format!("uv3 {}", env!("CARGO_PKG_VERSION"))),
            ("command".into(), command.into()),
        ];
        let fields: [(&str, String); 12] = [
            ("k", self.k.to_string()),
            ("target", self.target.to_string()),
            ("fps", self.fps.to_string()),
            ("rho", self.rho.to_string()),
            ("n_sihks", self.n_sihks.to_string()),
            ("steps", self.steps.to_string()),
            ("knn", self.knn.to_string()),
            ("scale_triangles", self.scale_triangles.to_string()),
            ("seed", self.seed.to_string()),
            ("beta_start", self.beta_start.to_string()),
            ("beta_end", self.beta_end.to_string()),
            ("schedule", if self.cosine { "cosine" } else { "linear" }.to_string()),
        ];
        p.extend(fields.into_iter().map(|(k, v)| (k.to_string(), v)));
        p
    }

    pub fn sampling(&self) -> SamplingConfig {
        SamplingConfig {
            target_count: self.target,
            fps_count: self.fps,
            n_signatures: self.n_sihks,
            scale_triangles: self.scale_triangles,
            ..SamplingConfig::default()
        }
    }

    pub fn schedule(&self) -> Result<DdpmSchedule> {
        let kind = if self.cosine {
            BetaSchedule::Cosine { offset: 8e-3 }
        } else {
            BetaSchedule::Linear {
                start: self.beta_start,
                end: self.beta_end,
            }
        };
        Ok(DdpmSchedule::new(self.steps, kind)?)
    }
}
