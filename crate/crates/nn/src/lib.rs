pub mod ddpm;
pub mod error;
pub mod graph;
pub mod model;
pub mod params;
pub mod toy;
pub mod train;

pub use ddpm::{BetaSchedule, DdpmSchedule};
pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use model::{denoiser_forward, Denoiser, ForwardOptions, ShapeContext};
pub use params::{DenoiserConfig, DenoiserParams};
pub use train::{generate, train, TrainConfig, TrainReport, TrainingShape};
