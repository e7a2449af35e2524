//! Variance-boosted, timestep-skipped sampling for discrete-time diffusion
//! models, with exact score oracles for Gaussian and mixture data and the
//! closed-form moment theory that goes with them.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the `*F64`
//! and `*F32` aliases below name the common instantiations.

pub mod dynamics;
pub mod error;
pub mod export;
pub mod linalg;
pub mod metrics;
pub mod points;
pub mod real;
pub mod rng;
pub mod samplers;
pub mod schedule;
pub mod score;
pub mod spectral;
pub mod theory;
pub mod toydata;

pub use dynamics::{Dynamics, RecordFlags, Trajectory};
pub use error::{Error, Result};
pub use points::PointCloud;
pub use real::Real;
pub use rng::RngStream;
pub use samplers::{Mode, SampleBatch, SamplerConfig};
pub use schedule::{NoiseSchedule, SkipPlan};
pub use score::{GaussianSpec, MixtureSpec, MlpScoreNet, ScoreField};
pub use spectral::NoiseField;
pub use toydata::{CirclesGeometry, CirclesSpec};

pub type NoiseScheduleF64 = NoiseSchedule<f64>;
pub type NoiseScheduleF32 = NoiseSchedule<f32>;
pub type GaussianSpecF64 = GaussianSpec<f64>;
pub type GaussianSpecF32 = GaussianSpec<f32>;
pub type MixtureSpecF64 = MixtureSpec<f64>;
pub type MixtureSpecF32 = MixtureSpec<f32>;
pub type ScoreFieldF64 = ScoreField<f64>;
pub type ScoreFieldF32 = ScoreField<f32>;
pub type PointCloudF64 = PointCloud<f64>;
pub type PointCloudF32 = PointCloud<f32>;
pub type SampleBatchF64 = SampleBatch<f64>;
pub type SampleBatchF32 = SampleBatch<f32>;
pub type MlpScoreNetF64 = MlpScoreNet<f64>;
pub type MlpScoreNetF32 = MlpScoreNet<f32>;
