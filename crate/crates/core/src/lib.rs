//! Information-maximization objective for long-tailed semi-supervised domain
//! generalization, with a synthetic multi-domain benchmark harness.
//!
//! The numerical modules are generic over [`Scalar`] (`f32`/`f64`); the
//! aliases below fix the `f64` instantiation used by experiments.

pub mod data;
pub mod error;
pub mod experiment;
pub mod numerics;
pub mod objectives;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ProbVector = numerics::ProbVector<f64>;
pub type LogitVector = numerics::LogitVector<f64>;
pub type LossConfig = objectives::LossConfig<f64>;
pub type LossBreakdown = objectives::LossBreakdown<f64>;
pub type LabeledBatch = objectives::LabeledBatch<f64>;
pub type UnlabeledBatch = objectives::UnlabeledBatch<f64>;
pub type DomainSpec = data::DomainSpec<f64>;
pub type DomainDataset = data::DomainDataset<f64>;
pub type MlpModel = trainer::MlpModel<f64>;
pub type TrainState = trainer::TrainState<f64>;

pub type ProbVector32 = numerics::ProbVector<f32>;
pub type LogitVector32 = numerics::LogitVector<f32>;
pub type MlpModel32 = trainer::MlpModel<f32>;
