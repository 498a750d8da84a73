//! Accelerated time-of-flight mass spectrometry: trace simulation and sparse
//! maximum-likelihood spectrum reconstruction.

pub mod baselines;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod scalar;
pub mod selfcheck;
pub mod schedule;
pub mod simulator;
pub mod solver;
pub mod util;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision instantiations.
pub type RateVector64 = model::RateVector<f64>;
pub type ModelParams64 = model::ModelParams<f64>;
pub type LikelihoodContext64 = model::LikelihoodEvalContext<f64>;
pub type EventList64 = preprocess::EventList<f64>;
pub type DetectionParams64 = preprocess::DetectionParams<f64>;
pub type SolverParams64 = solver::SolverParams<f64>;
pub type SolverState64 = solver::SolverState<f64>;
pub type SpectrumEstimate64 = baselines::SpectrumEstimate<f64>;
pub type Trace64 = simulator::Trace<f64>;
pub type GroundTruthSpec64 = simulator::GroundTruthSpec<f64>;
