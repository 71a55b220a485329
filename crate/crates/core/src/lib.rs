//! Makespan-minimizing scheduling of multi-stage jobs on heterogeneous
//! machines: stage-time prediction, exact and heuristic scheduling, plan
//! compilation, and simulated or file-synchronized execution.

pub mod cli;
pub mod exec;
pub mod model;
pub mod plan;
pub mod predictor;
pub mod scalar;
pub mod solver;

pub use scalar::Scalar;

pub type PredictorModel = predictor::Model<f64>;
pub type TrainingTable = predictor::TrainingTable<f64>;
pub type FeatureVector = predictor::FeatureVector<f64>;
