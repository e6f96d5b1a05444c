//! Single-pass, partition-parallel ensemble learning.
//!
//! Training splits a dataset into random blocks, grows an IVoting random
//! forest on each block independently, and merges the per-block forests
//! into one equally weighted mega-ensemble. Prediction can query the
//! mega-ensemble lazily: members vote one at a time until a Gaussian
//! (GLEE) or Bayesian (MLEE) stopping rule is confident that the partial
//! majority matches the full-ensemble majority.
//!
//! The numeric core is generic over the scalar type. Feature values use
//! any [`Feature`] (`f32` or `f64`) and stopping-rule arithmetic uses any
//! [`Probability`]. The aliases at the crate root fix both to `f64`, which
//! is also the on-disk precision of CSV blocks and ensemble files.

pub mod data;
pub mod engine;
pub mod error;
pub mod ivoting;
pub mod lazy;
pub mod metrics;
pub mod scalar;
pub mod sim;
pub mod stopping;
pub mod tree;

pub use error::{Error, Result};
pub use scalar::{Feature, Probability};
pub use stopping::Rule;

pub type Example = data::Example<f64>;
pub type Block = data::Block<f64>;
pub type DecisionTree = tree::DecisionTree<f64>;
pub type Ensemble = engine::Ensemble<f64>;
pub type StopConfig = stopping::StopConfig<f64>;
pub type StoppingTable = stopping::StoppingTable<f64>;
pub type SimConfig = sim::SimConfig<f64>;

pub type Block32 = data::Block<f32>;
pub type DecisionTree32 = tree::DecisionTree<f32>;
pub type Ensemble32 = engine::Ensemble<f32>;
pub type StopConfig32 = stopping::StopConfig<f32>;
pub type StoppingTable32 = stopping::StoppingTable<f32>;
