//! Edge-enhanced causal attention for graph classification under label
//! imbalance: encoders, the causal/trivial split, losses, a synthetic
//! edge-causal benchmark, and training and evaluation drivers.

pub mod autodiff;
pub mod causal;
pub mod checkpoint;
pub mod checks;
pub mod encoders;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod nn;
pub mod objectives;
pub mod stats;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
