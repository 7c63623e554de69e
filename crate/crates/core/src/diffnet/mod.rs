//! Dense matrices, a fixed-vocabulary differentiable graph, the input
//! gradient penalty and Adam.

mod adam;
mod graph;
mod matrix;
mod params;
mod penalty;

pub use adam::{AdamConfig, AdamState};
pub use graph::{sigmoid, softmax_rows, Graph, NodeId, Op, Tape};
pub use matrix::Matrix;
pub use params::{glorot_uniform, ParamId, ParamStore};
pub use penalty::{GradientPenalty, PenaltyEval};
