//! Adversarial training of generative models declared as Bayesian networks, with one
//! discriminator per local factor of the graph.

pub mod data;
pub mod eval;
pub mod graph;
pub mod instances;
pub mod numerics;
pub mod stochastics;
pub mod trainer;

use thiserror::Error;

/// Any error raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),
    #[error(transparent)]
    Sample(#[from] stochastics::SampleError),
    #[error(transparent)]
    Train(#[from] trainer::TrainError),
    #[error(transparent)]
    Instance(#[from] instances::InstanceError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Data(#[from] data::DataError),
}
