//! Pre-wired model bundles: the mixture-prior GMGAN, the state-space SSGAN, and generic
//! networks for graphs read from a description file.

mod custom;
mod gmgan;
mod ssgan;

pub use custom::{build_custom, build_from_description, Bundle, CustomSpec};
pub use gmgan::{build_gmgan, gmgan_posterior_k, GmganBundle, GmganSpec};
pub use ssgan::{build_ssgan, PooledEncoder, Rollout, SsganBundle, SsganSpec};

use thiserror::Error;

use crate::graph::GraphError;
use crate::numerics::NumericsError;
use crate::stochastics::SampleError;
use crate::trainer::TrainError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstanceError {
    #[error("bad dimension: {0}")]
    BadDimension(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[cfg(test)]
mod tests;
