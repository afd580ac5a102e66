//! Generative DAGs and the structures compiled from them: recognition graphs and
//! local factor sets.

mod dag;
mod description;
mod factors;
mod recognition;

pub use dag::{Dag, Domain, VariableKind, VariableSpec};
pub use description::{GraphDescription, RecognitionMode, RecognitionSpec};
pub use factors::{extract_factors, Factor, FactorSet};
pub use recognition::{inverse_factorization, leaves_to_roots, mean_field, RecognitionGraph};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("cycle detected among {0:?}")]
    CycleDetected(Vec<String>),
    #[error("duplicate variable name {0}")]
    DuplicateName(String),
    #[error("observed variable {parent} cannot be a parent of latent {child}")]
    ObservedParentOfLatent { parent: String, child: String },
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("variable {0} has an empty domain (dim must be >= 1, categorical K >= 2)")]
    BadDomain(String),
    #[error("{0} is not a latent variable")]
    NotLatent(String),
    #[error("{0} is not an observed variable")]
    NotObserved(String),
    #[error("invalid recognition graph: {0}")]
    BadRecognition(String),
    #[error("invalid graph description: {0}")]
    BadDescription(String),
}
