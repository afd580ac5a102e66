//! Differentiable maps from parent values (and noise) to a variable's value.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use super::{categorical_sample, gaussian_reparam, NoiseKind, NoiseRequest, SampleCtx, SampleError};
use crate::numerics::{Mlp, ParamId, ParamStore, Tape, Tensor, Var};

/// One conditional of a generative or recognition graph.
///
/// `parents` arrive in the graph's parent (or conditioning) order.
pub trait Dependency: Debug + Send + Sync {
    fn noise(&self) -> Option<NoiseRequest>;

    fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        parents: &[Var],
        noise: Option<Var>,
        ctx: &SampleCtx,
    ) -> Result<Var, SampleError>;

    fn params(&self) -> Vec<ParamId>;
}

pub type DependencyMap = BTreeMap<String, Arc<dyn Dependency>>;

fn require_noise(noise: Option<Var>, key: &str) -> Result<Var, SampleError> {
    noise.ok_or_else(|| SampleError::MissingNoise(key.to_string()))
}

/// `z = ε`, ε ~ N(0, I).
#[derive(Debug, Clone)]
pub struct StandardNormalPrior {
    pub key: String,
    pub dim: usize,
}

impl Dependency for StandardNormalPrior {
    fn noise(&self) -> Option<NoiseRequest> {
        Some(NoiseRequest::new(&self.key, NoiseKind::Gaussian, self.dim))
    }

    fn forward(
        &self,
        _: &mut Tape,
        _: &ParamStore,
        _: &[Var],
        noise: Option<Var>,
        _: &SampleCtx,
    ) -> Result<Var, SampleError> {
        require_noise(noise, &self.key)
    }

    fn params(&self) -> Vec<ParamId> {
        Vec::new()
    }
}

/// Uniform categorical prior, drawn through the Gumbel-Softmax relaxation
/// (or as a hard one-hot when the context asks for it).
#[derive(Debug, Clone)]
pub struct UniformCategoricalPrior {
    pub key: String,
    pub k: usize,
}

impl Dependency for UniformCategoricalPrior {
    fn noise(&self) -> Option<NoiseRequest> {
        Some(NoiseRequest::new(&self.key, NoiseKind::Gumbel, self.k))
    }

    fn forward(
        &self,
        tape: &mut Tape,
        _: &ParamStore,
        _: &[Var],
        noise: Option<Var>,
        ctx: &SampleCtx,
    ) -> Result<Var, SampleError> {
        let g = require_noise(noise, &self.key)?;
        let rows = tape.value(g).rows();
        let logits = tape.constant(Tensor::zeros(&[rows, self.k]));
        categorical_sample(tape, logits, g, ctx)
    }

    fn params(&self) -> Vec<ParamId> {
        Vec::new()
    }
}

/// `h = k · μ + ε`: selects (a relaxed mixture of) component means for a one-hot `k`
/// and adds unit-variance Gaussian noise.
#[derive(Debug, Clone)]
pub struct MixtureSelect {
    pub means: ParamId,
    pub key: String,
    pub dim: usize,
}

impl Dependency for MixtureSelect {
    fn noise(&self) -> Option<NoiseRequest> {
        Some(NoiseRequest::new(&self.key, NoiseKind::Gaussian, self.dim))
    }

    fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        parents: &[Var],
        noise: Option<Var>,
        _: &SampleCtx,
    ) -> Result<Var, SampleError> {
        let k = *parents.first().ok_or_else(|| SampleError::BadParents("mixture selection needs k".into()))?;
        let mu = tape.param(store, self.means);
        let mean = tape.matmul(k, mu)?;
        let eps = require_noise(noise, &self.key)?;
        Ok(tape.add(mean, eps)?)
    }

    fn params(&self) -> Vec<ParamId> {
        vec![self.means]
    }
}

/// Posterior responsibilities of a Gaussian mixture with uniform weights and identity
/// covariances, `q(k|h) ∝ exp(-½‖h − μ_k‖²)`, sampled through Gumbel-Softmax.
#[derive(Debug, Clone)]
pub struct MixturePosterior {
    pub means: ParamId,
    pub key: String,
    pub k: usize,
}

impl MixturePosterior {
    /// Unnormalized log-responsibilities `-½‖h − μ_k‖²`.
    pub fn logits(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Result<Var, SampleError> {
        let mu = tape.param(store, self.means);
        Ok(tape.neg_half_sq_dist(h, mu)?)
    }
}

impl Dependency for MixturePosterior {
    fn noise(&self) -> Option<NoiseRequest> {
        Some(NoiseRequest::new(&self.key, NoiseKind::Gumbel, self.k))
    }

    fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        parents: &[Var],
        noise: Option<Var>,
        ctx: &SampleCtx,
    ) -> Result<Var, SampleError> {
        let h = *parents.first().ok_or_else(|| SampleError::BadParents("mixture posterior needs h".into()))?;
        let logits = self.logits(tape, store, h)?;
        let g = require_noise(noise, &self.key)?;
        categorical_sample(tape, logits, g, ctx)
    }

    fn params(&self) -> Vec<ParamId> {
        vec![self.means]
    }
}

/// How a network's output becomes the variable's value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkOutput {
    /// The output is the value (implicit likelihood / point-mass extractor).
    Deterministic,
    /// Output heads `mean` and `log_scale`, reparameterized with Gaussian noise.
    Gaussian,
    /// Output logits, sampled with Gumbel-Softmax.
    Categorical,
}

/// A network over the concatenated parents.
///
/// With `noise_input` the noise is appended to the network input (an implicit
/// conditional such as a transition operator). `skip` adds a second network applied
/// to the first parent alone, giving `f(parents, ε) + skip(parent_0)`.
#[derive(Debug, Clone)]
pub struct NetworkFn {
    pub net: Mlp,
    pub output: NetworkOutput,
    pub noise_input: Option<NoiseRequest>,
    pub skip: Option<Mlp>,
    /// Noise key for Gaussian/Categorical outputs.
    pub sample_key: Option<String>,
}

impl NetworkFn {
    pub fn deterministic(net: Mlp) -> Self {
        Self { net, output: NetworkOutput::Deterministic, noise_input: None, skip: None, sample_key: None }
    }

    pub fn gaussian(net: Mlp, key: impl Into<String>) -> Self {
        Self { net, output: NetworkOutput::Gaussian, noise_input: None, skip: None, sample_key: Some(key.into()) }
    }

    pub fn categorical(net: Mlp, key: impl Into<String>) -> Self {
        Self { net, output: NetworkOutput::Categorical, noise_input: None, skip: None, sample_key: Some(key.into()) }
    }

    pub fn with_noise_input(mut self, request: NoiseRequest) -> Self {
        self.noise_input = Some(request);
        self
    }

    pub fn with_skip(mut self, skip: Mlp) -> Self {
        self.skip = Some(skip);
        self
    }

    fn output_width(&self) -> usize {
        match self.output {
            NetworkOutput::Gaussian => self.net.spec().output() / 2,
            _ => self.net.spec().output(),
        }
    }
}

impl Dependency for NetworkFn {
    fn noise(&self) -> Option<NoiseRequest> {
        if let Some(req) = &self.noise_input {
            return Some(req.clone());
        }
        let key = self.sample_key.as_ref()?;
        match self.output {
            NetworkOutput::Deterministic => None,
            NetworkOutput::Gaussian => Some(NoiseRequest::new(key, NoiseKind::Gaussian, self.output_width())),
            NetworkOutput::Categorical => Some(NoiseRequest::new(key, NoiseKind::Gumbel, self.output_width())),
        }
    }

    fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        parents: &[Var],
        noise: Option<Var>,
        ctx: &SampleCtx,
    ) -> Result<Var, SampleError> {
        let mut inputs = parents.to_vec();
        if let Some(req) = &self.noise_input {
            inputs.push(require_noise(noise, &req.key)?);
        }
        if inputs.is_empty() {
            return Err(SampleError::BadParents("network dependency without inputs".into()));
        }
        let x = tape.concat_cols(&inputs)?;
        let out = self.net.forward(tape, store, x)?;
        let mut value = match self.output {
            NetworkOutput::Deterministic => out,
            NetworkOutput::Gaussian => {
                let mean = self.net.head(tape, out, "mean")?;
                let log_scale = self.net.head(tape, out, "log_scale")?;
                let key = self.sample_key.as_deref().unwrap_or("");
                gaussian_reparam(tape, mean, log_scale, require_noise(noise, key)?)?
            }
            NetworkOutput::Categorical => {
                let key = self.sample_key.as_deref().unwrap_or("");
                categorical_sample(tape, out, require_noise(noise, key)?, ctx)?
            }
        };
        if let Some(skip) = &self.skip {
            let residual = skip.forward(tape, store, parents[0])?;
            value = tape.add(value, residual)?;
        }
        Ok(value)
    }

    fn params(&self) -> Vec<ParamId> {
        let mut p = self.net.params();
        if let Some(skip) = &self.skip {
            p.extend(skip.params());
        }
        p
    }
}
