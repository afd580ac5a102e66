//! Reparameterized sampling primitives and ancestral sampling over generative and
//! recognition graphs.

mod dependency;
mod noise;

use std::collections::BTreeMap;

pub use dependency::{
    Dependency, DependencyMap, MixturePosterior, MixtureSelect, NetworkFn, NetworkOutput, StandardNormalPrior,
    UniformCategoricalPrior,
};
pub use noise::{NoiseBundle, NoiseKind, NoiseRequest};

use thiserror::Error;

use crate::graph::{Dag, GraphError, RecognitionGraph};
use crate::numerics::{NumericsError, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("no dependency function for {0}")]
    MissingDependencyFn(String),
    #[error("observed input {0} missing")]
    MissingObserved(String),
    #[error("noise tensor {0} missing from bundle")]
    MissingNoise(String),
    #[error("noise key {0} requested with different shapes or kinds")]
    ConflictingNoise(String),
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("bad parents: {0}")]
    BadParents(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Settings shared by every dependency during one sampling pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleCtx {
    pub temperature: f64,
    /// Draw categorical variables as hard one-hot vectors (evaluation and sampling).
    pub hard_categorical: bool,
}

impl Default for SampleCtx {
    fn default() -> Self {
        Self { temperature: 0.1, hard_categorical: false }
    }
}

impl SampleCtx {
    pub fn training(temperature: f64) -> Self {
        Self { temperature, hard_categorical: false }
    }

    pub fn evaluation() -> Self {
        Self { temperature: 0.1, hard_categorical: true }
    }
}

/// `mean + exp(log_scale) ⊙ noise`.
pub fn gaussian_reparam(tape: &mut Tape, mean: Var, log_scale: Var, noise: Var) -> Result<Var, SampleError> {
    let scale = tape.exp(log_scale);
    let spread = tape.mul(scale, noise)?;
    Ok(tape.add(mean, spread)?)
}

/// `softmax((logits + gumbel) / τ)` row-wise.
pub fn gumbel_softmax(tape: &mut Tape, logits: Var, gumbel: Var, temperature: f64) -> Result<Var, SampleError> {
    if !(temperature > 0.0) {
        return Err(SampleError::NonPositiveTemperature(temperature));
    }
    let perturbed = tape.add(logits, gumbel)?;
    let scaled = tape.scale(perturbed, 1.0 / temperature);
    Ok(tape.softmax(scaled))
}

/// Relaxed sample in training contexts; a constant one-hot `argmax(logits + gumbel)` otherwise.
pub fn categorical_sample(tape: &mut Tape, logits: Var, gumbel: Var, ctx: &SampleCtx) -> Result<Var, SampleError> {
    if !ctx.hard_categorical {
        return gumbel_softmax(tape, logits, gumbel, ctx.temperature);
    }
    let perturbed = tape.value(logits).zip_map(tape.value(gumbel), |a, b| a + b)?;
    Ok(tape.constant(one_hot_argmax(&perturbed)))
}

/// One-hot rows at each row's maximum (first maximum on ties).
pub fn one_hot_argmax(t: &Tensor) -> Tensor {
    let (rows, cols) = (t.rows(), t.cols());
    let mut out = Tensor::zeros(&[rows, cols]);
    for r in 0..rows {
        let best = argmax(t.row(r));
        out.data_mut()[r * cols + best] = 1.0;
    }
    out
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    P,
    Q,
}

/// Values for every graph variable over one minibatch, recorded on a tape.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    pub source: Source,
    pub batch: usize,
    pub vars: BTreeMap<String, Var>,
}

impl SampleTable {
    pub fn get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    pub fn value<'t>(&self, tape: &'t Tape, name: &str) -> Option<&'t Tensor> {
        self.get(name).map(|v| tape.value(v))
    }

    pub fn values(&self, tape: &Tape) -> BTreeMap<String, Tensor> {
        self.vars.iter().map(|(k, &v)| (k.clone(), tape.value(v).clone())).collect()
    }

    /// Copies the values onto `dst` as constants, cutting every gradient path.
    pub fn detach(&self, src: &Tape, dst: &mut Tape) -> SampleTable {
        let vars = self.vars.iter().map(|(k, &v)| (k.clone(), dst.constant(src.value(v).clone()))).collect();
        SampleTable { source: self.source, batch: self.batch, vars }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum SamplingGraph<'a> {
    Generative(&'a Dag),
    Recognition { dag: &'a Dag, graph: &'a RecognitionGraph },
}

/// Noise requests of the functions that `graph` will evaluate.
pub fn noise_requests(graph: SamplingGraph<'_>, fns: &DependencyMap) -> Result<Vec<NoiseRequest>, SampleError> {
    let names: Vec<String> = match graph {
        SamplingGraph::Generative(dag) => dag.nodes().iter().map(|v| v.name.clone()).collect(),
        SamplingGraph::Recognition { graph, .. } => graph.elimination_order.clone(),
    };
    let mut out = Vec::new();
    for name in names {
        let f = fns.get(&name).ok_or_else(|| SampleError::MissingDependencyFn(name.clone()))?;
        out.extend(f.noise());
    }
    Ok(out)
}

/// Evaluates the graph's conditionals in order.
///
/// Generative graphs run in topological order and produce every variable.
/// Recognition graphs copy `observed` onto the tape and run the latents in
/// elimination order.
pub fn ancestral_sample(
    tape: &mut Tape,
    store: &ParamStore,
    graph: SamplingGraph<'_>,
    fns: &DependencyMap,
    noise: &NoiseBundle,
    observed: Option<&BTreeMap<String, Tensor>>,
    ctx: &SampleCtx,
) -> Result<SampleTable, SampleError> {
    let mut vars: BTreeMap<String, Var> = BTreeMap::new();
    let (source, plan): (Source, Vec<(String, Vec<String>)>) = match graph {
        SamplingGraph::Generative(dag) => {
            let mut plan = Vec::new();
            for name in dag.topological_order()? {
                let parents = dag.parents(name)?.into_iter().map(String::from).collect();
                plan.push((name.to_string(), parents));
            }
            (Source::P, plan)
        }
        SamplingGraph::Recognition { dag, graph } => {
            let observed = observed.ok_or_else(|| {
                SampleError::MissingObserved(dag.observed().next().map(|v| v.name.clone()).unwrap_or_default())
            })?;
            for spec in dag.observed() {
                let value = observed.get(&spec.name).ok_or_else(|| SampleError::MissingObserved(spec.name.clone()))?;
                vars.insert(spec.name.clone(), tape.constant(value.clone()));
            }
            let plan = graph
                .elimination_order
                .iter()
                .map(|z| Ok((z.clone(), graph.conditioning_of(z)?.to_vec())))
                .collect::<Result<_, GraphError>>()?;
            (Source::Q, plan)
        }
    };
    for (name, parents) in plan {
        let f = fns.get(&name).ok_or_else(|| SampleError::MissingDependencyFn(name.clone()))?;
        let parent_vars: Vec<Var> = parents
            .iter()
            .map(|p| vars.get(p).copied().ok_or_else(|| SampleError::BadParents(format!("{p} not yet sampled"))))
            .collect::<Result<_, _>>()?;
        let noise_var = match f.noise() {
            Some(req) => {
                let t = noise.get(&req.key).ok_or_else(|| SampleError::MissingNoise(req.key.clone()))?;
                Some(tape.constant(t.clone()))
            }
            None => None,
        };
        let value = f.forward(tape, store, &parent_vars, noise_var, ctx)?;
        vars.insert(name, value);
    }
    Ok(SampleTable { source, batch: noise.batch, vars })
}
