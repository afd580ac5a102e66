//! Local and global divergence estimation, alternating discriminator/model updates and
//! exact oracles for enumerable models.

mod discriminator;
mod tabular;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use discriminator::{global_objective, local_objective, Criterion, DiscSpec, FactorDiscriminator, Objective};
pub use tabular::{
    exact_joint_js, exact_local_js, exact_local_js_by_projection, optimal_discriminator_objective, LocalJs,
    TabularDiscriminator, TabularModel,
};

use crate::data::{DataError, Dataset};
use crate::graph::{Dag, FactorSet, GraphError, RecognitionGraph};
use crate::numerics::{AdamConfig, NumericsError, Owner, ParamStore, Tape, Tensor};
use crate::stochastics::{
    ancestral_sample, noise_requests, DependencyMap, NoiseBundle, NoiseRequest, SampleCtx, SampleError, SampleTable,
    SamplingGraph,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("sample table has no variable {0}")]
    MissingVariable(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("factor set is empty")]
    EmptyFactorSet,
    #[error("invalid table: {0}")]
    BadTable(String),
    #[error("invalid trainer config: {0}")]
    BadConfig(String),
    #[error("non-finite {phase} objective at step {step} (terms {terms:?})")]
    NonFiniteLoss { step: u64, phase: String, terms: Vec<f64> },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One discriminator per tying group, averaged over factor instances.
    Local,
    /// One discriminator over every variable.
    Global,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Local => "local",
            Mode::Global => "global",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "local" => Ok(Mode::Local),
            "global" => Ok(Mode::Global),
            other => Err(format!("unknown mode {other:?} (expected local or global)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLoss {
    /// Descend the discriminator's own objective.
    Minimax,
    #[default]
    NonSaturating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub mode: Mode,
    pub generator_loss: GeneratorLoss,
    pub batch: usize,
    pub adam: AdamConfig,
    pub steps: u64,
    pub seed: u64,
    /// Discriminator updates per model update.
    pub disc_steps: usize,
    pub temperature: f64,
    pub disc: DiscSpec,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Local,
            generator_loss: GeneratorLoss::NonSaturating,
            batch: 100,
            adam: AdamConfig::default(),
            steps: 20_000,
            seed: 0,
            disc_steps: 1,
            temperature: 0.1,
            disc: DiscSpec::default(),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch == 0 {
            return Err(TrainError::BadConfig("batch must be at least 1".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(TrainError::BadConfig(format!("learning rate must be positive, got {}", self.adam.lr)));
        }
        if self.disc_steps == 0 {
            return Err(TrainError::BadConfig("disc_steps must be at least 1".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(TrainError::BadConfig("temperature must be positive".into()));
        }
        Ok(())
    }
}

/// A graph with its compiled recognition structure, factor set and dependency functions.
#[derive(Debug, Clone)]
pub struct GraphModel {
    pub dag: Dag,
    pub recognition: RecognitionGraph,
    pub factors: FactorSet,
    pub generative: DependencyMap,
    pub inference: DependencyMap,
}

impl GraphModel {
    pub fn check(&self) -> Result<(), TrainError> {
        self.dag.validate()?;
        self.recognition.check(&self.dag)?;
        for v in self.dag.nodes() {
            if !self.generative.contains_key(&v.name) {
                return Err(SampleError::MissingDependencyFn(v.name.clone()).into());
            }
        }
        for z in &self.recognition.elimination_order {
            if !self.inference.contains_key(z) {
                return Err(SampleError::MissingDependencyFn(z.clone()).into());
            }
        }
        Ok(())
    }

    pub fn generative_noise(&self) -> Result<Vec<NoiseRequest>, TrainError> {
        Ok(noise_requests(SamplingGraph::Generative(&self.dag), &self.generative)?)
    }

    pub fn inference_noise(&self) -> Result<Vec<NoiseRequest>, TrainError> {
        let graph = SamplingGraph::Recognition { dag: &self.dag, graph: &self.recognition };
        Ok(noise_requests(graph, &self.inference)?)
    }

    pub fn sample_p(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        noise: &NoiseBundle,
        ctx: &SampleCtx,
    ) -> Result<SampleTable, TrainError> {
        Ok(ancestral_sample(tape, store, SamplingGraph::Generative(&self.dag), &self.generative, noise, None, ctx)?)
    }

    pub fn sample_q(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        observed: &BTreeMap<String, Tensor>,
        noise: &NoiseBundle,
        ctx: &SampleCtx,
    ) -> Result<SampleTable, TrainError> {
        let graph = SamplingGraph::Recognition { dag: &self.dag, graph: &self.recognition };
        Ok(ancestral_sample(tape, store, graph, &self.inference, noise, Some(observed), ctx)?)
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one random stream of one step. Every draw of a run goes through this, so
/// a run resumed at step `s` sees exactly the randomness of the unbroken run.
pub fn stream_seed(seed: u64, step: u64, stream: u64) -> u64 {
    mix(mix(mix(seed) ^ step) ^ stream)
}

const INIT_STREAM: u64 = u64::MAX;

/// Data rows and frozen noise for one training phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub observed: BTreeMap<String, Tensor>,
    pub p_noise: NoiseBundle,
    pub q_noise: NoiseBundle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReport {
    /// Factor-averaged divergence estimate on this minibatch before the update.
    pub estimate: f64,
    pub terms: Vec<f64>,
}

/// One row of the metrics trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub step: u64,
    pub mode: Mode,
    pub objective: f64,
    pub terms: Vec<f64>,
    pub eval: BTreeMap<String, f64>,
}

pub type EvalHook<'a> = dyn FnMut(&Trainer) -> Result<BTreeMap<String, f64>, TrainError> + 'a;

/// Model, discriminators and all trainable state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: GraphModel,
    pub config: TrainerConfig,
    pub discs: Vec<FactorDiscriminator>,
    pub store: ParamStore,
    /// Completed training steps.
    pub step: u64,
    p_requests: Vec<NoiseRequest>,
    q_requests: Vec<NoiseRequest>,
}

impl Trainer {
    /// Adds discriminators for the configured mode to `store`, which already holds the
    /// model's parameters.
    pub fn new(model: GraphModel, mut store: ParamStore, config: TrainerConfig) -> Result<Self, TrainError> {
        config.validate()?;
        model.check()?;
        let factors = match config.mode {
            Mode::Local => model.factors.clone(),
            Mode::Global => FactorSet::single(&model.dag),
        };
        if factors.is_empty() {
            return Err(TrainError::EmptyFactorSet);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, INIT_STREAM, 1));
        let discs = factors
            .iter()
            .enumerate()
            .map(|(i, f)| FactorDiscriminator::new(f, &model.dag, &config.disc, &mut store, &format!("d{i}"), &mut rng))
            .collect::<Result<_, _>>()?;
        let p_requests = model.generative_noise()?;
        let q_requests = model.inference_noise()?;
        Ok(Self { model, config, discs, store, step: 0, p_requests, q_requests })
    }

    /// Replaces all trainable state with a saved store taken after `step` steps.
    pub fn restore(&mut self, store: ParamStore, step: u64) -> Result<(), TrainError> {
        if !self.store.same_layout(&store) {
            return Err(TrainError::BadConfig("checkpoint parameters do not match this model".into()));
        }
        self.store = store;
        self.step = step;
        Ok(())
    }

    pub fn ctx(&self) -> SampleCtx {
        SampleCtx::training(self.config.temperature)
    }

    /// Fresh rows and noise for `phase` of step `step`.
    pub fn draw_minibatch(&self, data: &Dataset, step: u64, phase: u64) -> Result<Minibatch, TrainError> {
        let s = |k: u64| stream_seed(self.config.seed, step, phase * 3 + k);
        let b = self.config.batch;
        Ok(Minibatch {
            observed: data.minibatch(b, s(0)),
            p_noise: NoiseBundle::generate(&self.p_requests, b, s(1))?,
            q_noise: NoiseBundle::generate(&self.q_requests, b, s(2))?,
        })
    }

    pub fn sample_tables(&self, tape: &mut Tape, mb: &Minibatch) -> Result<(SampleTable, SampleTable), TrainError> {
        let ctx = self.ctx();
        let p = self.model.sample_p(tape, &self.store, &mb.p_noise, &ctx)?;
        let q = self.model.sample_q(tape, &self.store, &mb.observed, &mb.q_noise, &ctx)?;
        Ok((p, q))
    }

    fn detached_objective(&self, mb: &Minibatch) -> Result<(Tape, Objective), TrainError> {
        let mut sample_tape = Tape::new();
        let (p, q) = self.sample_tables(&mut sample_tape, mb)?;
        let mut tape = Tape::new();
        let p = p.detach(&sample_tape, &mut tape);
        let q = q.detach(&sample_tape, &mut tape);
        let obj = local_objective(&mut tape, &self.store, &self.discs, &p, &q, Criterion::Divergence)?;
        Ok((tape, obj))
    }

    /// The divergence estimate on a minibatch, without updating anything.
    pub fn evaluate(&self, mb: &Minibatch) -> Result<PhaseReport, TrainError> {
        let (_, obj) = self.detached_objective(mb)?;
        Ok(PhaseReport { estimate: obj.estimate, terms: obj.terms })
    }

    fn finite(&self, phase: &str, obj: &Objective) -> Result<(), TrainError> {
        if obj.estimate.is_finite() {
            Ok(())
        } else {
            Err(TrainError::NonFiniteLoss { step: self.step + 1, phase: phase.into(), terms: obj.terms.clone() })
        }
    }

    /// One Adam ascent step on the estimate, discriminator parameters only.
    pub fn disc_step(&mut self, mb: &Minibatch) -> Result<PhaseReport, TrainError> {
        let (mut tape, obj) = self.detached_objective(mb)?;
        self.finite("discriminator", &obj)?;
        let loss = tape.scale(obj.value, -1.0);
        let grads = tape.backward(loss);
        let grads = tape.param_grads(&grads, &self.store);
        self.store.adam_step(&grads, &[Owner::Discriminator], &self.config.adam)?;
        Ok(PhaseReport { estimate: obj.estimate, terms: obj.terms })
    }

    /// One Adam step on generative, recognition and prior parameters.
    pub fn model_step(&mut self, mb: &Minibatch) -> Result<PhaseReport, TrainError> {
        let mut tape = Tape::new();
        let (p, q) = self.sample_tables(&mut tape, mb)?;
        let criterion = match self.config.generator_loss {
            GeneratorLoss::Minimax => Criterion::Divergence,
            GeneratorLoss::NonSaturating => Criterion::NonSaturating,
        };
        let obj = local_objective(&mut tape, &self.store, &self.discs, &p, &q, criterion)?;
        self.finite("model", &obj)?;
        let grads = tape.backward(obj.value);
        let grads = tape.param_grads(&grads, &self.store);
        self.store.adam_step(&grads, &Owner::MODEL, &self.config.adam)?;
        Ok(PhaseReport { estimate: obj.estimate, terms: obj.terms })
    }

    /// `disc_steps` discriminator updates, then one model update, each on its own
    /// minibatch.
    pub fn train_step(&mut self, data: &Dataset) -> Result<MetricRecord, TrainError> {
        let step = self.step + 1;
        let mut report = None;
        for j in 0..self.config.disc_steps {
            let mb = self.draw_minibatch(data, step, 1 + j as u64)?;
            let r = self.disc_step(&mb)?;
            report.get_or_insert(r);
        }
        let mb = self.draw_minibatch(data, step, 0)?;
        self.model_step(&mb)?;
        self.step = step;
        let report = report.expect("at least one discriminator step");
        Ok(MetricRecord {
            step,
            mode: self.config.mode,
            objective: report.estimate,
            terms: report.terms,
            eval: BTreeMap::new(),
        })
    }

    /// Runs `steps` more steps. The hook runs every `eval_every` steps and after the
    /// last one.
    pub fn train(
        &mut self,
        data: &Dataset,
        steps: u64,
        eval_every: u64,
        mut hook: Option<&mut EvalHook<'_>>,
    ) -> Result<Vec<MetricRecord>, TrainError> {
        let mut trace = Vec::with_capacity(steps as usize);
        for i in 0..steps {
            let mut record = self.train_step(data)?;
            let due = eval_every > 0 && record.step % eval_every == 0;
            if let Some(h) = hook.as_deref_mut() {
                if due || i + 1 == steps {
                    record.eval = h(self)?;
                }
            }
            trace.push(record);
        }
        Ok(trace)
    }
}

/// Writes the trace as CSV: `step,mode,objective,per_factor_terms` then one column per
/// eval metric seen anywhere in the trace.
pub fn write_metrics_csv<W: Write>(records: &[MetricRecord], mut out: W) -> std::io::Result<()> {
    let keys: BTreeSet<&str> = records.iter().flat_map(|r| r.eval.keys().map(String::as_str)).collect();
    write!(out, "step,mode,objective,per_factor_terms")?;
    for k in &keys {
        write!(out, ",{k}")?;
    }
    writeln!(out)?;
    for r in records {
        let terms: Vec<String> = r.terms.iter().map(f64::to_string).collect();
        write!(out, "{},{},{},{}", r.step, r.mode, r.objective, terms.join(";"))?;
        for k in &keys {
            match r.eval.get(*k) {
                Some(v) => write!(out, ",{v}")?,
                None => write!(out, ",")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
