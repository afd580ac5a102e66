use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::InstanceError;
use crate::graph::{extract_factors, mean_field, Dag, Domain, VariableSpec};
use crate::numerics::{Activation, Mlp, MlpSpec, Owner, ParamId, ParamStore, Tape, Tensor, Var};
use crate::stochastics::{
    Dependency, DependencyMap, NetworkFn, NoiseKind, NoiseRequest, SampleCtx, SampleError, StandardNormalPrior,
};
use crate::trainer::GraphModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsganSpec {
    pub t: usize,
    pub dim_h: usize,
    pub dim_v: usize,
    pub dim_x: usize,
    pub dim_eps: usize,
    pub gen_hidden: Vec<usize>,
    pub trans_hidden: Vec<usize>,
    pub enc_hidden: Vec<usize>,
    /// Width of the per-frame features pooled by the content extractor.
    pub frame_features: usize,
    /// One transition noise draw shared by every step.
    pub shared_noise: bool,
}

impl Default for SsganSpec {
    fn default() -> Self {
        Self {
            t: 4,
            dim_h: 128,
            dim_v: 8,
            dim_x: 256,
            dim_eps: 8,
            gen_hidden: vec![128],
            trans_hidden: vec![32],
            enc_hidden: vec![128],
            frame_features: 64,
            shared_noise: true,
        }
    }
}

/// Content extractor over any number of frames: a per-frame network, averaged over
/// frames, then a linear head.
#[derive(Debug, Clone)]
pub struct PooledEncoder {
    pub frame: Mlp,
    pub head: Mlp,
}

impl PooledEncoder {
    fn pooled(&self, tape: &mut Tape, store: &ParamStore, frames: &[Var]) -> Result<Var, SampleError> {
        if frames.is_empty() {
            return Err(SampleError::BadParents("content extractor needs at least one frame".into()));
        }
        let rows = tape.value(frames[0]).rows();
        let stacked = tape.concat_rows(frames)?;
        let feats = self.frame.forward(tape, store, stacked)?;
        let mut total = tape.slice_rows(feats, 0, rows)?;
        for i in 1..frames.len() {
            let part = tape.slice_rows(feats, i * rows, (i + 1) * rows)?;
            total = tape.add(total, part)?;
        }
        let mean = tape.scale(total, 1.0 / frames.len() as f64);
        Ok(self.head.forward(tape, store, mean)?)
    }
}

impl Dependency for PooledEncoder {
    fn noise(&self) -> Option<NoiseRequest> {
        None
    }

    fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        parents: &[Var],
        _: Option<Var>,
        _: &SampleCtx,
    ) -> Result<Var, SampleError> {
        self.pooled(tape, store, parents)
    }

    fn params(&self) -> Vec<ParamId> {
        let mut p = self.frame.params();
        p.extend(self.head.params());
        p
    }
}

/// Content `h`, motion chain `v_1 → … → v_T` with `v_{t+1} = O(v_t, ε) + L(v_t)`, and
/// frames `x_t = G(h, v_t)`. `O`, `L`, `G` and `E2` are shared across time.
#[derive(Debug, Clone)]
pub struct SsganBundle {
    pub spec: SsganSpec,
    pub model: GraphModel,
    pub generator: Mlp,
    pub transition: Mlp,
    pub skip: Mlp,
    pub content: PooledEncoder,
    pub motion: Mlp,
}

/// Latent path and frames of a generated or analogized clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub v_path: Vec<Tensor>,
    pub frames: Vec<Tensor>,
}

pub fn v_name(t: usize) -> String {
    format!("v{t}")
}

pub fn x_name(t: usize) -> String {
    format!("x{t}")
}

pub fn build_ssgan(spec: &SsganSpec, store: &mut ParamStore, seed: u64) -> Result<SsganBundle, InstanceError> {
    if spec.t < 2 {
        return Err(InstanceError::BadDimension(format!("T must be at least 2, got {}", spec.t)));
    }
    if [spec.dim_h, spec.dim_v, spec.dim_x, spec.dim_eps, spec.frame_features].contains(&0) {
        return Err(InstanceError::BadDimension("dimensions must be positive".into()));
    }
    let t_max = spec.t;
    let mut nodes = vec![VariableSpec::latent("h", Domain::Continuous { dim: spec.dim_h })];
    nodes
        .extend((1..=t_max).map(|t| VariableSpec::latent(v_name(t), Domain::Continuous { dim: spec.dim_v }).tied("v")));
    nodes.extend(
        (1..=t_max).map(|t| VariableSpec::observed(x_name(t), Domain::Continuous { dim: spec.dim_x }).tied("x")),
    );
    let mut edges = Vec::new();
    for t in 1..=t_max {
        if t < t_max {
            edges.push((v_name(t), v_name(t + 1)));
        }
        edges.push(("h".to_string(), x_name(t)));
        edges.push((v_name(t), x_name(t)));
    }
    let dag = Dag::new(nodes, edges)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lrelu = Activation::leaky();
    let generator = Mlp::new(
        MlpSpec::new(spec.dim_h + spec.dim_v, &spec.gen_hidden, lrelu, spec.dim_x, Activation::Tanh),
        store,
        Owner::Generative,
        "G",
        &mut rng,
    )?;
    let transition = Mlp::new(
        MlpSpec::new(spec.dim_v + spec.dim_eps, &spec.trans_hidden, lrelu, spec.dim_v, Activation::Linear),
        store,
        Owner::Generative,
        "O",
        &mut rng,
    )?;
    let skip = Mlp::new(
        MlpSpec::new(spec.dim_v, &[], lrelu, spec.dim_v, Activation::Linear),
        store,
        Owner::Generative,
        "O.skip",
        &mut rng,
    )?;
    let frame = Mlp::new(
        MlpSpec::new(spec.dim_x, &spec.enc_hidden, lrelu, spec.frame_features, lrelu),
        store,
        Owner::Recognition,
        "E1.frame",
        &mut rng,
    )?;
    let head = Mlp::new(
        MlpSpec::new(spec.frame_features, &[], lrelu, spec.dim_h, Activation::Linear),
        store,
        Owner::Recognition,
        "E1.head",
        &mut rng,
    )?;
    let content = PooledEncoder { frame, head };
    let motion = Mlp::new(
        MlpSpec::new(spec.dim_x, &spec.enc_hidden, lrelu, spec.dim_v, Activation::Linear),
        store,
        Owner::Recognition,
        "E2",
        &mut rng,
    )?;

    let mut generative: DependencyMap = BTreeMap::new();
    generative.insert("h".into(), Arc::new(StandardNormalPrior { key: "h".into(), dim: spec.dim_h }));
    generative.insert(v_name(1), Arc::new(StandardNormalPrior { key: v_name(1), dim: spec.dim_v }));
    let mut inference: DependencyMap = BTreeMap::new();
    inference.insert("h".into(), Arc::new(content.clone()));
    let mut overrides = BTreeMap::new();
    overrides.insert("h".to_string(), (1..=t_max).map(x_name).collect::<Vec<_>>());
    for t in 1..=t_max {
        if t < t_max {
            let eps = NoiseRequest::new(eps_key(spec, t), NoiseKind::Gaussian, spec.dim_eps);
            let step = NetworkFn::deterministic(transition.clone()).with_noise_input(eps).with_skip(skip.clone());
            generative.insert(v_name(t + 1), Arc::new(step));
        }
        generative.insert(x_name(t), Arc::new(NetworkFn::deterministic(generator.clone())));
        inference.insert(v_name(t), Arc::new(NetworkFn::deterministic(motion.clone())));
        overrides.insert(v_name(t), vec![x_name(t)]);
    }
    let recognition = mean_field(&dag, &overrides)?;
    let factors = extract_factors(&dag)?;
    Ok(SsganBundle {
        spec: spec.clone(),
        model: GraphModel { dag, recognition, factors, generative, inference },
        generator,
        transition,
        skip,
        content,
        motion,
    })
}

/// Noise key of the transition into `v_{t+1}`.
fn eps_key(spec: &SsganSpec, t: usize) -> String {
    if spec.shared_noise {
        "eps".into()
    } else {
        format!("eps{t}")
    }
}

impl SsganBundle {
    pub fn eps_key(&self, t: usize) -> String {
        eps_key(&self.spec, t)
    }

    /// `O(v, ε) + L(v)`.
    pub fn step(&self, store: &ParamStore, v: &Tensor, eps: &Tensor) -> Result<Tensor, InstanceError> {
        let input = Tensor::concat_cols(&[v, eps])?;
        let out = self.transition.eval(store, &input)?;
        let residual = self.skip.eval(store, v)?;
        Ok(out.zip_map(&residual, |a, b| a + b)?)
    }

    /// `G(h, v)`.
    pub fn render(&self, store: &ParamStore, h: &Tensor, v: &Tensor) -> Result<Tensor, InstanceError> {
        Ok(self.generator.eval(store, &Tensor::concat_cols(&[h, v])?)?)
    }

    /// Iterates the transition and renders `steps` frames. A single `eps` tensor is
    /// reused at every step; otherwise `eps[i]` drives the transition into step `i + 2`.
    pub fn rollout(
        &self,
        store: &ParamStore,
        h: &Tensor,
        v1: &Tensor,
        steps: usize,
        eps: &[Tensor],
    ) -> Result<Rollout, InstanceError> {
        if steps == 0 {
            return Err(InstanceError::BadDimension("rollout needs at least one step".into()));
        }
        if eps.is_empty() || (eps.len() > 1 && eps.len() < steps - 1) {
            return Err(InstanceError::BadDimension(format!(
                "{} transition noise tensors for {steps} steps",
                eps.len()
            )));
        }
        let mut v = v1.clone();
        let mut out = Rollout { v_path: Vec::with_capacity(steps), frames: Vec::with_capacity(steps) };
        for i in 0..steps {
            if i > 0 {
                let e = if eps.len() == 1 { &eps[0] } else { &eps[i - 1] };
                v = self.step(store, &v, e)?;
            }
            out.frames.push(self.render(store, h, &v)?);
            out.v_path.push(v.clone());
        }
        Ok(out)
    }

    /// `E2(x_t)` for every frame.
    pub fn extract_motion(&self, store: &ParamStore, frames: &[Tensor]) -> Result<Vec<Tensor>, InstanceError> {
        frames.iter().map(|x| Ok(self.motion.eval(store, x)?)).collect()
    }

    /// `E1(x_1..x_n)`.
    pub fn extract_content(&self, store: &ParamStore, frames: &[Tensor]) -> Result<Tensor, InstanceError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = frames.iter().map(|f| tape.constant(f.clone())).collect();
        let h = self.content.pooled(&mut tape, store, &vars)?;
        Ok(tape.value(h).clone())
    }

    /// Renders the driving clip's motion with another content vector:
    /// `v_t = E2(x_t)`, output `G(h, v_t)`. A one-row `content_h` is broadcast.
    pub fn motion_analogy(
        &self,
        store: &ParamStore,
        content_h: &Tensor,
        driving: &[Tensor],
    ) -> Result<Rollout, InstanceError> {
        if driving.is_empty() {
            return Err(InstanceError::BadDimension("driving clip is empty".into()));
        }
        let rows = driving[0].rows();
        let h = match content_h.rows() {
            r if r == rows => content_h.clone(),
            1 => content_h.select_rows(&vec![0; rows]),
            r => {
                return Err(crate::numerics::NumericsError::ShapeMismatch(format!(
                    "{r} content rows for {rows} driving rows"
                ))
                .into())
            }
        };
        let v_path = self.extract_motion(store, driving)?;
        let frames = v_path.iter().map(|v| self.render(store, &h, v)).collect::<Result<_, _>>()?;
        Ok(Rollout { v_path, frames })
    }

    /// Model parameter scalars (generator, transition, extractors).
    pub fn parameter_count(&self, store: &ParamStore) -> usize {
        store.scalar_count(&Owner::MODEL)
    }
}
