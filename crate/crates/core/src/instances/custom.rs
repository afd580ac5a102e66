use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_gmgan, build_ssgan, GmganBundle, GmganSpec, InstanceError, SsganBundle, SsganSpec};
use crate::graph::{extract_factors, Dag, Domain, GraphDescription, GraphError, RecognitionGraph};
use crate::numerics::{Activation, Mlp, MlpSpec, Owner, ParamStore};
use crate::stochastics::{Dependency, DependencyMap, NetworkFn, StandardNormalPrior, UniformCategoricalPrior};
use crate::trainer::GraphModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CustomSpec {
    pub hidden: Vec<usize>,
}

impl Default for CustomSpec {
    fn default() -> Self {
        Self { hidden: vec![64] }
    }
}

#[derive(Debug, Clone)]
pub enum Bundle {
    Gmgan(GmganBundle),
    Ssgan(SsganBundle),
    Custom(GraphModel),
}

impl Bundle {
    pub fn model(&self) -> &GraphModel {
        match self {
            Bundle::Gmgan(b) => &b.model,
            Bundle::Ssgan(b) => &b.model,
            Bundle::Custom(m) => m,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Bundle::Gmgan(_) => "gmgan",
            Bundle::Ssgan(_) => "ssgan",
            Bundle::Custom(_) => "custom",
        }
    }
}

fn root_prior(domain: Domain, key: String) -> Arc<dyn Dependency> {
    match domain {
        Domain::Continuous { dim } => Arc::new(StandardNormalPrior { key, dim }),
        Domain::Categorical { k } => Arc::new(UniformCategoricalPrior { key, k }),
    }
}

/// Generic networks for an arbitrary graph.
///
/// Generative conditionals: Gaussian heads for continuous latents, tanh outputs for
/// continuous observations, Gumbel-Softmax logits for categorical variables.
/// Recognition conditionals are point-mass extractors (continuous) or relaxed
/// categoricals. Variables sharing a tie group with equal input width share a network.
pub fn build_custom(
    dag: &Dag,
    recognition: RecognitionGraph,
    spec: &CustomSpec,
    store: &mut ParamStore,
    seed: u64,
) -> Result<GraphModel, InstanceError> {
    recognition.check(dag)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lrelu = Activation::leaky();
    let mut nets: BTreeMap<(String, &'static str, usize), Mlp> = BTreeMap::new();
    let mut net_for = |store: &mut ParamStore,
                       group: String,
                       side: &'static str,
                       input: usize,
                       make: MlpSpec,
                       owner: Owner|
     -> Result<Mlp, InstanceError> {
        let key = (group, side, input);
        if let Some(net) = nets.get(&key) {
            return Ok(net.clone());
        }
        let name = format!("{}.{}", side, key.0);
        let net = Mlp::new(make, store, owner, &name, &mut rng)?;
        nets.insert(key, net.clone());
        Ok(net)
    };

    let width = |name: &str| -> Result<usize, GraphError> { Ok(dag.variable(name)?.domain.width()) };
    let mut generative: DependencyMap = BTreeMap::new();
    for node in dag.nodes() {
        let parents = dag.parents(&node.name)?;
        let group = node.tie_group.clone().unwrap_or_else(|| node.name.clone());
        if parents.is_empty() {
            generative.insert(node.name.clone(), root_prior(node.domain, node.name.clone()));
            continue;
        }
        let input: usize = parents.iter().map(|p| width(p)).sum::<Result<_, _>>()?;
        let dep: Arc<dyn Dependency> = match (node.domain, node.is_latent()) {
            (Domain::Continuous { dim }, true) => {
                let s = MlpSpec::new(input, &spec.hidden, lrelu, 2 * dim, Activation::Linear)
                    .with_heads(&[("mean", dim), ("log_scale", dim)]);
                Arc::new(NetworkFn::gaussian(
                    net_for(store, group, "p", input, s, Owner::Generative)?,
                    node.name.clone(),
                ))
            }
            (Domain::Continuous { dim }, false) => {
                let s = MlpSpec::new(input, &spec.hidden, lrelu, dim, Activation::Tanh);
                Arc::new(NetworkFn::deterministic(net_for(store, group, "p", input, s, Owner::Generative)?))
            }
            (Domain::Categorical { k }, true) => {
                let s = MlpSpec::new(input, &spec.hidden, lrelu, k, Activation::Linear);
                Arc::new(NetworkFn::categorical(
                    net_for(store, group, "p", input, s, Owner::Generative)?,
                    node.name.clone(),
                ))
            }
            (Domain::Categorical { k }, false) => {
                let s = MlpSpec::new(input, &spec.hidden, lrelu, k, Activation::Softmax);
                Arc::new(NetworkFn::deterministic(net_for(store, group, "p", input, s, Owner::Generative)?))
            }
        };
        generative.insert(node.name.clone(), dep);
    }

    let mut inference: DependencyMap = BTreeMap::new();
    for latent in &recognition.elimination_order {
        let node = dag.variable(latent)?;
        let cond = recognition.conditioning_of(latent)?;
        let group = node.tie_group.clone().unwrap_or_else(|| node.name.clone());
        let key = format!("q.{latent}");
        if cond.is_empty() {
            inference.insert(latent.clone(), root_prior(node.domain, key));
            continue;
        }
        let input: usize = cond.iter().map(|p| width(p)).sum::<Result<_, _>>()?;
        let dep: Arc<dyn Dependency> = match node.domain {
            Domain::Continuous { dim } => {
                let s = MlpSpec::new(input, &spec.hidden, lrelu, dim, Activation::Linear);
                Arc::new(NetworkFn::deterministic(net_for(store, group, "q", input, s, Owner::Recognition)?))
            }
            Domain::Categorical { k } => {
                let s = MlpSpec::new(input, &spec.hidden, lrelu, k, Activation::Linear);
                Arc::new(NetworkFn::categorical(net_for(store, group, "q", input, s, Owner::Recognition)?, key))
            }
        };
        inference.insert(latent.clone(), dep);
    }
    let factors = extract_factors(dag)?;
    Ok(GraphModel { dag: dag.clone(), recognition, factors, generative, inference })
}

fn dim(desc: &GraphDescription, key: &str, default: usize) -> usize {
    desc.dims.get(key).copied().unwrap_or(default)
}

/// Builds the bundle named by `instance`. Built-in instances read `k`, `t` and the
/// `dims` keys `h`, `v`, `x`, `eps` and `hidden`; SSGAN also reads `trans` and `features`.
pub fn build_from_description(
    desc: &GraphDescription,
    store: &mut ParamStore,
    seed: u64,
) -> Result<Bundle, InstanceError> {
    match desc.instance.as_str() {
        "gmgan" => {
            let d = GmganSpec::default();
            let hidden = dim(desc, "hidden", d.gen_hidden[0]);
            let spec = GmganSpec {
                k: desc.k.unwrap_or(d.k),
                dim_h: dim(desc, "h", d.dim_h),
                dim_x: dim(desc, "x", d.dim_x),
                gen_hidden: vec![hidden],
                enc_hidden: vec![hidden],
                ..d
            };
            Ok(Bundle::Gmgan(build_gmgan(&spec, store, seed)?))
        }
        "ssgan" => {
            let d = SsganSpec::default();
            let hidden = dim(desc, "hidden", d.gen_hidden[0]);
            let spec = SsganSpec {
                t: desc.t.unwrap_or(d.t),
                dim_h: dim(desc, "h", d.dim_h),
                dim_v: dim(desc, "v", d.dim_v),
                dim_x: dim(desc, "x", d.dim_x),
                dim_eps: dim(desc, "eps", d.dim_eps),
                gen_hidden: vec![hidden],
                enc_hidden: vec![hidden],
                trans_hidden: vec![dim(desc, "trans", d.trans_hidden[0])],
                frame_features: dim(desc, "features", d.frame_features),
                ..d
            };
            Ok(Bundle::Ssgan(build_ssgan(&spec, store, seed)?))
        }
        "custom" => {
            let dag = desc.dag()?;
            let recognition = desc.compile_recognition(&dag)?;
            let spec = CustomSpec { hidden: vec![dim(desc, "hidden", 64)] };
            Ok(Bundle::Custom(build_custom(&dag, recognition, &spec, store, seed)?))
        }
        other => Err(GraphError::BadDescription(format!("unknown instance {other:?}")).into()),
    }
}
