use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::InstanceError;
use crate::graph::{extract_factors, inverse_factorization, Dag, Domain, VariableSpec};
use crate::numerics::{softmax_rows, Activation, Mlp, MlpSpec, Owner, ParamId, ParamStore, Tensor};
use crate::stochastics::{argmax, DependencyMap, MixturePosterior, MixtureSelect, NetworkFn, UniformCategoricalPrior};
use crate::trainer::GraphModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmganSpec {
    pub k: usize,
    pub dim_h: usize,
    pub dim_x: usize,
    pub gen_hidden: Vec<usize>,
    pub enc_hidden: Vec<usize>,
    /// Gaussian-head extractor instead of a point mass.
    pub gaussian_encoder: bool,
    /// Standard deviation of the initial component means.
    pub mean_init_std: f64,
}

impl Default for GmganSpec {
    fn default() -> Self {
        Self {
            k: 10,
            dim_h: 128,
            dim_x: 784,
            gen_hidden: vec![256],
            enc_hidden: vec![256],
            gaussian_encoder: false,
            mean_init_std: 2.0,
        }
    }
}

/// `k ~ Cat(1/K)`, `h | k ~ N(μ_k, I)`, `x = G(h)`; recognition `h = E(x)` then the
/// analytic `q(k | h)`.
#[derive(Debug, Clone)]
pub struct GmganBundle {
    pub spec: GmganSpec,
    pub model: GraphModel,
    pub means: ParamId,
    pub generator: Mlp,
    pub extractor: Mlp,
}

pub fn build_gmgan(spec: &GmganSpec, store: &mut ParamStore, seed: u64) -> Result<GmganBundle, InstanceError> {
    if spec.k < 2 {
        return Err(InstanceError::BadDimension(format!("K must be at least 2, got {}", spec.k)));
    }
    if spec.dim_h == 0 || spec.dim_x == 0 {
        return Err(InstanceError::BadDimension("dimensions must be positive".into()));
    }
    let dag = Dag::new(
        vec![
            VariableSpec::latent("k", Domain::Categorical { k: spec.k }),
            VariableSpec::latent("h", Domain::Continuous { dim: spec.dim_h }),
            VariableSpec::observed("x", Domain::Continuous { dim: spec.dim_x }),
        ],
        vec![("k".into(), "h".into()), ("h".into(), "x".into())],
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu: Vec<f64> =
        (0..spec.k * spec.dim_h).map(|_| spec.mean_init_std * rng.sample::<f64, _>(StandardNormal)).collect();
    let means = store.add("mu", Owner::Prior, Tensor::matrix(spec.k, spec.dim_h, mu)?);
    let generator = Mlp::new(
        MlpSpec::new(spec.dim_h, &spec.gen_hidden, Activation::leaky(), spec.dim_x, Activation::Tanh),
        store,
        Owner::Generative,
        "G",
        &mut rng,
    )?;
    let enc_spec = if spec.gaussian_encoder {
        MlpSpec::new(spec.dim_x, &spec.enc_hidden, Activation::leaky(), 2 * spec.dim_h, Activation::Linear)
            .with_heads(&[("mean", spec.dim_h), ("log_scale", spec.dim_h)])
    } else {
        MlpSpec::new(spec.dim_x, &spec.enc_hidden, Activation::leaky(), spec.dim_h, Activation::Linear)
    };
    let extractor = Mlp::new(enc_spec, store, Owner::Recognition, "E", &mut rng)?;

    let mut generative: DependencyMap = BTreeMap::new();
    generative.insert("k".into(), Arc::new(UniformCategoricalPrior { key: "k".into(), k: spec.k }));
    generative.insert("h".into(), Arc::new(MixtureSelect { means, key: "h".into(), dim: spec.dim_h }));
    generative.insert("x".into(), Arc::new(NetworkFn::deterministic(generator.clone())));
    let mut inference: DependencyMap = BTreeMap::new();
    let encoder = if spec.gaussian_encoder {
        NetworkFn::gaussian(extractor.clone(), "qh")
    } else {
        NetworkFn::deterministic(extractor.clone())
    };
    inference.insert("h".into(), Arc::new(encoder));
    inference.insert("k".into(), Arc::new(MixturePosterior { means, key: "qk".into(), k: spec.k }));

    let recognition = inverse_factorization(&dag)?;
    let factors = extract_factors(&dag)?;
    Ok(GmganBundle {
        spec: spec.clone(),
        model: GraphModel { dag, recognition, factors, generative, inference },
        means,
        generator,
        extractor,
    })
}

/// `q(k | h) ∝ exp(-½‖h − μ_k‖²)` row-wise: uniform weights, identity covariances.
pub fn gmgan_posterior_k(h: &Tensor, means: &Tensor) -> Result<Tensor, InstanceError> {
    if h.cols() != means.cols() {
        return Err(crate::numerics::NumericsError::ShapeMismatch(format!(
            "h has width {}, means have width {}",
            h.cols(),
            means.cols()
        ))
        .into());
    }
    let (n, k) = (h.rows(), means.rows());
    let mut logits = Vec::with_capacity(n * k);
    for r in 0..n {
        for c in 0..k {
            let d2: f64 = h.row(r).iter().zip(means.row(c)).map(|(a, b)| (a - b) * (a - b)).sum();
            logits.push(-0.5 * d2);
        }
    }
    Ok(softmax_rows(&Tensor::matrix(n, k, logits)?))
}

impl GmganBundle {
    /// `E(x)`, taking the mean head for the Gaussian variant.
    pub fn extract(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor, InstanceError> {
        let out = self.extractor.eval(store, x)?;
        Ok(if self.spec.gaussian_encoder { out.slice_cols(0, self.spec.dim_h) } else { out })
    }

    /// Latents and `q(k | E(x))` for each row of `x`.
    pub fn infer(&self, store: &ParamStore, x: &Tensor) -> Result<(Tensor, Tensor), InstanceError> {
        let h = self.extract(store, x)?;
        let probs = gmgan_posterior_k(&h, store.value(self.means))?;
        Ok((h, probs))
    }

    /// Hard cluster assignments `argmax_k q(k | E(x))`.
    pub fn assignments(&self, store: &ParamStore, x: &Tensor) -> Result<Vec<usize>, InstanceError> {
        let (_, probs) = self.infer(store, x)?;
        Ok((0..probs.rows()).map(|r| argmax(probs.row(r))).collect())
    }

    /// `G(E(x))`.
    pub fn reconstruct(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor, InstanceError> {
        let h = self.extract(store, x)?;
        Ok(self.generator.eval(store, &h)?)
    }

    /// `rows × K` samples, row-major, with the component fixed per column.
    pub fn sample_by_component(&self, store: &ParamStore, rows: usize, seed: u64) -> Result<Tensor, InstanceError> {
        let (k, d) = (self.spec.k, self.spec.dim_h);
        let mu = store.value(self.means);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = Vec::with_capacity(rows * k * d);
        for _ in 0..rows {
            for c in 0..k {
                h.extend(mu.row(c).iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)));
            }
        }
        Ok(self.generator.eval(store, &Tensor::matrix(rows * k, d, h)?)?)
    }
}
