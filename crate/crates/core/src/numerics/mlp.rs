use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{NumericsError, Owner, ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    Tanh,
    Sigmoid,
    Linear,
    Softmax,
}

impl Activation {
    pub fn leaky() -> Self {
        Activation::LeakyRelu { slope: 0.2 }
    }

    fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::LeakyRelu { slope } => tape.leaky_relu(x, slope),
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Linear => x,
            Activation::Softmax => tape.softmax(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub width: usize,
    pub activation: Activation,
}

/// Shape of a fully connected network: input width, then one entry per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub layers: Vec<Layer>,
    /// Named column ranges of the output, in order; widths must sum to the output width.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub heads: Vec<(String, usize)>,
}

impl MlpSpec {
    /// `hidden` layers with `hidden_act`, then an output layer.
    pub fn new(input: usize, hidden: &[usize], hidden_act: Activation, output: usize, output_act: Activation) -> Self {
        let mut layers: Vec<Layer> = hidden.iter().map(|&w| Layer { width: w, activation: hidden_act }).collect();
        layers.push(Layer { width: output, activation: output_act });
        Self { input, layers, heads: Vec::new() }
    }

    pub fn with_heads(mut self, heads: &[(&str, usize)]) -> Self {
        self.heads = heads.iter().map(|(n, w)| (n.to_string(), *w)).collect();
        self
    }

    pub fn output(&self) -> usize {
        self.layers.last().map_or(self.input, |l| l.width)
    }

    pub fn validate(&self) -> Result<(), NumericsError> {
        if self.input == 0 || self.layers.iter().any(|l| l.width == 0) {
            return Err(NumericsError::BadSpec("layer widths must be >= 1".into()));
        }
        for l in &self.layers {
            if let Activation::LeakyRelu { slope } = l.activation {
                if !(slope > 0.0 && slope < 1.0) {
                    return Err(NumericsError::BadSpec(format!("leaky slope {slope} outside (0, 1)")));
                }
            }
        }
        if !self.heads.is_empty() && self.heads.iter().map(|(_, w)| w).sum::<usize>() != self.output() {
            return Err(NumericsError::BadSpec("head widths must sum to the output width".into()));
        }
        Ok(())
    }
}

/// A network whose weights live in a [`ParamStore`].
///
/// Cloning an `Mlp` aliases the same parameters, which is how weights are tied.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// Registers weights `[in, out]` drawn from N(0, 1/in) and zero biases.
    pub fn new<R: Rng>(
        spec: MlpSpec,
        store: &mut ParamStore,
        owner: Owner,
        name: &str,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut fan_in = spec.input;
        for (i, layer) in spec.layers.iter().enumerate() {
            let std = (1.0 / fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * layer.width).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
            let w = store.add(format!("{name}.w{i}"), owner, Tensor::matrix(fan_in, layer.width, w)?);
            let b = store.add(format!("{name}.b{i}"), owner, Tensor::zeros(&[1, layer.width]));
            layers.push((w, b));
            fan_in = layer.width;
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, input: Var) -> Result<Var, NumericsError> {
        let width = tape.value(input).cols();
        if width != self.spec.input {
            return Err(NumericsError::ShapeMismatch(format!(
                "network expects width {}, got {width}",
                self.spec.input
            )));
        }
        let mut x = input;
        for (layer, &(w, b)) in self.spec.layers.iter().zip(&self.layers) {
            let wv = tape.param(store, w);
            let bv = tape.param(store, b);
            let z = tape.matmul(x, wv)?;
            let z = tape.add_row(z, bv)?;
            x = layer.activation.apply(tape, z);
        }
        Ok(x)
    }

    /// Forward pass without recording gradients.
    pub fn eval(&self, store: &ParamStore, input: &Tensor) -> Result<Tensor, NumericsError> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let y = self.forward(&mut tape, store, x)?;
        Ok(tape.value(y).clone())
    }

    /// Columns of the named output head.
    pub fn head(&self, tape: &mut Tape, output: Var, name: &str) -> Result<Var, NumericsError> {
        let mut start = 0;
        for (head, width) in &self.spec.heads {
            if head == name {
                return tape.slice_cols(output, start, start + width);
            }
            start += width;
        }
        Err(NumericsError::BadSpec(format!("no output head named {name}")))
    }
}
