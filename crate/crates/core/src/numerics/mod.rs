//! Dense f64 tensors, a reverse-mode tape, fully connected networks, Adam and
//! finite-difference gradient checks.

mod gradcheck;
mod mlp;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{check_against, grad_check, GradCheckOptions, GradCheckReport};
pub use mlp::{Activation, Layer, Mlp, MlpSpec};
pub use params::{AdamConfig, Owner, ParamEntry, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::{sigmoid, softmax_rows, softplus};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumericsError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("invalid network spec: {0}")]
    BadSpec(String),
}

/// Mean binary cross-entropy of `logits` against a constant 0/1 target, in logit form.
///
/// Equals `softplus(-z)` per entry for target 1 and `softplus(z)` for target 0.
pub fn bce_logits(logits: &Tensor, target: bool) -> f64 {
    let per = |z: f64| if target { softplus(-z) } else { softplus(z) };
    logits.data().iter().map(|&z| per(z)).sum::<f64>() / logits.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_reference_values() {
        let zero = Tensor::scalar(0.0);
        assert!((bce_logits(&zero, true) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_logits(&zero, false) - std::f64::consts::LN_2).abs() < 1e-15);
        // softplus(-20) = ln(1 + e^-20)
        let small = bce_logits(&Tensor::scalar(20.0), true);
        assert!((small - 2.0611536203143807e-9).abs() < 1e-22, "{small:e}");
        let big = bce_logits(&Tensor::scalar(-20.0), true);
        assert!((big - 20.000000002061153620).abs() < 1e-12);
        for z in [-50.0, 50.0] {
            assert!(bce_logits(&Tensor::scalar(z), true).is_finite());
            assert!(bce_logits(&Tensor::scalar(z), false).is_finite());
        }
    }
}
