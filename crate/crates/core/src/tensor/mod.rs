//! Minimal dense tensor engine with reverse-mode differentiation.
//!
//! No broadcasting, no views: every shape is explicit and every op copies.
//! Double precision throughout; small enough to audit, fast enough for
//! desk-scale training.

pub mod adam;
pub mod conv;
pub mod graph;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use conv::ConvSpec;
pub use graph::{Activation, Graph, NodeId};
pub use tensor::Tensor;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Gaussian(0, std) initialization for weights, via Box-Muller on the
/// given stream. Deterministic given the RNG state.
pub fn randn_tensor(shape: Vec<usize>, std: f64, rng: &mut ChaCha12Rng) -> Tensor {
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    while data.len() < numel {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        data.push(r * c * std);
        if data.len() < numel {
            data.push(r * s * std);
        }
    }
    Tensor::from_vec(shape, data).expect("matching length")
}
