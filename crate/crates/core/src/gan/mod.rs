//! The generative completion model: mask-pyramid generator, mask-modulated
//! patch discriminator, mask fusion loss, and the two training stages
//! (projection completion, residual sinogram correction).

pub mod bundle;
pub mod config;
pub mod infer;
pub mod loss;
pub mod model;
pub mod train;

pub use bundle::{ModelBundle, Normalization};
pub use config::{DiscriminatorConfig, GeneratorConfig, LossWeights};
pub use infer::{apply_completion, infer_mar, MarOutput};
pub use loss::{compose_pc, compose_sc, loss_content, loss_disc, loss_gen, loss_gen_adv};
pub use model::{forward_discriminator, forward_generator, generator_apply, GeneratorParams};
pub use train::{curves_to_csv, masked_l1, sc_dataset_from_pc, train_pc, train_sc, CurveRow, Hyper, TrainOutput};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::Tensor;

/// Which composition a model uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Composition {
    /// ŷ = s ⊙ G(x) + (1-s) ⊙ x
    Pc,
    /// ŷ = s ⊙ (G(x) + x) + (1-s) ⊙ x
    Sc,
}

/// Plain-array composition, identical arithmetic to the graph ops.
pub fn compose_values(kind: Composition, x: &[f64], s: &[f64], gx: &[f64]) -> Vec<f64> {
    match kind {
        Composition::Pc => x
            .iter()
            .zip(s)
            .zip(gx)
            .map(|((&x, &s), &g)| s * g + (1.0 - s) * x)
            .collect(),
        Composition::Sc => x
            .iter()
            .zip(s)
            .zip(gx)
            .map(|((&x, &s), &g)| s * (g + x) + (1.0 - s) * x)
            .collect(),
    }
}

/// One training pair: masked input x, metal-free target y, binary mask s
/// (1 = metal/missing). Inputs are masked targets, so x == y off-mask.
#[derive(Clone, Debug)]
pub struct TrainingSample {
    pub x: Tensor,
    pub y: Tensor,
    pub s: Mask,
}

impl TrainingSample {
    pub fn validate(&self) -> Result<()> {
        let (n, c, h, w) = self.x.dims4()?;
        if n != 1 || c != 1 {
            return Err(Error::shape("training sample", format!("expected [1,1,H,W], got {:?}", self.x.shape())));
        }
        if self.y.shape() != self.x.shape() {
            return Err(Error::shape(
                "training sample",
                format!("x {:?} vs y {:?}", self.x.shape(), self.y.shape()),
            ));
        }
        if self.s.height != h || self.s.width != w {
            return Err(Error::shape(
                "training sample",
                format!("mask {}x{} vs data {}x{}", self.s.height, self.s.width, h, w),
            ));
        }
        if !self.x.is_finite() || !self.y.is_finite() {
            return Err(Error::numeric("training sample contains non-finite values"));
        }
        for (i, &m) in self.s.values().iter().enumerate() {
            if m == 0 && self.x.data()[i] != self.y.data()[i] {
                return Err(Error::usage(format!(
                    "sample violates the inpainting contract: x != y at unmasked element {i}"
                )));
            }
        }
        Ok(())
    }
}
