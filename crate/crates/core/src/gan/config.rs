//! Generator and discriminator architecture descriptions.

use crate::error::{Error, Result};
use crate::mask::PyramidSpec;
use crate::tensor::{Activation, ConvSpec};

/// Encoder-decoder generator. Encoder blocks are strided convolutions;
/// decoder blocks mirror them with transposed convolutions so spatial size
/// is restored exactly. With the mask pyramid enabled, every encoder
/// block's output is concatenated with the matching pooled-mask level
/// before the next block.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub input_channels: usize,
    /// Output channels of each encoder block, shallow to deep.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub mpn: bool,
    pub encoder_activation: Activation,
    pub decoder_activation: Activation,
    pub output_activation: Activation,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            input_channels: 1,
            channels: vec![32, 64, 128, 256],
            kernel: 4,
            stride: 2,
            padding: 1,
            mpn: true,
            encoder_activation: Activation::LeakyRelu(0.2),
            decoder_activation: Activation::Relu,
            output_activation: Activation::Tanh,
        }
    }
}

impl GeneratorConfig {
    /// Smaller footprint for quick training runs.
    pub fn with_channels(channels: Vec<usize>) -> Self {
        GeneratorConfig { channels, ..Default::default() }
    }

    pub fn depth(&self) -> usize {
        self.channels.len()
    }

    /// Conv specs per encoder block; MPN concat adds one input channel to
    /// every block after the first.
    pub fn encoder_specs(&self) -> Vec<ConvSpec> {
        let extra = usize::from(self.mpn);
        (0..self.depth())
            .map(|i| {
                let in_ch = if i == 0 { self.input_channels } else { self.channels[i - 1] + extra };
                ConvSpec::new(in_ch, self.channels[i], self.kernel, self.stride, self.padding)
            })
            .collect()
    }

    /// Transposed-conv specs per decoder block, deep to shallow. The
    /// bottleneck input carries the deepest pyramid level when MPN is on.
    pub fn decoder_specs(&self) -> Vec<ConvSpec> {
        let depth = self.depth();
        let extra = usize::from(self.mpn);
        (0..depth)
            .map(|j| {
                let in_ch = if j == 0 { self.channels[depth - 1] + extra } else { self.channels[depth - 1 - j] };
                let out_ch = if j == depth - 1 { self.input_channels } else { self.channels[depth - 2 - j] };
                ConvSpec::new(in_ch, out_ch, self.kernel, self.stride, self.padding)
            })
            .collect()
    }

    /// The coupled pooling pyramid: same kernel/stride/padding as each
    /// encoder block, layer by layer.
    pub fn pyramid_spec(&self) -> PyramidSpec {
        PyramidSpec::new(vec![(self.kernel, self.stride, self.padding); self.depth()])
    }

    /// Check the architecture against a concrete input size: every encoder
    /// extent stays >= 1 and the decoder restores the input size exactly.
    pub fn validate(&self, (h, w): (usize, usize)) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::config("generator needs at least one encoder block"));
        }
        let (mut ch, mut cw) = (h, w);
        for (i, spec) in self.encoder_specs().iter().enumerate() {
            ch = spec.out_extent(ch).map_err(|e| Error::config(format!("encoder block {i}: {e}")))?;
            cw = spec.out_extent(cw).map_err(|e| Error::config(format!("encoder block {i}: {e}")))?;
        }
        for (j, spec) in self.decoder_specs().iter().enumerate() {
            ch = spec.transpose_out_extent(ch).map_err(|e| Error::config(format!("decoder block {j}: {e}")))?;
            cw = spec.transpose_out_extent(cw).map_err(|e| Error::config(format!("decoder block {j}: {e}")))?;
        }
        if (ch, cw) != (h, w) {
            return Err(Error::config(format!(
                "decoder produces {}x{} for a {}x{} input; blocks must mirror exactly",
                ch, cw, h, w
            )));
        }
        Ok(())
    }
}

/// Patch discriminator: strided conv blocks ending in a 1-channel score
/// map (no dense layers). N(s) pools the mask through the same geometry
/// down to the score map's size; only that final level is used.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorConfig {
    pub input_channels: usize,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub head_kernel: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            input_channels: 1,
            channels: vec![32, 64, 128],
            kernel: 4,
            stride: 2,
            padding: 1,
            head_kernel: 3,
        }
    }
}

impl DiscriminatorConfig {
    pub fn with_channels(channels: Vec<usize>) -> Self {
        DiscriminatorConfig { channels, ..Default::default() }
    }

    /// Block specs including the final score head (stride 1, 1 channel).
    pub fn specs(&self) -> Vec<ConvSpec> {
        let mut specs: Vec<ConvSpec> = (0..self.channels.len())
            .map(|i| {
                let in_ch = if i == 0 { self.input_channels } else { self.channels[i - 1] };
                ConvSpec::new(in_ch, self.channels[i], self.kernel, self.stride, self.padding)
            })
            .collect();
        let last = *self.channels.last().expect("non-empty discriminator");
        specs.push(ConvSpec::new(last, 1, self.head_kernel, 1, self.head_kernel / 2));
        specs
    }

    /// Pooling pyramid matching every block through the score head.
    pub fn modulation_pyramid(&self) -> PyramidSpec {
        PyramidSpec::from_conv_specs(&self.specs())
    }

    /// Spatial size of the score map for an input size.
    pub fn score_map_size(&self, (h, w): (usize, usize)) -> Result<(usize, usize)> {
        let (mut ch, mut cw) = (h, w);
        for (i, spec) in self.specs().iter().enumerate() {
            ch = spec.out_extent(ch).map_err(|e| Error::config(format!("discriminator block {i}: {e}")))?;
            cw = spec.out_extent(cw).map_err(|e| Error::config(format!("discriminator block {i}: {e}")))?;
        }
        Ok((ch, cw))
    }

    pub fn validate(&self, size: (usize, usize)) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::config("discriminator needs at least one block"));
        }
        self.score_map_size(size)?;
        Ok(())
    }
}

/// Weight of the content term against the adversarial term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda: 100.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_generator_validates_at_standard_sizes() {
        let cfg = GeneratorConfig::default();
        for size in [64usize, 128, 448] {
            cfg.validate((size, size)).unwrap();
        }
    }

    #[test]
    fn pyramid_levels_match_encoder_feature_sizes() {
        let cfg = GeneratorConfig::default();
        for size in [64usize, 128, 448] {
            let sizes = cfg.pyramid_spec().level_sizes((size, size)).unwrap();
            let (mut h, mut w) = (size, size);
            for (i, spec) in cfg.encoder_specs().iter().enumerate() {
                h = spec.out_extent(h).unwrap();
                w = spec.out_extent(w).unwrap();
                assert_eq!(sizes[i], (h, w), "level {i} at input {size}");
            }
        }
    }

    #[test]
    fn mpn_adds_one_input_channel_per_block() {
        let cfg = GeneratorConfig::default();
        let specs = cfg.encoder_specs();
        assert_eq!(specs[0].in_channels, 1);
        assert_eq!(specs[1].in_channels, 33);
        assert_eq!(cfg.decoder_specs()[0].in_channels, 257);

        let plain = GeneratorConfig { mpn: false, ..GeneratorConfig::default() };
        assert_eq!(plain.encoder_specs()[1].in_channels, 32);
        assert_eq!(plain.decoder_specs()[0].in_channels, 256);
    }

    #[test]
    fn odd_input_size_rejected() {
        let cfg = GeneratorConfig::default();
        assert!(cfg.validate((63, 63)).is_err());
    }

    #[test]
    fn discriminator_score_map_size() {
        let cfg = DiscriminatorConfig::default();
        assert_eq!(cfg.score_map_size((64, 64)).unwrap(), (8, 8));
        let pyramid_sizes = cfg.modulation_pyramid().level_sizes((64, 64)).unwrap();
        assert_eq!(*pyramid_sizes.last().unwrap(), (8, 8));
    }
}
