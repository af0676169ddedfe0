//! Trained-model checkpoints: a directory of MARF tensors plus a text
//! manifest carrying layer specs, normalization constants, seed, and
//! iteration count.

use std::path::Path;

use crate::error::{Error, Result};
use crate::gan::config::{DiscriminatorConfig, GeneratorConfig};
use crate::gan::model::{DiscriminatorParams, GeneratorParams, LayerParams};
use crate::gan::Composition;
use crate::io::config::Config;
use crate::io::marf::{self, Dtype};
use crate::tensor::{Activation, AdamConfig, AdamState, Tensor};

/// Linear map between raw data and the generator's [-1, 1] working range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
}

impl Normalization {
    pub fn from_values<'a>(values: impl Iterator<Item = &'a f64>) -> Result<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !(hi > lo) {
            return Err(Error::numeric(format!("degenerate normalization range [{lo}, {hi}]")));
        }
        Ok(Normalization { min: lo, max: hi })
    }

    pub fn encode(&self, v: f64) -> f64 {
        2.0 * (v - self.min) / (self.max - self.min) - 1.0
    }

    pub fn decode(&self, u: f64) -> f64 {
        self.min + (u + 1.0) / 2.0 * (self.max - self.min)
    }
}

/// Everything needed to resume or apply a trained model.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub composition: Composition,
    pub g_cfg: GeneratorConfig,
    pub d_cfg: DiscriminatorConfig,
    pub generator: GeneratorParams,
    pub discriminator: DiscriminatorParams,
    pub adam_g: AdamState,
    pub adam_d: AdamState,
    pub norm: Normalization,
    pub seed: u64,
    pub iterations: u64,
    pub lambda: f64,
    pub batch: usize,
}

fn fmt_activation(a: Activation) -> String {
    match a {
        Activation::LeakyRelu(slope) => format!("leaky_relu:{slope}"),
        Activation::Relu => "relu".to_string(),
        Activation::Tanh => "tanh".to_string(),
        Activation::Sigmoid => "sigmoid".to_string(),
    }
}

fn parse_activation(s: &str) -> Result<Activation> {
    if let Some(slope) = s.strip_prefix("leaky_relu:") {
        let slope = slope
            .parse::<f64>()
            .map_err(|_| Error::config(format!("bad leaky_relu slope {slope:?}")))?;
        return Ok(Activation::LeakyRelu(slope));
    }
    match s {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        "sigmoid" => Ok(Activation::Sigmoid),
        other => Err(Error::config(format!("unknown activation {other:?}"))),
    }
}

fn join(list: &[usize]) -> String {
    list.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl ModelBundle {
    fn manifest(&self) -> String {
        let g = &self.g_cfg;
        let d = &self.d_cfg;
        format!(
            "[model]\nkind = {}\nseed = {}\niterations = {}\nlambda = {}\nbatch = {}\n\n\
             [generator]\ninput_channels = {}\nchannels = {}\nkernel = {}\nstride = {}\npadding = {}\nmpn = {}\n\
             encoder_activation = {}\ndecoder_activation = {}\noutput_activation = {}\n\n\
             [discriminator]\ninput_channels = {}\nchannels = {}\nkernel = {}\nstride = {}\npadding = {}\nhead_kernel = {}\n\n\
             [normalization]\nmin = {}\nmax = {}\n\n\
             [adam-g]\nlr = {}\nbeta1 = {}\nbeta2 = {}\neps = {}\nt = {}\n\n\
             [adam-d]\nlr = {}\nbeta1 = {}\nbeta2 = {}\neps = {}\nt = {}\n",
            match self.composition {
                Composition::Pc => "pc",
                Composition::Sc => "sc",
            },
            self.seed,
            self.iterations,
            self.lambda,
            self.batch,
            g.input_channels,
            join(&g.channels),
            g.kernel,
            g.stride,
            g.padding,
            g.mpn,
            fmt_activation(g.encoder_activation),
            fmt_activation(g.decoder_activation),
            fmt_activation(g.output_activation),
            d.input_channels,
            join(&d.channels),
            d.kernel,
            d.stride,
            d.padding,
            d.head_kernel,
            self.norm.min,
            self.norm.max,
            self.adam_g.config.lr,
            self.adam_g.config.beta1,
            self.adam_g.config.beta2,
            self.adam_g.config.eps,
            self.adam_g.step_count(),
            self.adam_d.config.lr,
            self.adam_d.config.beta1,
            self.adam_d.config.beta2,
            self.adam_d.config.eps,
            self.adam_d.step_count(),
        )
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        crate::io::write_atomic(&dir.join("manifest.txt"), self.manifest().as_bytes())?;
        for (name, tensor) in self.generator.named().into_iter().chain(self.discriminator.named()) {
            marf::write_file(&dir.join(format!("{name}.marf")), tensor, Dtype::F64)?;
        }
        for (prefix, state) in [("opt_g", &self.adam_g), ("opt_d", &self.adam_d)] {
            let (m, v) = state.moments();
            for (i, buf) in m.iter().enumerate() {
                let t = Tensor::from_vec(vec![buf.len()], buf.clone())?;
                marf::write_file(&dir.join(format!("{prefix}_m{i:02}.marf")), &t, Dtype::F64)?;
            }
            for (i, buf) in v.iter().enumerate() {
                let t = Tensor::from_vec(vec![buf.len()], buf.clone())?;
                marf::write_file(&dir.join(format!("{prefix}_v{i:02}.marf")), &t, Dtype::F64)?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<ModelBundle> {
        let cfg = Config::load(&dir.join("manifest.txt"))?;
        let model = cfg.section("model")?.ok_or_else(|| Error::config("manifest missing [model]"))?;
        let composition = match model.get_str("kind")? {
            "pc" => Composition::Pc,
            "sc" => Composition::Sc,
            other => return Err(Error::config(format!("unknown model kind {other:?}"))),
        };
        let gen = cfg.section("generator")?.ok_or_else(|| Error::config("manifest missing [generator]"))?;
        let g_cfg = GeneratorConfig {
            input_channels: gen.get_usize("input_channels")?,
            channels: gen.get_usize_list("channels")?,
            kernel: gen.get_usize("kernel")?,
            stride: gen.get_usize("stride")?,
            padding: gen.get_usize("padding")?,
            mpn: gen.get_bool("mpn")?,
            encoder_activation: parse_activation(gen.get_str("encoder_activation")?)?,
            decoder_activation: parse_activation(gen.get_str("decoder_activation")?)?,
            output_activation: parse_activation(gen.get_str("output_activation")?)?,
        };
        let disc = cfg.section("discriminator")?.ok_or_else(|| Error::config("manifest missing [discriminator]"))?;
        let d_cfg = DiscriminatorConfig {
            input_channels: disc.get_usize("input_channels")?,
            channels: disc.get_usize_list("channels")?,
            kernel: disc.get_usize("kernel")?,
            stride: disc.get_usize("stride")?,
            padding: disc.get_usize("padding")?,
            head_kernel: disc.get_usize("head_kernel")?,
        };
        let norm_sec = cfg.section("normalization")?.ok_or_else(|| Error::config("manifest missing [normalization]"))?;
        let norm = Normalization { min: norm_sec.get_f64("min")?, max: norm_sec.get_f64("max")? };

        let load_layer = |name: &str| -> Result<Tensor> { marf::read_file(&dir.join(format!("{name}.marf"))) };
        let enc_count = g_cfg.channels.len();
        let mut generator = GeneratorParams { encoder: Vec::new(), decoder: Vec::new() };
        for i in 0..enc_count {
            generator.encoder.push(LayerParams {
                weight: load_layer(&format!("gen_enc{i}_w"))?,
                bias: load_layer(&format!("gen_enc{i}_b"))?,
            });
        }
        for j in 0..enc_count {
            generator.decoder.push(LayerParams {
                weight: load_layer(&format!("gen_dec{j}_w"))?,
                bias: load_layer(&format!("gen_dec{j}_b"))?,
            });
        }
        let mut discriminator = DiscriminatorParams { blocks: Vec::new() };
        for i in 0..d_cfg.specs().len() {
            discriminator.blocks.push(LayerParams {
                weight: load_layer(&format!("disc_b{i}_w"))?,
                bias: load_layer(&format!("disc_b{i}_b"))?,
            });
        }

        let load_adam = |section: &str, prefix: &str, params: &[&Tensor]| -> Result<AdamState> {
            let sec = cfg
                .section(section)?
                .ok_or_else(|| Error::config(format!("manifest missing [{section}]")))?;
            let config = AdamConfig {
                lr: sec.get_f64("lr")?,
                beta1: sec.get_f64("beta1")?,
                beta2: sec.get_f64("beta2")?,
                eps: sec.get_f64("eps")?,
            };
            let sizes: Vec<usize> = params.iter().map(|t| t.numel()).collect();
            let mut state = AdamState::new(config, &sizes);
            let mut m = Vec::new();
            let mut v = Vec::new();
            for i in 0..sizes.len() {
                m.push(marf::read_file(&dir.join(format!("{prefix}_m{i:02}.marf")))?.into_data());
                v.push(marf::read_file(&dir.join(format!("{prefix}_v{i:02}.marf")))?.into_data());
            }
            state.restore_moments(m, v, sec.get_u64("t")?)?;
            Ok(state)
        };
        let adam_g = load_adam("adam-g", "opt_g", &generator.flat())?;
        let adam_d = load_adam("adam-d", "opt_d", &discriminator.flat())?;

        Ok(ModelBundle {
            composition,
            g_cfg,
            d_cfg,
            generator,
            discriminator,
            adam_g,
            adam_d,
            norm,
            seed: model.get_u64("seed")?,
            iterations: model.get_u64("iterations")?,
            lambda: model.get_f64("lambda")?,
            batch: model.get_usize("batch")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::model::{init_discriminator, init_generator};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn normalization_roundtrip() {
        let n = Normalization { min: -3.0, max: 9.0 };
        assert_eq!(n.encode(-3.0), -1.0);
        assert_eq!(n.encode(9.0), 1.0);
        for v in [-3.0, 0.0, 1.5, 9.0] {
            assert!((n.decode(n.encode(v)) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn save_load_roundtrip() {
        let g_cfg = GeneratorConfig::with_channels(vec![4, 8]);
        let d_cfg = DiscriminatorConfig::with_channels(vec![4, 8]);
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let generator = init_generator(&g_cfg, &mut rng);
        let discriminator = init_discriminator(&d_cfg, &mut rng);
        let adam_g = AdamState::new(AdamConfig::default(), &generator.flat().iter().map(|t| t.numel()).collect::<Vec<_>>());
        let adam_d = AdamState::new(AdamConfig::default(), &discriminator.flat().iter().map(|t| t.numel()).collect::<Vec<_>>());
        let bundle = ModelBundle {
            composition: Composition::Pc,
            g_cfg,
            d_cfg,
            generator,
            discriminator,
            adam_g,
            adam_d,
            norm: Normalization { min: 0.0, max: 7.5 },
            seed: 99,
            iterations: 123,
            lambda: 100.0,
            batch: 16,
        };
        let dir = tempfile::tempdir().unwrap();
        bundle.save(dir.path()).unwrap();
        let back = ModelBundle::load(dir.path()).unwrap();
        assert_eq!(back.generator, bundle.generator);
        assert_eq!(back.discriminator, bundle.discriminator);
        assert_eq!(back.norm, bundle.norm);
        assert_eq!(back.seed, 99);
        assert_eq!(back.iterations, 123);
        assert_eq!(back.g_cfg, bundle.g_cfg);
        assert_eq!(back.adam_g.moments().0.len(), bundle.adam_g.moments().0.len());
    }
}
