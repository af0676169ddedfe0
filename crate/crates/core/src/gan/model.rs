//! Network parameters, initialization, and graph-building forward passes.

use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::gan::config::{DiscriminatorConfig, GeneratorConfig};
use crate::mask::{mask_pyramid, Mask};
use crate::tensor::{randn_tensor, ConvSpec, Graph, NodeId, Tensor};

pub const WEIGHT_INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    pub encoder: Vec<LayerParams>,
    pub decoder: Vec<LayerParams>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorParams {
    pub blocks: Vec<LayerParams>,
}

fn init_layer(spec: &ConvSpec, transpose: bool, rng: &mut ChaCha12Rng) -> LayerParams {
    let shape = if transpose {
        vec![spec.in_channels, spec.out_channels, spec.kernel, spec.kernel]
    } else {
        vec![spec.out_channels, spec.in_channels, spec.kernel, spec.kernel]
    };
    LayerParams {
        weight: randn_tensor(shape, WEIGHT_INIT_STD, rng),
        bias: Tensor::zeros(vec![spec.out_channels]),
    }
}

/// Zero-mean normal weights (std 0.02), zero biases.
pub fn init_generator(cfg: &GeneratorConfig, rng: &mut ChaCha12Rng) -> GeneratorParams {
    GeneratorParams {
        encoder: cfg.encoder_specs().iter().map(|s| init_layer(s, false, rng)).collect(),
        decoder: cfg.decoder_specs().iter().map(|s| init_layer(s, true, rng)).collect(),
    }
}

pub fn init_discriminator(cfg: &DiscriminatorConfig, rng: &mut ChaCha12Rng) -> DiscriminatorParams {
    DiscriminatorParams { blocks: cfg.specs().iter().map(|s| init_layer(s, false, rng)).collect() }
}

impl GeneratorParams {
    /// Zero the final decoder layer so the generator starts as the zero
    /// map; with the residual composition this is the identity.
    pub fn zero_final_layer(&mut self) {
        let last = self.decoder.last_mut().expect("generator has decoder blocks");
        last.weight.data_mut().fill(0.0);
        last.bias.data_mut().fill(0.0);
    }

    pub fn layers(&self) -> impl Iterator<Item = &LayerParams> {
        self.encoder.iter().chain(self.decoder.iter())
    }

    /// Stable (name, tensor) listing for checkpoints and optimizers.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.iter().enumerate() {
            out.push((format!("gen_enc{i}_w"), &l.weight));
            out.push((format!("gen_enc{i}_b"), &l.bias));
        }
        for (j, l) in self.decoder.iter().enumerate() {
            out.push((format!("gen_dec{j}_w"), &l.weight));
            out.push((format!("gen_dec{j}_b"), &l.bias));
        }
        out
    }

    pub fn flat(&self) -> Vec<&Tensor> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn flat_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }
}

impl DiscriminatorParams {
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.blocks.iter().enumerate() {
            out.push((format!("disc_b{i}_w"), &l.weight));
            out.push((format!("disc_b{i}_b"), &l.bias));
        }
        out
    }

    pub fn flat(&self) -> Vec<&Tensor> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn flat_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in self.blocks.iter_mut() {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }
}

/// Graph node handles for one network's parameters.
pub struct LayerNodes {
    pub weight: NodeId,
    pub bias: NodeId,
}

fn insert_layers<'a>(
    graph: &mut Graph,
    layers: impl Iterator<Item = &'a LayerParams>,
    trainable: bool,
) -> Vec<LayerNodes> {
    layers
        .map(|l| {
            let (w, b) = if trainable {
                (graph.param(l.weight.clone()), graph.param(l.bias.clone()))
            } else {
                (graph.input(l.weight.clone()), graph.input(l.bias.clone()))
            };
            LayerNodes { weight: w, bias: b }
        })
        .collect()
}

pub struct GeneratorNodes {
    pub encoder: Vec<LayerNodes>,
    pub decoder: Vec<LayerNodes>,
}

pub fn insert_generator(graph: &mut Graph, params: &GeneratorParams, trainable: bool) -> GeneratorNodes {
    GeneratorNodes {
        encoder: insert_layers(graph, params.encoder.iter(), trainable),
        decoder: insert_layers(graph, params.decoder.iter(), trainable),
    }
}

pub struct DiscriminatorNodes {
    pub blocks: Vec<LayerNodes>,
}

pub fn insert_discriminator(graph: &mut Graph, params: &DiscriminatorParams, trainable: bool) -> DiscriminatorNodes {
    DiscriminatorNodes { blocks: insert_layers(graph, params.blocks.iter(), trainable) }
}

/// Forward pass of the generator inside `graph`. `pyramid` holds one
/// [N,1,h,w] node per encoder depth (required when the MPN is enabled).
pub fn forward_generator(
    graph: &mut Graph,
    x: NodeId,
    pyramid: &[NodeId],
    cfg: &GeneratorConfig,
    nodes: &GeneratorNodes,
) -> Result<NodeId> {
    let (_, _, h, w) = graph.value(x).dims4()?;
    cfg.validate((h, w))?;
    if cfg.mpn && pyramid.len() != cfg.depth() {
        return Err(Error::config(format!(
            "mask pyramid has {} levels, generator expects {}",
            pyramid.len(),
            cfg.depth()
        )));
    }
    let mut head = x;
    for (i, spec) in cfg.encoder_specs().iter().enumerate() {
        head = graph.conv2d(head, nodes.encoder[i].weight, nodes.encoder[i].bias, spec)?;
        head = graph.activation(head, cfg.encoder_activation);
        if cfg.mpn {
            head = graph.concat_channels(head, pyramid[i])?;
        }
    }
    let depth = cfg.depth();
    for (j, spec) in cfg.decoder_specs().iter().enumerate() {
        head = graph.conv_transpose2d(head, nodes.decoder[j].weight, nodes.decoder[j].bias, spec)?;
        let act = if j == depth - 1 { cfg.output_activation } else { cfg.decoder_activation };
        head = graph.activation(head, act);
    }
    Ok(head)
}

/// Forward pass of the patch discriminator; returns the raw score map.
pub fn forward_discriminator(
    graph: &mut Graph,
    x: NodeId,
    cfg: &DiscriminatorConfig,
    nodes: &DiscriminatorNodes,
) -> Result<NodeId> {
    let specs = cfg.specs();
    let mut head = x;
    for (i, spec) in specs.iter().enumerate() {
        head = graph.conv2d(head, nodes.blocks[i].weight, nodes.blocks[i].bias, spec)?;
        // every block but the score head is followed by leaky ReLU
        if i + 1 < specs.len() {
            head = graph.activation(head, crate::tensor::Activation::LeakyRelu(0.2));
        }
    }
    Ok(head)
}

/// Stack per-sample mask pyramids into per-level batch tensors [B,1,h,w].
pub fn batch_pyramids(masks: &[&Mask], spec: &crate::mask::PyramidSpec) -> Result<Vec<Tensor>> {
    if masks.is_empty() {
        return Err(Error::usage("empty batch"));
    }
    let per_sample: Vec<Vec<Tensor>> = masks.iter().map(|m| mask_pyramid(m, spec)).collect::<Result<_>>()?;
    let levels = spec.len();
    let batch = masks.len();
    let mut out = Vec::with_capacity(levels);
    for level in 0..levels {
        let shape = per_sample[0][level].shape().to_vec();
        let hw = shape[2] * shape[3];
        let mut data = Vec::with_capacity(batch * hw);
        for sample in &per_sample {
            if sample[level].shape() != shape.as_slice() {
                return Err(Error::shape("batch_pyramids", "mixed mask sizes in one batch".to_string()));
            }
            data.extend_from_slice(sample[level].data());
        }
        out.push(Tensor::from_vec(vec![batch, 1, shape[2], shape[3]], data)?);
    }
    Ok(out)
}

/// One-graph generator application for inference: builds the pyramid,
/// runs the forward pass, and returns G(x).
pub fn generator_apply(x: &Tensor, masks: &[&Mask], cfg: &GeneratorConfig, params: &GeneratorParams) -> Result<Tensor> {
    let (n, _, _, _) = x.dims4()?;
    if masks.len() != n {
        return Err(Error::usage(format!("{} masks for a batch of {}", masks.len(), n)));
    }
    let mut graph = Graph::new();
    let x_node = graph.input(x.clone());
    let pyramid_nodes: Vec<NodeId> = if cfg.mpn {
        batch_pyramids(masks, &cfg.pyramid_spec())?
            .into_iter()
            .map(|t| graph.input(t))
            .collect()
    } else {
        Vec::new()
    };
    let nodes = insert_generator(&mut graph, params, false);
    let out = forward_generator(&mut graph, x_node, &pyramid_nodes, cfg, &nodes)?;
    Ok(graph.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::MaskDomain;
    use rand::prelude::*;

    fn random_input(rng: &mut ChaCha12Rng, n: usize, size: usize) -> Tensor {
        let data: Vec<f64> = (0..n * size * size).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        Tensor::from_vec(vec![n, 1, size, size], data).unwrap()
    }

    fn random_mask(rng: &mut ChaCha12Rng, size: usize) -> Mask {
        let mut m = Mask::empty(size, size, MaskDomain::Trace);
        for row in 0..size {
            for col in 0..size {
                if rng.random::<f64>() < 0.2 {
                    m.set(row, col, 1);
                }
            }
        }
        m
    }

    #[test]
    fn generator_preserves_shape() {
        let cfg = GeneratorConfig::with_channels(vec![4, 8]);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let params = init_generator(&cfg, &mut rng);
        for size in [64usize, 128] {
            let x = random_input(&mut rng, 1, size);
            let mask = random_mask(&mut rng, size);
            let out = generator_apply(&x, &[&mask], &cfg, &params).unwrap();
            assert_eq!(out.shape(), &[1, 1, size, size]);
            assert!(out.is_finite());
        }
    }

    #[test]
    fn mpn_coupling_is_live() {
        // same seed, mpn on vs off: outputs must differ (coupling is not a no-op)
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let x = random_input(&mut rng, 1, 64);
        let mask = random_mask(&mut rng, 64);

        let cfg_on = GeneratorConfig { mpn: true, ..GeneratorConfig::with_channels(vec![4, 8]) };
        let cfg_off = GeneratorConfig { mpn: false, ..GeneratorConfig::with_channels(vec![4, 8]) };
        let mut rng_a = ChaCha12Rng::seed_from_u64(7);
        let mut rng_b = ChaCha12Rng::seed_from_u64(7);
        let params_on = init_generator(&cfg_on, &mut rng_a);
        let params_off = init_generator(&cfg_off, &mut rng_b);

        let out_on = generator_apply(&x, &[&mask], &cfg_on, &params_on).unwrap();
        let out_off = generator_apply(&x, &[&mask], &cfg_off, &params_off).unwrap();
        let linf = out_on
            .data()
            .iter()
            .zip(out_off.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(linf > 0.0, "MPN made no difference");

        // and the mask itself must influence the MPN-enabled output
        let empty = Mask::empty(64, 64, MaskDomain::Trace);
        let out_empty = generator_apply(&x, &[&empty], &cfg_on, &params_on).unwrap();
        let linf_mask = out_on
            .data()
            .iter()
            .zip(out_empty.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(linf_mask > 0.0, "mask content does not reach the output");
    }

    #[test]
    fn zero_final_layer_outputs_zero() {
        let cfg = GeneratorConfig::with_channels(vec![4, 8]);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut params = init_generator(&cfg, &mut rng);
        params.zero_final_layer();
        let x = random_input(&mut rng, 2, 64);
        let masks = [random_mask(&mut rng, 64), random_mask(&mut rng, 64)];
        let out = generator_apply(&x, &[&masks[0], &masks[1]], &cfg, &params).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn discriminator_outputs_score_map() {
        let cfg = DiscriminatorConfig::with_channels(vec![4, 8, 8]);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let params = init_discriminator(&cfg, &mut rng);
        let x = random_input(&mut rng, 2, 64);
        let mut graph = Graph::new();
        let xn = graph.input(x);
        let nodes = insert_discriminator(&mut graph, &params, false);
        let score = forward_discriminator(&mut graph, xn, &cfg, &nodes).unwrap();
        assert_eq!(graph.shape(score), &[2, 1, 8, 8]);
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = GeneratorConfig::with_channels(vec![4, 8]);
        let a = init_generator(&cfg, &mut ChaCha12Rng::seed_from_u64(3));
        let b = init_generator(&cfg, &mut ChaCha12Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }
}
