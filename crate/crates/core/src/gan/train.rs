//! Adversarial training: alternating discriminator/generator steps with
//! Adam, deterministic under the seed.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::gan::bundle::{ModelBundle, Normalization};
use crate::gan::config::{DiscriminatorConfig, GeneratorConfig, LossWeights};
use crate::gan::loss::{compose_pc, compose_sc, loss_content, loss_disc, loss_gen_adv};
use crate::gan::model::{
    batch_pyramids, forward_discriminator, forward_generator, generator_apply, init_discriminator, init_generator,
    insert_discriminator, insert_generator,
};
use crate::gan::{compose_values, Composition, TrainingSample};
use crate::mask::Mask;
use crate::rng::derive_seed;
use crate::tensor::{AdamConfig, AdamState, Graph, Tensor};

/// Training hyperparameters. Defaults follow the published recipe:
/// lr 5e-4, beta1 0.5, lambda 100, batch 16.
#[derive(Clone, Copy, Debug)]
pub struct Hyper {
    pub lr: f64,
    pub beta1: f64,
    pub lambda: f64,
    pub batch: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper { lr: 5e-4, beta1: 0.5, lambda: 100.0, batch: 16, iters: 2000, seed: 0 }
    }
}

/// Per-iteration losses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveRow {
    pub iter: u64,
    pub loss_d: f64,
    pub loss_g_adv: f64,
    pub loss_g_content: f64,
}

pub fn curves_to_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("iter,loss_d,loss_g_adv,loss_g_content\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.iter, r.loss_d, r.loss_g_adv, r.loss_g_content));
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub bundle: ModelBundle,
    pub curves: Vec<CurveRow>,
}

fn validate_dataset(dataset: &[TrainingSample]) -> Result<(usize, usize)> {
    if dataset.is_empty() {
        return Err(Error::usage("training dataset is empty"));
    }
    let (h, w) = {
        let (_, _, h, w) = dataset[0].x.dims4()?;
        (h, w)
    };
    for (i, sample) in dataset.iter().enumerate() {
        sample
            .validate()
            .map_err(|e| Error::usage(format!("training sample {i}: {e}")))?;
        let (_, _, sh, sw) = sample.x.dims4()?;
        if (sh, sw) != (h, w) {
            return Err(Error::shape("train", format!("sample {i} is {sh}x{sw}, expected {h}x{w}")));
        }
    }
    Ok((h, w))
}

struct Batch {
    x: Tensor,
    y: Tensor,
    s: Tensor,
    pyramid: Vec<Tensor>,
    ns: Tensor,
}

fn assemble_batch(
    dataset: &[TrainingSample],
    indices: &[usize],
    g_cfg: &GeneratorConfig,
    d_cfg: &DiscriminatorConfig,
    (h, w): (usize, usize),
) -> Result<Batch> {
    let b = indices.len();
    let hw = h * w;
    let mut x = Vec::with_capacity(b * hw);
    let mut y = Vec::with_capacity(b * hw);
    let mut s = Vec::with_capacity(b * hw);
    let mut masks: Vec<&Mask> = Vec::with_capacity(b);
    for &i in indices {
        let sample = &dataset[i];
        x.extend_from_slice(sample.x.data());
        y.extend_from_slice(sample.y.data());
        s.extend(sample.s.values().iter().map(|&v| v as f64));
        masks.push(&sample.s);
    }
    let pyramid = if g_cfg.mpn { batch_pyramids(&masks, &g_cfg.pyramid_spec())? } else { Vec::new() };
    let ns = batch_pyramids(&masks, &d_cfg.modulation_pyramid())?
        .pop()
        .ok_or_else(|| Error::config("discriminator modulation pyramid is empty"))?;
    Ok(Batch {
        x: Tensor::from_vec(vec![b, 1, h, w], x)?,
        y: Tensor::from_vec(vec![b, 1, h, w], y)?,
        s: Tensor::from_vec(vec![b, 1, h, w], s)?,
        pyramid,
        ns,
    })
}

fn train_impl(
    dataset: &[TrainingSample],
    g_cfg: &GeneratorConfig,
    d_cfg: &DiscriminatorConfig,
    hyper: &Hyper,
    norm: Normalization,
    composition: Composition,
    dump_dir: Option<&Path>,
) -> Result<TrainOutput> {
    let size = validate_dataset(dataset)?;
    g_cfg.validate(size)?;
    d_cfg.validate(size)?;
    if hyper.batch == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let weights = LossWeights { lambda: hyper.lambda };
    weights.validate()?;

    let mut init_rng = ChaCha12Rng::seed_from_u64(derive_seed(hyper.seed, "init", 0));
    let mut generator = init_generator(g_cfg, &mut init_rng);
    let mut discriminator = init_discriminator(d_cfg, &mut init_rng);
    if composition == Composition::Sc {
        // residual model starts as the identity mapping
        generator.zero_final_layer();
    }

    let adam_cfg = AdamConfig { lr: hyper.lr, beta1: hyper.beta1, ..AdamConfig::default() };
    let g_sizes: Vec<usize> = generator.flat().iter().map(|t| t.numel()).collect();
    let d_sizes: Vec<usize> = discriminator.flat().iter().map(|t| t.numel()).collect();
    let mut adam_g = AdamState::new(adam_cfg, &g_sizes);
    let mut adam_d = AdamState::new(adam_cfg, &d_sizes);

    let mut batch_rng = ChaCha12Rng::seed_from_u64(derive_seed(hyper.seed, "batches", 0));
    let mut curves = Vec::with_capacity(hyper.iters);
    let mut last_good: Option<(crate::gan::model::GeneratorParams, crate::gan::model::DiscriminatorParams, u64)> = None;

    let bundle_of = |gen: &crate::gan::model::GeneratorParams,
                     disc: &crate::gan::model::DiscriminatorParams,
                     adam_g: &AdamState,
                     adam_d: &AdamState,
                     iterations: u64| ModelBundle {
        composition,
        g_cfg: g_cfg.clone(),
        d_cfg: d_cfg.clone(),
        generator: gen.clone(),
        discriminator: disc.clone(),
        adam_g: adam_g.clone(),
        adam_d: adam_d.clone(),
        norm,
        seed: hyper.seed,
        iterations,
        lambda: hyper.lambda,
        batch: hyper.batch,
    };

    for iter in 0..hyper.iters {
        let indices: Vec<usize> = (0..hyper.batch).map(|_| batch_rng.random_range(0..dataset.len())).collect();
        let batch = assemble_batch(dataset, &indices, g_cfg, d_cfg, size)?;

        // ---- discriminator step: generator frozen ----
        let masks: Vec<&Mask> = indices.iter().map(|&i| &dataset[i].s).collect();
        let gx = generator_apply(&batch.x, &masks, g_cfg, &generator)?;
        let yhat_value = Tensor::from_vec(
            batch.x.shape().to_vec(),
            compose_values(composition, batch.x.data(), batch.s.data(), gx.data()),
        )?;

        let loss_d_value = {
            let mut graph = Graph::new();
            let y = graph.input(batch.y.clone());
            let yhat = graph.input(yhat_value);
            let ns = graph.input(batch.ns.clone());
            let nodes = insert_discriminator(&mut graph, &discriminator, true);
            let scores_real = forward_discriminator(&mut graph, y, d_cfg, &nodes)?;
            let scores_fake = forward_discriminator(&mut graph, yhat, d_cfg, &nodes)?;
            let loss = loss_disc(&mut graph, scores_real, scores_fake, ns)?;
            let value = graph.scalar(loss);
            if !value.is_finite() {
                if let Some(dir) = dump_dir {
                    dump_abort(dir, &last_good, composition, iter as u64, "discriminator loss", value)?;
                }
                return Err(Error::numeric(format!("discriminator loss became {value} at iteration {iter}")));
            }
            graph.backward(loss)?;
            let grads: Vec<Vec<f64>> = nodes
                .blocks
                .iter()
                .flat_map(|l| [l.weight, l.bias])
                .map(|id| graph.grad(id).expect("trainable").to_vec())
                .collect();
            let grad_refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
            adam_d.step(&mut discriminator.flat_mut()[..], &grad_refs)?;
            value
        };

        // ---- generator step: discriminator frozen, fresh forward ----
        let (adv_value, content_value) = {
            let mut graph = Graph::new();
            let x = graph.input(batch.x.clone());
            let y = graph.input(batch.y.clone());
            let s = graph.input(batch.s.clone());
            let ns = graph.input(batch.ns.clone());
            let pyramid: Vec<_> = batch.pyramid.iter().map(|t| graph.input(t.clone())).collect();
            let g_nodes = insert_generator(&mut graph, &generator, true);
            let d_nodes = insert_discriminator(&mut graph, &discriminator, false);
            let gx = forward_generator(&mut graph, x, &pyramid, g_cfg, &g_nodes)?;
            let yhat = match composition {
                Composition::Pc => compose_pc(&mut graph, x, s, gx)?,
                Composition::Sc => compose_sc(&mut graph, x, s, gx)?,
            };
            let scores_fake = forward_discriminator(&mut graph, yhat, d_cfg, &d_nodes)?;
            let adv = loss_gen_adv(&mut graph, scores_fake, ns)?;
            let content = loss_content(&mut graph, yhat, y)?;
            let weighted = graph.affine(content, weights.lambda, 0.0);
            let total = graph.add(adv, weighted)?;
            let (adv_v, content_v, total_v) = (graph.scalar(adv), graph.scalar(content), graph.scalar(total));
            if !total_v.is_finite() {
                if let Some(dir) = dump_dir {
                    dump_abort(dir, &last_good, composition, iter as u64, "generator loss", total_v)?;
                }
                return Err(Error::numeric(format!("generator loss became {total_v} at iteration {iter}")));
            }
            graph.backward(total)?;
            let grads: Vec<Vec<f64>> = g_nodes
                .encoder
                .iter()
                .chain(g_nodes.decoder.iter())
                .flat_map(|l| [l.weight, l.bias])
                .map(|id| graph.grad(id).expect("trainable").to_vec())
                .collect();
            let grad_refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
            adam_g.step(&mut generator.flat_mut()[..], &grad_refs)?;
            (adv_v, content_v)
        };

        curves.push(CurveRow {
            iter: iter as u64,
            loss_d: loss_d_value,
            loss_g_adv: adv_value,
            loss_g_content: content_value,
        });
        last_good = Some((generator.clone(), discriminator.clone(), iter as u64 + 1));
    }

    Ok(TrainOutput {
        bundle: bundle_of(&generator, &discriminator, &adam_g, &adam_d, hyper.iters as u64),
        curves,
    })
}

fn dump_abort(
    dir: &Path,
    last_good: &Option<(crate::gan::model::GeneratorParams, crate::gan::model::DiscriminatorParams, u64)>,
    composition: Composition,
    iter: u64,
    what: &str,
    value: f64,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let diag = format!("aborted: {what} became {value} at iteration {iter}\n");
    std::fs::write(dir.join("abort.txt"), diag)?;
    if let Some((gen, disc, good_iter)) = last_good {
        let marker = dir.join(format!("last_good_iter_{good_iter}"));
        std::fs::create_dir_all(&marker)?;
        for (name, tensor) in gen.named().into_iter().chain(disc.named()) {
            crate::io::marf::write_file(&marker.join(format!("{name}.marf")), tensor, crate::io::marf::Dtype::F64)?;
        }
        let _ = composition;
    }
    Ok(())
}

/// Train the projection-completion model (inpainting composition).
pub fn train_pc(
    dataset: &[TrainingSample],
    g_cfg: &GeneratorConfig,
    d_cfg: &DiscriminatorConfig,
    hyper: &Hyper,
    norm: Normalization,
    dump_dir: Option<&Path>,
) -> Result<TrainOutput> {
    train_impl(dataset, g_cfg, d_cfg, hyper, norm, Composition::Pc, dump_dir)
}

/// Train the sinogram-correction model (residual composition, zero-init
/// final layer so training starts from the identity).
pub fn train_sc(
    dataset: &[TrainingSample],
    g_cfg: &GeneratorConfig,
    d_cfg: &DiscriminatorConfig,
    hyper: &Hyper,
    norm: Normalization,
    dump_dir: Option<&Path>,
) -> Result<TrainOutput> {
    train_impl(dataset, g_cfg, d_cfg, hyper, norm, Composition::Sc, dump_dir)
}

/// Build the sinogram-correction dataset by running the trained PC model
/// over its own training inputs: x becomes the PC-completed sinogram.
pub fn sc_dataset_from_pc(dataset: &[TrainingSample], pc: &ModelBundle) -> Result<Vec<TrainingSample>> {
    dataset
        .iter()
        .map(|sample| {
            let gx = generator_apply(&sample.x, &[&sample.s], &pc.g_cfg, &pc.generator)?;
            let composed = compose_values(Composition::Pc, sample.x.data(), &sample.s.to_f64(), gx.data());
            Ok(TrainingSample {
                x: Tensor::from_vec(sample.x.shape().to_vec(), composed)?,
                y: sample.y.clone(),
                s: sample.s.clone(),
            })
        })
        .collect()
}

/// Masked mean absolute error between composed outputs and targets over a
/// dataset; the memorization score used by the overfit oracle.
pub fn masked_l1(dataset: &[TrainingSample], bundle: &ModelBundle) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for sample in dataset {
        let gx = generator_apply(&sample.x, &[&sample.s], &bundle.g_cfg, &bundle.generator)?;
        let composed = compose_values(bundle.composition, sample.x.data(), &sample.s.to_f64(), gx.data());
        for (i, &m) in sample.s.values().iter().enumerate() {
            if m == 1 {
                total += (composed[i] - sample.y.data()[i]).abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::usage("masked_l1 over dataset with empty masks"));
    }
    Ok(total / count as f64)
}
