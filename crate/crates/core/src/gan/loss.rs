//! Compositions and the mask fusion loss.
//!
//! The composed output ŷ replaces only masked content, so off-mask pixels
//! pass through bit-exact and the content term is automatically restricted
//! to the mask. Discriminator scores are modulated by the pooled mask N(s)
//! inside the squared norms, so positions with N(s)=0 cannot influence
//! either player.

use crate::error::{Error, Result};
use crate::gan::config::LossWeights;
use crate::tensor::{Graph, NodeId};

fn check_binary(graph: &Graph, s: NodeId) -> Result<()> {
    if graph.data(s).iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::usage("composition mask must be strictly binary"));
    }
    Ok(())
}

fn check_same_shape(graph: &Graph, op: &'static str, nodes: &[NodeId]) -> Result<()> {
    let shape = graph.shape(nodes[0]).to_vec();
    for &n in &nodes[1..] {
        if graph.shape(n) != shape {
            return Err(Error::shape(op, format!("{:?} vs {:?}", shape, graph.shape(n))));
        }
    }
    Ok(())
}

/// Projection-completion composition: ŷ = s ⊙ G(x) + (1 - s) ⊙ x.
pub fn compose_pc(graph: &mut Graph, x: NodeId, s: NodeId, gx: NodeId) -> Result<NodeId> {
    check_same_shape(graph, "compose_pc", &[x, s, gx])?;
    check_binary(graph, s)?;
    let masked_g = graph.mul(s, gx)?;
    let inv = graph.affine(s, -1.0, 1.0);
    let kept = graph.mul(inv, x)?;
    graph.add(masked_g, kept)
}

/// Residual sinogram-correction composition: ŷ = s ⊙ (G(x) + x) + (1 - s) ⊙ x.
pub fn compose_sc(graph: &mut Graph, x: NodeId, s: NodeId, gx: NodeId) -> Result<NodeId> {
    check_same_shape(graph, "compose_sc", &[x, s, gx])?;
    check_binary(graph, s)?;
    let corrected = graph.add(gx, x)?;
    let masked = graph.mul(s, corrected)?;
    let inv = graph.affine(s, -1.0, 1.0);
    let kept = graph.mul(inv, x)?;
    graph.add(masked, kept)
}

/// Content term: mean |ŷ - y|. Off-mask terms vanish by construction of ŷ;
/// the reduction is the mean over every element.
pub fn loss_content(graph: &mut Graph, yhat: NodeId, y: NodeId) -> Result<NodeId> {
    check_same_shape(graph, "loss_content", &[yhat, y])?;
    let diff = graph.sub(yhat, y)?;
    let v = graph.abs(diff);
    Ok(graph.mean(v))
}

/// Discriminator objective: mean‖N(s)⊙(1 - D(y))‖² + mean‖N(s)⊙D(ŷ)‖².
pub fn loss_disc(graph: &mut Graph, scores_real: NodeId, scores_fake: NodeId, ns: NodeId) -> Result<NodeId> {
    check_same_shape(graph, "loss_disc", &[scores_real, scores_fake, ns])?;
    let one_minus = graph.affine(scores_real, -1.0, 1.0);
    let real_mod = graph.mul(ns, one_minus)?;
    let real_sq = graph.mul(real_mod, real_mod)?;
    let real_term = graph.mean(real_sq);

    let fake_mod = graph.mul(ns, scores_fake)?;
    let fake_sq = graph.mul(fake_mod, fake_mod)?;
    let fake_term = graph.mean(fake_sq);
    graph.add(real_term, fake_term)
}

/// Generator adversarial term: mean‖N(s)⊙(1 - D(ŷ))‖².
pub fn loss_gen_adv(graph: &mut Graph, scores_fake: NodeId, ns: NodeId) -> Result<NodeId> {
    check_same_shape(graph, "loss_gen", &[scores_fake, ns])?;
    let one_minus = graph.affine(scores_fake, -1.0, 1.0);
    let modulated = graph.mul(ns, one_minus)?;
    let sq = graph.mul(modulated, modulated)?;
    Ok(graph.mean(sq))
}

/// Total generator objective: adversarial + λ · content.
pub fn loss_gen(graph: &mut Graph, scores_fake: NodeId, ns: NodeId, content: NodeId, w: &LossWeights) -> Result<NodeId> {
    w.validate()?;
    let adv = loss_gen_adv(graph, scores_fake, ns)?;
    let weighted = graph.affine(content, w.lambda, 0.0);
    graph.add(adv, weighted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn compose_pc_extremes() {
        let mut g = Graph::new();
        let x = g.input(t(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let gx = g.input(t(vec![1, 1, 2, 2], vec![9.0, 8.0, 7.0, 6.0]));
        let zeros = g.input(t(vec![1, 1, 2, 2], vec![0.0; 4]));
        let ones = g.input(t(vec![1, 1, 2, 2], vec![1.0; 4]));
        let y0 = compose_pc(&mut g, x, zeros, gx).unwrap();
        assert_eq!(g.data(y0), &[1.0, 2.0, 3.0, 4.0]);
        let y1 = compose_pc(&mut g, x, ones, gx).unwrap();
        assert_eq!(g.data(y1), &[9.0, 8.0, 7.0, 6.0]);
    }

    #[test]
    fn compose_pixelwise_on_random_masks() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..20 {
            let x_data: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
            let g_data: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
            let s_data: Vec<f64> = (0..64).map(|_| f64::from(rng.random::<bool>())).collect();
            let mut g = Graph::new();
            let x = g.input(t(vec![1, 1, 8, 8], x_data.clone()));
            let gx = g.input(t(vec![1, 1, 8, 8], g_data.clone()));
            let s = g.input(t(vec![1, 1, 8, 8], s_data.clone()));
            let pc = compose_pc(&mut g, x, s, gx).unwrap();
            let sc = compose_sc(&mut g, x, s, gx).unwrap();
            for i in 0..64 {
                if s_data[i] == 0.0 {
                    assert_eq!(g.data(pc)[i], x_data[i], "pc off-mask must be bit-exact");
                    assert_eq!(g.data(sc)[i], x_data[i], "sc off-mask must be bit-exact");
                } else {
                    assert_eq!(g.data(pc)[i], g_data[i]);
                    assert_eq!(g.data(sc)[i], g_data[i] + x_data[i]);
                }
            }
        }
    }

    #[test]
    fn compose_sc_zero_residual_is_identity() {
        let mut g = Graph::new();
        let x = g.input(t(vec![1, 1, 2, 2], vec![1.5, -2.0, 0.25, 4.0]));
        let gx = g.input(t(vec![1, 1, 2, 2], vec![0.0; 4]));
        let s = g.input(t(vec![1, 1, 2, 2], vec![1.0, 0.0, 1.0, 0.0]));
        let y = compose_sc(&mut g, x, s, gx).unwrap();
        assert_eq!(g.data(y), g.data(x));
    }

    #[test]
    fn non_binary_mask_rejected() {
        let mut g = Graph::new();
        let x = g.input(t(vec![1, 1, 1, 2], vec![1.0, 2.0]));
        let gx = g.input(t(vec![1, 1, 1, 2], vec![0.0, 0.0]));
        let s = g.input(t(vec![1, 1, 1, 2], vec![0.5, 1.0]));
        assert!(compose_pc(&mut g, x, s, gx).is_err());
    }

    #[test]
    fn content_loss_quarter_mask() {
        // ŷ = y + 1 inside a mask covering 25%: mean |ŷ-y| = 0.25
        let n = 16;
        let y_data: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut yhat_data = y_data.clone();
        for v in yhat_data.iter_mut().take(4) {
            *v += 1.0;
        }
        let mut g = Graph::new();
        let y = g.input(t(vec![1, 1, 4, 4], y_data));
        let yhat = g.input(t(vec![1, 1, 4, 4], yhat_data));
        let loss = loss_content(&mut g, yhat, y).unwrap();
        assert!((g.scalar(loss) - 0.25).abs() < 1e-15);

        let same = loss_content(&mut g, y, y).unwrap();
        assert_eq!(g.scalar(same), 0.0);
    }

    #[test]
    fn disc_loss_closed_forms() {
        let shape = vec![1, 1, 3, 3];
        let mut g = Graph::new();
        let ones = g.input(t(shape.clone(), vec![1.0; 9]));
        let zeros = g.input(t(shape.clone(), vec![0.0; 9]));

        // perfect discriminator: D(y)=1, D(ŷ)=0, ns=1 -> 0
        let perfect = loss_disc(&mut g, ones, zeros, ones).unwrap();
        assert_eq!(g.scalar(perfect), 0.0);

        // fooled discriminator: D(y)=0, D(ŷ)=1, ns=1 -> 2
        let fooled = loss_disc(&mut g, zeros, ones, ones).unwrap();
        assert!((g.scalar(fooled) - 2.0).abs() < 1e-12);

        // blind discriminator: ns=0 -> 0 regardless
        let blind = loss_disc(&mut g, zeros, ones, zeros).unwrap();
        assert_eq!(g.scalar(blind), 0.0);
    }

    #[test]
    fn gen_loss_closed_form() {
        let shape = vec![1, 1, 3, 3];
        let w = LossWeights { lambda: 100.0 };
        let mut g = Graph::new();
        let ones = g.input(t(shape.clone(), vec![1.0; 9]));
        let zeros = g.input(t(shape.clone(), vec![0.0; 9]));
        let c = g.input(Tensor::scalar(0.125));

        // D(ŷ)=1, content=0 -> 0
        let zero_c = g.input(Tensor::scalar(0.0));
        let happy = loss_gen(&mut g, ones, ones, zero_c, &w).unwrap();
        assert_eq!(g.scalar(happy), 0.0);

        // D(ŷ)=0, ns=1, content=c -> 1 + 100c
        let worst = loss_gen(&mut g, zeros, ones, c, &w).unwrap();
        assert!((g.scalar(worst) - (1.0 + 100.0 * 0.125)).abs() < 1e-12);
    }

    #[test]
    fn losses_ignore_scores_where_ns_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let shape = vec![1, 1, 4, 4];
        let ns_data: Vec<f64> = (0..16).map(|i| if i % 3 == 0 { 0.8 } else { 0.0 }).collect();
        let base: Vec<f64> = (0..16).map(|_| rng.random::<f64>()).collect();
        // perturb scores only where ns == 0
        let perturbed: Vec<f64> = base
            .iter()
            .zip(&ns_data)
            .map(|(&v, &m)| if m == 0.0 { v + 100.0 * rng.random::<f64>() } else { v })
            .collect();

        let mut g = Graph::new();
        let ns = g.input(t(shape.clone(), ns_data));
        let real = g.input(t(shape.clone(), (0..16).map(|i| i as f64 / 16.0).collect()));
        let fake_a = g.input(t(shape.clone(), base));
        let fake_b = g.input(t(shape.clone(), perturbed));

        let da = loss_disc(&mut g, real, fake_a, ns).unwrap();
        let db = loss_disc(&mut g, real, fake_b, ns).unwrap();
        assert_eq!(g.scalar(da), g.scalar(db));

        let ga = loss_gen_adv(&mut g, fake_a, ns).unwrap();
        let gb = loss_gen_adv(&mut g, fake_b, ns).unwrap();
        assert_eq!(g.scalar(ga), g.scalar(gb));
    }
}
