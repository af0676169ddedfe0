//! Reverse-mode automatic differentiation over a per-iteration tape.
//!
//! A `Graph` is built fresh for every forward pass: leaves are inserted
//! (parameters with gradient tracking, inputs without), ops append nodes,
//! and `backward` on a scalar loss fills the gradients of every tracked
//! leaf. Node ids are creation-ordered, so a single reverse sweep visits
//! children before parents.

use crate::error::{Error, Result};
use crate::tensor::conv::{self, ConvSpec};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

/// Elementwise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::LeakyRelu(slope) => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative expressed through input x and output y = f(x).
    fn derivative(&self, x: f64, y: f64) -> f64 {
        match *self {
            Activation::LeakyRelu(slope) => {
                if x >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

enum Op {
    Leaf,
    Conv2d { input: NodeId, weight: NodeId, bias: NodeId, spec: ConvSpec },
    ConvTranspose2d { input: NodeId, weight: NodeId, bias: NodeId, spec: ConvSpec },
    AvgPool2d { input: NodeId, kernel: usize, stride: usize, padding: usize },
    Activate { input: NodeId, kind: Activation },
    Add { lhs: NodeId, rhs: NodeId },
    Sub { lhs: NodeId, rhs: NodeId },
    Mul { lhs: NodeId, rhs: NodeId },
    // offset drops out of the gradient; only scale is kept
    Affine { input: NodeId, scale: f64 },
    Abs { input: NodeId },
    ConcatChannels { lhs: NodeId, rhs: NodeId },
    Mean { input: NodeId },
    Sum { input: NodeId },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Computation tape. Single-threaded per training job; the convolution
/// kernels inside ops may parallelize internally.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    done: bool,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// Insert a leaf whose gradient will be computed.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value.with_grad(), Op::Leaf, true)
    }

    /// Insert a constant leaf (no gradient).
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, op, needs_grad });
        id
    }

    fn derived(&mut self, value: Tensor, op: Op, parents: &[NodeId]) -> NodeId {
        let needs = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.push(value, op, needs)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn data(&self, id: NodeId) -> &[f64] {
        self.nodes[id.0].value.data()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Gradient of the last `backward` w.r.t. this node, if tracked.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].value.grad()
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.data()[0]
    }

    pub fn conv2d(&mut self, input: NodeId, weight: NodeId, bias: NodeId, spec: &ConvSpec) -> Result<NodeId> {
        let dims = self.value(input).dims4()?;
        let (n, c_in, h, w) = dims;
        if c_in != spec.in_channels {
            return Err(Error::shape(
                "conv2d",
                format!("input has {} channels, spec expects {}", c_in, spec.in_channels),
            ));
        }
        let expect_w = [spec.out_channels, spec.in_channels, spec.kernel, spec.kernel];
        if self.shape(weight) != expect_w {
            return Err(Error::shape(
                "conv2d",
                format!("weight shape {:?}, spec requires {:?}", self.shape(weight), expect_w),
            ));
        }
        if self.shape(bias) != [spec.out_channels] {
            return Err(Error::shape(
                "conv2d",
                format!("bias shape {:?}, spec requires [{}]", self.shape(bias), spec.out_channels),
            ));
        }
        let out = conv::conv2d_forward(self.data(input), dims, self.data(weight), self.data(bias), spec)?;
        let shape = vec![n, spec.out_channels, spec.out_extent(h)?, spec.out_extent(w)?];
        let value = Tensor::from_vec(shape, out)?;
        Ok(self.derived(value, Op::Conv2d { input, weight, bias, spec: *spec }, &[input, weight, bias]))
    }

    pub fn conv_transpose2d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        spec: &ConvSpec,
    ) -> Result<NodeId> {
        let dims = self.value(input).dims4()?;
        let (n, c_in, h, w) = dims;
        if c_in != spec.in_channels {
            return Err(Error::shape(
                "conv_transpose2d",
                format!("input has {} channels, spec expects {}", c_in, spec.in_channels),
            ));
        }
        let expect_w = [spec.in_channels, spec.out_channels, spec.kernel, spec.kernel];
        if self.shape(weight) != expect_w {
            return Err(Error::shape(
                "conv_transpose2d",
                format!("weight shape {:?}, spec requires {:?}", self.shape(weight), expect_w),
            ));
        }
        if self.shape(bias) != [spec.out_channels] {
            return Err(Error::shape(
                "conv_transpose2d",
                format!("bias shape {:?}, spec requires [{}]", self.shape(bias), spec.out_channels),
            ));
        }
        let out = conv::conv_transpose2d_forward(self.data(input), dims, self.data(weight), self.data(bias), spec)?;
        let shape = vec![n, spec.out_channels, spec.transpose_out_extent(h)?, spec.transpose_out_extent(w)?];
        let value = Tensor::from_vec(shape, out)?;
        Ok(self.derived(value, Op::ConvTranspose2d { input, weight, bias, spec: *spec }, &[input, weight, bias]))
    }

    pub fn avg_pool2d(&mut self, input: NodeId, kernel: usize, stride: usize, padding: usize) -> Result<NodeId> {
        let dims = self.value(input).dims4()?;
        let (n, c, h, w) = dims;
        let out = conv::avg_pool2d_forward(self.data(input), dims, kernel, stride, padding)?;
        let spec = ConvSpec::new(c, c, kernel, stride, padding);
        let value = Tensor::from_vec(vec![n, c, spec.out_extent(h)?, spec.out_extent(w)?], out)?;
        Ok(self.derived(value, Op::AvgPool2d { input, kernel, stride, padding }, &[input]))
    }

    pub fn activation(&mut self, input: NodeId, kind: Activation) -> NodeId {
        let src = &self.nodes[input.0].value;
        let data = src.data().iter().map(|&x| kind.apply(x)).collect();
        let value = Tensor::from_vec(src.shape().to_vec(), data).expect("same shape");
        self.derived(value, Op::Activate { input, kind }, &[input])
    }

    fn zip_ew(&mut self, op_name: &'static str, lhs: NodeId, rhs: NodeId, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (a, b) = (&self.nodes[lhs.0].value, &self.nodes[rhs.0].value);
        if a.shape() != b.shape() {
            return Err(Error::shape(
                op_name,
                format!("operands {:?} vs {:?} (no broadcasting)", a.shape(), b.shape()),
            ));
        }
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(a.shape().to_vec(), data)
    }

    pub fn add(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        let value = self.zip_ew("add", lhs, rhs, |a, b| a + b)?;
        Ok(self.derived(value, Op::Add { lhs, rhs }, &[lhs, rhs]))
    }

    pub fn sub(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        let value = self.zip_ew("sub", lhs, rhs, |a, b| a - b)?;
        Ok(self.derived(value, Op::Sub { lhs, rhs }, &[lhs, rhs]))
    }

    pub fn mul(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        let value = self.zip_ew("mul", lhs, rhs, |a, b| a * b)?;
        Ok(self.derived(value, Op::Mul { lhs, rhs }, &[lhs, rhs]))
    }

    /// scale * x + offset, elementwise.
    pub fn affine(&mut self, input: NodeId, scale: f64, offset: f64) -> NodeId {
        let src = &self.nodes[input.0].value;
        let data = src.data().iter().map(|&x| scale * x + offset).collect();
        let value = Tensor::from_vec(src.shape().to_vec(), data).expect("same shape");
        self.derived(value, Op::Affine { input, scale }, &[input])
    }

    pub fn abs(&mut self, input: NodeId) -> NodeId {
        let src = &self.nodes[input.0].value;
        let data = src.data().iter().map(|&x| x.abs()).collect();
        let value = Tensor::from_vec(src.shape().to_vec(), data).expect("same shape");
        self.derived(value, Op::Abs { input }, &[input])
    }

    /// Concatenate two [N,C,H,W] tensors along the channel axis.
    pub fn concat_channels(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        let (n1, c1, h1, w1) = self.value(lhs).dims4()?;
        let (n2, c2, h2, w2) = self.value(rhs).dims4()?;
        if n1 != n2 || h1 != h2 || w1 != w2 {
            return Err(Error::shape(
                "concat_channels",
                format!("{:?} vs {:?}", self.shape(lhs), self.shape(rhs)),
            ));
        }
        let hw = h1 * w1;
        let mut data = Vec::with_capacity(n1 * (c1 + c2) * hw);
        for img in 0..n1 {
            data.extend_from_slice(&self.data(lhs)[img * c1 * hw..(img + 1) * c1 * hw]);
            data.extend_from_slice(&self.data(rhs)[img * c2 * hw..(img + 1) * c2 * hw]);
        }
        let value = Tensor::from_vec(vec![n1, c1 + c2, h1, w1], data)?;
        Ok(self.derived(value, Op::ConcatChannels { lhs, rhs }, &[lhs, rhs]))
    }

    pub fn mean(&mut self, input: NodeId) -> NodeId {
        let src = &self.nodes[input.0].value;
        let m = src.data().iter().sum::<f64>() / src.numel() as f64;
        self.derived(Tensor::scalar(m), Op::Mean { input }, &[input])
    }

    pub fn sum(&mut self, input: NodeId) -> NodeId {
        let s = self.nodes[input.0].value.data().iter().sum::<f64>();
        self.derived(Tensor::scalar(s), Op::Sum { input }, &[input])
    }

    /// Smallest |input| feeding a kinked op (relu, leaky relu, abs) anywhere
    /// in the graph. Finite-difference oracles need this margin to exceed
    /// the probe step, otherwise the numeric gradient straddles the kink.
    pub fn kink_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for node in &self.nodes {
            let input = match node.op {
                Op::Activate { input, kind: Activation::Relu | Activation::LeakyRelu(_) } => input,
                Op::Abs { input } => input,
                _ => continue,
            };
            for &v in self.nodes[input.0].value.data() {
                margin = margin.min(v.abs());
            }
        }
        margin
    }

    /// Backpropagate from a scalar loss, filling `grad` on every tracked node.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.done {
            return Err(Error::usage("backward called twice on the same graph"));
        }
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.nodes[loss.0].value.data()[0].is_finite() {
            return Err(Error::numeric(format!("loss is not finite: {}", self.scalar(loss))));
        }
        self.done = true;

        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..n).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(grad) = grads[i].take() else { continue };
            self.apply_backward(i, &grad, &mut grads)?;
            if matches!(self.nodes[i].op, Op::Leaf) {
                self.nodes[i].value.set_grad(grad);
            }
        }
        Ok(())
    }

    fn accumulate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], id: NodeId, delta: Vec<f64>) {
        if !nodes[id.0].needs_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(buf) => {
                for (a, b) in buf.iter_mut().zip(&delta) {
                    *a += b;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    fn apply_backward(&mut self, i: usize, grad: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        match self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d { input, weight, bias, spec } => {
                let dims = self.value(input).dims4()?;
                let (d_in, d_w, d_b) = conv::conv2d_backward(
                    self.data(input),
                    dims,
                    self.data(weight),
                    &spec,
                    grad,
                    self.nodes[input.0].needs_grad,
                    self.nodes[weight.0].needs_grad,
                )?;
                if let Some(d) = d_in {
                    Self::accumulate(&self.nodes, grads, input, d);
                }
                if let Some(d) = d_w {
                    Self::accumulate(&self.nodes, grads, weight, d);
                }
                if let Some(d) = d_b {
                    Self::accumulate(&self.nodes, grads, bias, d);
                }
            }
            Op::ConvTranspose2d { input, weight, bias, spec } => {
                let dims = self.value(input).dims4()?;
                let (d_in, d_w, d_b) = conv::conv_transpose2d_backward(
                    self.data(input),
                    dims,
                    self.data(weight),
                    &spec,
                    grad,
                    self.nodes[input.0].needs_grad,
                    self.nodes[weight.0].needs_grad,
                )?;
                if let Some(d) = d_in {
                    Self::accumulate(&self.nodes, grads, input, d);
                }
                if let Some(d) = d_w {
                    Self::accumulate(&self.nodes, grads, weight, d);
                }
                if let Some(d) = d_b {
                    Self::accumulate(&self.nodes, grads, bias, d);
                }
            }
            Op::AvgPool2d { input, kernel, stride, padding } => {
                let dims = self.value(input).dims4()?;
                let d_in = conv::avg_pool2d_backward(dims, kernel, stride, padding, grad)?;
                Self::accumulate(&self.nodes, grads, input, d_in);
            }
            Op::Activate { input, kind } => {
                let x = self.data(input);
                let y = self.nodes[i].value.data();
                let d: Vec<f64> = grad
                    .iter()
                    .zip(x.iter().zip(y))
                    .map(|(&g, (&x, &y))| g * kind.derivative(x, y))
                    .collect();
                Self::accumulate(&self.nodes, grads, input, d);
            }
            Op::Add { lhs, rhs } => {
                Self::accumulate(&self.nodes, grads, lhs, grad.to_vec());
                Self::accumulate(&self.nodes, grads, rhs, grad.to_vec());
            }
            Op::Sub { lhs, rhs } => {
                Self::accumulate(&self.nodes, grads, lhs, grad.to_vec());
                Self::accumulate(&self.nodes, grads, rhs, grad.iter().map(|g| -g).collect());
            }
            Op::Mul { lhs, rhs } => {
                let d_l: Vec<f64> = grad.iter().zip(self.data(rhs)).map(|(&g, &b)| g * b).collect();
                let d_r: Vec<f64> = grad.iter().zip(self.data(lhs)).map(|(&g, &a)| g * a).collect();
                Self::accumulate(&self.nodes, grads, lhs, d_l);
                Self::accumulate(&self.nodes, grads, rhs, d_r);
            }
            Op::Affine { input, scale, .. } => {
                Self::accumulate(&self.nodes, grads, input, grad.iter().map(|g| g * scale).collect());
            }
            Op::Abs { input } => {
                let d: Vec<f64> = grad
                    .iter()
                    .zip(self.data(input))
                    .map(|(&g, &x)| if x >= 0.0 { g } else { -g })
                    .collect();
                Self::accumulate(&self.nodes, grads, input, d);
            }
            Op::ConcatChannels { lhs, rhs } => {
                let (n, c1, h, w) = self.value(lhs).dims4()?;
                let c2 = self.shape(rhs)[1];
                let hw = h * w;
                let mut d_l = vec![0.0; n * c1 * hw];
                let mut d_r = vec![0.0; n * c2 * hw];
                for img in 0..n {
                    let base = img * (c1 + c2) * hw;
                    d_l[img * c1 * hw..(img + 1) * c1 * hw].copy_from_slice(&grad[base..base + c1 * hw]);
                    d_r[img * c2 * hw..(img + 1) * c2 * hw]
                        .copy_from_slice(&grad[base + c1 * hw..base + (c1 + c2) * hw]);
                }
                Self::accumulate(&self.nodes, grads, lhs, d_l);
                Self::accumulate(&self.nodes, grads, rhs, d_r);
            }
            Op::Mean { input } => {
                let numel = self.nodes[input.0].value.numel();
                let g = grad[0] / numel as f64;
                Self::accumulate(&self.nodes, grads, input, vec![g; numel]);
            }
            Op::Sum { input } => {
                let numel = self.nodes[input.0].value.numel();
                Self::accumulate(&self.nodes, grads, input, vec![grad[0]; numel]);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let w = g.param(Tensor::from_vec(vec![4], vec![1.0, -2.0, 3.0, 0.5]).unwrap());
        let sq = g.mul(w, w).unwrap();
        let loss = g.sum(sq);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[2.0, -4.0, 6.0, 1.0]);
    }

    #[test]
    fn constant_loss_zero_gradient() {
        let mut g = Graph::new();
        let w = g.param(Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap());
        let zero = g.affine(w, 0.0, 5.0);
        let loss = g.mean(zero);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let w = g.param(Tensor::zeros(vec![3]));
        assert!(g.backward(w).is_err());
    }

    #[test]
    fn double_backward_rejected() {
        let mut g = Graph::new();
        let w = g.param(Tensor::scalar(2.0));
        let loss = g.mul(w, w).unwrap();
        g.backward(loss).unwrap();
        assert!(g.backward(loss).is_err());
    }

    #[test]
    fn activation_values() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(vec![3], vec![-1.0, 0.0, 2.0]).unwrap());
        let y = g.activation(x, Activation::LeakyRelu(0.2));
        assert_eq!(g.data(y), &[-0.2, 0.0, 2.0]);
        let t = g.activation(x, Activation::Tanh);
        assert_eq!(g.data(t)[1], 0.0);
    }

    #[test]
    fn concat_and_split_roundtrip() {
        let mut g = Graph::new();
        let a = g.param(Tensor::from_vec(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = g.input(Tensor::from_vec(vec![1, 1, 2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap());
        let c = g.concat_channels(a, b).unwrap();
        assert_eq!(g.shape(c), &[1, 2, 2, 2]);
        assert_eq!(g.data(c), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let loss = g.sum(c);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(a).unwrap(), &[1.0; 4]);
    }
}
