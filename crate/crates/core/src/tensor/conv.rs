//! Raw convolution, transposed-convolution, and average-pooling kernels.
//!
//! These operate on flat row-major buffers in [N,C,H,W] layout. Parallelism
//! is over disjoint output planes only, so results are bit-identical
//! regardless of thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Geometry of one convolutional layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvSpec { in_channels, out_channels, kernel, stride, padding }
    }

    /// Output spatial extent of a convolution: floor((H + 2p - k)/s) + 1.
    pub fn out_extent(&self, extent: usize) -> Result<usize> {
        let padded = extent + 2 * self.padding;
        if self.stride == 0 || self.kernel == 0 {
            return Err(Error::config(format!("kernel {} / stride {} must be positive", self.kernel, self.stride)));
        }
        if padded < self.kernel {
            return Err(Error::shape(
                "conv",
                format!("extent {} with padding {} is smaller than kernel {}", extent, self.padding, self.kernel),
            ));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    /// Output spatial extent of the transposed convolution: (H-1)*s - 2p + k.
    pub fn transpose_out_extent(&self, extent: usize) -> Result<usize> {
        let grown = (extent - 1) * self.stride + self.kernel;
        if grown < 2 * self.padding + 1 {
            return Err(Error::shape(
                "conv_transpose",
                format!("extent {} with k={} s={} p={} collapses to nothing", extent, self.kernel, self.stride, self.padding),
            ));
        }
        Ok(grown - 2 * self.padding)
    }

    /// Weight element count for conv2d layout [c_out, c_in, k, k].
    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }
}

/// Range of output columns `ow` for which `ow*stride + kx - pad` lands in `[0, w)`.
#[inline]
fn col_bounds(w: usize, out_w: usize, stride: usize, pad: usize, kx: usize) -> (usize, usize) {
    // smallest ow with ow*stride + kx >= pad
    let lo = if kx >= pad { 0 } else { (pad - kx).div_ceil(stride) };
    // largest ow with ow*stride + kx - pad <= w - 1
    let hi = if w + pad < kx + 1 {
        0
    } else {
        (((w + pad - kx - 1) / stride) + 1).min(out_w)
    };
    (lo.min(hi), hi)
}

/// Cross-correlation forward pass.
///
/// input [n, c_in, h, w], weight [c_out, c_in, k, k], bias [c_out].
pub fn conv2d_forward(
    input: &[f64],
    (n, c_in, h, w): (usize, usize, usize, usize),
    weight: &[f64],
    bias: &[f64],
    spec: &ConvSpec,
) -> Result<Vec<f64>> {
    let out_h = spec.out_extent(h)?;
    let out_w = spec.out_extent(w)?;
    let (k, s, p) = (spec.kernel, spec.stride, spec.padding);
    let (hw, out_hw, kk) = (h * w, out_h * out_w, k * k);
    let mut out = vec![0.0; n * spec.out_channels * out_hw];

    out.par_chunks_mut(out_hw).enumerate().for_each(|(plane, out_plane)| {
        let img = plane / spec.out_channels;
        let co = plane % spec.out_channels;
        out_plane.fill(bias[co]);
        for ci in 0..c_in {
            let in_plane = &input[(img * c_in + ci) * hw..][..hw];
            let w_base = &weight[(co * c_in + ci) * kk..][..kk];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = w_base[ky * k + kx];
                    let (lo, hi) = col_bounds(w, out_w, s, p, kx);
                    for oh in 0..out_h {
                        let ih = (oh * s + ky) as isize - p as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        let in_row = &in_plane[ih as usize * w..][..w];
                        let out_row = &mut out_plane[oh * out_w..][..out_w];
                        for ow in lo..hi {
                            out_row[ow] += wv * in_row[ow * s + kx - p];
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Gradients of conv2d w.r.t. input, weight, and bias.
pub fn conv2d_backward(
    input: &[f64],
    (n, c_in, h, w): (usize, usize, usize, usize),
    weight: &[f64],
    spec: &ConvSpec,
    grad_out: &[f64],
    need_input: bool,
    need_weight: bool,
) -> Result<(Option<Vec<f64>>, Option<Vec<f64>>, Option<Vec<f64>>)> {
    let out_h = spec.out_extent(h)?;
    let out_w = spec.out_extent(w)?;
    let (k, s, p) = (spec.kernel, spec.stride, spec.padding);
    let (c_out, hw, out_hw, kk) = (spec.out_channels, h * w, out_h * out_w, k * k);

    let d_input = need_input.then(|| {
        let mut d_in = vec![0.0; n * c_in * hw];
        d_in.par_chunks_mut(hw).enumerate().for_each(|(plane, d_plane)| {
            let img = plane / c_in;
            let ci = plane % c_in;
            for co in 0..c_out {
                let g_plane = &grad_out[(img * c_out + co) * out_hw..][..out_hw];
                let w_base = &weight[(co * c_in + ci) * kk..][..kk];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = w_base[ky * k + kx];
                        let (lo, hi) = col_bounds(w, out_w, s, p, kx);
                        for oh in 0..out_h {
                            let ih = (oh * s + ky) as isize - p as isize;
                            if ih < 0 || ih >= h as isize {
                                continue;
                            }
                            let d_row = &mut d_plane[ih as usize * w..][..w];
                            let g_row = &g_plane[oh * out_w..][..out_w];
                            for ow in lo..hi {
                                d_row[ow * s + kx - p] += wv * g_row[ow];
                            }
                        }
                    }
                }
            }
        });
        d_in
    });

    let d_weight = need_weight.then(|| {
        let mut d_w = vec![0.0; c_out * c_in * kk];
        d_w.par_chunks_mut(kk).enumerate().for_each(|(pair, d_base)| {
            let co = pair / c_in;
            let ci = pair % c_in;
            for img in 0..n {
                let in_plane = &input[(img * c_in + ci) * hw..][..hw];
                let g_plane = &grad_out[(img * c_out + co) * out_hw..][..out_hw];
                for ky in 0..k {
                    for kx in 0..k {
                        let (lo, hi) = col_bounds(w, out_w, s, p, kx);
                        let mut acc = 0.0;
                        for oh in 0..out_h {
                            let ih = (oh * s + ky) as isize - p as isize;
                            if ih < 0 || ih >= h as isize {
                                continue;
                            }
                            let in_row = &in_plane[ih as usize * w..][..w];
                            let g_row = &g_plane[oh * out_w..][..out_w];
                            for ow in lo..hi {
                                acc += g_row[ow] * in_row[ow * s + kx - p];
                            }
                        }
                        d_base[ky * k + kx] += acc;
                    }
                }
            }
        });
        d_w
    });

    let d_bias = {
        let mut d_b = vec![0.0; c_out];
        for (co, slot) in d_b.iter_mut().enumerate() {
            let mut acc = 0.0;
            for img in 0..n {
                let g_plane = &grad_out[(img * c_out + co) * out_hw..][..out_hw];
                acc += g_plane.iter().sum::<f64>();
            }
            *slot = acc;
        }
        Some(d_b)
    };

    Ok((d_input, d_weight, d_bias))
}

/// Transposed convolution (adjoint of conv2d's linear map, plus bias).
///
/// input [n, c_in, h, w], weight [c_in, c_out, k, k], bias [c_out].
pub fn conv_transpose2d_forward(
    input: &[f64],
    (n, c_in, h, w): (usize, usize, usize, usize),
    weight: &[f64],
    bias: &[f64],
    spec: &ConvSpec,
) -> Result<Vec<f64>> {
    let out_h = spec.transpose_out_extent(h)?;
    let out_w = spec.transpose_out_extent(w)?;
    let (k, s, p) = (spec.kernel, spec.stride, spec.padding);
    let (c_out, hw, out_hw, kk) = (spec.out_channels, h * w, out_h * out_w, k * k);
    let mut out = vec![0.0; n * c_out * out_hw];

    out.par_chunks_mut(out_hw).enumerate().for_each(|(plane, out_plane)| {
        let img = plane / c_out;
        let co = plane % c_out;
        out_plane.fill(bias[co]);
        for ci in 0..c_in {
            let in_plane = &input[(img * c_in + ci) * hw..][..hw];
            let w_base = &weight[(ci * c_out + co) * kk..][..kk];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = w_base[ky * k + kx];
                    let (lo, hi) = col_bounds(out_w, w, s, p, kx);
                    for ih in 0..h {
                        let oy = (ih * s + ky) as isize - p as isize;
                        if oy < 0 || oy >= out_h as isize {
                            continue;
                        }
                        let out_row = &mut out_plane[oy as usize * out_w..][..out_w];
                        let in_row = &in_plane[ih * w..][..w];
                        for iw in lo..hi {
                            out_row[iw * s + kx - p] += wv * in_row[iw];
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Gradients of conv_transpose2d w.r.t. input, weight, and bias.
pub fn conv_transpose2d_backward(
    input: &[f64],
    (n, c_in, h, w): (usize, usize, usize, usize),
    weight: &[f64],
    spec: &ConvSpec,
    grad_out: &[f64],
    need_input: bool,
    need_weight: bool,
) -> Result<(Option<Vec<f64>>, Option<Vec<f64>>, Option<Vec<f64>>)> {
    let out_h = spec.transpose_out_extent(h)?;
    let out_w = spec.transpose_out_extent(w)?;
    let (k, s, p) = (spec.kernel, spec.stride, spec.padding);
    let (c_out, hw, out_hw, kk) = (spec.out_channels, h * w, out_h * out_w, k * k);

    let d_input = need_input.then(|| {
        let mut d_in = vec![0.0; n * c_in * hw];
        d_in.par_chunks_mut(hw).enumerate().for_each(|(plane, d_plane)| {
            let img = plane / c_in;
            let ci = plane % c_in;
            for co in 0..c_out {
                let g_plane = &grad_out[(img * c_out + co) * out_hw..][..out_hw];
                let w_base = &weight[(ci * c_out + co) * kk..][..kk];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = w_base[ky * k + kx];
                        let (lo, hi) = col_bounds(out_w, w, s, p, kx);
                        for ih in 0..h {
                            let oy = (ih * s + ky) as isize - p as isize;
                            if oy < 0 || oy >= out_h as isize {
                                continue;
                            }
                            let g_row = &g_plane[oy as usize * out_w..][..out_w];
                            let d_row = &mut d_plane[ih * w..][..w];
                            for iw in lo..hi {
                                d_row[iw] += wv * g_row[iw * s + kx - p];
                            }
                        }
                    }
                }
            }
        });
        d_in
    });

    let d_weight = need_weight.then(|| {
        let mut d_w = vec![0.0; c_in * c_out * kk];
        d_w.par_chunks_mut(kk).enumerate().for_each(|(pair, d_base)| {
            let ci = pair / c_out;
            let co = pair % c_out;
            for img in 0..n {
                let in_plane = &input[(img * c_in + ci) * hw..][..hw];
                let g_plane = &grad_out[(img * c_out + co) * out_hw..][..out_hw];
                for ky in 0..k {
                    for kx in 0..k {
                        let (lo, hi) = col_bounds(out_w, w, s, p, kx);
                        let mut acc = 0.0;
                        for ih in 0..h {
                            let oy = (ih * s + ky) as isize - p as isize;
                            if oy < 0 || oy >= out_h as isize {
                                continue;
                            }
                            let in_row = &in_plane[ih * w..][..w];
                            let g_row = &g_plane[oy as usize * out_w..][..out_w];
                            for iw in lo..hi {
                                acc += in_row[iw] * g_row[iw * s + kx - p];
                            }
                        }
                        d_base[ky * k + kx] += acc;
                    }
                }
            }
        });
        d_w
    });

    let d_bias = {
        let mut d_b = vec![0.0; c_out];
        for (co, slot) in d_b.iter_mut().enumerate() {
            let mut acc = 0.0;
            for img in 0..n {
                acc += grad_out[(img * c_out + co) * out_hw..][..out_hw].iter().sum::<f64>();
            }
            *slot = acc;
        }
        Some(d_b)
    };

    Ok((d_input, d_weight, d_bias))
}

/// Mean over k x k windows with zero padding counted in the denominator
/// (divisor is always k^2), so pooled masks attenuate toward borders.
pub fn avg_pool2d_forward(
    input: &[f64],
    (n, c, h, w): (usize, usize, usize, usize),
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<Vec<f64>> {
    let spec = ConvSpec::new(c, c, kernel, stride, padding);
    let out_h = spec.out_extent(h)?;
    let out_w = spec.out_extent(w)?;
    let (hw, out_hw) = (h * w, out_h * out_w);
    let inv = 1.0 / (kernel * kernel) as f64;
    let mut out = vec![0.0; n * c * out_hw];

    out.par_chunks_mut(out_hw).enumerate().for_each(|(plane, out_plane)| {
        let in_plane = &input[plane * hw..][..hw];
        for oh in 0..out_h {
            for ow in 0..out_w {
                let mut acc = 0.0;
                for ky in 0..kernel {
                    let ih = (oh * stride + ky) as isize - padding as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let in_row = &in_plane[ih as usize * w..][..w];
                    for kx in 0..kernel {
                        let iw = (ow * stride + kx) as isize - padding as isize;
                        if iw < 0 || iw >= w as isize {
                            continue;
                        }
                        acc += in_row[iw as usize];
                    }
                }
                out_plane[oh * out_w + ow] = acc * inv;
            }
        }
    });
    Ok(out)
}

/// Gradient of avg_pool2d w.r.t. its input.
pub fn avg_pool2d_backward(
    (n, c, h, w): (usize, usize, usize, usize),
    kernel: usize,
    stride: usize,
    padding: usize,
    grad_out: &[f64],
) -> Result<Vec<f64>> {
    let spec = ConvSpec::new(c, c, kernel, stride, padding);
    let out_h = spec.out_extent(h)?;
    let out_w = spec.out_extent(w)?;
    let (hw, out_hw) = (h * w, out_h * out_w);
    let inv = 1.0 / (kernel * kernel) as f64;
    let mut d_in = vec![0.0; n * c * hw];

    d_in.par_chunks_mut(hw).enumerate().for_each(|(plane, d_plane)| {
        let g_plane = &grad_out[plane * out_hw..][..out_hw];
        for oh in 0..out_h {
            for ow in 0..out_w {
                let g = g_plane[oh * out_w + ow] * inv;
                for ky in 0..kernel {
                    let ih = (oh * stride + ky) as isize - padding as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    for kx in 0..kernel {
                        let iw = (ow * stride + kx) as isize - padding as isize;
                        if iw < 0 || iw >= w as isize {
                            continue;
                        }
                        d_plane[ih as usize * w + iw as usize] += g;
                    }
                }
            }
        }
    });
    Ok(d_in)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_all_ones_3x3() {
        // 1x1x3x3 ones, k=3 s=1 p=0, unit weights -> single output 9.0
        let spec = ConvSpec::new(1, 1, 3, 1, 0);
        let out = conv2d_forward(&[1.0; 9], (1, 1, 3, 3), &[1.0; 9], &[0.0], &spec).unwrap();
        assert_eq!(out, vec![9.0]);
    }

    #[test]
    fn conv_zero_input_gives_bias() {
        let spec = ConvSpec::new(2, 3, 3, 1, 1);
        let out = conv2d_forward(&[0.0; 2 * 16], (1, 2, 4, 4), &[0.5; 3 * 2 * 9], &[1.0, 2.0, 3.0], &spec).unwrap();
        for co in 0..3 {
            for v in &out[co * 16..(co + 1) * 16] {
                assert_eq!(*v, (co + 1) as f64);
            }
        }
    }

    #[test]
    fn conv_output_extent() {
        let spec = ConvSpec::new(2, 4, 4, 2, 1);
        assert_eq!(spec.out_extent(6).unwrap(), 3);
        assert_eq!(spec.transpose_out_extent(3).unwrap(), 6);
        assert!(ConvSpec::new(1, 1, 5, 1, 0).out_extent(3).is_err());
    }

    #[test]
    fn transpose_broadcast_single_pixel() {
        // 1x1x1x1 value a, k=2 s=2 p=0, unit weights -> 2x2 of a
        let spec = ConvSpec::new(1, 1, 2, 2, 0);
        let out = conv_transpose2d_forward(&[3.5], (1, 1, 1, 1), &[1.0; 4], &[0.0], &spec).unwrap();
        assert_eq!(out, vec![3.5; 4]);
    }

    #[test]
    fn avgpool_padded_ones() {
        // all-ones 4x4, k=4 s=2 p=1 -> every 2x2 output is 9/16
        let out = avg_pool2d_forward(&[1.0; 16], (1, 1, 4, 4), 4, 2, 1).unwrap();
        assert_eq!(out.len(), 4);
        for v in out {
            assert!((v - 9.0 / 16.0).abs() < 1e-15);
        }
    }

    #[test]
    fn avgpool_unpadded_ones_stays_ones() {
        let out = avg_pool2d_forward(&[1.0; 16], (1, 1, 4, 4), 2, 2, 0).unwrap();
        assert_eq!(out, vec![1.0; 4]);
    }

    #[test]
    fn avgpool_zeros() {
        let out = avg_pool2d_forward(&[0.0; 16], (1, 1, 4, 4), 4, 2, 1).unwrap();
        assert_eq!(out, vec![0.0; 4]);
    }

    #[test]
    fn adjoint_identity() {
        // <conv(u), v> == <u, conv_t(v)> with shared weights, zero bias
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let spec = ConvSpec::new(2, 3, 4, 2, 1);
        let (h, w) = (6, 6);
        let u: Vec<f64> = (0..2 * h * w).map(|_| rng.random::<f64>() - 0.5).collect();
        let weight: Vec<f64> = (0..spec.weight_len()).map(|_| rng.random::<f64>() - 0.5).collect();
        let au = conv2d_forward(&u, (1, 2, h, w), &weight, &[0.0; 3], &spec).unwrap();
        let v: Vec<f64> = (0..au.len()).map(|_| rng.random::<f64>() - 0.5).collect();

        // forward weight layout is [co, ci, k, k]; reinterpret in transpose
        // layout [c_in=co, c_out=ci, k, k] by swapping the channel counts.
        let t_spec = ConvSpec::new(3, 2, 4, 2, 1);
        let atv = conv_transpose2d_forward(&v, (1, 3, 3, 3), &weight, &[0.0; 2], &t_spec).unwrap();

        let lhs: f64 = au.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&atv).map(|(a, b)| a * b).sum();
        assert!(
            (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0),
            "adjoint violated: {lhs} vs {rhs}"
        );
    }
}
