//! Layer kernels: conv2d forward/backward, ReLU, nearest upsampling, and
//! per-pixel L2 normalization. Convolutions parallelize over channels with
//! each task writing a disjoint plane, so results are bit-stable regardless
//! of worker count.

use rayon::prelude::*;

use crate::net::tensor::Tensor;

/// Epsilon added inside the square root of the normalization denominator.
pub const NORM_EPS: f32 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct ConvShape {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }
}

/// Valid output range `[lo, hi)` along one axis for a fixed kernel offset:
/// positions where `o*stride + k - pad` lands inside `[0, in_len)`.
#[inline]
fn valid_range(out_len: usize, in_len: usize, stride: usize, k: usize, pad: usize) -> (usize, usize) {
    // o*stride + k - pad >= 0  =>  o >= ceil((pad - k)/stride)
    let lo = if pad > k {
        (pad - k).div_ceil(stride)
    } else {
        0
    };
    // o*stride + k - pad <= in_len - 1  =>  o <= (in_len - 1 + pad - k)/stride
    let hi_inc = in_len as i64 - 1 + pad as i64 - k as i64;
    if hi_inc < 0 {
        return (0, 0);
    }
    let hi = ((hi_inc as usize) / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

pub fn conv_forward(x: &Tensor, w: &[f32], b: &[f32], shape: &ConvShape) -> Tensor {
    debug_assert_eq!(x.channels, shape.in_channels);
    debug_assert_eq!(w.len(), shape.weight_len());
    debug_assert_eq!(b.len(), shape.out_channels);
    let (oh, ow) = shape.out_size(x.height, x.width);
    let mut out = Tensor::zeros(shape.out_channels, oh, ow);
    let plane = oh * ow;
    let k = shape.kernel;
    let stride = shape.stride;
    let pad = shape.pad;
    let per_oc = shape.in_channels * k * k;

    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(oc, out_plane)| {
            out_plane.fill(b[oc]);
            for ic in 0..shape.in_channels {
                for ky in 0..k {
                    let (oy_lo, oy_hi) = valid_range(oh, x.height, stride, ky, pad);
                    for kx in 0..k {
                        let wv = w[oc * per_oc + (ic * k + ky) * k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (ox_lo, ox_hi) = valid_range(ow, x.width, stride, kx, pad);
                        for oy in oy_lo..oy_hi {
                            let iy = oy * stride + ky - pad;
                            let in_row = x.row(ic, iy);
                            let out_row = &mut out_plane[oy * ow..oy * ow + ow];
                            // valid_range guarantees ox*stride + kx >= pad.
                            for ox in ox_lo..ox_hi {
                                let ix = ox * stride + kx - pad;
                                out_row[ox] += wv * in_row[ix];
                            }
                        }
                    }
                }
            }
        });
    out
}

/// Gradient with respect to the convolution input.
pub fn conv_backward_input(gy: &Tensor, w: &[f32], shape: &ConvShape, in_h: usize, in_w: usize) -> Tensor {
    let (oh, ow) = shape.out_size(in_h, in_w);
    debug_assert_eq!((gy.height, gy.width), (oh, ow));
    let mut gx = Tensor::zeros(shape.in_channels, in_h, in_w);
    let plane = in_h * in_w;
    let k = shape.kernel;
    let stride = shape.stride;
    let pad = shape.pad;
    let per_oc = shape.in_channels * k * k;

    gx.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(ic, gx_plane)| {
            for oc in 0..shape.out_channels {
                for ky in 0..k {
                    let (oy_lo, oy_hi) = valid_range(oh, in_h, stride, ky, pad);
                    for kx in 0..k {
                        let wv = w[oc * per_oc + (ic * k + ky) * k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (ox_lo, ox_hi) = valid_range(ow, in_w, stride, kx, pad);
                        for oy in oy_lo..oy_hi {
                            let iy = oy * stride + ky - pad;
                            let gy_row = gy.row(oc, oy);
                            let gx_row = &mut gx_plane[iy * in_w..iy * in_w + in_w];
                            for ox in ox_lo..ox_hi {
                                let ix = ox * stride + kx - pad;
                                gx_row[ix] += wv * gy_row[ox];
                            }
                        }
                    }
                }
            }
        });
    gx
}

/// Gradients with respect to weights and bias.
pub fn conv_backward_params(x: &Tensor, gy: &Tensor, shape: &ConvShape) -> (Vec<f32>, Vec<f32>) {
    let (oh, ow) = shape.out_size(x.height, x.width);
    debug_assert_eq!((gy.height, gy.width), (oh, ow));
    let k = shape.kernel;
    let stride = shape.stride;
    let pad = shape.pad;
    let per_oc = shape.in_channels * k * k;

    let mut gw = vec![0.0f32; shape.weight_len()];
    let mut gb = vec![0.0f32; shape.out_channels];

    gw.par_chunks_mut(per_oc)
        .zip(gb.par_iter_mut())
        .enumerate()
        .for_each(|(oc, (gw_oc, gb_oc))| {
            let gy_plane = gy.channel(oc);
            *gb_oc = gy_plane.iter().sum();
            for ic in 0..shape.in_channels {
                for ky in 0..k {
                    let (oy_lo, oy_hi) = valid_range(oh, x.height, stride, ky, pad);
                    for kx in 0..k {
                        let (ox_lo, ox_hi) = valid_range(ow, x.width, stride, kx, pad);
                        let mut acc = 0.0f32;
                        for oy in oy_lo..oy_hi {
                            let iy = oy * stride + ky - pad;
                            let x_row = x.row(ic, iy);
                            let gy_row = &gy_plane[oy * ow..oy * ow + ow];
                            for ox in ox_lo..ox_hi {
                                acc += gy_row[ox] * x_row[ox * stride + kx - pad];
                            }
                        }
                        gw_oc[(ic * k + ky) * k + kx] = acc;
                    }
                }
            }
        });
    (gw, gb)
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    y
}

pub fn relu_backward(x: &Tensor, gy: &Tensor) -> Tensor {
    let mut gx = gy.clone();
    for (g, &v) in gx.data_mut().iter_mut().zip(x.data()) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
    gx
}

pub fn upsample2_forward(x: &Tensor) -> Tensor {
    let mut y = Tensor::zeros(x.channels, x.height * 2, x.width * 2);
    for c in 0..x.channels {
        for iy in 0..x.height {
            for ix in 0..x.width {
                let v = x.at(c, iy, ix);
                *y.at_mut(c, 2 * iy, 2 * ix) = v;
                *y.at_mut(c, 2 * iy, 2 * ix + 1) = v;
                *y.at_mut(c, 2 * iy + 1, 2 * ix) = v;
                *y.at_mut(c, 2 * iy + 1, 2 * ix + 1) = v;
            }
        }
    }
    y
}

pub fn upsample2_backward(gy: &Tensor) -> Tensor {
    let (h, w) = (gy.height / 2, gy.width / 2);
    let mut gx = Tensor::zeros(gy.channels, h, w);
    for c in 0..gy.channels {
        for iy in 0..h {
            for ix in 0..w {
                *gx.at_mut(c, iy, ix) = gy.at(c, 2 * iy, 2 * ix)
                    + gy.at(c, 2 * iy, 2 * ix + 1)
                    + gy.at(c, 2 * iy + 1, 2 * ix)
                    + gy.at(c, 2 * iy + 1, 2 * ix + 1);
            }
        }
    }
    gx
}

/// Per-pixel L2 normalization across channels: `y = v / sqrt(|v|^2 + eps)`.
pub fn l2norm_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    let plane = x.height * x.width;
    for p in 0..plane {
        let mut sq = 0.0f32;
        for c in 0..x.channels {
            let v = x.data()[c * plane + p];
            sq += v * v;
        }
        let inv = 1.0 / (sq + NORM_EPS).sqrt();
        for c in 0..x.channels {
            y.data_mut()[c * plane + p] = x.data()[c * plane + p] * inv;
        }
    }
    y
}

/// Backward of [`l2norm_forward`]: `gx = g/n - v (g.v) / n^3`.
pub fn l2norm_backward(x: &Tensor, gy: &Tensor) -> Tensor {
    let mut gx = Tensor::zeros(x.channels, x.height, x.width);
    let plane = x.height * x.width;
    for p in 0..plane {
        let mut sq = 0.0f64;
        let mut dot = 0.0f64;
        for c in 0..x.channels {
            let v = x.data()[c * plane + p] as f64;
            let g = gy.data()[c * plane + p] as f64;
            sq += v * v;
            dot += v * g;
        }
        let n2 = sq + NORM_EPS as f64;
        let n = n2.sqrt();
        let n3 = n2 * n;
        for c in 0..x.channels {
            let v = x.data()[c * plane + p] as f64;
            let g = gy.data()[c * plane + p] as f64;
            gx.data_mut()[c * plane + p] = (g / n - v * dot / n3) as f32;
        }
    }
    gx
}
