//! Numeric kernels behind the fusion blocks.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{FusionError, Tensor};

/// Epsilon added to the channel norm in [`l2_normalize`].
pub const L2_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// `kernel / 2` zeros on every side; output size is `ceil(in / stride)`.
    Same,
    Valid,
}

/// 2-D convolution weights, `out x in x k x k`, plus one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        assert!(kernel % 2 == 1, "kernel size must be odd");
        assert!(stride >= 1, "stride must be positive");
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weights: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn random<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let mut layer = Self::zeros(in_channels, out_channels, kernel, stride);
        let bound = 1.0 / libm::sqrt((in_channels * kernel * kernel) as f64);
        for w in &mut layer.weights {
            *w = rng.random_range(-bound..=bound);
        }
        layer
    }

    pub fn from_parts(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, FusionError> {
        if kernel % 2 == 0 || stride == 0 {
            return Err(FusionError::InvalidLayer("kernel must be odd and stride positive"));
        }
        if weights.len() != out_channels * in_channels * kernel * kernel
            || bias.len() != out_channels
        {
            return Err(FusionError::InvalidLayer("weight or bias length does not match shape"));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weights,
            bias,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn weight_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * self.kernel + ky) * self.kernel + kx
    }
}

/// Cross-correlation with bias.
pub fn conv2d(input: &Tensor, layer: &ConvLayer, padding: Padding) -> Result<Tensor, FusionError> {
    if input.channels() != layer.in_channels {
        return Err(FusionError::ChannelMismatch {
            expected: layer.in_channels,
            found: input.channels(),
        });
    }
    let k = layer.kernel;
    let s = layer.stride;
    let pad = match padding {
        Padding::Same => k / 2,
        Padding::Valid => 0,
    };
    let (h, w) = (input.height(), input.width());
    if h + 2 * pad < k || w + 2 * pad < k {
        return Err(FusionError::InvalidLayer("kernel larger than padded input"));
    }
    let out_h = (h + 2 * pad - k) / s + 1;
    let out_w = (w + 2 * pad - k) / s + 1;
    let mut out = Tensor::zeros(layer.out_channels, out_h, out_w);

    for o in 0..layer.out_channels {
        let plane = out.plane_mut(o);
        plane.fill(layer.bias[o]);
        for i in 0..layer.in_channels {
            let src = input.plane(i);
            for ky in 0..k {
                for kx in 0..k {
                    let wv = layer.weights[layer.weight_index(o, i, ky, kx)];
                    if wv == 0.0 {
                        continue;
                    }
                    for oy in 0..out_h {
                        let iy = (oy * s + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_row = &src[iy as usize * w..(iy as usize + 1) * w];
                        let dst_row = &mut plane[oy * out_w..(oy + 1) * out_w];
                        for (ox, d) in dst_row.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                *d += wv * src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Divides every spatial location's channel vector by its Euclidean norm
/// (plus [`L2_EPSILON`]) and multiplies channel `c` by `scale[c]`.
pub fn l2_normalize(input: &Tensor, scale: &[f64]) -> Result<Tensor, FusionError> {
    if scale.len() != input.channels() {
        return Err(FusionError::ChannelMismatch {
            expected: input.channels(),
            found: scale.len(),
        });
    }
    let n = input.plane_len();
    let mut norms = vec![0.0; n];
    for c in 0..input.channels() {
        for (acc, &v) in norms.iter_mut().zip(input.plane(c)) {
            *acc += v * v;
        }
    }
    for v in &mut norms {
        *v = libm::sqrt(*v) + L2_EPSILON;
    }
    let mut out = input.clone();
    for (c, &sc) in scale.iter().enumerate() {
        for (v, &norm) in out.plane_mut(c).iter_mut().zip(&norms) {
            *v = *v / norm * sc;
        }
    }
    Ok(out)
}

/// Bilinear upsampling by `factor` (2 or 4).
///
/// Numerically this is the transposed convolution with the fixed
/// `2 * factor` bilinear kernel over an edge-replicated input: output pixel
/// `o` samples source coordinate `(o + 0.5) / factor - 0.5`. Each output is
/// computed as `a + t * (b - a)`, which reproduces constant inputs exactly.
pub fn upsample(input: &Tensor, factor: usize) -> Result<Tensor, FusionError> {
    if factor != 2 && factor != 4 {
        return Err(FusionError::UnsupportedFactor(factor));
    }
    let (c, h, w) = input.shape();
    let (oh, ow) = (h * factor, w * factor);
    let taps = |out_len: usize, in_len: usize| -> Vec<(usize, usize, f64)> {
        (0..out_len)
            .map(|o| {
                let src = (o as f64 + 0.5) / factor as f64 - 0.5;
                let base = libm::floor(src);
                let t = src - base;
                let clamp = |i: f64| (i.max(0.0) as usize).min(in_len - 1);
                (clamp(base), clamp(base + 1.0), t)
            })
            .collect()
    };
    let xt = taps(ow, w);
    let yt = taps(oh, h);

    let mut out = Tensor::zeros(c, oh, ow);
    let mut rows = vec![0.0; h * ow];
    for ch in 0..c {
        let src = input.plane(ch);
        for y in 0..h {
            let line = &src[y * w..(y + 1) * w];
            for (ox, &(a, b, t)) in xt.iter().enumerate() {
                rows[y * ow + ox] = line[a] + t * (line[b] - line[a]);
            }
        }
        let dst = out.plane_mut(ch);
        for (oy, &(a, b, t)) in yt.iter().enumerate() {
            for ox in 0..ow {
                let va = rows[a * ow + ox];
                let vb = rows[b * ow + ox];
                dst[oy * ow + ox] = va + t * (vb - va);
            }
        }
    }
    Ok(out)
}

/// Channel concatenation followed by a 1x1 convolution.
pub fn nin_fuse(a: &Tensor, b: &Tensor, block: &ConvLayer) -> Result<Tensor, FusionError> {
    if block.kernel != 1 || block.stride != 1 {
        return Err(FusionError::InvalidLayer("fusion block must be a 1x1, stride-1 convolution"));
    }
    let stacked = Tensor::concat_channels(a, b)?;
    conv2d(&stacked, block, Padding::Valid)
}

/// Extends a 3-channel first layer to 6 channels by duplicating its kernels
/// over both 3-channel halves. The bias is unchanged.
pub fn clone_input_conv(layer: &ConvLayer) -> Result<ConvLayer, FusionError> {
    if layer.in_channels != 3 {
        return Err(FusionError::ChannelMismatch {
            expected: 3,
            found: layer.in_channels,
        });
    }
    let kk = layer.kernel * layer.kernel;
    let mut weights = Vec::with_capacity(layer.weights.len() * 2);
    for o in 0..layer.out_channels {
        let own = &layer.weights[o * 3 * kk..(o + 1) * 3 * kk];
        weights.extend_from_slice(own);
        weights.extend_from_slice(own);
    }
    Ok(ConvLayer {
        in_channels: 6,
        out_channels: layer.out_channels,
        kernel: layer.kernel,
        stride: layer.stride,
        weights,
        bias: layer.bias.clone(),
    })
}
