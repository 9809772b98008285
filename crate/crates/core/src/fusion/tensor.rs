use alloc::vec;
use alloc::vec::Vec;

use super::FusionError;

/// Rank-3 array in channel-major (`C x H x W`) layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self, FusionError> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(FusionError::EmptyTensor);
        }
        if data.len() != channels * height * width {
            return Err(FusionError::DataLength {
                expected: channels * height * width,
                found: data.len(),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Stacks `a` and `b` along the channel axis.
    pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor, FusionError> {
        if (a.height, a.width) != (b.height, b.width) {
            return Err(FusionError::SpatialMismatch {
                left: (a.height, a.width),
                right: (b.height, b.width),
            });
        }
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Ok(Tensor {
            channels: a.channels + b.channels,
            height: a.height,
            width: a.width,
            data,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, FusionError> {
        if self.shape() != other.shape() {
            return Err(FusionError::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(self.with_data(data))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn relu_in_place(&mut self) {
        for v in &mut self.data {
            if !(*v > 0.0) {
                *v = 0.0;
            }
        }
    }

    /// Repeats a single-channel tensor `n` times along the channel axis.
    pub fn repeat_channels(&self, n: usize) -> Tensor {
        let mut data = Vec::with_capacity(self.data.len() * n);
        for _ in 0..n {
            data.extend_from_slice(&self.data);
        }
        Tensor {
            channels: self.channels * n,
            height: self.height,
            width: self.width,
            data,
        }
    }

    fn with_data(&self, data: Vec<f64>) -> Tensor {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }
}
