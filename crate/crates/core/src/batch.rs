//! Image and latent batches: the currency passed between modules.

use crate::error::{ensure, Error, Result};
use crate::nn::{Real, Tensor};

/// Canonical image side length.
pub const SIDE: usize = 32;
/// Canonical channel count.
pub const CHANNELS: usize = 3;

/// A batch of images stored channels-last (`N x H x W x C`), `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f32>,
}

impl ImageBatch {
    pub fn new(n: usize, h: usize, w: usize, c: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n * h * w * c {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{h}x{w}x{c} = {} values", n * h * w * c),
                got: format!("{} values", data.len()),
            });
        }
        Ok(Self { n, h, w, c, data })
    }

    /// An empty canonical batch.
    pub fn empty() -> Self {
        Self { n: 0, h: SIDE, w: SIDE, c: CHANNELS, data: Vec::new() }
    }

    pub fn filled(n: usize, value: f32) -> Self {
        Self { n, h: SIDE, w: SIDE, c: CHANNELS, data: vec![value; n * SIDE * SIDE * CHANNELS] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `(N, H, W, C)`
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.h, self.w, self.c)
    }

    pub fn sample_len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let s = self.sample_len();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f32] {
        let s = self.sample_len();
        &mut self.data[i * s..(i + 1) * s]
    }

    pub fn is_canonical(&self) -> bool {
        self.h == SIDE && self.w == SIDE && self.c == CHANNELS
    }

    /// Checks the canonical shape and that every value is finite and in [0, 1].
    pub fn validate_canonical(&self) -> Result<()> {
        if !self.is_canonical() {
            return Err(Error::ShapeMismatch {
                expected: format!("Nx{SIDE}x{SIDE}x{CHANNELS}"),
                got: format!("{}x{}x{}x{}", self.n, self.h, self.w, self.c),
            });
        }
        if let Some((i, v)) = self.data.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "pixel {i} of sample {} is {v}, outside [0, 1]",
                i / self.sample_len()
            )));
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &ImageBatch) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.shape()),
                got: format!("{:?}", other.shape()),
            });
        }
        Ok(())
    }

    /// Samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> ImageBatch {
        let s = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * s);
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        ImageBatch { n: indices.len(), h: self.h, w: self.w, c: self.c, data }
    }

    pub fn slice(&self, start: usize, end: usize) -> ImageBatch {
        let s = self.sample_len();
        ImageBatch { n: end - start, h: self.h, w: self.w, c: self.c, data: self.data[start * s..end * s].to_vec() }
    }

    pub fn concat(parts: &[&ImageBatch]) -> Result<ImageBatch> {
        let Some(first) = parts.iter().find(|p| !p.is_empty()) else {
            return Ok(parts.first().map(|p| (*p).clone()).unwrap_or_else(ImageBatch::empty));
        };
        let mut data = Vec::new();
        let mut n = 0;
        for p in parts.iter().filter(|p| !p.is_empty()) {
            ensure!(
                (p.h, p.w, p.c) == (first.h, first.w, first.c),
                "cannot concatenate {}x{}x{} with {}x{}x{} images",
                p.h,
                p.w,
                p.c,
                first.h,
                first.w,
                first.c
            );
            data.extend_from_slice(&p.data);
            n += p.n;
        }
        Ok(ImageBatch { n, h: first.h, w: first.w, c: first.c, data })
    }

    /// Samples `[start, end)` as a channel-major engine tensor.
    pub fn to_tensor<T: Real>(&self, start: usize, end: usize) -> Tensor<T> {
        let (h, w, c) = (self.h, self.w, self.c);
        let m = end - start;
        let plane = h * w;
        let mut out = vec![T::zero(); c * m * plane];
        for (k, i) in (start..end).enumerate() {
            let src = self.sample(i);
            for p in 0..plane {
                for ch in 0..c {
                    out[(ch * m + k) * plane + p] = T::from_f32(src[p * c + ch]).unwrap();
                }
            }
        }
        Tensor::from_vec([c, m, h, w], out)
    }

    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> ImageBatch {
        let [c, n, h, w] = t.shape;
        let plane = h * w;
        let mut data = vec![0f32; n * plane * c];
        for ch in 0..c {
            for k in 0..n {
                let src = &t.data[(ch * n + k) * plane..(ch * n + k + 1) * plane];
                for (p, v) in src.iter().enumerate() {
                    data[(k * plane + p) * c + ch] = v.to_f32().unwrap();
                }
            }
        }
        ImageBatch { n, h, w, c, data }
    }

    /// Mean absolute difference per sample.
    pub fn per_sample_mae(&self, other: &ImageBatch) -> Result<Vec<f64>> {
        self.same_shape(other)?;
        let s = self.sample_len();
        Ok((0..self.n)
            .map(|i| {
                let a = &self.data[i * s..(i + 1) * s];
                let b = &other.data[i * s..(i + 1) * s];
                a.iter().zip(b).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / s as f64
            })
            .collect())
    }
}

/// Latent activations, row-major `N x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    pub n: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl LatentBatch {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn select(&self, indices: &[usize]) -> LatentBatch {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        LatentBatch { n: indices.len(), dim: self.dim, data }
    }
}
