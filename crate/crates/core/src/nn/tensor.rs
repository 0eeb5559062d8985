use super::Real;

/// Dense activation tensor in channel-major `(C, N, H, W)` layout.
///
/// Channel-major storage lets a whole minibatch go through a convolution as
/// a single matrix product. Fully-connected activations use `(F, N, 1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: [usize; 4],
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self { shape, data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor shape/data mismatch");
        Self { shape, data }
    }

    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    pub fn batch(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    /// Pixels per sample per channel.
    pub fn plane(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of features per sample (`C * H * W`).
    pub fn features(&self) -> usize {
        self.shape[0] * self.shape[2] * self.shape[3]
    }

    /// Row-major `(N, C*H*W)` copy, features ordered `(c, h, w)`.
    pub fn to_rows(&self) -> Vec<T> {
        let [c, n, _, _] = self.shape;
        let p = self.plane();
        let f = self.features();
        let mut out = vec![T::zero(); n * f];
        for ci in 0..c {
            for ni in 0..n {
                let src = &self.data[(ci * n + ni) * p..(ci * n + ni + 1) * p];
                out[ni * f + ci * p..ni * f + (ci + 1) * p].copy_from_slice(src);
            }
        }
        out
    }

    /// Concatenate along the batch axis.
    pub fn concat_batch(parts: &[&Tensor<T>]) -> Tensor<T> {
        assert!(!parts.is_empty());
        let [c, _, h, w] = parts[0].shape;
        for p in parts {
            assert_eq!((p.shape[0], p.shape[2], p.shape[3]), (c, h, w), "concat shape mismatch");
        }
        let n: usize = parts.iter().map(|p| p.batch()).sum();
        let plane = h * w;
        let mut data = Vec::with_capacity(c * n * plane);
        for ci in 0..c {
            for p in parts {
                let pn = p.batch();
                data.extend_from_slice(&p.data[ci * pn * plane..(ci + 1) * pn * plane]);
            }
        }
        Tensor { shape: [c, n, h, w], data }
    }

    /// Samples `[start, end)` along the batch axis.
    pub fn slice_batch(&self, start: usize, end: usize) -> Tensor<T> {
        let [c, n, h, w] = self.shape;
        assert!(start <= end && end <= n);
        let plane = h * w;
        let m = end - start;
        let mut data = Vec::with_capacity(c * m * plane);
        for ci in 0..c {
            data.extend_from_slice(&self.data[(ci * n + start) * plane..(ci * n + end) * plane]);
        }
        Tensor { shape: [c, m, h, w], data }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
