//! Losses over channel-major tensors. Every function returns the loss value
//! and its gradient with respect to the prediction.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{Real, Tensor};

/// Pixel reconstruction penalty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    /// Mean absolute error.
    #[default]
    #[serde(alias = "mae")]
    L1,
    /// Mean squared error.
    #[serde(alias = "mse")]
    L2,
}

/// A contiguous run of samples in a minibatch and the weight of its mean loss.
#[derive(Debug, Clone)]
pub struct Part<T> {
    pub samples: Range<usize>,
    pub weight: T,
}

/// `sum_k weight_k * mean_{samples in part k} penalty(pred - target)`.
///
/// Returns the weighted total, the unweighted per-part means and the
/// gradient. Samples outside every part get zero gradient.
pub fn reconstruction_loss<T: Real>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    parts: &[Part<T>],
    penalty: Penalty,
) -> (T, Vec<T>, Tensor<T>) {
    assert_eq!(pred.shape, target.shape, "prediction/target shape mismatch");
    let [c, n, h, w] = pred.shape;
    let plane = h * w;
    let mut grad = Tensor::zeros(pred.shape);
    let mut means = Vec::with_capacity(parts.len());
    let mut total = T::zero();
    for part in parts {
        assert!(part.samples.end <= n && !part.samples.is_empty(), "invalid loss part");
        let count = T::from_usize(c * part.samples.len() * plane).unwrap();
        // compensated sum: plain accumulation over ~10^4 pixels leaves
        // rounding noise that swamps finite-difference checks
        let (mut acc, mut comp) = (T::zero(), T::zero());
        let mut add = |v: T| {
            let y = v - comp;
            let t = acc + y;
            comp = (t - acc) - y;
            acc = t;
        };
        for ci in 0..c {
            let lo = (ci * n + part.samples.start) * plane;
            let hi = (ci * n + part.samples.end) * plane;
            for ((g, &p), &t) in grad.data[lo..hi].iter_mut().zip(&pred.data[lo..hi]).zip(&target.data[lo..hi]) {
                let d = p - t;
                match penalty {
                    Penalty::L1 => {
                        add(d.abs());
                        *g = if d > T::zero() {
                            part.weight / count
                        } else if d < T::zero() {
                            -part.weight / count
                        } else {
                            T::zero()
                        };
                    }
                    Penalty::L2 => {
                        add(d * d);
                        *g = (T::one() + T::one()) * d * part.weight / count;
                    }
                }
            }
        }
        let mean = acc / count;
        total += part.weight * mean;
        means.push(mean);
    }
    (total, means, grad)
}

/// Column-wise softmax of `(K, N, 1, 1)` logits, returned row-major `(N, K)`.
pub fn softmax_rows<T: Real>(logits: &Tensor<T>) -> Vec<T> {
    let (k, n) = (logits.channels(), logits.batch());
    let mut out = vec![T::zero(); n * k];
    for ni in 0..n {
        let max = (0..k).map(|j| logits.data[j * n + ni]).fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for j in 0..k {
            let e = (logits.data[j * n + ni] - max).exp();
            out[ni * k + j] = e;
            z += e;
        }
        out[ni * k..(ni + 1) * k].iter_mut().for_each(|v| *v /= z);
    }
    out
}

/// Mean cross-entropy between softmax(logits) and target distributions given
/// row-major `(N, K)`, over samples in `samples`, scaled by `weight`. Adds the
/// gradient into `grad` (shape of `logits`).
///
/// With one-hot targets this is ordinary cross-entropy; with soft targets it
/// equals KL(target || prediction) plus the (constant) target entropy, so the
/// gradient is the KL gradient.
pub fn soft_cross_entropy<T: Real>(
    logits: &Tensor<T>,
    targets: &[T],
    samples: Range<usize>,
    weight: T,
    grad: &mut Tensor<T>,
) -> T {
    let (k, n) = (logits.channels(), logits.batch());
    assert_eq!(targets.len(), samples.len() * k, "target rows");
    assert_eq!(grad.shape, logits.shape);
    let probs = softmax_rows(logits);
    let m = T::from_usize(samples.len()).unwrap();
    let tiny = T::from_f64_lossy(1e-12);
    let mut loss = T::zero();
    for (row, ni) in samples.enumerate() {
        for j in 0..k {
            let t = targets[row * k + j];
            let p = probs[ni * k + j];
            if t > T::zero() {
                loss -= t * p.max(tiny).ln();
            }
            grad.data[j * n + ni] += weight * (p - t) / m;
        }
    }
    weight * loss / m
}

/// Kullback-Leibler divergence KL(target || softmax(logits)) averaged over samples.
pub fn kl_divergence<T: Real>(logits: &Tensor<T>, targets: &[T], samples: Range<usize>) -> T {
    let k = logits.channels();
    let probs = softmax_rows(logits);
    let tiny = T::from_f64_lossy(1e-12);
    let m = T::from_usize(samples.len()).unwrap();
    let mut kl = T::zero();
    for (row, ni) in samples.enumerate() {
        for j in 0..k {
            let t = targets[row * k + j];
            if t > T::zero() {
                kl += t * (t.ln() - probs[ni * k + j].max(tiny).ln());
            }
        }
    }
    kl / m
}

/// Mean squared distance between `(F, N, 1, 1)` features and row-major
/// `(N, F)` targets over `samples`, scaled by `weight`; gradient added into `grad`.
pub fn feature_l2<T: Real>(
    features: &Tensor<T>,
    targets: &[T],
    samples: Range<usize>,
    weight: T,
    grad: &mut Tensor<T>,
) -> T {
    let (f, n) = (features.channels(), features.batch());
    assert_eq!(targets.len(), samples.len() * f);
    let count = T::from_usize(samples.len() * f).unwrap();
    let two = T::one() + T::one();
    let mut loss = T::zero();
    for (row, ni) in samples.enumerate() {
        for j in 0..f {
            let d = features.data[j * n + ni] - targets[row * f + j];
            loss += d * d;
            grad.data[j * n + ni] += weight * two * d / count;
        }
    }
    weight * loss / count
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_parts_weighting() {
        // two samples, one pixel each: |0.2-0.4| = 0.2 and |0.8-0.4| = 0.4
        let pred = Tensor::from_vec([1, 2, 1, 1], vec![0.2f64, 0.8]);
        let target = Tensor::from_vec([1, 2, 1, 1], vec![0.4, 0.4]);
        let parts = [Part { samples: 0..1, weight: 1.0 }, Part { samples: 1..2, weight: 0.5 }];
        let (total, means, grad) = reconstruction_loss(&pred, &target, &parts, Penalty::L1);
        assert!((means[0] - 0.2).abs() < 1e-12 && (means[1] - 0.4).abs() < 1e-12);
        assert!((total - 0.4).abs() < 1e-12);
        assert_eq!(grad.data, vec![-1.0, 0.5]);
    }

    #[test]
    fn soft_cross_entropy_gradient_is_prob_minus_target() {
        let logits = Tensor::from_vec([3, 1, 1, 1], vec![0.5f64, -1.0, 2.0]);
        let target = [0.2, 0.3, 0.5];
        let mut grad = Tensor::zeros(logits.shape);
        soft_cross_entropy(&logits, &target, 0..1, 1.0, &mut grad);
        let p = softmax_rows(&logits);
        for j in 0..3 {
            assert!((grad.data[j] - (p[j] - target[j])).abs() < 1e-12);
        }
        assert!(kl_divergence(&logits, &p, 0..1).abs() < 1e-12);
    }
}
