//! Reconstruction error, Fréchet latent space distance, continual-learning
//! matrix metrics and the weighted-alpha spectral diagnostic.

mod alpha;
mod matrix;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::batch::{ImageBatch, LatentBatch};
use crate::error::{ensure, Error, Result};
use crate::nn::{gemm, MatRef};

pub use alpha::{layer_alpha, weighted_alpha, weighted_alpha_networks, LayerAlpha};
pub use matrix::{avg_mae, bwt, fwt, MetricKind, MetricsMatrix};

/// Mean absolute difference over every pixel of two same-shaped batches.
pub fn mae(a: &ImageBatch, b: &ImageBatch) -> Result<f64> {
    a.same_shape(b)?;
    ensure!(!a.data().is_empty(), "mean absolute error of an empty batch");
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs() as f64).sum();
    Ok(sum / a.data().len() as f64)
}

/// Diagonal regularizer added to every covariance estimate.
pub const COV_EPS: f64 = 1e-6;

/// Sample mean and unbiased covariance (plus `COV_EPS * I`) of the rows.
fn gaussian_fit(z: &LatentBatch) -> (Vec<f64>, DMatrix<f64>) {
    let (n, d) = (z.n, z.dim);
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(z.row(i)) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<f64> = (0..n).flat_map(|i| z.row(i).iter().zip(&mean).map(|(&v, m)| v as f64 - m)).collect();
    let mut cov = vec![0.0; d * d];
    gemm(
        1.0 / (n as f64 - 1.0),
        MatRef::new(&centered, n, d).t(),
        MatRef::new(&centered, n, d),
        0.0,
        &mut cov,
    );
    let mut cov = DMatrix::from_row_slice(d, d, &cov);
    for i in 0..d {
        cov[(i, i)] += COV_EPS;
    }
    (mean, cov)
}

/// Symmetric PSD square root via eigendecomposition, negative eigenvalues clipped.
fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `tr((A B)^{1/2})` for PSD `A`, `B`, computed as `tr((A^{1/2} B A^{1/2})^{1/2})`.
fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let s = sqrt_psd(a);
    let inner = &s * b * &s;
    let sym = (&inner + inner.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum()
}

/// Fréchet distance between Gaussian fits of two latent sample sets:
/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2})`, clipped at 0.
pub fn flsd(a: &LatentBatch, b: &LatentBatch) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::ShapeMismatch { expected: format!("latent dim {}", a.dim), got: format!("latent dim {}", b.dim) });
    }
    ensure!(a.n >= 2 && b.n >= 2, "each side needs at least 2 samples (got {} and {})", a.n, b.n);
    let (mu_a, cov_a) = gaussian_fit(a);
    let (mu_b, cov_b) = gaussian_fit(b);
    let mean_term: f64 = mu_a.iter().zip(&mu_b).map(|(x, y)| (x - y) * (x - y)).sum();
    // average of both orderings keeps the value exactly symmetric
    let cross = 0.5 * (trace_sqrt_product(&cov_a, &cov_b) + trace_sqrt_product(&cov_b, &cov_a));
    let value = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * cross;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("latent distance is not finite ({value})")));
    }
    Ok(value.max(0.0))
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mae_hand_values() {
        let a = ImageBatch::new(2, 1, 1, 1, vec![0.2, 0.8]).unwrap();
        let b = ImageBatch::new(2, 1, 1, 1, vec![0.4, 0.4]).unwrap();
        assert!((mae(&a, &b).unwrap() - 0.3).abs() < 1e-7);
        assert_eq!(mae(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn flsd_of_known_covariances() {
        // 1-d: N(0, s^2) samples vs N(0, t^2): distance (s - t)^2
        let a = LatentBatch { n: 4, dim: 1, data: vec![-1.0, 1.0, -1.0, 1.0] };
        let b = LatentBatch { n: 4, dim: 1, data: vec![-3.0, 3.0, -3.0, 3.0] };
        let (sa, sb) = ((4.0f64 / 3.0).sqrt(), (36.0f64 / 3.0).sqrt());
        let want = sa * sa + sb * sb + 2.0 * COV_EPS - 2.0 * ((sa * sa + COV_EPS) * (sb * sb + COV_EPS)).sqrt();
        assert!((flsd(&a, &b).unwrap() - want).abs() < 1e-9);
        assert!(flsd(&a, &a).unwrap() < 1e-9);
    }

    #[test]
    fn flsd_rejects_mismatch() {
        let a = LatentBatch { n: 2, dim: 1, data: vec![0.0, 1.0] };
        let b = LatentBatch { n: 1, dim: 2, data: vec![0.0, 1.0] };
        assert!(flsd(&a, &b).is_err());
        let c = LatentBatch { n: 1, dim: 1, data: vec![0.0] };
        assert!(flsd(&a, &c).is_err());
    }
}
