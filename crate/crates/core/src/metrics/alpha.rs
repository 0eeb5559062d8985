//! Heavy-tail diagnostic: power-law exponents of layer weight spectra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::autoencoder::Autoencoder;
use crate::error::{Error, Result};
use crate::nn::Network;

/// Fraction of the largest eigenvalues used for the tail fit.
const TAIL_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerAlpha {
    pub alpha: f64,
    pub lambda_max: f64,
}

/// Fits `alpha` to the top 20% (at least 2) eigenvalues of `W^T W` by the
/// continuous power-law maximum-likelihood estimate
/// `1 + k / sum ln(lambda_i / lambda_min)`. `None` for matrices with fewer
/// than 3 eigenvalues or a flat tail.
pub fn layer_alpha(weights: &[f32], rows: usize, cols: usize) -> Option<LayerAlpha> {
    let small = rows.min(cols);
    if small < 3 {
        return None;
    }
    let w = DMatrix::from_row_slice(rows, cols, &weights.iter().map(|&v| v as f64).collect::<Vec<_>>());
    let gram = if rows < cols { &w * w.transpose() } else { w.transpose() * &w };
    let mut eig: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().map(|v| v.max(0.0)).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let k = ((eig.len() as f64 * TAIL_FRACTION).ceil() as usize).max(2);
    let tail = &eig[..k];
    let lambda_min = tail[k - 1];
    if lambda_min <= 0.0 {
        return None;
    }
    let log_sum: f64 = tail.iter().map(|&l| (l / lambda_min).ln()).sum();
    if log_sum <= 0.0 {
        return None;
    }
    Some(LayerAlpha { alpha: 1.0 + k as f64 / log_sum, lambda_max: tail[0] })
}

/// Mean over layers of `alpha * log10(lambda_max)`.
pub fn weighted_alpha_networks(nets: &[&Network<f32>]) -> Result<f64> {
    let mut values = Vec::new();
    for net in nets {
        for (i, layer) in net.spec().layers.iter().enumerate() {
            if let Some((rows, cols)) = layer.weight_matrix_dims() {
                let w = &net.layer_params(i)[..rows * cols];
                if let Some(la) = layer_alpha(w, rows, cols) {
                    values.push(la.alpha * la.lambda_max.log10());
                }
            }
        }
    }
    if values.is_empty() {
        return Err(Error::Numeric("no layer has a usable weight spectrum".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn weighted_alpha(model: &Autoencoder) -> Result<f64> {
    weighted_alpha_networks(&[model.encoder(), model.decoder()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_fit_matches_hand_computation() {
        // diagonal 5x5 with singular values 1..5: eigenvalues 1,4,9,16,25;
        // tail k = 2 -> {25, 16}: alpha = 1 + 2 / ln(25/16)
        let mut w = vec![0f32; 25];
        for i in 0..5 {
            w[i * 5 + i] = (i + 1) as f32;
        }
        let la = layer_alpha(&w, 5, 5).unwrap();
        assert!((la.alpha - (1.0 + 2.0 / (25.0f64 / 16.0).ln())).abs() < 1e-9);
        assert!((la.lambda_max - 25.0).abs() < 1e-9);
        assert!(layer_alpha(&w[..10], 2, 5).is_none());
    }
}
