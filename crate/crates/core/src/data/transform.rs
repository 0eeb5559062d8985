use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::LabeledImageSet;
use crate::batch::ImageBatch;
use crate::error::{ensure, Result};
use crate::seed;

/// Additive Gaussian pixel noise: `clip(x + factor * N(0, 1), 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub factor: f64,
    pub seed: u64,
}

/// Per-session appearance shift: brightness offset, then saturation scaling
/// by `1 + saturation` around the pixel's luma.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionJitter {
    pub brightness: f64,
    pub saturation: f64,
}

pub fn add_noise(batch: &ImageBatch, spec: &NoiseSpec) -> Result<ImageBatch> {
    ensure!(spec.factor >= 0.0 && spec.factor.is_finite(), "noise factor must be >= 0, got {}", spec.factor);
    batch.validate_canonical()?;
    let mut out = batch.clone();
    if spec.factor == 0.0 {
        return Ok(out);
    }
    let mut rng = seed::derived_rng(spec.seed, "pixel-noise", 0);
    let f = spec.factor as f32;
    for v in out.data_mut() {
        let z: f32 = StandardNormal.sample(&mut rng);
        *v = (*v + f * z).clamp(0.0, 1.0);
    }
    Ok(out)
}

const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

pub fn apply_session_jitter(batch: &ImageBatch, jitter: &SessionJitter) -> Result<ImageBatch> {
    let in_range = |v: f64| (-1.0..=1.0).contains(&v);
    ensure!(
        in_range(jitter.brightness) && in_range(jitter.saturation),
        "jitter offsets must lie in [-1, 1], got brightness {} saturation {}",
        jitter.brightness,
        jitter.saturation
    );
    batch.validate_canonical()?;
    let mut out = batch.clone();
    if jitter.brightness != 0.0 {
        let b = jitter.brightness as f32;
        out.data_mut().iter_mut().for_each(|v| *v = (*v + b).clamp(0.0, 1.0));
    }
    if jitter.saturation != 0.0 {
        let s = 1.0 + jitter.saturation as f32;
        for px in out.data_mut().chunks_exact_mut(3) {
            let gray = LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2];
            for v in px.iter_mut() {
                *v = (gray + s * (*v - gray)).clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

/// Random partition into `(train, val)` with `round(n * val_fraction)`
/// validation samples; both parts keep the original sample order.
pub fn train_val_split(set: &LabeledImageSet, val_fraction: f64, seed: u64) -> Result<(LabeledImageSet, LabeledImageSet)> {
    ensure!(val_fraction > 0.0 && val_fraction < 1.0, "validation fraction must be in (0, 1), got {val_fraction}");
    let n = set.len();
    let n_val = (n as f64 * val_fraction).round() as usize;
    ensure!(
        n_val >= 1 && n_val < n,
        "{n} samples with validation fraction {val_fraction} leaves an empty split"
    );
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::derived_rng(seed, "train-val-split", 0));
    let mut val_idx = order[..n_val].to_vec();
    let mut train_idx = order[n_val..].to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    let mut val = set.select(&val_idx);
    val.split = super::Split::Val;
    Ok((set.select(&train_idx), val))
}
