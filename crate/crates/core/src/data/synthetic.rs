//! "synthetic-blobs": Gaussian blobs alpha-blended over a two-color linear
//! gradient. The label is the number of blobs minus one.

use rand::Rng;

use super::{LabeledImageSet, Split};
use crate::batch::{ImageBatch, SIDE};
use crate::error::{Error, Result};
use crate::seed;

pub const BLOB_CLASSES: usize = 5;
const TRAIN_SIZE: usize = 60_000;
const TEST_SIZE: usize = 10_000;

fn color(rng: &mut impl Rng) -> [f32; 3] {
    [rng.random(), rng.random(), rng.random()]
}

fn render(rng: &mut impl Rng, label: u32, out: &mut [f32]) {
    let (a, b) = (color(rng), color(rng));
    let theta: f32 = rng.random_range(0.0..std::f32::consts::TAU);
    let (dx, dy) = (theta.cos(), theta.sin());
    let half = SIDE as f32 / 2.0;
    for y in 0..SIDE {
        for x in 0..SIDE {
            let t = (((x as f32 - half) * dx + (y as f32 - half) * dy) / SIDE as f32 + 0.5).clamp(0.0, 1.0);
            for ch in 0..3 {
                out[(y * SIDE + x) * 3 + ch] = a[ch] + (b[ch] - a[ch]) * t;
            }
        }
    }
    for _ in 0..=label {
        let cx: f32 = rng.random_range(4.0..28.0);
        let cy: f32 = rng.random_range(4.0..28.0);
        let sigma: f32 = rng.random_range(2.0..6.0);
        let c = color(rng);
        for y in 0..SIDE {
            for x in 0..SIDE {
                let d2 = (x as f32 - cx).powi(2) + (y as f32 - cy).powi(2);
                let alpha = (-d2 / (2.0 * sigma * sigma)).exp();
                for ch in 0..3 {
                    let v = &mut out[(y * SIDE + x) * 3 + ch];
                    *v = (*v * (1.0 - alpha) + c[ch] * alpha).clamp(0.0, 1.0);
                }
            }
        }
    }
}

/// `count` blob images; sample `i` depends only on `(seed, i)`.
pub fn synthetic_blobs(count: usize, seed: u64) -> (ImageBatch, Vec<u32>) {
    let mut img = ImageBatch::filled(count, 0.0);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = seed::derived_rng(seed, "blob", i as u64);
        let label = rng.random_range(0..BLOB_CLASSES as u32);
        render(&mut rng, label, img.sample_mut(i));
        labels.push(label);
    }
    (img, labels)
}

pub(super) fn load(split: Split, limit: Option<usize>) -> Result<LabeledImageSet> {
    let (available, base_seed) = match split {
        Split::Test => (TEST_SIZE, 0x7e57),
        _ => (TRAIN_SIZE, 0x7a19),
    };
    let n = limit.unwrap_or(available);
    if n > available {
        return Err(Error::NotEnoughSamples {
            name: "synthetic-blobs".into(),
            split: split.to_string(),
            requested: n,
            available,
        });
    }
    let (images, labels) = synthetic_blobs(n, base_seed);
    Ok(LabeledImageSet { images, labels: Some(labels), num_classes: Some(BLOB_CLASSES), name: "synthetic-blobs".into(), split })
}
