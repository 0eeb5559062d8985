use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FlashcardConfig;
use crate::autoencoder::Autoencoder;
use crate::batch::ImageBatch;
use crate::error::{ensure, Error, Result};
use crate::metrics::flsd;
use crate::patterns::generate_patterns;

/// Cap on samples per side of each latent distance estimate.
pub const FLSD_MAX_SAMPLES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RSweepReport {
    pub r_values: Vec<usize>,
    /// Latent distance between `F_r` and the reference data, per `r`.
    pub flsd_curve: Vec<f64>,
    /// Mean over samples of `mean|F_r - F_{r-1}|`; NaN at `r = 0`.
    pub delta_mae_curve: Vec<f64>,
    /// Max over samples of `mean|F_r - F_{r-1}|`; NaN at `r = 0`.
    pub delta_max_curve: Vec<f64>,
    /// Lowest per-sample reconstruction error on the reference data.
    pub epsilon1: f64,
    /// Minimizer of the latent distance over `r >= 1`.
    pub recommended_r: usize,
    /// Every flashcard changed by less than `epsilon1` at `recommended_r`.
    pub p1_at_recommended: bool,
    /// `flsd(recommended_r) / flsd(1)`.
    pub p2_ratio: f64,
    pub samples: usize,
}

impl RSweepReport {
    /// P1 recomputed against an externally supplied lower error bound.
    pub fn p1_holds(&self, r: usize, epsilon1: f64) -> bool {
        r >= 1 && r < self.delta_max_curve.len() && self.delta_max_curve[r] < epsilon1
    }

    /// `r,flsd,delta_mae` rows.
    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["r", "flsd", "delta_mae"]).expect("in-memory write");
        for ((r, f), d) in self.r_values.iter().zip(&self.flsd_curve).zip(&self.delta_mae_curve) {
            let d = if d.is_nan() { String::new() } else { d.to_string() };
            w.write_record([r.to_string(), f.to_string(), d]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// One recursive trajectory of `min(n_flashcards, 2000)` patterns over
/// `r = 0..=r_max`, recording the latent distance to `reference` and the
/// per-step change at every `r`.
pub fn sweep_r(model: &Autoencoder, config: &FlashcardConfig, reference: &ImageBatch, r_max: usize) -> Result<RSweepReport> {
    ensure!(r_max >= 2, "r_max must be at least 2, got {r_max}");
    ensure!(reference.len() >= 2, "reference set needs at least 2 samples");
    config.validate()?;
    let mut spec = config.pattern_spec();
    spec.count = spec.count.min(FLSD_MAX_SAMPLES);
    let k = spec.count.min(reference.len());
    ensure!(k >= 2, "latent distance needs at least 2 flashcards");
    let reference = reference.slice(0, k);
    let (ref_latent, ref_recon) = model.encode_and_forward(&reference)?;
    let epsilon1 = ref_recon.per_sample_mae(&reference)?.into_iter().fold(f64::INFINITY, f64::min);

    let mut x = generate_patterns(&spec)?;
    let (mut flsd_curve, mut delta_mae_curve, mut delta_max_curve) = (Vec::new(), Vec::new(), Vec::new());
    for r in 0..=r_max {
        let (latent, next) = model.encode_and_forward(&x)?;
        let sub = latent.select(&(0..k).collect::<Vec<_>>());
        flsd_curve.push(flsd(&sub, &ref_latent)?);
        if r == 0 {
            delta_mae_curve.push(f64::NAN);
            delta_max_curve.push(f64::NAN);
        }
        if r < r_max {
            let d = next.per_sample_mae(&x)?;
            delta_mae_curve.push(d.iter().sum::<f64>() / d.len() as f64);
            delta_max_curve.push(d.iter().copied().fold(0.0, f64::max));
            x = next;
        }
    }
    let recommended_r = (1..=r_max).min_by(|&a, &b| flsd_curve[a].total_cmp(&flsd_curve[b]).then(a.cmp(&b))).unwrap();
    Ok(RSweepReport {
        r_values: (0..=r_max).collect(),
        p1_at_recommended: delta_max_curve[recommended_r] < epsilon1,
        p2_ratio: flsd_curve[recommended_r] / flsd_curve[1],
        flsd_curve,
        delta_mae_curve,
        delta_max_curve,
        epsilon1,
        recommended_r,
        samples: k,
    })
}
