//! Independent oracles shared by the integration tests and the acceptance
//! harness. Nothing here calls the library's metric code.
#![allow(dead_code)]

use std::collections::VecDeque;

use flashcards_core::autoencoder::Reconstruct;
use flashcards_core::{ImageBatch, Result};

/// Mean of the last row, by explicit loop.
pub fn avg_mae_oracle(m: &[Vec<f64>]) -> f64 {
    let t = m.len();
    let mut sum = 0.0;
    for i in 0..t {
        sum += m[t - 1][i];
    }
    sum / t as f64
}

/// `1/(T-1) * sum_{i<T-1} (M[i][i] - M[T-1][i])`.
pub fn bwt_oracle(m: &[Vec<f64>]) -> f64 {
    let t = m.len();
    let mut sum = 0.0;
    for i in 0..t - 1 {
        sum += m[i][i] - m[t - 1][i];
    }
    sum / (t - 1) as f64
}

/// `1/(T-1) * sum_{i>=1} (r[i] - M[i-1][i])`.
pub fn fwt_oracle(m: &[Vec<f64>], r: &[f64]) -> f64 {
    let t = m.len();
    let mut sum = 0.0;
    for i in 1..t {
        sum += r[i] - m[i - 1][i];
    }
    sum / (t - 1) as f64
}

/// Whether the undirected graph on `nodes` vertices with `edges` is a
/// spanning tree: `nodes - 1` edges and connected (checked by BFS).
pub fn is_spanning_tree(nodes: usize, edges: &[(usize, usize)]) -> bool {
    if edges.len() + 1 != nodes {
        return false;
    }
    let mut adj = vec![Vec::new(); nodes];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; nodes];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen.iter().all(|&s| s)
}

/// Edges of the maze lattice encoded as right/down passage flags.
pub fn maze_edges(g: usize, right: &[bool], down: &[bool]) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for y in 0..g {
        for x in 0..g {
            let v = y * g + x;
            if right[v] {
                edges.push((v, v + 1));
            }
            if down[v] {
                edges.push((v, v + g));
            }
        }
    }
    edges
}

/// A "model" returning fixed reconstructions for known inputs (matched by
/// first pixel), for loss arithmetic checks.
pub struct Stub {
    pub pairs: Vec<(ImageBatch, ImageBatch)>,
}

impl Reconstruct for Stub {
    fn reconstruct(&self, batch: &ImageBatch) -> Result<ImageBatch> {
        let (_, out) = self.pairs.iter().find(|(x, _)| x == batch).expect("stub input registered");
        Ok(out.clone())
    }
}

/// Affine pixel map `a*x + b`, clamped to [0, 1].
pub struct Affine {
    pub a: f32,
    pub b: f32,
}

impl Reconstruct for Affine {
    fn reconstruct(&self, batch: &ImageBatch) -> Result<ImageBatch> {
        let mut out = batch.clone();
        out.data_mut().iter_mut().for_each(|v| *v = (self.a * *v + self.b).clamp(0.0, 1.0));
        Ok(out)
    }
}

/// Hand MAE between two batches.
pub fn mae_oracle(a: &ImageBatch, b: &ImageBatch) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        s += (*x as f64 - *y as f64).abs();
    }
    s / a.data().len() as f64
}
