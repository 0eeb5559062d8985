//! Procedural input patterns: perfect mazes (default), clipped Gaussian pixel
//! noise and random geometric shapes.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::batch::{ImageBatch, SIDE};
use crate::error::{ensure, Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    Maze,
    Gaussian,
    Geometric,
}

impl std::str::FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maze" => Ok(PatternKind::Maze),
            "gaussian" => Ok(PatternKind::Gaussian),
            "geometric" => Ok(PatternKind::Geometric),
            _ => Err(Error::InvalidArgument(format!("unknown pattern kind `{s}` (expected maze, gaussian or geometric)"))),
        }
    }
}

fn default_cell_sizes() -> Vec<usize> {
    vec![2, 4, 8]
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSpec {
    pub kind: PatternKind,
    pub count: usize,
    /// Maze cell sizes in pixels; each sample draws one uniformly.
    #[serde(default = "default_cell_sizes")]
    pub cell_sizes: Vec<usize>,
    #[serde(default = "default_true")]
    pub colorize: bool,
    #[serde(default)]
    pub seed: u64,
}

impl PatternSpec {
    pub fn maze(count: usize, seed: u64) -> Self {
        Self { kind: PatternKind::Maze, count, cell_sizes: default_cell_sizes(), colorize: true, seed }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.count >= 1, "pattern count must be at least 1");
        if self.kind == PatternKind::Maze {
            ensure!(!self.cell_sizes.is_empty(), "maze patterns need at least one cell size");
            if let Some(bad) = self.cell_sizes.iter().find(|s| ![2, 4, 8].contains(*s)) {
                return Err(Error::InvalidArgument(format!("maze cell size {bad} not in {{2, 4, 8}}")));
            }
        }
        Ok(())
    }
}

/// Random spanning tree of a `g x g` grid by randomized depth-first search.
/// Returns, per cell, whether it is joined to its right and lower neighbour.
pub fn maze_tree(g: usize, rng: &mut impl Rng) -> (Vec<bool>, Vec<bool>) {
    let mut right = vec![false; g * g];
    let mut down = vec![false; g * g];
    let mut visited = vec![false; g * g];
    let start = rng.random_range(0..g * g);
    visited[start] = true;
    let mut stack = vec![start];
    let mut options = Vec::with_capacity(4);
    while let Some(&cell) = stack.last() {
        let (y, x) = (cell / g, cell % g);
        options.clear();
        if x > 0 && !visited[cell - 1] {
            options.push(cell - 1);
        }
        if x + 1 < g && !visited[cell + 1] {
            options.push(cell + 1);
        }
        if y > 0 && !visited[cell - g] {
            options.push(cell - g);
        }
        if y + 1 < g && !visited[cell + g] {
            options.push(cell + g);
        }
        match options.choose(rng) {
            None => {
                stack.pop();
            }
            Some(&next) => {
                let (a, b) = (cell.min(next), cell.max(next));
                if b == a + 1 {
                    right[a] = true;
                } else {
                    down[a] = true;
                }
                visited[next] = true;
                stack.push(next);
            }
        }
    }
    (right, down)
}

fn rgb(rng: &mut impl Rng) -> [f32; 3] {
    [rng.random(), rng.random(), rng.random()]
}

/// Cells of `cell_size` pixels laid on a lattice of half-cell blocks: cell
/// `(cy, cx)` owns block `(2cy, 2cx)`, the passage to a neighbour is the block
/// between them, everything else is wall.
fn render_maze(rng: &mut ChaCha8Rng, cell_sizes: &[usize], colorize: bool, out: &mut [f32]) {
    let cell = *cell_sizes.choose(rng).unwrap();
    let g = SIDE / cell;
    let block = cell / 2;
    let (right, down) = maze_tree(g, rng);
    let (wall, corridor) = if colorize { (rgb(rng), rgb(rng)) } else { ([0.0; 3], [1.0; 3]) };
    let blocks = 2 * g;
    for by in 0..blocks {
        for bx in 0..blocks {
            let open = match (by % 2, bx % 2) {
                (0, 0) => true,
                (0, 1) => bx / 2 + 1 < g && right[(by / 2) * g + bx / 2],
                (1, 0) => by / 2 + 1 < g && down[(by / 2) * g + bx / 2],
                _ => false,
            };
            let color = if open { corridor } else { wall };
            for y in by * block..(by + 1) * block {
                for x in bx * block..(bx + 1) * block {
                    out[(y * SIDE + x) * 3..(y * SIDE + x) * 3 + 3].copy_from_slice(&color);
                }
            }
        }
    }
}

fn render_gaussian(rng: &mut ChaCha8Rng, out: &mut [f32]) {
    let normal = Normal::new(0.5f32, 0.25).unwrap();
    for v in out.iter_mut() {
        *v = normal.sample(rng).clamp(0.0, 1.0);
    }
}

fn render_geometric(rng: &mut ChaCha8Rng, colorize: bool, out: &mut [f32]) {
    let pick = |rng: &mut ChaCha8Rng| if colorize { rgb(rng) } else { [rng.random::<f32>(); 3] };
    let bg = pick(rng);
    for px in out.chunks_exact_mut(3) {
        px.copy_from_slice(&bg);
    }
    let shapes = rng.random_range(3..=8);
    for _ in 0..shapes {
        let color = pick(rng);
        let kind = rng.random_range(0..3);
        let (cx, cy) = (rng.random_range(0.0..SIDE as f32), rng.random_range(0.0..SIDE as f32));
        let (a, b) = (rng.random_range(2.0..12.0f32), rng.random_range(2.0..12.0f32));
        let theta: f32 = rng.random_range(0.0..std::f32::consts::PI);
        for y in 0..SIDE {
            for x in 0..SIDE {
                let (dx, dy) = (x as f32 + 0.5 - cx, y as f32 + 0.5 - cy);
                let inside = match kind {
                    0 => dx.abs() <= a && dy.abs() <= b,
                    1 => dx * dx + dy * dy <= a * a,
                    _ => (dx * theta.sin() - dy * theta.cos()).abs() <= 1.0 && (dx * theta.cos() + dy * theta.sin()).abs() <= 2.0 * a,
                };
                if inside {
                    out[(y * SIDE + x) * 3..(y * SIDE + x) * 3 + 3].copy_from_slice(&color);
                }
            }
        }
    }
}

/// Generates `spec.count` canonical patterns. Sample `i` depends only on the
/// seed and `i`; exact duplicates are redrawn from a follow-up stream.
pub fn generate_patterns(spec: &PatternSpec) -> Result<ImageBatch> {
    spec.validate()?;
    let mut batch = ImageBatch::filled(spec.count, 0.0);
    let mut seen = HashSet::with_capacity(spec.count);
    for i in 0..spec.count {
        for attempt in 0u64.. {
            ensure!(attempt < 1000, "could not draw {} distinct patterns", spec.count);
            let mut rng = seed::derived_rng(spec.seed, "pattern", ((i as u64) << 10) | attempt);
            let out = batch.sample_mut(i);
            match spec.kind {
                PatternKind::Maze => render_maze(&mut rng, &spec.cell_sizes, spec.colorize, out),
                PatternKind::Gaussian => render_gaussian(&mut rng, out),
                PatternKind::Geometric => render_geometric(&mut rng, spec.colorize, out),
            }
            let mut h = Sha256::new();
            out.iter().for_each(|v| h.update(v.to_le_bytes()));
            if seen.insert(h.finalize()) {
                break;
            }
        }
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_has_g_squared_minus_one_edges() {
        for g in [4, 8, 16] {
            let (r, d) = maze_tree(g, &mut seed::rng(g as u64));
            let edges = r.iter().chain(&d).filter(|&&e| e).count();
            assert_eq!(edges, g * g - 1);
        }
    }

    #[test]
    fn grayscale_maze_is_binary() {
        let spec = PatternSpec { kind: PatternKind::Maze, count: 5, cell_sizes: vec![4], colorize: false, seed: 3 };
        let b = generate_patterns(&spec).unwrap();
        assert!(b.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = PatternSpec::maze(0, 1);
        assert!(generate_patterns(&spec).is_err());
        spec.count = 2;
        spec.cell_sizes = vec![3];
        assert!(generate_patterns(&spec).is_err());
    }
}
