use serde::{Deserialize, Serialize};

use super::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam { lr: f64 },
    Sgd { lr: f64, momentum: f64 },
}

impl OptimizerKind {
    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Adam { lr } | OptimizerKind::Sgd { lr, .. } => lr,
        }
    }
}

/// Per-parameter optimizer state for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    first: Vec<T>,
    second: Vec<T>,
    step: u64,
}

impl<T: Real> Optimizer<T> {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        let second = match kind {
            OptimizerKind::Adam { .. } => vec![T::zero(); n_params],
            OptimizerKind::Sgd { .. } => Vec::new(),
        };
        Self { kind, first: vec![T::zero(); n_params], second, step: 0 }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), self.first.len());
        assert_eq!(grads.len(), params.len());
        self.step += 1;
        match self.kind {
            OptimizerKind::Adam { lr } => {
                let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
                let t = self.step as i32;
                // bias corrections folded into the step size
                let alpha = T::from_f64_lossy(lr * (1.0 - b2.powi(t)).sqrt() / (1.0 - b1.powi(t)));
                let eps_hat = T::from_f64_lossy(eps * (1.0 - b2.powi(t)).sqrt());
                let (b1, b2) = (T::from_f64_lossy(b1), T::from_f64_lossy(b2));
                let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
                for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
                    *m = b1 * *m + one_b1 * g;
                    *v = b2 * *v + one_b2 * g * g;
                    *p -= alpha * *m / (v.sqrt() + eps_hat);
                }
            }
            OptimizerKind::Sgd { lr, momentum } => {
                let (lr, mu) = (T::from_f64_lossy(lr), T::from_f64_lossy(momentum));
                for ((p, &g), vel) in params.iter_mut().zip(grads).zip(&mut self.first) {
                    *vel = mu * *vel + g;
                    *p -= lr * *vel;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut opt = Optimizer::<f64>::new(OptimizerKind::Adam { lr: 0.01 }, 2);
        let mut p = vec![1.0, -1.0];
        opt.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] + 0.99).abs() < 1e-9);
    }

    #[test]
    fn sgd_minimizes_quadratic() {
        let mut opt = Optimizer::<f64>::new(OptimizerKind::Sgd { lr: 0.1, momentum: 0.5 }, 1);
        let mut p = vec![4.0];
        for _ in 0..200 {
            let g = [2.0 * p[0]];
            opt.step(&mut p, &g);
        }
        assert!(p[0].abs() < 1e-6);
    }
}
