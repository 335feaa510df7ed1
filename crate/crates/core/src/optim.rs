//! AdamW with decoupled weight decay.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: u64,
}

impl OptimizerState {
    pub fn new(config: AdamWConfig, params: &[&Matrix]) -> Self {
        let m = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        let v = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        OptimizerState { config, m, v, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over the parameter list. Decoupled decay: the decay term
    /// multiplies the parameter directly and does not enter the moments.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimizer holds {} tensors, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads.iter()) {
            if p.shape() != g.shape() {
                return Err(Error::Dimension("parameter/gradient shape mismatch".into()));
            }
            if !g.all_finite() {
                return Err(Error::Divergence("non-finite gradient".into()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for k in 0..params.len() {
            let g = grads[k].data();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            let p = params[k].data_mut();
            for i in 0..g.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= c.learning_rate * (mhat / (vhat.sqrt() + c.eps) + c.weight_decay * p[i]);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_zero_decay_is_a_fixed_point() {
        let p0 = Matrix::row_vector(vec![1.5, -2.0]);
        let mut p = p0.clone();
        let cfg = AdamWConfig { weight_decay: 0.0, ..Default::default() };
        let mut opt = OptimizerState::new(cfg, &[&p]);
        let g = Matrix::zeros(1, 2);
        for _ in 0..10 {
            opt.step(&mut [&mut p], &[&g]).unwrap();
        }
        assert_eq!(p.data(), p0.data());
        assert_eq!(opt.step_count(), 10);
    }

    #[test]
    fn decay_only_shrinks_by_one_minus_lr_times_decay() {
        let mut p = Matrix::row_vector(vec![2.0]);
        let cfg = AdamWConfig { learning_rate: 0.01, weight_decay: 0.5, ..Default::default() };
        let mut opt = OptimizerState::new(cfg, &[&p]);
        let g = Matrix::zeros(1, 1);
        opt.step(&mut [&mut p], &[&g]).unwrap();
        assert!((p.get(0, 0) - 2.0 * (1.0 - 0.01 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn quadratic_bowl_converges_and_matches_scalar_recursion() {
        // f(w) = w^2, grad 2w, lr 0.1, 200 steps from w0 = 1
        let cfg = AdamWConfig { learning_rate: 0.1, weight_decay: 0.0, ..Default::default() };
        let mut p = Matrix::row_vector(vec![1.0]);
        let mut opt = OptimizerState::new(cfg, &[&p]);
        // independent scalar recursion of the same update rule
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=200 {
            let g = Matrix::row_vector(vec![2.0 * p.get(0, 0)]);
            opt.step(&mut [&mut p], &[&g]).unwrap();

            let gs = 2.0 * w;
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * gs;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * gs * gs;
            let mhat = m / (1.0 - cfg.beta1.powi(t));
            let vhat = v / (1.0 - cfg.beta2.powi(t));
            w -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.eps);
            assert!((p.get(0, 0) - w).abs() < 1e-14, "diverged at step {}", t);
        }
        assert!(p.get(0, 0).abs() < 1e-3, "|w| = {}", p.get(0, 0));
    }

    #[test]
    fn non_finite_gradient_is_a_divergence_error() {
        let mut p = Matrix::row_vector(vec![1.0]);
        let mut opt = OptimizerState::new(AdamWConfig::default(), &[&p]);
        let g = Matrix::row_vector(vec![f64::NAN]);
        assert!(matches!(opt.step(&mut [&mut p], &[&g]), Err(Error::Divergence(_))));
    }
}
