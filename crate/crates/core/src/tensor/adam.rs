use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Adam hyperparameters. beta2/eps default to the conventional values;
/// lr and beta1 follow the training recipe.
#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 5e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-parameter first/second moment estimates plus the shared step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, param_sizes: &[usize]) -> Self {
        AdamState {
            config,
            m: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    pub fn restore_moments(&mut self, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>, t: u64) -> Result<()> {
        if m.len() != self.m.len() || v.len() != self.v.len() {
            return Err(Error::usage("moment count does not match parameter count"));
        }
        for (buf, prev) in m.iter().zip(&self.m) {
            if buf.len() != prev.len() {
                return Err(Error::usage("moment length does not match parameter length"));
            }
        }
        self.m = m;
        self.v = v;
        self.t = t;
        Ok(())
    }

    /// One Adam update with bias correction. `grads[i]` pairs with `params[i]`.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::usage(format!(
                "adam_step: {} params, {} grads, {} states",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (idx, (p, g)) in params.iter().map(|p| &**p).zip(grads).enumerate() {
            if p.numel() != g.len() {
                return Err(Error::shape(
                    "adam_step",
                    format!("param {} has {} values, grad has {}", idx, p.numel(), g.len()),
                ));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::numeric(format!("non-finite gradient for parameter {} at step {}", idx, self.t + 1)));
            }
        }

        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let data = p.data_mut();
            for i in 0..data.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut state = AdamState::new(AdamConfig::default(), &[3]);
        let mut params = vec![Tensor::from_vec(vec![3], vec![1.0, -2.0, 0.5]).unwrap()];
        let g = vec![0.0; 3];
        let mut refs: Vec<&mut Tensor> = params.iter_mut().collect();
        state.step(&mut refs, &[&g]).unwrap();
        assert_eq!(params[0].data(), &[1.0, -2.0, 0.5]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_is_signed_lr() {
        // with bias correction, step one moves by ~lr*sign(g)
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        let mut state = AdamState::new(cfg, &[2]);
        let mut params = vec![Tensor::from_vec(vec![2], vec![0.0, 0.0]).unwrap()];
        let g = vec![3.0, -0.25];
        let mut refs: Vec<&mut Tensor> = params.iter_mut().collect();
        state.step(&mut refs, &[&g]).unwrap();
        assert!((params[0].data()[0] + 0.01).abs() < 1e-6);
        assert!((params[0].data()[1] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn step_counter_increments_once_per_call() {
        let mut state = AdamState::new(AdamConfig::default(), &[1]);
        let mut params = vec![Tensor::scalar(1.0)];
        for expect in 1..=5 {
            let g = vec![1.0];
            let mut refs: Vec<&mut Tensor> = params.iter_mut().collect();
            state.step(&mut refs, &[&g]).unwrap();
            assert_eq!(state.step_count(), expect);
        }
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut state = AdamState::new(AdamConfig::default(), &[1]);
        let mut params = vec![Tensor::scalar(1.0)];
        let g = vec![f64::NAN];
        let mut refs: Vec<&mut Tensor> = params.iter_mut().collect();
        let err = state.step(&mut refs, &[&g]).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        // params untouched on abort
        assert_eq!(params[0].data(), &[1.0]);
    }
}
