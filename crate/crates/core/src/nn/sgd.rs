use super::tensor::{ParamSet, Real};
use crate::error::{Error, Result};

/// Hyper-parameters of SGD with momentum and a stepwise exponential decay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Multiplier applied every `decay_interval` iterations (0.99 = −1%).
    pub decay_factor: f64,
    pub decay_interval: u64,
}

impl SgdConfig {
    /// CNN schedule: lr 0.01, −1% every 2,000 iterations.
    pub fn cnn() -> Self {
        SgdConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            decay_factor: 0.99,
            decay_interval: 2000,
        }
    }

    /// LSTM schedule: lr 0.1, −1% every 200 iterations.
    pub fn lstm() -> Self {
        SgdConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            decay_factor: 0.99,
            decay_interval: 200,
        }
    }

    pub fn learning_rate_at(&self, iteration: u64) -> f64 {
        let steps = iteration / self.decay_interval.max(1);
        self.learning_rate * self.decay_factor.powi(steps as i32)
    }
}

/// Optimizer state: iteration counter plus one velocity buffer per tensor.
#[derive(Clone, Debug)]
pub struct SgdState<T> {
    pub config: SgdConfig,
    iteration: u64,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> SgdState<T> {
    pub fn new<P: ParamSet<T>>(config: SgdConfig, params: &P) -> Self {
        SgdState {
            config,
            iteration: 0,
            velocity: params.tensors().iter().map(|(_, t)| vec![T::zero(); t.len()]).collect(),
        }
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn learning_rate(&self) -> f64 {
        self.config.learning_rate_at(self.iteration)
    }

    /// `v ← μ·v − lr·g; p ← p + v`, then advances the iteration counter.
    pub fn step<P: ParamSet<T>>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let lr = T::of(self.learning_rate());
        let mu = T::of(self.config.momentum);
        let grads = grads.tensors();
        let mut params = params.tensors_mut();
        if params.len() != grads.len() || params.len() != self.velocity.len() {
            return Err(Error::shape(self.velocity.len(), params.len()));
        }
        for ((p, (_, g)), v) in params.iter_mut().zip(&grads).zip(&mut self.velocity) {
            if p.dims() != g.dims() || v.len() != p.len() {
                return Err(Error::shape(format!("{:?}", p.dims()), format!("{:?}", g.dims())));
            }
            for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.iter_mut()) {
                *vv = mu * *vv - lr * gv;
                *pv += *vv;
            }
        }
        self.iteration += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    struct One(Tensor<f64>);

    impl ParamSet<f64> for One {
        fn tensors(&self) -> Vec<(String, &Tensor<f64>)> {
            vec![("w".into(), &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Tensor<f64>> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn plain_step_without_momentum() {
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            decay_factor: 1.0,
            decay_interval: 1,
        };
        let mut p = One(Tensor::filled(&[3], 1.0));
        let g = One(Tensor::filled(&[3], 1.0));
        let mut s = SgdState::new(cfg, &p);
        s.step(&mut p, &g).unwrap();
        assert!(p.0.data().iter().all(|&v| (v - 0.9).abs() < 1e-15));
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = One(Tensor::filled(&[4], 0.25));
        let g = One(Tensor::zeros(&[4]));
        let mut s = SgdState::new(SgdConfig::cnn(), &p);
        for _ in 0..10 {
            s.step(&mut p, &g).unwrap();
        }
        assert!(p.0.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn momentum_accumulates() {
        let cfg = SgdConfig {
            learning_rate: 1.0,
            momentum: 0.5,
            decay_factor: 1.0,
            decay_interval: 1,
        };
        let mut p = One(Tensor::zeros(&[1]));
        let g = One(Tensor::filled(&[1], 1.0));
        let mut s = SgdState::new(cfg, &p);
        s.step(&mut p, &g).unwrap();
        s.step(&mut p, &g).unwrap();
        // v1 = -1, v2 = -1.5
        assert_eq!(p.0.data()[0], -2.5);
    }

    #[test]
    fn exponential_decay_schedule() {
        let cfg = SgdConfig::cnn();
        assert_eq!(cfg.learning_rate_at(0), 0.01);
        assert_eq!(cfg.learning_rate_at(1999), 0.01);
        assert!((cfg.learning_rate_at(4000) - 0.009801).abs() < 1e-15);
        assert!((SgdConfig::lstm().learning_rate_at(200) - 0.099).abs() < 1e-15);
    }
}
