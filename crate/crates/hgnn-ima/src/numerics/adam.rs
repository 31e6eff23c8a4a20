//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;
use crate::numerics::ParamMap;

#[derive(Clone, Debug)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state: first and second moments per parameter plus step count.
pub struct Adam {
    cfg: AdamConfig,
    first: ParamMap,
    second: ParamMap,
    step: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            first: ParamMap::new(),
            second: ParamMap::new(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. Parameters with no entry in `grads` are
    /// treated as having zero gradient.
    pub fn step(&mut self, params: &mut ParamMap, grads: &ParamMap) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.cfg.beta1.powi(t);
        let c2 = 1.0 - self.cfg.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let zero;
            let g = match grads.get(name) {
                Some(g) => {
                    if g.shape() != p.shape() {
                        return Err(Error::Shape {
                            expected: format!("{:?}", p.shape()),
                            got: format!("{:?}", g.shape()),
                            context: format!("adam gradient for {name}"),
                        });
                    }
                    g
                }
                None => {
                    zero = Tensor::zeros(p.shape().to_vec());
                    &zero
                }
            };
            let m = self
                .first
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.shape().to_vec()));
            let v = self
                .second
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.shape().to_vec()));
            let (md, vd, pd) = (m.data_mut(), v.data_mut(), p.data_mut());
            for i in 0..pd.len() {
                let gi = g.data()[i];
                md[i] = self.cfg.beta1 * md[i] + (1.0 - self.cfg.beta1) * gi;
                vd[i] = self.cfg.beta2 * vd[i] + (1.0 - self.cfg.beta2) * gi * gi;
                let mhat = md[i] / c1;
                let vhat = vd[i] / c2;
                pd[i] -= self.cfg.learning_rate * mhat / (vhat.sqrt() + self.cfg.epsilon);
            }
            if !pd.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite(format!("adam update of {name}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_of(v: Vec<f64>) -> ParamMap {
        let n = v.len();
        let mut m = ParamMap::new();
        m.insert("w".into(), Tensor::new([n], v).unwrap());
        m
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = params_of(vec![1.0, -2.0]);
        let grads = params_of(vec![0.0, 0.0]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut params, &grads).unwrap();
        assert_eq!(params["w"].data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr_sign() {
        // Bias-corrected first step: mhat = g, vhat = g^2, so the update is
        // -lr * g / (|g| + eps), i.e. about -lr * sign(g).
        let mut params = params_of(vec![0.0, 0.0]);
        let grads = params_of(vec![3.0, -0.25]);
        let cfg = AdamConfig::default();
        let lr = cfg.learning_rate;
        let mut adam = Adam::new(cfg);
        adam.step(&mut params, &grads).unwrap();
        let expect0 = -lr * 3.0 / (3.0 + 1e-8);
        let expect1 = lr * 0.25 / (0.25 + 1e-8);
        assert!((params["w"].data()[0] - expect0).abs() < 1e-15);
        assert!((params["w"].data()[1] - expect1).abs() < 1e-15);
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            let mut params = params_of(vec![0.5, 0.5, 0.5]);
            let mut adam = Adam::new(AdamConfig::default());
            for i in 0..25 {
                let grads = params_of(vec![0.1 * i as f64, -0.2, 0.05]);
                adam.step(&mut params, &grads).unwrap();
            }
            params["w"].data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_errors() {
        let mut params = params_of(vec![1.0, 2.0]);
        let mut grads = ParamMap::new();
        grads.insert("w".into(), Tensor::zeros([3]));
        let mut adam = Adam::new(AdamConfig::default());
        assert!(adam.step(&mut params, &grads).is_err());
    }
}
