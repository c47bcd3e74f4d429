use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Parameter;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Adam {
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
    Rmsprop {
        learning_rate: f64,
        rho: f64,
        epsilon: f64,
    },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam(0.001)
    }
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig::Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn rmsprop(learning_rate: f64) -> Self {
        OptimizerConfig::Rmsprop {
            learning_rate,
            rho: 0.9,
            epsilon: 1e-8,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            OptimizerConfig::Adam { learning_rate, .. }
            | OptimizerConfig::Rmsprop { learning_rate, .. } => learning_rate,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerConfig::Adam { .. } => "adam",
            OptimizerConfig::Rmsprop { .. } => "rmsprop",
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let lr = self.learning_rate();
        if !(lr.is_finite() && lr > 0.0) {
            out.push(format!("learning rate {lr} must be a positive number"));
        }
        let unit = |name: &str, v: f64, out: &mut Vec<String>| {
            if !(0.0..1.0).contains(&v) {
                out.push(format!("{name} {v} outside [0,1)"));
            }
        };
        match *self {
            OptimizerConfig::Adam {
                beta1,
                beta2,
                epsilon,
                ..
            } => {
                unit("beta1", beta1, &mut out);
                unit("beta2", beta2, &mut out);
                if !(epsilon > 0.0) {
                    out.push("epsilon must be > 0".into());
                }
            }
            OptimizerConfig::Rmsprop { rho, epsilon, .. } => {
                unit("rho", rho, &mut out);
                if !(epsilon > 0.0) {
                    out.push("epsilon must be > 0".into());
                }
            }
        }
        out
    }
}

/// Adam or RMSprop state. Moment buffers mirror the parameter list given at
/// construction, in order.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    config: OptimizerConfig,
    steps: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, params: &[&Parameter]) -> Result<Self> {
        let p = config.problems();
        if !p.is_empty() {
            return Err(Error::InvalidConfig(p.join("; ")));
        }
        let zeros = || {
            params
                .iter()
                .map(|p| vec![0.0; p.len()])
                .collect::<Vec<_>>()
        };
        let first = match config {
            OptimizerConfig::Adam { .. } => zeros(),
            OptimizerConfig::Rmsprop { .. } => Vec::new(),
        };
        Ok(Optimizer {
            config,
            steps: 0,
            first,
            second: zeros(),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.steps
    }

    /// Apply one update from the accumulated gradients, then zero them.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, mut params: Vec<&mut Parameter>) -> Result<()> {
        if params.len() != self.second.len() {
            return Err(Error::shape(format!(
                "optimizer tracks {} parameters, got {}",
                self.second.len(),
                params.len()
            )));
        }
        for (p, v) in params.iter().zip(&self.second) {
            if p.len() != v.len() {
                return Err(Error::shape(format!(
                    "parameter {} has {} entries, optimizer state has {}",
                    p.name,
                    p.len(),
                    v.len()
                )));
            }
            if let Some(pos) = p.grad.data().iter().position(|g| !g.is_finite()) {
                return Err(Error::NumericFault(format!(
                    "non-finite gradient in {} at index {pos}",
                    p.name
                )));
            }
        }
        self.steps += 1;
        match self.config {
            OptimizerConfig::Adam {
                learning_rate,
                beta1,
                beta2,
                epsilon,
            } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
                    let g = p.grad.data().to_vec();
                    let theta = p.value.data_mut();
                    for j in 0..g.len() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                        let m_hat = m[j] / c1;
                        let v_hat = v[j] / c2;
                        theta[j] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
            OptimizerConfig::Rmsprop {
                learning_rate,
                rho,
                epsilon,
            } => {
                for (p, v) in params.iter_mut().zip(&mut self.second) {
                    let g = p.grad.data().to_vec();
                    let theta = p.value.data_mut();
                    for j in 0..g.len() {
                        v[j] = rho * v[j] + (1.0 - rho) * g[j] * g[j];
                        theta[j] -= learning_rate * g[j] / (v[j].sqrt() + epsilon);
                    }
                }
            }
        }
        for p in params.iter_mut() {
            p.value.check_finite(&format!("parameter {}", p.name))?;
            p.zero_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Tensor;

    fn param(values: &[f64], grads: &[f64]) -> Parameter {
        let mut p = Parameter::new("p", Tensor::vector(values.to_vec()));
        p.grad.data_mut().copy_from_slice(grads);
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for cfg in [
            OptimizerConfig::adam(0.001),
            OptimizerConfig::rmsprop(0.001),
        ] {
            let mut p = param(&[1.0, -2.0], &[0.0, 0.0]);
            let mut opt = Optimizer::new(cfg, &[&p]).unwrap();
            opt.step(vec![&mut p]).unwrap();
            assert_eq!(p.value.data(), &[1.0, -2.0]);
            assert_eq!(opt.step_count(), 1);
        }
    }

    #[test]
    fn adam_first_step_is_lr_sign() {
        let mut p = param(&[0.0, 0.0], &[3.0, -0.5]);
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.001), &[&p]).unwrap();
        opt.step(vec![&mut p]).unwrap();
        assert!((p.value.data()[0] + 0.001).abs() < 1e-10);
        assert!((p.value.data()[1] - 0.001).abs() < 1e-10);
        assert_eq!(p.grad.max_abs(), 0.0);
    }

    #[test]
    fn rmsprop_first_step_closed_form() {
        let g = 2.0;
        let mut p = param(&[0.0], &[g]);
        let mut opt = Optimizer::new(OptimizerConfig::rmsprop(0.001), &[&p]).unwrap();
        opt.step(vec![&mut p]).unwrap();
        let expected = -0.001 * g / ((0.1 * g * g).sqrt() + 1e-8);
        assert!((p.value.data()[0] - expected).abs() < 1e-15);
        assert!((expected + 0.001 / 0.1f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn rmsprop_rho_zero_is_sign_like() {
        let cfg = OptimizerConfig::Rmsprop {
            learning_rate: 0.01,
            rho: 0.0,
            epsilon: 1e-8,
        };
        let mut p = param(&[0.0, 0.0], &[-4.0, 0.25]);
        let mut opt = Optimizer::new(cfg, &[&p]).unwrap();
        opt.step(vec![&mut p]).unwrap();
        assert!((p.value.data()[0] - 0.01 * 4.0 / (4.0 + 1e-8)).abs() < 1e-15);
        assert!((p.value.data()[1] + 0.01 * 0.25 / (0.25 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = param(&[1.0, 1.0], &[0.0, f64::NAN]);
        p.name = "user.dense.weight".into();
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.001), &[&p]).unwrap();
        let err = opt.step(vec![&mut p]).unwrap_err();
        assert!(matches!(&err, Error::NumericFault(m) if m.contains("user.dense.weight")));
        assert_eq!(p.value.data(), &[1.0, 1.0]);
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut p = param(&[0.5, -0.5, 2.0], &[0.0; 3]);
            let mut opt = Optimizer::new(OptimizerConfig::adam(0.01), &[&p]).unwrap();
            let mut traj = Vec::new();
            for k in 0..20 {
                let x = p.value.data().to_vec();
                for (j, g) in p.grad.data_mut().iter_mut().enumerate() {
                    *g = 2.0 * x[j] + (k as f64 * 0.1).sin();
                }
                opt.step(vec![&mut p]).unwrap();
                traj.push(p.value.data().to_vec());
            }
            traj
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn invalid_config() {
        let p = param(&[0.0], &[0.0]);
        assert!(Optimizer::new(OptimizerConfig::adam(0.0), &[&p]).is_err());
        let cfg = OptimizerConfig::Rmsprop {
            learning_rate: 0.1,
            rho: 1.0,
            epsilon: 1e-8,
        };
        assert!(Optimizer::new(cfg, &[&p]).is_err());
    }
}
