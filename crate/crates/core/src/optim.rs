//! SGD and Adam parameter updates over flat parameter vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{FeedForwardNet, GradientSet};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptAlgo {
    Sgd,
    Adam,
}

/// Optimizer state for one parameter group. Adam moments start at zero and
/// the step counter at zero; SGD keeps the moments empty.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub algo: OptAlgo,
    pub learning_rate: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl OptimizerState {
    pub fn new(algo: OptAlgo, learning_rate: f64, param_count: usize) -> Result<Self> {
        if !(learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        let moments = match algo {
            OptAlgo::Sgd => 0,
            OptAlgo::Adam => param_count,
        };
        Ok(Self {
            algo,
            learning_rate,
            first_moment: vec![0.0; moments],
            second_moment: vec![0.0; moments],
            step_count: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update to `params` in place.
    pub fn step_params(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "parameter/gradient length mismatch: {} vs {}",
                params.len(),
                grads.len()
            )));
        }
        match self.algo {
            OptAlgo::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.learning_rate * g;
                }
            }
            OptAlgo::Adam => {
                if self.first_moment.len() != params.len() {
                    return Err(Error::Shape(format!(
                        "optimizer state sized for {} parameters, got {}",
                        self.first_moment.len(),
                        params.len()
                    )));
                }
                self.step_count += 1;
                let t = self.step_count as i32;
                let bias1 = 1.0 - ADAM_BETA1.powi(t);
                let bias2 = 1.0 - ADAM_BETA2.powi(t);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.first_moment[i] = ADAM_BETA1 * self.first_moment[i] + (1.0 - ADAM_BETA1) * g;
                    self.second_moment[i] =
                        ADAM_BETA2 * self.second_moment[i] + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = self.first_moment[i] / bias1;
                    let v_hat = self.second_moment[i] / bias2;
                    params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
        Ok(())
    }
}

/// Applies one optimizer update to a whole net from a shape-congruent
/// gradient set.
pub fn optimizer_step(
    net: &mut FeedForwardNet,
    grads: &GradientSet,
    state: &mut OptimizerState,
) -> Result<()> {
    if grads.parameter_count() != net.parameter_count() {
        return Err(Error::Shape(format!(
            "gradient set has {} parameters, net has {}",
            grads.parameter_count(),
            net.parameter_count()
        )));
    }
    let mut params = Vec::with_capacity(net.parameter_count());
    net.flatten_params_into(&mut params);
    let mut flat_grads = Vec::with_capacity(params.len());
    grads.flatten_into(&mut flat_grads);
    state.step_params(&mut params, &flat_grads)?;
    net.unflatten_params_from(&params, 0)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{net_init, Activation, NetConfig};

    #[test]
    fn sgd_basic_update() {
        let mut state = OptimizerState::new(OptAlgo::Sgd, 0.1, 1).unwrap();
        let mut p = [1.0];
        state.step_params(&mut p, &[2.0]).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        for algo in [OptAlgo::Sgd, OptAlgo::Adam] {
            let mut state = OptimizerState::new(algo, 0.05, 3).unwrap();
            let mut p = [1.0, -2.0, 0.5];
            state.step_params(&mut p, &[0.0, 0.0, 0.0]).unwrap();
            assert_eq!(p, [1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn adam_first_step_moves_by_about_lr() {
        // Hand-derived first Adam step: m_hat = g, v_hat = g^2, so the update
        // is lr * g / (|g| + eps) = lr * sign(g) up to eps.
        let mut state = OptimizerState::new(OptAlgo::Adam, 0.001, 1).unwrap();
        let mut p = [1.0];
        state.step_params(&mut p, &[1.0]).unwrap();
        let expected = 1.0 - 0.001 * 1.0 / (1.0 + ADAM_EPS);
        assert!((p[0] - expected).abs() < 1e-15, "got {}", p[0]);
        assert!((p[0] - 0.999).abs() < 1e-8);
    }

    #[test]
    fn optimizer_step_rejects_mismatched_shapes() {
        let mut net = net_init(NetConfig::new(vec![2, 1], Activation::Relu, 0)).unwrap();
        let other = net_init(NetConfig::new(vec![3, 1], Activation::Relu, 0)).unwrap();
        let grads = crate::net::GradientSet::zeros_like(&other);
        let mut state = OptimizerState::new(OptAlgo::Sgd, 0.1, other.parameter_count()).unwrap();
        assert!(matches!(
            optimizer_step(&mut net, &grads, &mut state).unwrap_err(),
            Error::Shape(_)
        ));
    }

    #[test]
    fn training_sequence_is_bit_deterministic() {
        let run = || {
            let mut net = net_init(NetConfig::new(vec![3, 4, 1], Activation::Tanh, 11)).unwrap();
            let mut state =
                OptimizerState::new(OptAlgo::Adam, 0.01, net.parameter_count()).unwrap();
            for step in 0..25 {
                let x = [0.1 * step as f64, -0.2, 0.3];
                let grads = net.backward(&x, &[1.0]).unwrap();
                optimizer_step(&mut net, &grads, &mut state).unwrap();
            }
            let mut flat = Vec::new();
            net.flatten_params_into(&mut flat);
            flat
        };
        let a = run();
        let b = run();
        assert_eq!(
            a.iter().map(|f| f.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|f| f.to_bits()).collect::<Vec<_>>()
        );
    }
}
