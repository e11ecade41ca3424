use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use crate::error::{Error, Result};

/// Adam hyperparameters. Only active coordinates and biases are updated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl Adam {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            ..Adam::default()
        }
    }

    /// Advances the network's step counter and applies one bias-corrected update.
    pub fn step(&self, net: &mut Network, grads: &Gradients) -> Result<()> {
        if grads.weights.len() != net.layers().len() || grads.biases.len() != net.layers().len() {
            return Err(Error::Shape(
                "gradient layer count differs from network".into(),
            ));
        }
        for (l, layer) in net.layers().iter().enumerate() {
            if grads.weights[l].len() != layer.nnz() || grads.biases[l].len() != layer.n_out() {
                return Err(Error::Shape(format!(
                    "gradient for layer {l} is not aligned with its active coordinates"
                )));
            }
        }
        net.apply_adam(grads, self);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, SparseLayer};

    fn one_weight_net() -> Network {
        let layer = SparseLayer::from_entries(1, 2, [((0, 0), 0.5)], vec![0.0; 2]).unwrap();
        Network::from_layers(vec![layer], Activation::Relu).unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut net = one_weight_net();
        let grads = Gradients {
            weights: vec![vec![1.0]],
            biases: vec![vec![0.0, 0.0]],
            loss: 0.0,
            data_loss: 0.0,
        };
        Adam::default().step(&mut net, &grads).unwrap();
        let delta = net.layers()[0].values()[0] - 0.5;
        // m_hat = v_hat = 1 after bias correction
        let expected = -0.001 * (1.0 / (1.0 + 1e-8));
        assert!((delta - expected).abs() < 1e-15, "{delta} vs {expected}");
        assert_eq!(net.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_fresh_network_unchanged() {
        let mut net = one_weight_net();
        let before = net.clone();
        let grads = Gradients {
            weights: vec![vec![0.0]],
            biases: vec![vec![0.0, 0.0]],
            loss: 0.0,
            data_loss: 0.0,
        };
        Adam::default().step(&mut net, &grads).unwrap();
        assert_eq!(net.layers(), before.layers());
    }

    #[test]
    fn replay_is_deterministic() {
        let grads = Gradients {
            weights: vec![vec![0.3]],
            biases: vec![vec![-0.1, 0.2]],
            loss: 0.0,
            data_loss: 0.0,
        };
        let run = || {
            let mut net = one_weight_net();
            for _ in 0..2 {
                Adam::default().step(&mut net, &grads).unwrap();
            }
            net
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn misaligned_gradient_is_rejected() {
        let mut net = one_weight_net();
        let grads = Gradients {
            weights: vec![vec![1.0, 2.0]],
            biases: vec![vec![0.0, 0.0]],
            loss: 0.0,
            data_loss: 0.0,
        };
        assert!(Adam::default().step(&mut net, &grads).is_err());
    }
}
