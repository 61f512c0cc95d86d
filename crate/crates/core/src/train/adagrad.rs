//! Adagrad over sparse per-instance gradients.

use crate::config::ModelConfig;
use crate::params::ParameterSet;
use crate::train::backward::Gradients;

/// Per-parameter sums of squared gradients, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub accumulators: ParameterSet,
}

impl OptimizerState {
    pub fn new(config: &ModelConfig, item_count: usize, user_count: usize) -> Self {
        OptimizerState {
            accumulators: ParameterSet::zeros(config, item_count, user_count),
        }
    }
}

/// One scalar Adagrad update: `acc += g²; θ -= lr·g/(√acc + ε)`.
#[inline]
pub fn adagrad_update(theta: &mut f64, grad: f64, acc: &mut f64, learning_rate: f64, epsilon: f64) {
    if grad == 0.0 {
        return;
    }
    *acc += grad * grad;
    *theta -= learning_rate * grad / (acc.sqrt() + epsilon);
}

fn update_slice(theta: &mut [f64], grads: &[f64], acc: &mut [f64], lr: f64, eps: f64) {
    for ((t, &g), a) in theta.iter_mut().zip(grads).zip(acc.iter_mut()) {
        adagrad_update(t, g, a, lr, eps);
    }
}

/// Applies `grads` to `params`, touching only the entries present in `grads`.
pub fn adagrad_step(
    params: &mut ParameterSet,
    grads: &Gradients,
    state: &mut OptimizerState,
    learning_rate: f64,
    epsilon: f64,
) {
    let acc = &mut state.accumulators;
    for (r, &i) in grads.target_rows.indices.iter().enumerate() {
        update_slice(
            params.target_emb.row_mut(i),
            grads.target_rows.values.row(r),
            acc.target_emb.row_mut(i),
            learning_rate,
            epsilon,
        );
    }
    for (r, &i) in grads.history_rows.indices.iter().enumerate() {
        update_slice(
            params.history_emb.row_mut(i),
            grads.history_rows.values.row(r),
            acc.history_emb.row_mut(i),
            learning_rate,
            epsilon,
        );
    }
    if grads.network_touched {
        update_slice(
            params.attn_weight.as_mut_slice(),
            grads.attn_weight.as_slice(),
            acc.attn_weight.as_mut_slice(),
            learning_rate,
            epsilon,
        );
        update_slice(&mut params.attn_bias, &grads.attn_bias, &mut acc.attn_bias, learning_rate, epsilon);
        update_slice(
            params.feature_out.as_mut_slice(),
            grads.feature_out.as_slice(),
            acc.feature_out.as_mut_slice(),
            learning_rate,
            epsilon,
        );
        update_slice(&mut params.item_out, &grads.item_out, &mut acc.item_out, learning_rate, epsilon);
        for l in 0..params.deep_weights.len() {
            update_slice(
                params.deep_weights[l].as_mut_slice(),
                grads.deep_weights[l].as_slice(),
                acc.deep_weights[l].as_mut_slice(),
                learning_rate,
                epsilon,
            );
            update_slice(
                &mut params.deep_biases[l],
                &grads.deep_biases[l],
                &mut acc.deep_biases[l],
                learning_rate,
                epsilon,
            );
        }
        update_slice(&mut params.regression, &grads.regression, &mut acc.regression, learning_rate, epsilon);
    }
    if let Some((u, g)) = grads.user_bias {
        adagrad_update(&mut params.user_bias[u], g, &mut acc.user_bias[u], learning_rate, epsilon);
    }
    if let Some((i, g)) = grads.item_bias {
        adagrad_update(&mut params.item_bias[i], g, &mut acc.item_bias[i], learning_rate, epsilon);
    }
}
