//! Edge-aware graph attention over dialog graphs, relevance heads for
//! context and concept nodes, and the training losses.

mod forward;
mod input;
mod loss;

pub use forward::{
    attention_weights, forward, message, score_concept, score_context, Forward, ParamVars,
};
pub use input::GraphInput;
pub use loss::{
    concept_loss_var, loss_concept, loss_sentence, sentence_loss_var, total_loss, turn_loss,
    ConceptLoss, TurnLoss,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::semgraph::{EdgeType, NodeType};
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EgatError {
    #[error("layer {layer}: {source}")]
    Layer { layer: usize, source: TensorError },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("no positive candidate")]
    NoPositive,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("parameter `{name}` has shape {found:?}, expected {expected:?}")]
    ParamShape { name: String, expected: Vec<usize>, found: Vec<usize> },
}

impl EgatError {
    pub fn is_non_finite(&self) -> bool {
        matches!(
            self,
            EgatError::Tensor(TensorError::NonFinite { .. })
                | EgatError::Layer { source: TensorError::NonFinite { .. }, .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EgatConfig {
    pub hidden_dim: usize,
    pub layers: usize,
    pub type_dim: usize,
    pub input_dim: usize,
    pub beta: f64,
    pub negatives: usize,
}

impl Default for EgatConfig {
    fn default() -> Self {
        EgatConfig { hidden_dim: 200, layers: 2, type_dim: 20, input_dim: 768, beta: 1.0, negatives: 5 }
    }
}

impl EgatConfig {
    pub fn validate(&self) -> Result<(), EgatError> {
        if self.hidden_dim == 0 || self.type_dim == 0 || self.input_dim == 0 {
            return Err(EgatError::Config("dimensions must be positive".into()));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(EgatError::Config(format!("beta must be finite and non-negative, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Indices into [`EgatParams::tensors`].
pub mod p {
    pub const W_IN: usize = 0;
    pub const B_IN: usize = 1;
    pub const NODE_TYPE: usize = 2;
    pub const EDGE_TYPE: usize = 3;
    pub const W_V: usize = 4;
    pub const B_V: usize = 5;
    pub const W_E: usize = 6;
    pub const W_Q: usize = 7;
    pub const B_Q: usize = 8;
    pub const W_K: usize = 9;
    pub const B_K: usize = 10;
    pub const AGG_W1: usize = 11;
    pub const AGG_B1: usize = 12;
    pub const AGG_W2: usize = 13;
    pub const AGG_B2: usize = 14;
    pub const CTX_W1: usize = 15;
    pub const CTX_B1: usize = 16;
    pub const CTX_W2: usize = 17;
    pub const CTX_B2: usize = 18;
    pub const CON_W1: usize = 19;
    pub const CON_B1: usize = 20;
    pub const CON_W2: usize = 21;
    pub const CON_B2: usize = 22;
    pub const COUNT: usize = 23;

    pub const NAMES: [&str; COUNT] = [
        "w_in", "b_in", "node_type", "edge_type", "w_v", "b_v", "w_e", "w_q", "b_q", "w_k", "b_k",
        "agg_w1", "agg_b1", "agg_w2", "agg_b2", "ctx_w1", "ctx_b1", "ctx_w2", "ctx_b2", "con_w1",
        "con_b1", "con_w2", "con_b2",
    ];
}

/// Trainable tensors. Weights are `fan_in x fan_out` and act on row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EgatParams {
    pub config: EgatConfig,
    pub tensors: Vec<Tensor>,
}

fn shapes(c: &EgatConfig) -> [Vec<usize>; p::COUNT] {
    let (d, t, i) = (c.hidden_dim, c.type_dim, c.input_dim);
    [
        vec![i, d],
        vec![d],
        vec![NodeType::COUNT, t],
        vec![EdgeType::COUNT, t],
        vec![d + t, d],
        vec![d],
        vec![t, d],
        vec![d + t, d],
        vec![d],
        vec![d + 2 * t, d],
        vec![d],
        vec![d, d],
        vec![d],
        vec![d, d],
        vec![d],
        vec![2 * d, d],
        vec![d],
        vec![d, 1],
        vec![1],
        vec![d, d],
        vec![d],
        vec![d, 1],
        vec![1],
    ]
}

impl EgatParams {
    /// Glorot-uniform weights and type tables, zero biases.
    pub fn init(config: &EgatConfig, seed: u64) -> Result<Self, EgatError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = shapes(config)
            .into_iter()
            .map(|shape| {
                if shape.len() == 1 {
                    return Tensor::zeros(&shape);
                }
                let a = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                let data = (0..shape[0] * shape[1]).map(|_| rng.gen_range(-a..a)).collect();
                Tensor::new(shape, data).expect("shape matches data")
            })
            .collect();
        Ok(EgatParams { config: config.clone(), tensors })
    }

    pub fn get(&self, idx: usize) -> &Tensor {
        &self.tensors[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.tensors[idx]
    }

    pub fn named(&self) -> Vec<(String, Tensor)> {
        p::NAMES.iter().map(|n| n.to_string()).zip(self.tensors.iter().cloned()).collect()
    }

    /// Rebuilds parameters from checkpoint tensors, checking names and shapes.
    pub fn from_named(config: &EgatConfig, named: Vec<(String, Tensor)>) -> Result<Self, EgatError> {
        config.validate()?;
        let expected = shapes(config);
        if named.len() != p::COUNT {
            return Err(EgatError::Config(format!("expected {} tensors, found {}", p::COUNT, named.len())));
        }
        let mut tensors = Vec::with_capacity(p::COUNT);
        for (i, (name, t)) in named.into_iter().enumerate() {
            if name != p::NAMES[i] || t.shape() != expected[i].as_slice() {
                return Err(EgatError::ParamShape {
                    name,
                    expected: expected[i].clone(),
                    found: t.shape().to_vec(),
                });
            }
            tensors.push(t);
        }
        Ok(EgatParams { config: config.clone(), tensors })
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

#[cfg(test)]
mod tests;
