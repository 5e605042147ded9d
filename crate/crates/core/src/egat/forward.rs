use std::rc::Rc;

use super::{p, EgatError, EgatParams, GraphInput};
use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Parameters recorded on a tape, indexed like [`EgatParams::tensors`].
#[derive(Debug, Clone)]
pub struct ParamVars(pub Vec<Var>);

impl ParamVars {
    pub fn trainable(tape: &mut Tape, params: &EgatParams) -> Self {
        ParamVars(params.tensors.iter().map(|t| tape.param(t.clone())).collect())
    }

    pub fn frozen(tape: &mut Tape, params: &EgatParams) -> Self {
        ParamVars(params.tensors.iter().map(|t| tape.constant(t.clone())).collect())
    }

    fn at(&self, i: usize) -> Var {
        self.0[i]
    }
}

pub struct Forward {
    /// `h^0 .. h^L`, each `nodes x D`.
    pub states: Vec<Var>,
    /// Per-layer attention weights, one per edge.
    pub attention: Vec<Var>,
    pub context_logits: Option<Var>,
    pub concept_probs: Option<Var>,
}

fn linear(t: &mut Tape, x: Var, w: Var, b: Option<Var>) -> Result<Var, TensorError> {
    let y = t.matmul(x, w)?;
    match b {
        Some(b) => t.add_bias(y, b),
        None => Ok(y),
    }
}

fn mlp(t: &mut Tape, x: Var, pv: &ParamVars, first: usize) -> Result<Var, TensorError> {
    let h = linear(t, x, pv.at(first), Some(pv.at(first + 1)))?;
    let h = t.gelu(h)?;
    linear(t, h, pv.at(first + 2), Some(pv.at(first + 3)))
}

struct EdgeTerms {
    messages: Var,
    logits: Var,
}

/// Messages `W_v [h_s; h_T(s)] + W_e h_T(e)` and attention logits
/// `q_s . k_t / sqrt(D)` for every edge.
fn edge_terms(
    t: &mut Tape,
    pv: &ParamVars,
    h: Var,
    node_types: &Rc<Vec<usize>>,
    src: &Rc<Vec<usize>>,
    dst: &Rc<Vec<usize>>,
    edge_types: &Rc<Vec<usize>>,
    d: usize,
) -> Result<EdgeTerms, TensorError> {
    let nt = t.gather(pv.at(p::NODE_TYPE), node_types.clone())?;
    let x = t.concat(&[h, nt])?;
    let et = t.gather(pv.at(p::EDGE_TYPE), edge_types.clone())?;

    let v = linear(t, x, pv.at(p::W_V), Some(pv.at(p::B_V)))?;
    let v_src = t.gather(v, src.clone())?;
    let e = linear(t, et, pv.at(p::W_E), None)?;
    let messages = t.add(v_src, e)?;

    let q = linear(t, x, pv.at(p::W_Q), Some(pv.at(p::B_Q)))?;
    let q_src = t.gather(q, src.clone())?;
    let x_dst = t.gather(x, dst.clone())?;
    let key_in = t.concat(&[x_dst, et])?;
    let k = linear(t, key_in, pv.at(p::W_K), Some(pv.at(p::B_K)))?;
    let dots = t.row_dot(q_src, k)?;
    let logits = t.scale(dots, 1.0 / (d as f64).sqrt())?;
    Ok(EdgeTerms { messages, logits })
}

/// Runs input projection, `L` shared-weight layers and both scoring heads.
pub fn forward(tape: &mut Tape, pv: &ParamVars, params: &EgatParams, g: &GraphInput) -> Result<Forward, EgatError> {
    let cfg = &params.config;
    let d = cfg.hidden_dim;
    let n = g.node_count();
    let x = tape.constant(g.features.clone());
    let h0 = linear(tape, x, pv.at(p::W_IN), Some(pv.at(p::B_IN)))?;
    let segs = g.segments();
    let mut states = vec![h0];
    let mut attention = Vec::with_capacity(cfg.layers);
    for layer in 0..cfg.layers {
        let wrap = |source| EgatError::Layer { layer, source };
        let h = *states.last().expect("h0");
        let terms = edge_terms(tape, pv, h, &g.node_types, &g.src, &g.dst, &g.edge_types, d).map_err(wrap)?;
        let alpha = tape.segment_softmax(terms.logits, segs.clone()).map_err(wrap)?;
        let weighted = tape.row_scale(terms.messages, alpha).map_err(wrap)?;
        let agg = tape.scatter_sum(weighted, g.dst.clone(), n).map_err(wrap)?;
        let upd = mlp(tape, agg, pv, p::AGG_W1).map_err(wrap)?;
        let res = tape.add(upd, h).map_err(wrap)?;
        states.push(tape.gelu(res).map_err(wrap)?);
        attention.push(alpha);
    }
    let hl = *states.last().expect("h0");
    let context_logits = if g.contexts.is_empty() {
        None
    } else {
        let a = tape.gather(hl, g.contexts.clone())?;
        let b = tape.gather(h0, g.contexts.clone())?;
        let ab = tape.concat(&[a, b])?;
        Some(mlp(tape, ab, pv, p::CTX_W1)?)
    };
    let concept_probs = if g.concepts.is_empty() {
        None
    } else {
        let c = tape.gather(hl, g.concepts.clone())?;
        let logit = mlp(tape, c, pv, p::CON_W1)?;
        Some(tape.sigmoid(logit)?)
    };
    Ok(Forward { states, attention, context_logits, concept_probs })
}

fn row(v: &[f64]) -> Result<Tensor, TensorError> {
    Tensor::matrix(1, v.len(), v.to_vec())
}

/// The message a node of type `node_type` with state `h_s` sends along an
/// edge of type `edge_type`.
pub fn message(params: &EgatParams, h_s: &[f64], node_type: usize, edge_type: usize) -> Result<Vec<f64>, EgatError> {
    let mut t = Tape::new();
    let pv = ParamVars::frozen(&mut t, params);
    let h = t.constant(row(h_s)?);
    let one = Rc::new(vec![0]);
    let terms = edge_terms(
        &mut t,
        &pv,
        h,
        &Rc::new(vec![node_type]),
        &one,
        &one,
        &Rc::new(vec![edge_type]),
        params.config.hidden_dim,
    )?;
    Ok(t.value(terms.messages).data().to_vec())
}

/// Attention weights of target `t` over its incoming neighbors, given as
/// `(state, node type, edge type)`.
pub fn attention_weights(
    params: &EgatParams,
    h_t: &[f64],
    t_type: usize,
    neighbors: &[(Vec<f64>, usize, usize)],
) -> Result<Vec<f64>, EgatError> {
    if neighbors.is_empty() {
        return Err(TensorError::EmptySegment(0).into());
    }
    let mut rows = vec![h_t.to_vec()];
    rows.extend(neighbors.iter().map(|n| n.0.clone()));
    let mut t = Tape::new();
    let pv = ParamVars::frozen(&mut t, params);
    let h = t.constant(Tensor::from_rows(&rows)?);
    let node_types = Rc::new(std::iter::once(t_type).chain(neighbors.iter().map(|n| n.1)).collect());
    let src = Rc::new((1..=neighbors.len()).collect::<Vec<_>>());
    let dst = Rc::new(vec![0; neighbors.len()]);
    let et = Rc::new(neighbors.iter().map(|n| n.2).collect());
    let terms = edge_terms(&mut t, &pv, h, &node_types, &src, &dst, &et, params.config.hidden_dim)?;
    let alpha = t.segment_softmax(terms.logits, Rc::new(crate::tensor::Segments::from_ids(&dst)))?;
    Ok(t.value(alpha).data().to_vec())
}

/// Context logit from the final state and the projected input state.
pub fn score_context(params: &EgatParams, h_l: &[f64], h_0: &[f64]) -> Result<f64, EgatError> {
    let mut t = Tape::new();
    let pv = ParamVars::frozen(&mut t, params);
    let a = t.constant(row(h_l)?);
    let b = t.constant(row(h_0)?);
    let ab = t.concat(&[a, b])?;
    let s = mlp(&mut t, ab, &pv, p::CTX_W1)?;
    Ok(t.value(s).item())
}

/// Concept relevance probability.
pub fn score_concept(params: &EgatParams, h_l: &[f64]) -> Result<f64, EgatError> {
    let mut t = Tape::new();
    let pv = ParamVars::frozen(&mut t, params);
    let a = t.constant(row(h_l)?);
    let s = mlp(&mut t, a, &pv, p::CON_W1)?;
    let s = t.sigmoid(s)?;
    Ok(t.value(s).item())
}
