use std::rc::Rc;

use super::{forward, EgatError, EgatParams, Forward, GraphInput, ParamVars};
use crate::tensor::{Tape, Tensor, Var};

const P_MIN: f64 = 1e-12;
const P_MAX: f64 = 1.0 - 1e-12;

/// Cross-entropy of the positive entry against all given logits.
pub fn sentence_loss_var(tape: &mut Tape, logits: Var, positive: usize) -> Result<Var, EgatError> {
    if positive >= tape.value(logits).len() {
        return Err(EgatError::NoPositive);
    }
    let ls = tape.log_softmax(logits)?;
    let pick = tape.gather(ls, Rc::new(vec![positive]))?;
    let s = tape.sum(pick)?;
    Ok(tape.neg(s)?)
}

/// Mean two-term binary cross-entropy with clamped probabilities.
pub fn concept_loss_var(tape: &mut Tape, probs: Var, labels: &[f64]) -> Result<Var, EgatError> {
    let p = tape.clamp(probs, P_MIN, P_MAX)?;
    let q = tape.one_minus(p)?;
    let lp = tape.ln(p)?;
    let lq = tape.ln(q)?;
    let shape = tape.value(probs).shape().to_vec();
    let r = tape.constant(Tensor::new(shape.clone(), labels.to_vec())?);
    let nr = tape.constant(Tensor::new(shape, labels.iter().map(|r| 1.0 - r).collect())?);
    let a = tape.mul(r, lp)?;
    let b = tape.mul(nr, lq)?;
    let ab = tape.add(a, b)?;
    let m = tape.mean(ab)?;
    Ok(tape.neg(m)?)
}

pub fn loss_sentence(scores: &[f64], positive: usize) -> Result<f64, EgatError> {
    if scores.is_empty() {
        return Err(EgatError::NoPositive);
    }
    let mut t = Tape::new();
    let s = t.constant(Tensor::vector(scores.to_vec()));
    let l = sentence_loss_var(&mut t, s, positive)?;
    Ok(t.value(l).item())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConceptLoss {
    pub value: f64,
    /// Set when there were no concept nodes and the loss is defined as 0.
    pub empty: bool,
}

pub fn loss_concept(probs: &[f64], labels: &[f64]) -> Result<ConceptLoss, EgatError> {
    if probs.is_empty() {
        return Ok(ConceptLoss { value: 0.0, empty: true });
    }
    let mut t = Tape::new();
    let p = t.constant(Tensor::vector(probs.to_vec()));
    let l = concept_loss_var(&mut t, p, labels)?;
    Ok(ConceptLoss { value: t.value(l).item(), empty: false })
}

pub fn total_loss(l_c: f64, l_n: f64, beta: f64) -> f64 {
    l_c + beta * l_n
}

pub struct TurnLoss {
    pub forward: Forward,
    pub l_c: Var,
    pub l_n: Option<Var>,
    pub total: Var,
}

impl TurnLoss {
    pub fn values(&self, tape: &Tape) -> (f64, f64, f64) {
        let ln = self.l_n.map_or(0.0, |v| tape.value(v).item());
        (tape.value(self.l_c).item(), ln, tape.value(self.total).item())
    }
}

/// Forward pass plus `L_c + beta * L_n` for one turn. `positive` indexes
/// `g.contexts`; `labels` align with `g.concepts`.
pub fn turn_loss(
    tape: &mut Tape,
    pv: &ParamVars,
    params: &EgatParams,
    g: &GraphInput,
    positive: usize,
    labels: &[f64],
) -> Result<TurnLoss, EgatError> {
    let fw = forward(tape, pv, params, g)?;
    let logits = fw.context_logits.ok_or(EgatError::NoPositive)?;
    let l_c = sentence_loss_var(tape, logits, positive)?;
    let l_n = match fw.concept_probs {
        Some(p) => Some(concept_loss_var(tape, p, labels)?),
        None => None,
    };
    let total = match l_n {
        Some(ln) => {
            let w = tape.scale(ln, params.config.beta)?;
            tape.add(l_c, w)?
        }
        None => l_c,
    };
    Ok(TurnLoss { forward: fw, l_c, l_n, total })
}
