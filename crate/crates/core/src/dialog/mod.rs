//! Per-turn dialog-aware graphs: context nodes pairing each candidate
//! sentence with the recent dialog history, plus supervision labels.

mod encoder;

pub use encoder::{ContextEncoder, ContextSource, HashContextEncoder};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::semgraph::{DocumentSemanticGraph, EdgeType, NodeType};

#[derive(Debug, Error)]
pub enum DialogError {
    #[error("candidate sentence `{0}` is not in the document graph")]
    UnknownSentence(String),
    #[error("no context embedding for `{0}`")]
    MissingContextEmbedding(String),
    #[error("turn {dialog_id}:{turn_index} has no gold label")]
    NoGoldLabel { dialog_id: String, turn_index: usize },
    #[error("turn {dialog_id}:{turn_index}: {reason}")]
    InvalidTurn { dialog_id: String, turn_index: usize, reason: String },
    #[error("context embedding has dimension {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: String,
    pub text: String,
}

impl Utterance {
    pub fn tokens(&self) -> Vec<&str> {
        self.text.split_whitespace().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub sentence_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSpan {
    pub sentence_id: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogTurn {
    pub dialog_id: String,
    pub turn_index: usize,
    pub doc_id: String,
    pub history: Vec<Utterance>,
    pub candidates: Vec<Candidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sentence_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_span: Option<GoldSpan>,
}

impl DialogTurn {
    pub fn key(&self) -> String {
        format!("{}:{}", self.dialog_id, self.turn_index)
    }

    /// Key of the precomputed context embedding for one candidate.
    pub fn context_key(&self, sentence_id: &str) -> String {
        format!("{}:{}:{}", self.dialog_id, self.turn_index, sentence_id)
    }

    /// The gold sentence: explicit, or else the candidate holding the span.
    pub fn gold_sentence(&self) -> Option<&str> {
        if let Some(g) = &self.gold_sentence_id {
            return Some(g);
        }
        let span = self.gold_span.as_ref()?;
        self.candidates
            .iter()
            .find(|c| c.sentence_id == span.sentence_id)
            .map(|c| c.sentence_id.as_str())
    }

    pub fn validate(&self) -> Result<(), DialogError> {
        let invalid = |reason: String| DialogError::InvalidTurn {
            dialog_id: self.dialog_id.clone(),
            turn_index: self.turn_index,
            reason,
        };
        if let Some(g) = &self.gold_sentence_id {
            if !self.candidates.iter().any(|c| &c.sentence_id == g) {
                return Err(invalid(format!("gold sentence `{g}` is not a candidate")));
            }
        }
        if let Some(span) = &self.gold_span {
            if span.start >= span.end {
                return Err(invalid("empty gold span".into()));
            }
        }
        Ok(())
    }
}

/// Reads the JSONL dialog dataset, one turn per line.
pub fn load_dialogs(text: &str) -> Result<Vec<DialogTurn>, DialogError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let turn: DialogTurn =
            serde_json::from_str(line).map_err(|source| DialogError::Json { line: i + 1, source })?;
        turn.validate()?;
        out.push(turn);
    }
    Ok(out)
}

pub fn write_dialogs(turns: &[DialogTurn]) -> String {
    let mut s = String::new();
    for t in turns {
        s.push_str(&serde_json::to_string(t).expect("dialog turns serialize"));
        s.push('\n');
    }
    s
}

fn speaker_marker(speaker: &str) -> &'static str {
    match speaker.to_ascii_lowercase().as_str() {
        "u" | "user" | "apprentice" => "U:",
        _ => "S:",
    }
}

/// Concatenates the last `window` utterances, oldest first, each prefixed
/// with a `U:`/`S:` speaker marker.
pub fn make_context(history: &[Utterance], window: usize) -> String {
    let start = history.len().saturating_sub(window.max(1));
    history[start..]
        .iter()
        .map(|u| format!("{} {}", speaker_marker(&u.speaker), u.text))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextNode {
    /// Node index in the dialog graph (after all base nodes).
    pub id: usize,
    pub sentence_id: String,
    pub sentence_node: usize,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelSet {
    pub positive_sentence_id: String,
    /// Concept node id -> relevance in {0, 1}.
    pub concept_relevance: BTreeMap<usize, u8>,
}

/// A document graph plus one context node per (selected) candidate.
#[derive(Debug, Clone)]
pub struct DialogGraph<'g> {
    pub base: &'g DocumentSemanticGraph,
    pub contexts: Vec<ContextNode>,
    pub labels: Option<LabelSet>,
}

/// Flat edge view `(src, dst, type id)` used by the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlatEdge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeType,
}

impl<'g> DialogGraph<'g> {
    pub fn node_count(&self) -> usize {
        self.base.nodes.len() + self.contexts.len()
    }

    pub fn node_type(&self, node: usize) -> NodeType {
        if node < self.base.nodes.len() {
            self.base.nodes[node].kind
        } else {
            NodeType::Context
        }
    }

    pub fn node_type_id(&self, node: usize) -> usize {
        crate::semgraph::type_id_for(self.base.variant, self.node_type(node).id())
    }

    pub fn edge_type_id(&self, kind: EdgeType) -> usize {
        crate::semgraph::type_id_for(self.base.variant, kind.id())
    }

    /// Base edges in order, then a `ContextLink` pair per context node.
    pub fn edges(&self) -> Vec<FlatEdge> {
        let mut out: Vec<FlatEdge> =
            self.base.edges.iter().map(|e| FlatEdge { src: e.src, dst: e.dst, kind: e.kind }).collect();
        for c in &self.contexts {
            out.push(FlatEdge { src: c.id, dst: c.sentence_node, kind: EdgeType::ContextLink });
            out.push(FlatEdge { src: c.sentence_node, dst: c.id, kind: EdgeType::ContextLink });
        }
        out
    }

    pub fn concept_ids(&self) -> Vec<usize> {
        self.base.concept_nodes().map(|n| n.id).collect()
    }

    /// Index into `contexts` of the positive candidate.
    pub fn positive_context(&self) -> Option<usize> {
        let labels = self.labels.as_ref()?;
        self.contexts.iter().position(|c| c.sentence_id == labels.positive_sentence_id)
    }
}

/// Builds the dialog graph with a context node for every candidate.
pub fn build_dialog_graph<'g>(
    base: &'g DocumentSemanticGraph,
    turn: &DialogTurn,
    source: &ContextSource<'_>,
) -> Result<DialogGraph<'g>, DialogError> {
    let all: Vec<usize> = (0..turn.candidates.len()).collect();
    build_dialog_graph_for(base, turn, &all, source)
}

/// Builds the dialog graph restricted to the given candidate indices, in
/// the order given.
pub fn build_dialog_graph_for<'g>(
    base: &'g DocumentSemanticGraph,
    turn: &DialogTurn,
    candidates: &[usize],
    source: &ContextSource<'_>,
) -> Result<DialogGraph<'g>, DialogError> {
    let context = make_context(&turn.history, crate::DEFAULT_CONTEXT_WINDOW);
    let mut contexts = Vec::with_capacity(candidates.len());
    for &ci in candidates {
        let cand = &turn.candidates[ci];
        let sentence_node = base
            .sentence_node(&cand.sentence_id)
            .ok_or_else(|| DialogError::UnknownSentence(cand.sentence_id.clone()))?;
        let embedding = source.embed(turn, cand, &context)?;
        contexts.push(ContextNode {
            id: base.nodes.len() + contexts.len(),
            sentence_id: cand.sentence_id.clone(),
            sentence_node,
            embedding,
        });
    }
    Ok(DialogGraph { base, contexts, labels: None })
}

/// Derives the positive candidate and concept relevance labels. A concept is
/// relevant when any of its mentions lies inside the gold span; without an
/// explicit span the whole gold sentence is the span.
pub fn derive_labels(
    turn: &DialogTurn,
    base: &DocumentSemanticGraph,
    sentence_len: impl Fn(&str) -> Option<usize>,
) -> Result<LabelSet, DialogError> {
    let no_gold =
        || DialogError::NoGoldLabel { dialog_id: turn.dialog_id.clone(), turn_index: turn.turn_index };
    let gold = turn.gold_sentence().ok_or_else(no_gold)?.to_string();
    let span = match &turn.gold_span {
        Some(s) => s.clone(),
        None => GoldSpan {
            sentence_id: gold.clone(),
            start: 0,
            end: sentence_len(&gold).ok_or_else(|| DialogError::UnknownSentence(gold.clone()))?,
        },
    };
    let concept_relevance = base
        .concept_nodes()
        .map(|n| {
            let hit = n.mentions().iter().any(|m| {
                m.sentence_id == span.sentence_id && m.start >= span.start && m.end <= span.end
            });
            (n.id, hit as u8)
        })
        .collect();
    Ok(LabelSet { positive_sentence_id: gold, concept_relevance })
}
