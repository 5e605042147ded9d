//! Training, knowledge selection, evaluation and synthetic data.

mod metrics;
mod synth;
mod train;

pub use metrics::{
    average_precision, eval_ranking, reciprocal_rank, rouge, rouge_tokens, RankingReport, RougeScores,
    TurnMetrics,
};
pub use synth::{benchmark_train_config, gen_synthetic, run_synthetic, Experiment, SynthConfig, SynthDataset};
pub use train::{
    concept_map, gold_map, loss_log_csv, sample_negatives, select_all, select_knowledge, train, train_from, EpochLoss,
    LossRow, TrainConfig, TrainOutput,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amr::{CorpusDocument, CorpusError};
use crate::dialog::{derive_labels, make_context, ContextNode, ContextSource, DialogError, DialogGraph, DialogTurn, LabelSet};
use crate::egat::{EgatError, GraphInput};
use crate::semgraph::{
    build_document_graph, init_node_embeddings, CorefClusters, DocumentSemanticGraph, EmbeddingError, EmbeddingSource,
    EmbeddingTable, Variant,
};
use crate::tensor::CheckpointError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Dialog(#[from] DialogError),
    #[error(transparent)]
    Egat(#[from] EgatError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("turn refers to unknown document `{0}`")]
    UnknownDocument(String),
    #[error("no labeled training turns")]
    NoLabeledTurns,
    #[error("no gold label for turn `{0}`")]
    MissingGold(String),
}

impl HarnessError {
    pub fn is_non_finite(&self) -> bool {
        matches!(self, HarnessError::Egat(e) if e.is_non_finite())
    }
}

/// One document with its graph and initial node vectors.
#[derive(Debug, Clone)]
pub struct DocBundle {
    pub doc: CorpusDocument,
    pub graph: DocumentSemanticGraph,
    pub nodes: EmbeddingTable,
}

impl DocBundle {
    /// Index of a sentence in corpus order; unknown ids sort last.
    pub fn sentence_rank(&self, sentence_id: &str) -> usize {
        self.doc.sentence_order().position(|s| s == sentence_id).unwrap_or(usize::MAX)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub docs: BTreeMap<String, DocBundle>,
}

impl Dataset {
    /// Builds every document graph under `variant`. Documents without a
    /// coreference entry get no clusters.
    pub fn build(
        docs: Vec<CorpusDocument>,
        coref: &[CorefClusters],
        variant: Variant,
        source: &dyn EmbeddingSource,
    ) -> Result<Self, HarnessError> {
        let mut out = BTreeMap::new();
        for doc in docs {
            let clusters =
                coref.iter().find(|c| c.doc_id == doc.doc_id).cloned().unwrap_or_else(|| CorefClusters::empty(&doc.doc_id));
            let graph = build_document_graph(&doc, &clusters, variant);
            let nodes = init_node_embeddings(&graph, &doc, source)?;
            out.insert(doc.doc_id.clone(), DocBundle { doc, graph, nodes });
        }
        Ok(Dataset { docs: out })
    }

    pub fn bundle(&self, doc_id: &str) -> Result<&DocBundle, HarnessError> {
        self.docs.get(doc_id).ok_or_else(|| HarnessError::UnknownDocument(doc_id.to_string()))
    }
}

/// A dialog turn with its context vectors and labels resolved once.
#[derive(Debug, Clone)]
pub struct PreparedTurn {
    pub turn: DialogTurn,
    /// One per candidate, in candidate order; ids are assigned per graph.
    pub contexts: Vec<ContextNode>,
    pub labels: Option<LabelSet>,
    pub gold_index: Option<usize>,
}

impl PreparedTurn {
    pub fn key(&self) -> String {
        self.turn.key()
    }

    /// Network input with context nodes for the given candidates, in order.
    pub fn graph_input(&self, bundle: &DocBundle, candidates: &[usize]) -> Result<GraphInput, HarnessError> {
        let base = &bundle.graph;
        let contexts = candidates
            .iter()
            .enumerate()
            .map(|(i, &c)| ContextNode { id: base.nodes.len() + i, ..self.contexts[c].clone() })
            .collect();
        let dg = DialogGraph { base, contexts, labels: None };
        Ok(GraphInput::from_dialog(&dg, &bundle.nodes)?)
    }

    /// Concept labels aligned with `GraphInput::concepts`.
    pub fn concept_labels(&self, g: &GraphInput) -> Vec<f64> {
        let rel = self.labels.as_ref().map(|l| &l.concept_relevance);
        g.concepts
            .iter()
            .map(|c| rel.and_then(|r| r.get(c)).copied().unwrap_or(0) as f64)
            .collect()
    }
}

/// Resolves context vectors and labels for every turn. Turns without gold
/// keep `labels = None`.
pub fn prepare_turns(
    ds: &Dataset,
    turns: &[DialogTurn],
    source: &ContextSource<'_>,
    context_window: usize,
) -> Result<Vec<PreparedTurn>, HarnessError> {
    let mut out = Vec::with_capacity(turns.len());
    for turn in turns {
        let bundle = ds.bundle(&turn.doc_id)?;
        let context = make_context(&turn.history, context_window);
        let mut contexts = Vec::with_capacity(turn.candidates.len());
        for cand in &turn.candidates {
            let sentence_node = bundle
                .graph
                .sentence_node(&cand.sentence_id)
                .ok_or_else(|| DialogError::UnknownSentence(cand.sentence_id.clone()))?;
            contexts.push(ContextNode {
                id: 0,
                sentence_id: cand.sentence_id.clone(),
                sentence_node,
                embedding: source.embed(turn, cand, &context)?,
            });
        }
        let labels = match derive_labels(turn, &bundle.graph, |s| bundle.doc.sentence(s).map(|s| s.tokens.len())) {
            Ok(l) => Some(l),
            Err(DialogError::NoGoldLabel { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        let gold_index = labels
            .as_ref()
            .and_then(|l| turn.candidates.iter().position(|c| c.sentence_id == l.positive_sentence_id));
        out.push(PreparedTurn { turn: turn.clone(), contexts, labels, gold_index });
    }
    Ok(out)
}

/// Selected candidates for one turn, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSelection {
    pub turn: String,
    pub ranked: Vec<(String, f64)>,
    /// Concept node key -> relevance probability.
    pub concept_probs: BTreeMap<String, f64>,
}

impl RankedSelection {
    pub fn top(&self) -> Option<&str> {
        self.ranked.first().map(|(s, _)| s.as_str())
    }
}
