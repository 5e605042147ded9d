use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{parse_amr, AmrError, AmrGraph};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: block is missing `# ::{field}`")]
    MissingMetadata { line: usize, field: &'static str },
    #[error("line {line}: sentence `{sentence_id}`: {source}")]
    Amr { line: usize, sentence_id: String, source: AmrError },
    #[error("line {line}: duplicate sentence id `{sentence_id}`")]
    DuplicateSentence { sentence_id: String, line: usize },
    #[error("line {line}: sentence `{sentence_id}` aligns token {index} but has {tokens} tokens")]
    AlignmentOutOfRange { line: usize, sentence_id: String, index: usize, tokens: usize },
    #[error("manifest references unknown sentence `{0}`")]
    UnknownSentence(String),
    #[error("sentence `{0}` listed twice in manifest document `{1}`")]
    RepeatedInManifest(String, String),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub passage_id: String,
    pub sentence_ids: Vec<String>,
}

/// Document id → ordered passages.
pub type Manifest = BTreeMap<String, Vec<Passage>>;

pub fn parse_manifest(text: &str) -> Result<Manifest, CorpusError> {
    Ok(serde_json::from_str(text)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub text: String,
    pub amr: AmrGraph,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusDocument {
    pub doc_id: String,
    pub passages: Vec<Passage>,
    pub sentences: HashMap<String, Sentence>,
}

impl CorpusDocument {
    /// Sentence ids in document order (passage by passage).
    pub fn sentence_order(&self) -> impl Iterator<Item = &str> {
        self.passages.iter().flat_map(|p| p.sentence_ids.iter().map(String::as_str))
    }

    pub fn sentence(&self, id: &str) -> Option<&Sentence> {
        self.sentences.get(id)
    }
}

struct Block {
    line: usize,
    id: Option<String>,
    snt: Option<String>,
    tok: Option<String>,
    graph: String,
}

fn metadata_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let rest = line.trim_start_matches('#').trim_start();
    let marker = format!("::{key}");
    let start = rest.find(&marker)?;
    let after = &rest[start + marker.len()..];
    if !(after.is_empty() || after.starts_with(char::is_whitespace)) {
        return None;
    }
    // a single comment line may carry several `::field` entries
    let end = after.find(" ::").unwrap_or(after.len());
    Some(after[..end].trim())
}

fn blocks(stream: &str) -> Vec<Block> {
    let mut out = Vec::new();
    let mut cur: Option<Block> = None;
    for (i, line) in stream.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            if let Some(b) = cur.take() {
                out.push(b);
            }
            continue;
        }
        let b = cur.get_or_insert_with(|| Block {
            line: lineno,
            id: None,
            snt: None,
            tok: None,
            graph: String::new(),
        });
        if line.trim_start().starts_with('#') {
            if let Some(v) = metadata_value(line, "id") {
                b.id = Some(v.to_string());
            }
            if let Some(v) = metadata_value(line, "snt") {
                b.snt = Some(v.to_string());
            }
            if let Some(v) = metadata_value(line, "tok") {
                b.tok = Some(v.to_string());
            }
        } else {
            b.graph.push_str(line);
            b.graph.push('\n');
        }
    }
    if let Some(b) = cur {
        out.push(b);
    }
    out
}

/// Reads an AMR corpus stream. Without a manifest all sentences form one
/// document (`doc`) with one passage in file order.
pub fn parse_corpus(
    stream: &str,
    manifest: Option<&Manifest>,
) -> Result<Vec<CorpusDocument>, CorpusError> {
    let mut sentences: HashMap<String, Sentence> = HashMap::new();
    let mut order = Vec::new();
    for b in blocks(stream) {
        // comment-only blocks carry no graph
        if b.graph.trim().is_empty() && b.id.is_none() {
            continue;
        }
        let id = b.id.ok_or(CorpusError::MissingMetadata { line: b.line, field: "id" })?;
        let tok = b.tok.ok_or(CorpusError::MissingMetadata { line: b.line, field: "tok" })?;
        let text = b.snt.ok_or(CorpusError::MissingMetadata { line: b.line, field: "snt" })?;
        let mut amr = parse_amr(&b.graph).map_err(|source| CorpusError::Amr {
            line: b.line,
            sentence_id: id.clone(),
            source,
        })?;
        amr.sentence_id = id.clone();
        let tokens: Vec<String> = tok.split_whitespace().map(str::to_string).collect();
        let max_index = amr
            .alignments
            .values()
            .flatten()
            .chain(amr.edges.iter().filter_map(|e| match &e.target {
                super::Target::Const(c) => c.alignment.iter().max(),
                _ => None,
            }))
            .max();
        if let Some(&index) = max_index {
            if index >= tokens.len() {
                return Err(CorpusError::AlignmentOutOfRange {
                    line: b.line,
                    sentence_id: id,
                    index,
                    tokens: tokens.len(),
                });
            }
        }
        if sentences.contains_key(&id) {
            return Err(CorpusError::DuplicateSentence { sentence_id: id, line: b.line });
        }
        order.push(id.clone());
        sentences.insert(id, Sentence { tokens, text, amr });
    }

    let Some(manifest) = manifest else {
        return Ok(vec![CorpusDocument {
            doc_id: "doc".into(),
            passages: vec![Passage { passage_id: "doc".into(), sentence_ids: order }],
            sentences,
        }]);
    };

    let mut docs = Vec::with_capacity(manifest.len());
    for (doc_id, passages) in manifest {
        let mut seen = HashSet::new();
        let mut doc_sentences = HashMap::new();
        for sid in passages.iter().flat_map(|p| &p.sentence_ids) {
            if !seen.insert(sid.as_str()) {
                return Err(CorpusError::RepeatedInManifest(sid.clone(), doc_id.clone()));
            }
            let s = sentences.get(sid).ok_or_else(|| CorpusError::UnknownSentence(sid.clone()))?;
            doc_sentences.insert(sid.clone(), s.clone());
        }
        docs.push(CorpusDocument {
            doc_id: doc_id.clone(),
            passages: passages.clone(),
            sentences: doc_sentences,
        });
    }
    Ok(docs)
}
