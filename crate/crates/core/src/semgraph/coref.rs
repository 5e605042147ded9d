use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorefError {
    #[error("coreference json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("document `{doc_id}`: empty span {sentence_id}[{start}..{end}]")]
    EmptySpan { doc_id: String, sentence_id: String, start: usize, end: usize },
    #[error("document `{doc_id}`: mention {sentence_id}[{start}..{end}] appears in two clusters")]
    SharedMention { doc_id: String, sentence_id: String, start: usize, end: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CorefMention {
    pub sentence_id: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorefClusters {
    pub doc_id: String,
    pub clusters: Vec<Vec<CorefMention>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(CorefClusters),
    Many(Vec<CorefClusters>),
}

impl CorefClusters {
    pub fn empty(doc_id: impl Into<String>) -> Self {
        CorefClusters { doc_id: doc_id.into(), clusters: Vec::new() }
    }

    /// Parses a coreference file holding one document object or an array of them.
    pub fn parse_file(text: &str) -> Result<Vec<CorefClusters>, CorefError> {
        let docs = match serde_json::from_str(text)? {
            OneOrMany::One(c) => vec![c],
            OneOrMany::Many(v) => v,
        };
        for d in &docs {
            d.validate()?;
        }
        Ok(docs)
    }

    pub fn validate(&self) -> Result<(), CorefError> {
        let mut seen = HashSet::new();
        for m in self.clusters.iter().flatten() {
            if m.start >= m.end {
                return Err(CorefError::EmptySpan {
                    doc_id: self.doc_id.clone(),
                    sentence_id: m.sentence_id.clone(),
                    start: m.start,
                    end: m.end,
                });
            }
            if !seen.insert(m) {
                return Err(CorefError::SharedMention {
                    doc_id: self.doc_id.clone(),
                    sentence_id: m.sentence_id.clone(),
                    start: m.start,
                    end: m.end,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_single_and_array() {
        let one = r#"{"doc_id": "d", "clusters": [[{"sentence_id": "s1", "start": 0, "end": 3}]]}"#;
        assert_eq!(CorefClusters::parse_file(one).unwrap().len(), 1);
        let many = format!("[{one}, {one}]");
        assert_eq!(CorefClusters::parse_file(&many).unwrap().len(), 2);
    }

    #[test]
    fn rejects_shared_and_empty() {
        let shared = r#"{"doc_id": "d", "clusters": [[{"sentence_id": "s1", "start": 0, "end": 1}],
            [{"sentence_id": "s1", "start": 0, "end": 1}]]}"#;
        assert!(matches!(CorefClusters::parse_file(shared), Err(CorefError::SharedMention { .. })));
        let empty = r#"{"doc_id": "d", "clusters": [[{"sentence_id": "s1", "start": 2, "end": 2}]]}"#;
        assert!(matches!(CorefClusters::parse_file(empty), Err(CorefError::EmptySpan { .. })));
    }
}
