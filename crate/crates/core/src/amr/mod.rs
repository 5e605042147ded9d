//! Sentence-level AMR graphs, PENMAN reading/writing and corpus ingestion.

mod corpus;
mod penman;

pub use corpus::{parse_corpus, parse_manifest, CorpusDocument, CorpusError, Manifest, Passage, Sentence};
pub use penman::{parse_amr, serialize_amr};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AmrError {
    #[error("malformed PENMAN at byte {offset}: {reason}")]
    MalformedPenman { offset: usize, reason: String },
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("bad alignment suffix `{0}`")]
    BadAlignment(String),
    #[error("graph invariant violated: {0}")]
    Invariant(String),
}

impl AmrError {
    pub(crate) fn malformed(offset: usize, reason: impl Into<String>) -> Self {
        AmrError::MalformedPenman { offset, reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub concept: String,
}

/// A literal edge target: string, number, or polarity marker.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Constant {
    pub value: String,
    pub quoted: bool,
    pub alignment: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Var(String),
    Const(Constant),
}

impl Target {
    pub fn as_var(&self) -> Option<&str> {
        match self {
            Target::Var(v) => Some(v),
            Target::Const(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmrEdge {
    pub source: String,
    /// Role as written, including the leading colon (`:ARG0`, `:ARG1-of`).
    pub role: String,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AmrGraph {
    pub sentence_id: String,
    pub top: String,
    pub variables: Vec<Variable>,
    pub edges: Vec<AmrEdge>,
    /// Token indices (0-based) per variable.
    pub alignments: BTreeMap<String, Vec<usize>>,
}

impl AmrGraph {
    pub fn concept_of(&self, var: &str) -> Option<&str> {
        self.variables.iter().find(|v| v.name == var).map(|v| v.concept.as_str())
    }

    pub fn has_variable(&self, var: &str) -> bool {
        self.variables.iter().any(|v| v.name == var)
    }

    /// Checks the structural invariants of a graph.
    pub fn validate(&self) -> Result<(), AmrError> {
        let mut seen = BTreeSet::new();
        for v in &self.variables {
            if !seen.insert(v.name.as_str()) {
                return Err(AmrError::DuplicateVariable(v.name.clone()));
            }
        }
        if !seen.contains(self.top.as_str()) {
            return Err(AmrError::Invariant(format!("top `{}` is not a variable", self.top)));
        }
        for e in &self.edges {
            if !seen.contains(e.source.as_str()) {
                return Err(AmrError::Invariant(format!("edge source `{}` undeclared", e.source)));
            }
            if let Target::Var(t) = &e.target {
                if !seen.contains(t.as_str()) {
                    return Err(AmrError::Invariant(format!("edge target `{t}` undeclared")));
                }
            }
        }
        for var in self.alignments.keys() {
            if !seen.contains(var.as_str()) {
                return Err(AmrError::Invariant(format!("alignment for undeclared `{var}`")));
            }
        }
        Ok(())
    }

    /// Variables referenced at least twice as edge endpoints beyond their
    /// own instantiation, i.e. nodes with more than one incoming edge.
    pub fn reentrant_variables(&self) -> BTreeSet<String> {
        let mut incoming: HashMap<&str, usize> = HashMap::new();
        for e in &self.edges {
            if let Target::Var(t) = &e.target {
                *incoming.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut out: BTreeSet<String> = incoming
            .into_iter()
            .filter(|&(_, n)| n >= 2)
            .map(|(v, _)| v.to_string())
            .collect();
        // the top node counts as referenced once by the root position
        if self.edges.iter().any(|e| e.target.as_var() == Some(self.top.as_str())) {
            out.insert(self.top.clone());
        }
        out
    }

    /// True when both graphs carry the same variables, concepts, edges and
    /// alignments, irrespective of ordering.
    pub fn is_isomorphic(&self, other: &AmrGraph) -> bool {
        fn vars(g: &AmrGraph) -> BTreeSet<(String, String)> {
            g.variables.iter().map(|v| (v.name.clone(), v.concept.clone())).collect()
        }
        fn edges(g: &AmrGraph) -> BTreeSet<(String, String, Target)> {
            g.edges
                .iter()
                .map(|e| (e.source.clone(), e.role.clone(), e.target.clone()))
                .collect()
        }
        self.top == other.top
            && vars(self) == vars(other)
            && edges(self) == edges(other)
            && self.alignments == other.alignments
            && self.edges.len() == other.edges.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_rejects_undeclared_top() {
        let g = AmrGraph {
            sentence_id: "s".into(),
            top: "x".into(),
            variables: vec![Variable { name: "b".into(), concept: "boy".into() }],
            ..Default::default()
        };
        assert!(matches!(g.validate(), Err(AmrError::Invariant(_))));
    }

    #[test]
    fn reentrancy_counts_multiple_incoming() {
        let g = parse_amr("(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b))").unwrap();
        let re = g.reentrant_variables();
        assert_eq!(re.into_iter().collect::<Vec<_>>(), vec!["b".to_string()]);
    }
}
