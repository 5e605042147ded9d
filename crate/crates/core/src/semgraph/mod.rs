//! Document semantic graphs: concept, sentence and source nodes joined by
//! AMR role edges and document-structure edges, with coreferent mentions
//! merged into single concept nodes.

mod build;
mod coref;
mod embed;
mod paths;

pub use build::{apply_variant, build_document_graph, extract_mentions, BuildReport};
pub use coref::{CorefClusters, CorefError, CorefMention};
pub use embed::{
    init_node_embeddings, read_embedding_file, write_embedding_file, EmbeddingError,
    EmbeddingSource, EmbeddingTable, HashEncoder, SentenceEmbedding, SentenceEmbeddings,
};
pub use paths::{linearize_paths, PathTuple};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeType {
    Source,
    Sentence,
    Concept,
    Context,
}

impl NodeType {
    pub const COUNT: usize = 4;

    pub fn id(self) -> usize {
        self as usize
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeType::Source => "source",
            NodeType::Sentence => "sentence",
            NodeType::Concept => "concept",
            NodeType::Context => "context",
        })
    }
}

/// Typed edge label. Role buckets beyond ARG0-5 and `:mod` collapse to
/// `OtherRole`; membership and context links are their own inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeType {
    Arg(u8),
    ArgInv(u8),
    Mod,
    ModInv,
    OtherRole,
    OtherRoleInv,
    SentenceMembership,
    NarrativeNext,
    NarrativePrev,
    SourceContains,
    SourceContainsInv,
    ContextLink,
}

impl EdgeType {
    pub const COUNT: usize = 22;

    pub fn all() -> impl Iterator<Item = EdgeType> {
        (0..Self::COUNT).map(|i| Self::from_id(i).expect("in range"))
    }

    pub fn id(self) -> usize {
        match self {
            EdgeType::Arg(n) => n as usize,
            EdgeType::ArgInv(n) => 6 + n as usize,
            EdgeType::Mod => 12,
            EdgeType::ModInv => 13,
            EdgeType::OtherRole => 14,
            EdgeType::OtherRoleInv => 15,
            EdgeType::SentenceMembership => 16,
            EdgeType::NarrativeNext => 17,
            EdgeType::NarrativePrev => 18,
            EdgeType::SourceContains => 19,
            EdgeType::SourceContainsInv => 20,
            EdgeType::ContextLink => 21,
        }
    }

    pub fn from_id(id: usize) -> Option<EdgeType> {
        Some(match id {
            0..=5 => EdgeType::Arg(id as u8),
            6..=11 => EdgeType::ArgInv(id as u8 - 6),
            12 => EdgeType::Mod,
            13 => EdgeType::ModInv,
            14 => EdgeType::OtherRole,
            15 => EdgeType::OtherRoleInv,
            16 => EdgeType::SentenceMembership,
            17 => EdgeType::NarrativeNext,
            18 => EdgeType::NarrativePrev,
            19 => EdgeType::SourceContains,
            20 => EdgeType::SourceContainsInv,
            21 => EdgeType::ContextLink,
            _ => return None,
        })
    }

    pub fn inverse(self) -> EdgeType {
        match self {
            EdgeType::Arg(n) => EdgeType::ArgInv(n),
            EdgeType::ArgInv(n) => EdgeType::Arg(n),
            EdgeType::Mod => EdgeType::ModInv,
            EdgeType::ModInv => EdgeType::Mod,
            EdgeType::OtherRole => EdgeType::OtherRoleInv,
            EdgeType::OtherRoleInv => EdgeType::OtherRole,
            EdgeType::NarrativeNext => EdgeType::NarrativePrev,
            EdgeType::NarrativePrev => EdgeType::NarrativeNext,
            EdgeType::SourceContains => EdgeType::SourceContainsInv,
            EdgeType::SourceContainsInv => EdgeType::SourceContains,
            EdgeType::SentenceMembership => EdgeType::SentenceMembership,
            EdgeType::ContextLink => EdgeType::ContextLink,
        }
    }

    pub fn is_inverse(self) -> bool {
        matches!(
            self,
            EdgeType::ArgInv(_)
                | EdgeType::ModInv
                | EdgeType::OtherRoleInv
                | EdgeType::NarrativePrev
                | EdgeType::SourceContainsInv
        )
    }

    /// Edges that come from AMR roles (either direction).
    pub fn is_role(self) -> bool {
        matches!(
            self,
            EdgeType::Arg(_)
                | EdgeType::ArgInv(_)
                | EdgeType::Mod
                | EdgeType::ModInv
                | EdgeType::OtherRole
                | EdgeType::OtherRoleInv
        )
    }

    /// Maps a verbatim AMR role to its forward type and whether the role was
    /// written inverted (`:ARG0-of`).
    pub fn from_role(role: &str) -> (EdgeType, bool) {
        let bare = role.trim_start_matches(':');
        let (base, inverted) = match bare.strip_suffix("-of") {
            // `consist-of` is a role in its own right, not an inversion
            Some(b) if !b.is_empty() && bare != "consist-of" => (b, true),
            _ => (bare, false),
        };
        let kind = match base {
            "mod" => EdgeType::Mod,
            b if b.len() == 4 && b.starts_with("ARG") => match b.as_bytes()[3] {
                d @ b'0'..=b'5' => EdgeType::Arg(d - b'0'),
                _ => EdgeType::OtherRole,
            },
            _ => EdgeType::OtherRole,
        };
        (kind, inverted)
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeType::Arg(n) => write!(f, "ARG{n}"),
            EdgeType::ArgInv(n) => write!(f, "ARG{n}-inv"),
            EdgeType::Mod => f.write_str("mod"),
            EdgeType::ModInv => f.write_str("mod-inv"),
            EdgeType::OtherRole => f.write_str("role"),
            EdgeType::OtherRoleInv => f.write_str("role-inv"),
            EdgeType::SentenceMembership => f.write_str("member"),
            EdgeType::NarrativeNext => f.write_str("next"),
            EdgeType::NarrativePrev => f.write_str("prev"),
            EdgeType::SourceContains => f.write_str("contains"),
            EdgeType::SourceContainsInv => f.write_str("contains-inv"),
            EdgeType::ContextLink => f.write_str("context"),
        }
    }
}

impl FromStr for EdgeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EdgeType::all().find(|t| t.to_string() == s).ok_or_else(|| format!("unknown edge type `{s}`"))
    }
}

impl Serialize for EdgeType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EdgeType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Full,
    #[serde(rename = "sentence")]
    SentenceOnly,
    #[serde(rename = "coref")]
    CorefOnly,
    Homogeneous,
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Variant::Full),
            "sentence" => Ok(Variant::SentenceOnly),
            "coref" => Ok(Variant::CorefOnly),
            "homogeneous" => Ok(Variant::Homogeneous),
            _ => Err(format!("unknown graph variant `{s}`")),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::SentenceOnly => "sentence",
            Variant::CorefOnly => "coref",
            Variant::Homogeneous => "homogeneous",
        })
    }
}

/// A token span `[start, end)` over one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mention {
    pub sentence_id: String,
    pub variable: String,
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

impl Mention {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// One AMR variable folded into a concept node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub sentence_id: String,
    pub variable: String,
    pub concept: String,
    /// Hull of the variable's own alignments, when it has any.
    pub aligned: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Source { passage_id: String },
    Sentence { sentence_id: String },
    Concept { origins: Vec<Origin>, mentions: Vec<Mention> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    /// Stable lookup key: sentence id for sentence nodes, `src:<passage>` for
    /// source nodes, `<sentence>.<var>` of the earliest origin for concepts.
    pub key: String,
    pub kind: NodeType,
    pub name: String,
    pub provenance: Provenance,
}

impl Node {
    pub fn mentions(&self) -> &[Mention] {
        match &self.provenance {
            Provenance::Concept { mentions, .. } => mentions,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub kind: EdgeType,
    pub dst: usize,
    /// Verbatim AMR role for role edges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentSemanticGraph {
    pub doc_id: String,
    pub variant: Variant,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub report: BuildReport,
}

impl DocumentSemanticGraph {
    pub fn node_by_key(&self, key: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.key == key)
    }

    pub fn sentence_node(&self, sentence_id: &str) -> Option<usize> {
        self.nodes
            .iter()
            .find(|n| n.kind == NodeType::Sentence && n.key == sentence_id)
            .map(|n| n.id)
    }

    pub fn count(&self, kind: NodeType) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    pub fn count_edges(&self, pred: impl Fn(EdgeType) -> bool) -> usize {
        self.edges.iter().filter(|e| pred(e.kind)).count()
    }

    /// Node type id as seen by the network; a homogeneous graph has one type.
    pub fn node_type_id(&self, node: usize) -> usize {
        type_id_for(self.variant, self.nodes[node].kind.id())
    }

    pub fn edge_type_id(&self, edge: usize) -> usize {
        type_id_for(self.variant, self.edges[edge].kind.id())
    }

    pub fn concept_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.kind == NodeType::Concept)
    }

    /// Outgoing edges per node, in edge-list order.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            adj[e.src].push(i);
        }
        adj
    }

    /// Verifies the structural invariants of a constructed graph.
    pub fn check_invariants(&self) -> Result<(), String> {
        use std::collections::HashSet;
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(format!("node {i} carries id {}", n.id));
            }
            if n.kind == NodeType::Context {
                return Err(format!("context node {} in document graph", n.key));
            }
        }
        let set: HashSet<(usize, EdgeType, usize)> =
            self.edges.iter().map(|e| (e.src, e.kind, e.dst)).collect();
        for e in &self.edges {
            if e.src >= self.nodes.len() || e.dst >= self.nodes.len() {
                return Err(format!("edge {e:?} out of range"));
            }
            if !set.contains(&(e.dst, e.kind.inverse(), e.src)) {
                return Err(format!("edge {e:?} lacks its inverse"));
            }
        }
        for n in &self.nodes {
            match n.kind {
                NodeType::Concept => {
                    if self.variant == Variant::SentenceOnly {
                        return Err("concept node in sentence-only graph".into());
                    }
                    let member = self.edges.iter().any(|e| {
                        e.dst == n.id
                            && e.kind == EdgeType::SentenceMembership
                            && self.nodes[e.src].kind == NodeType::Sentence
                    });
                    if !member {
                        return Err(format!("concept {} has no sentence", n.key));
                    }
                    let ms = n.mentions();
                    if ms.len() >= 2 {
                        let best = ms.iter().map(Mention::len).max().unwrap_or(0);
                        let first_longest = ms.iter().find(|m| m.len() == best).unwrap();
                        if n.name != first_longest.surface {
                            return Err(format!("concept {} not named by longest mention", n.key));
                        }
                    }
                }
                NodeType::Sentence => {
                    let sources = self
                        .edges
                        .iter()
                        .filter(|e| e.dst == n.id && e.kind == EdgeType::SourceContains)
                        .count();
                    if sources != 1 {
                        return Err(format!("sentence {} has {sources} source nodes", n.key));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

pub(crate) fn type_id_for(variant: Variant, id: usize) -> usize {
    if variant == Variant::Homogeneous {
        0
    } else {
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_type_ids_round_trip_and_pair() {
        for (i, t) in EdgeType::all().enumerate() {
            assert_eq!(t.id(), i);
            assert_eq!(t.inverse().inverse(), t);
            assert_eq!(t.to_string().parse::<EdgeType>().unwrap(), t);
        }
    }

    #[test]
    fn role_bucketing() {
        assert_eq!(EdgeType::from_role(":ARG0"), (EdgeType::Arg(0), false));
        assert_eq!(EdgeType::from_role(":ARG1-of"), (EdgeType::Arg(1), true));
        assert_eq!(EdgeType::from_role(":ARG7"), (EdgeType::OtherRole, false));
        assert_eq!(EdgeType::from_role(":mod"), (EdgeType::Mod, false));
        assert_eq!(EdgeType::from_role(":location"), (EdgeType::OtherRole, false));
        assert_eq!(EdgeType::from_role(":consist-of"), (EdgeType::OtherRole, false));
    }
}
