use std::collections::{HashSet, VecDeque};
use std::fmt;

use serde::Serialize;

use super::{DocumentSemanticGraph, EdgeType};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(untagged)]
pub enum PathTuple {
    Triple { subject: String, predicate: String, object: String },
    Modifier { modifier: String, subject: String },
}

impl fmt::Display for PathTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathTuple::Triple { subject, predicate, object } => {
                write!(f, "({subject}, {predicate}, {object})")
            }
            PathTuple::Modifier { modifier, subject } => write!(f, "({modifier}, {subject})"),
        }
    }
}

fn predicate_label(kind: EdgeType, role: Option<&str>) -> String {
    match kind {
        EdgeType::Arg(n) => format!("ARG{n}"),
        _ => {
            let bare = role.unwrap_or(":role").trim_start_matches(':');
            bare.strip_suffix("-of").filter(|_| bare != "consist-of").unwrap_or(bare).to_string()
        }
    }
}

/// Breadth-first walk from a sentence node that linearizes the AMR role
/// edges it crosses within `max_hops` hops: argument and other roles as
/// `(subject, predicate, object)`, `:mod` as `(modifier, subject)`.
pub fn linearize_paths(
    g: &DocumentSemanticGraph,
    start_sentence_id: &str,
    max_hops: usize,
) -> Vec<PathTuple> {
    let Some(start) = g.sentence_node(start_sentence_id) else {
        return Vec::new();
    };
    let adj = g.adjacency();
    let mut depth = vec![usize::MAX; g.nodes.len()];
    depth[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut seen_edges = HashSet::new();
    let mut out = Vec::new();
    while let Some(u) = queue.pop_front() {
        if depth[u] >= max_hops {
            continue;
        }
        for &ei in &adj[u] {
            let e = &g.edges[ei];
            if e.kind.is_role() {
                // report each role once, in its forward orientation
                let (src, kind, dst) =
                    if e.kind.is_inverse() { (e.dst, e.kind.inverse(), e.src) } else { (e.src, e.kind, e.dst) };
                if seen_edges.insert((src, kind, dst)) {
                    let (a, b) = (g.nodes[src].name.clone(), g.nodes[dst].name.clone());
                    out.push(match kind {
                        EdgeType::Mod => PathTuple::Modifier { modifier: b, subject: a },
                        _ => PathTuple::Triple {
                            subject: a,
                            predicate: predicate_label(kind, e.role.as_deref()),
                            object: b,
                        },
                    });
                }
            }
            if depth[e.dst] == usize::MAX {
                depth[e.dst] = depth[u] + 1;
                queue.push_back(e.dst);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amr::parse_corpus;
    use crate::semgraph::{build_document_graph, CorefClusters, Variant};

    fn graph(amr: &str, tok: &str) -> DocumentSemanticGraph {
        let text = format!("# ::id s1\n# ::snt {tok}\n# ::tok {tok}\n{amr}\n");
        let doc = parse_corpus(&text, None).unwrap().remove(0);
        build_document_graph(&doc, &CorefClusters::empty("doc"), Variant::Full)
    }

    #[test]
    fn arg_triple() {
        let g = graph("(w / want-01 :ARG0 (b / boy~e.1))", "the boy wants");
        let paths = linearize_paths(&g, "s1", 2);
        assert_eq!(
            paths,
            vec![PathTuple::Triple {
                subject: "want-01".into(),
                predicate: "ARG0".into(),
                object: "boy".into()
            }]
        );
    }

    #[test]
    fn zero_hops() {
        let g = graph("(w / want-01 :ARG0 (b / boy~e.1))", "the boy wants");
        assert!(linearize_paths(&g, "s1", 0).is_empty());
    }

    #[test]
    fn modifier_pair() {
        let g = graph("(t / town :mod (b / big))", "big town");
        let paths = linearize_paths(&g, "s1", 2);
        assert_eq!(paths, vec![PathTuple::Modifier { modifier: "big".into(), subject: "town".into() }]);
        assert_eq!(paths[0].to_string(), "(big, town)");
    }

    #[test]
    fn other_role_uses_role_name() {
        let g = graph("(l / live-01 :location (d / desert))", "live desert");
        let paths = linearize_paths(&g, "s1", 2);
        assert_eq!(paths[0].to_string(), "(live-01, location, desert)");
    }

    #[test]
    fn unknown_sentence_is_empty() {
        let g = graph("(b / boy)", "boy");
        assert!(linearize_paths(&g, "s9", 3).is_empty());
    }
}
