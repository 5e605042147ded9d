use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{
    CorefClusters, CorefMention, DocumentSemanticGraph, Edge, EdgeType, Mention, Node, NodeType,
    Origin, Provenance, Variant,
};
use crate::amr::{AmrGraph, CorpusDocument, Target};

/// Counters and diagnostics gathered while building one document graph.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub merges: usize,
    pub dropped_mentions: Vec<CorefMention>,
    /// `<sentence>.<var>` of core-role fillers that had no alignment.
    pub unaligned_fillers: Vec<String>,
}

fn hull(indices: impl IntoIterator<Item = usize>) -> Option<(usize, usize)> {
    let mut it = indices.into_iter();
    let first = it.next()?;
    let (lo, hi) = it.fold((first, first), |(lo, hi), i| (lo.min(i), hi.max(i)));
    Some((lo, hi + 1))
}

/// Token indices grounding a variable: its own alignment plus the
/// alignments under its `:name` node, if any.
fn grounding(amr: &AmrGraph, var: &str) -> Vec<usize> {
    let mut idx: Vec<usize> = amr.alignments.get(var).cloned().unwrap_or_default();
    for e in amr.edges.iter().filter(|e| e.source == var && e.role == ":name") {
        if let Target::Var(name_var) = &e.target {
            idx.extend(amr.alignments.get(name_var).into_iter().flatten());
            for ne in amr.edges.iter().filter(|ne| &ne.source == name_var) {
                if let Target::Const(c) = &ne.target {
                    idx.extend(c.alignment.iter().copied());
                }
            }
        }
    }
    idx
}

/// Extracts one mention per variable that fills a core role (ARG0-ARG5,
/// forward or inverse) of some predicate. Fillers without any alignment are
/// reported in the second list instead.
pub fn extract_mentions(amr: &AmrGraph, tokens: &[String]) -> (Vec<Mention>, Vec<String>) {
    let mut fillers = HashSet::new();
    for e in &amr.edges {
        let Target::Var(target) = &e.target else { continue };
        let (kind, inverted) = EdgeType::from_role(&e.role);
        if let EdgeType::Arg(_) = kind {
            fillers.insert(if inverted { e.source.as_str() } else { target.as_str() });
        }
    }
    let mut mentions = Vec::new();
    let mut skipped = Vec::new();
    for v in amr.variables.iter().filter(|v| fillers.contains(v.name.as_str())) {
        match hull(grounding(amr, &v.name)) {
            Some((start, end)) if end <= tokens.len() => mentions.push(Mention {
                sentence_id: amr.sentence_id.clone(),
                variable: v.name.clone(),
                start,
                end,
                surface: tokens[start..end].join(" "),
            }),
            _ => skipped.push(v.name.clone()),
        }
    }
    (mentions, skipped)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    /// Joins two sets, keeping the smaller index as root. Returns whether a
    /// merge happened.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.0[hi] = lo;
        true
    }
}

/// Picks the extracted mention with maximal token overlap, ties to the
/// shorter span and then the earlier start.
fn resolve<'m>(mentions: &'m [(usize, Mention)], m: &CorefMention) -> Option<&'m (usize, Mention)> {
    mentions
        .iter()
        .filter_map(|cand| {
            let (_, c) = cand;
            let overlap = c.end.min(m.end).saturating_sub(c.start.max(m.start));
            (overlap > 0).then_some((overlap, cand))
        })
        .min_by_key(|(overlap, (_, c))| (std::cmp::Reverse(*overlap), c.len(), c.start))
        .map(|(_, cand)| cand)
}

struct EdgeSink {
    edges: Vec<Edge>,
    seen: HashSet<(usize, EdgeType, usize)>,
}

impl EdgeSink {
    fn pair(&mut self, src: usize, kind: EdgeType, dst: usize, role: Option<&str>) {
        if src == dst || !self.seen.insert((src, kind, dst)) {
            return;
        }
        let role = role.map(str::to_string);
        self.edges.push(Edge { src, kind, dst, role: role.clone() });
        if self.seen.insert((dst, kind.inverse(), src)) {
            self.edges.push(Edge { src: dst, kind: kind.inverse(), dst: src, role });
        }
    }
}

/// Builds the document graph: one concept node per AMR variable, with
/// coreferent mentions merged, plus source/sentence nodes and structure
/// edges. Cluster mentions that overlap no extracted mention are dropped and
/// recorded in the report.
pub fn build_document_graph(
    doc: &CorpusDocument,
    coref: &CorefClusters,
    variant: Variant,
) -> DocumentSemanticGraph {
    let order: Vec<&str> = doc.sentence_order().collect();
    let mut report = BuildReport::default();

    let mut origins: Vec<Origin> = Vec::new();
    let mut origin_index: HashMap<(&str, &str), usize> = HashMap::new();
    let mut mention_of: HashMap<usize, Mention> = HashMap::new();
    let mut sentence_mentions: HashMap<&str, Vec<(usize, Mention)>> = HashMap::new();
    for &sid in &order {
        let s = &doc.sentences[sid];
        let amr = &s.amr;
        for v in &amr.variables {
            origin_index.insert((sid, v.name.as_str()), origins.len());
            origins.push(Origin {
                sentence_id: sid.to_string(),
                variable: v.name.clone(),
                concept: v.concept.clone(),
                aligned: amr
                    .alignments
                    .get(&v.name)
                    .and_then(|a| hull(a.iter().copied()))
                    .filter(|&(_, end)| end <= s.tokens.len()),
            });
        }
        let (mentions, skipped) = extract_mentions(amr, &s.tokens);
        report.unaligned_fillers.extend(skipped.into_iter().map(|v| format!("{sid}.{v}")));
        let list = sentence_mentions.entry(sid).or_default();
        for m in mentions {
            let idx = origin_index[&(sid, m.variable.as_str())];
            mention_of.insert(idx, m.clone());
            list.push((idx, m));
        }
    }

    let mut uf = UnionFind((0..origins.len()).collect());
    for cluster in &coref.clusters {
        let mut resolved = Vec::new();
        for m in cluster {
            match sentence_mentions.get(m.sentence_id.as_str()).and_then(|ms| resolve(ms, m)) {
                Some((idx, _)) => resolved.push(*idx),
                None => {
                    log::warn!(
                        "{}: coreference mention {}[{}..{}] matches no AMR mention; dropped",
                        doc.doc_id,
                        m.sentence_id,
                        m.start,
                        m.end
                    );
                    report.dropped_mentions.push(m.clone());
                }
            }
        }
        for w in resolved.windows(2) {
            if uf.union(w[0], w[1]) {
                report.merges += 1;
            }
        }
    }

    let mut nodes = Vec::new();
    let mut sink = EdgeSink { edges: Vec::new(), seen: HashSet::new() };

    let mut source_ids = Vec::new();
    for p in &doc.passages {
        let id = nodes.len();
        source_ids.push(id);
        nodes.push(Node {
            id,
            key: format!("src:{}", p.passage_id),
            kind: NodeType::Source,
            name: p.passage_id.clone(),
            provenance: Provenance::Source { passage_id: p.passage_id.clone() },
        });
    }
    let mut sentence_node: HashMap<&str, usize> = HashMap::new();
    for &sid in &order {
        let id = nodes.len();
        sentence_node.insert(sid, id);
        nodes.push(Node {
            id,
            key: sid.to_string(),
            kind: NodeType::Sentence,
            name: sid.to_string(),
            provenance: Provenance::Sentence { sentence_id: sid.to_string() },
        });
    }

    // groups keyed by root; roots are the smallest member so iteration over
    // origins in order visits groups in corpus order of their first member
    let mut node_of_origin = vec![usize::MAX; origins.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of_root: HashMap<usize, usize> = HashMap::new();
    for i in 0..origins.len() {
        let r = uf.find(i);
        let g = *group_of_root.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    for members in &groups {
        let id = nodes.len();
        let first = &origins[members[0]];
        let mentions: Vec<Mention> =
            members.iter().filter_map(|i| mention_of.get(i).cloned()).collect();
        let longest = mentions.iter().map(Mention::len).max();
        let name = match longest {
            Some(best) => mentions.iter().find(|m| m.len() == best).unwrap().surface.clone(),
            None => first.concept.clone(),
        };
        for &m in members {
            node_of_origin[m] = id;
        }
        nodes.push(Node {
            id,
            key: format!("{}.{}", first.sentence_id, first.variable),
            kind: NodeType::Concept,
            name,
            provenance: Provenance::Concept {
                origins: members.iter().map(|&i| origins[i].clone()).collect(),
                mentions,
            },
        });
    }

    for (p, &src) in doc.passages.iter().zip(&source_ids) {
        for sid in &p.sentence_ids {
            sink.pair(src, EdgeType::SourceContains, sentence_node[sid.as_str()], None);
        }
        for w in p.sentence_ids.windows(2) {
            sink.pair(
                sentence_node[w[0].as_str()],
                EdgeType::NarrativeNext,
                sentence_node[w[1].as_str()],
                None,
            );
        }
    }
    for members in &groups {
        let node = node_of_origin[members[0]];
        let sentences: BTreeSet<usize> =
            members.iter().map(|&i| sentence_node[origins[i].sentence_id.as_str()]).collect();
        for s in sentences {
            sink.pair(s, EdgeType::SentenceMembership, node, None);
        }
    }
    for &sid in &order {
        let amr = &doc.sentences[sid].amr;
        for e in &amr.edges {
            let Target::Var(target) = &e.target else { continue };
            let (kind, inverted) = EdgeType::from_role(&e.role);
            let (a, b) = if inverted { (target, &e.source) } else { (&e.source, target) };
            let na = node_of_origin[origin_index[&(sid, a.as_str())]];
            let nb = node_of_origin[origin_index[&(sid, b.as_str())]];
            sink.pair(na, kind, nb, Some(&e.role));
        }
    }

    let full = DocumentSemanticGraph {
        doc_id: doc.doc_id.clone(),
        variant: Variant::Full,
        nodes,
        edges: sink.edges,
        report,
    };
    apply_variant(&full, variant)
}

/// Derives an ablation variant from a full graph.
pub fn apply_variant(g: &DocumentSemanticGraph, variant: Variant) -> DocumentSemanticGraph {
    if g.variant == variant {
        return g.clone();
    }
    let mut out = g.clone();
    out.variant = variant;
    match variant {
        Variant::Full | Variant::Homogeneous => {}
        Variant::CorefOnly => out.edges.retain(|e| !e.kind.is_role()),
        Variant::SentenceOnly => {
            let mut remap = vec![usize::MAX; g.nodes.len()];
            out.nodes.clear();
            for n in g.nodes.iter().filter(|n| n.kind != NodeType::Concept) {
                remap[n.id] = out.nodes.len();
                out.nodes.push(Node { id: out.nodes.len(), ..n.clone() });
            }
            out.edges = g
                .edges
                .iter()
                .filter(|e| remap[e.src] != usize::MAX && remap[e.dst] != usize::MAX)
                .map(|e| Edge { src: remap[e.src], dst: remap[e.dst], ..e.clone() })
                .collect();
        }
    }
    out
}
