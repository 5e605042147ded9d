use std::rc::Rc;

use super::EgatError;
use crate::dialog::DialogGraph;
use crate::semgraph::EmbeddingTable;
use crate::tensor::{Segments, Tensor, TensorError};

/// A dialog graph flattened into index arrays for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    /// `nodes x input_dim` raw embeddings.
    pub features: Tensor,
    pub node_types: Rc<Vec<usize>>,
    pub src: Rc<Vec<usize>>,
    pub dst: Rc<Vec<usize>>,
    pub edge_types: Rc<Vec<usize>>,
    /// Context node ids, in candidate order.
    pub contexts: Rc<Vec<usize>>,
    /// Concept node ids, in node order.
    pub concepts: Rc<Vec<usize>>,
}

impl GraphInput {
    pub fn new(
        features: Tensor,
        node_types: Vec<usize>,
        edges: &[(usize, usize, usize)],
        contexts: Vec<usize>,
        concepts: Vec<usize>,
    ) -> Result<Self, EgatError> {
        let n = features.rows();
        let bad = |detail: String| EgatError::Tensor(TensorError::Shape { op: "graph_input", detail });
        if node_types.len() != n {
            return Err(bad(format!("{} node types for {n} nodes", node_types.len())));
        }
        if let Some(e) = edges.iter().find(|e| e.0 >= n || e.1 >= n) {
            return Err(bad(format!("edge {e:?} out of range for {n} nodes")));
        }
        if let Some(c) = contexts.iter().chain(&concepts).find(|&&c| c >= n) {
            return Err(bad(format!("node {c} out of range for {n} nodes")));
        }
        Ok(GraphInput {
            features,
            node_types: Rc::new(node_types),
            src: Rc::new(edges.iter().map(|e| e.0).collect()),
            dst: Rc::new(edges.iter().map(|e| e.1).collect()),
            edge_types: Rc::new(edges.iter().map(|e| e.2).collect()),
            contexts: Rc::new(contexts),
            concepts: Rc::new(concepts),
        })
    }

    /// Base nodes take their initial embeddings, context nodes their
    /// encoder vectors.
    pub fn from_dialog(g: &DialogGraph<'_>, nodes: &EmbeddingTable) -> Result<Self, EgatError> {
        let dim = nodes.dim;
        let n = g.node_count();
        let mut data = Vec::with_capacity(n * dim);
        let rows = nodes.vectors.iter().take(g.base.nodes.len()).chain(g.contexts.iter().map(|c| &c.embedding));
        let mut count = 0;
        for v in rows {
            if v.len() != dim {
                return Err(EgatError::Tensor(TensorError::Shape {
                    op: "graph_input",
                    detail: format!("node {count} has dimension {}, expected {dim}", v.len()),
                }));
            }
            data.extend_from_slice(v);
            count += 1;
        }
        if count != n {
            return Err(EgatError::Tensor(TensorError::Shape {
                op: "graph_input",
                detail: format!("{count} node vectors for {n} nodes"),
            }));
        }
        let features = Tensor::matrix(n, dim, data)?;
        let node_types = (0..n).map(|i| g.node_type_id(i)).collect();
        let edges: Vec<(usize, usize, usize)> =
            g.edges().iter().map(|e| (e.src, e.dst, g.edge_type_id(e.kind))).collect();
        let contexts = g.contexts.iter().map(|c| c.id).collect();
        Self::new(features, node_types, &edges, contexts, g.concept_ids())
    }

    pub fn node_count(&self) -> usize {
        self.features.rows()
    }

    pub fn edge_count(&self) -> usize {
        self.src.len()
    }

    /// Maps every node and edge type to the single shared id 0.
    pub fn collapse_types(&mut self) {
        self.node_types = Rc::new(vec![0; self.node_types.len()]);
        self.edge_types = Rc::new(vec![0; self.edge_types.len()]);
    }

    /// Relabels node `i` as `perm[i]`, keeping the edge list order.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.node_count();
        let c = self.features.cols();
        let mut data = vec![0.0; n * c];
        let mut types = vec![0; n];
        for i in 0..n {
            data[perm[i] * c..(perm[i] + 1) * c].copy_from_slice(self.features.row(i));
            types[perm[i]] = self.node_types[i];
        }
        let map = |v: &[usize]| Rc::new(v.iter().map(|&i| perm[i]).collect::<Vec<_>>());
        GraphInput {
            features: Tensor::matrix(n, c, data).expect("same shape"),
            node_types: Rc::new(types),
            src: map(&self.src),
            dst: map(&self.dst),
            edge_types: self.edge_types.clone(),
            contexts: map(&self.contexts),
            concepts: map(&self.concepts),
        }
    }

    /// Incoming-edge groups per target node.
    pub(crate) fn segments(&self) -> Rc<Segments> {
        Rc::new(Segments::from_ids(&self.dst))
    }
}
