use std::collections::HashMap;
use std::io::{self, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{DocumentSemanticGraph, EdgeType, NodeType, Provenance};
use crate::amr::CorpusDocument;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("no embedding for sentence `{0}`")]
    MissingEmbedding(String),
    #[error("sentence `{sentence_id}`: token {index} beyond {count} embedded tokens")]
    TokenOutOfRange { sentence_id: String, index: usize, count: usize },
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("malformed embedding file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbedding {
    pub cls: Vec<f64>,
    pub tokens: Vec<Vec<f64>>,
}

/// Supplies a sentence-level (`[CLS]`) vector and per-token vectors.
pub trait EmbeddingSource {
    fn dim(&self) -> usize;
    fn sentence(&self, sentence_id: &str, tokens: &[String]) -> Option<SentenceEmbedding>;
}

/// Embeddings loaded from the binary embedding file, keyed by record id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SentenceEmbeddings {
    pub dim: usize,
    pub records: HashMap<String, SentenceEmbedding>,
    /// Record ids in file order.
    pub order: Vec<String>,
}

impl SentenceEmbeddings {
    pub fn new(dim: usize) -> Self {
        SentenceEmbeddings { dim, ..Default::default() }
    }

    pub fn insert(&mut self, id: impl Into<String>, emb: SentenceEmbedding) {
        let id = id.into();
        if self.records.insert(id.clone(), emb).is_none() {
            self.order.push(id);
        }
    }

    pub fn get(&self, id: &str) -> Option<&SentenceEmbedding> {
        self.records.get(id)
    }
}

impl EmbeddingSource for SentenceEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sentence(&self, sentence_id: &str, _tokens: &[String]) -> Option<SentenceEmbedding> {
        self.records.get(sentence_id).cloned()
    }
}

/// Deterministic fallback encoder: every lowercased token maps to a
/// hash-seeded vector; the sentence vector is the mean of its tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEncoder {
    pub dim: usize,
    pub seed: u64,
}

impl HashEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        HashEncoder { dim, seed }
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.to_lowercase().as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let scale = (3.0 / self.dim as f64).sqrt();
        (0..self.dim).map(|_| rng.gen_range(-scale..scale)).collect()
    }

    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let vecs: Vec<Vec<f64>> = tokens.iter().map(|t| self.token_vector(t.as_ref())).collect();
        mean(&vecs, self.dim)
    }
}

impl EmbeddingSource for HashEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sentence(&self, _sentence_id: &str, tokens: &[String]) -> Option<SentenceEmbedding> {
        let vecs: Vec<Vec<f64>> = tokens.iter().map(|t| self.token_vector(t)).collect();
        Some(SentenceEmbedding { cls: mean(&vecs, self.dim), tokens: vecs })
    }
}

pub(crate) fn mean(vecs: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    if vecs.is_empty() {
        return out;
    }
    for v in vecs {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    let n = vecs.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Initial node vectors, indexed by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
}

/// Sentence nodes take the `[CLS]` vector, concept nodes the mean of token
/// vectors pooled over all their mention spans, source nodes the mean of
/// their sentences. Concepts without mentions fall back to their aligned
/// tokens, and to the zero vector when unaligned.
pub fn init_node_embeddings(
    g: &DocumentSemanticGraph,
    doc: &CorpusDocument,
    source: &dyn EmbeddingSource,
) -> Result<EmbeddingTable, EmbeddingError> {
    let dim = source.dim();
    let mut cache: HashMap<&str, SentenceEmbedding> = HashMap::new();
    for sid in doc.sentence_order() {
        let tokens = doc.sentence(sid).map(|s| s.tokens.as_slice()).unwrap_or(&[]);
        let emb = source
            .sentence(sid, tokens)
            .ok_or_else(|| EmbeddingError::MissingEmbedding(sid.to_string()))?;
        for v in std::iter::once(&emb.cls).chain(&emb.tokens) {
            if v.len() != dim {
                return Err(EmbeddingError::Dimension { expected: dim, found: v.len() });
            }
        }
        cache.insert(sid, emb);
    }
    let span_tokens = |sid: &str, start: usize, end: usize| -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let emb = cache.get(sid).ok_or_else(|| EmbeddingError::MissingEmbedding(sid.to_string()))?;
        if end > emb.tokens.len() {
            return Err(EmbeddingError::TokenOutOfRange {
                sentence_id: sid.to_string(),
                index: end - 1,
                count: emb.tokens.len(),
            });
        }
        Ok(emb.tokens[start..end].to_vec())
    };

    let mut vectors = vec![Vec::new(); g.nodes.len()];
    for n in &g.nodes {
        vectors[n.id] = match &n.provenance {
            Provenance::Sentence { sentence_id } => cache
                .get(sentence_id.as_str())
                .ok_or_else(|| EmbeddingError::MissingEmbedding(sentence_id.clone()))?
                .cls
                .clone(),
            Provenance::Concept { origins, mentions } => {
                let mut pooled = Vec::new();
                if mentions.is_empty() {
                    for o in origins {
                        if let Some((s, e)) = o.aligned {
                            pooled.extend(span_tokens(&o.sentence_id, s, e)?);
                        }
                    }
                } else {
                    for m in mentions {
                        pooled.extend(span_tokens(&m.sentence_id, m.start, m.end)?);
                    }
                }
                mean(&pooled, dim)
            }
            Provenance::Source { .. } => continue,
        };
    }
    for n in g.nodes.iter().filter(|n| n.kind == NodeType::Source) {
        let sentences: Vec<Vec<f64>> = g
            .edges
            .iter()
            .filter(|e| e.src == n.id && e.kind == EdgeType::SourceContains)
            .map(|e| vectors[e.dst].clone())
            .collect();
        vectors[n.id] = mean(&sentences, dim);
    }
    Ok(EmbeddingTable { dim, vectors })
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_vector(r: &mut impl Read, dim: usize) -> io::Result<Vec<f64>> {
    let mut buf = vec![0u8; dim * 4];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect())
}

fn write_vector(w: &mut impl Write, v: &[f64]) -> io::Result<()> {
    for x in v {
        w.write_all(&(*x as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Reads the binary embedding layout: `u32 count, u32 dim`, then per record
/// a length-prefixed UTF-8 id, the `[CLS]` vector, `u32` token count and the
/// token vectors. All values little-endian, vectors `f32`.
pub fn read_embedding_file(mut r: impl Read) -> Result<SentenceEmbeddings, EmbeddingError> {
    let count = read_u32(&mut r)? as usize;
    let dim = read_u32(&mut r)? as usize;
    if dim == 0 {
        return Err(EmbeddingError::Format("zero dimension".into()));
    }
    let mut out = SentenceEmbeddings::new(dim);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut id = vec![0u8; len];
        r.read_exact(&mut id)?;
        let id = String::from_utf8(id).map_err(|e| EmbeddingError::Format(e.to_string()))?;
        let cls = read_vector(&mut r, dim)?;
        let n = read_u32(&mut r)? as usize;
        let tokens = (0..n).map(|_| read_vector(&mut r, dim)).collect::<io::Result<Vec<_>>>()?;
        if cls.iter().chain(tokens.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(EmbeddingError::Format(format!("non-finite value in record `{id}`")));
        }
        if out.records.contains_key(&id) {
            return Err(EmbeddingError::Format(format!("duplicate record `{id}`")));
        }
        out.insert(id, SentenceEmbedding { cls, tokens });
    }
    Ok(out)
}

pub fn write_embedding_file(
    mut w: impl Write,
    table: &SentenceEmbeddings,
) -> Result<(), EmbeddingError> {
    w.write_all(&(table.order.len() as u32).to_le_bytes())?;
    w.write_all(&(table.dim as u32).to_le_bytes())?;
    for id in &table.order {
        let rec = &table.records[id];
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id.as_bytes())?;
        if rec.cls.len() != table.dim {
            return Err(EmbeddingError::Dimension { expected: table.dim, found: rec.cls.len() });
        }
        write_vector(&mut w, &rec.cls)?;
        w.write_all(&(rec.tokens.len() as u32).to_le_bytes())?;
        for t in &rec.tokens {
            if t.len() != table.dim {
                return Err(EmbeddingError::Dimension { expected: table.dim, found: t.len() });
            }
            write_vector(&mut w, t)?;
        }
    }
    Ok(())
}
