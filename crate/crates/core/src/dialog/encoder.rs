use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Candidate, DialogError, DialogTurn};
use crate::semgraph::{HashEncoder, SentenceEmbeddings};

/// Encodes a (candidate sentence, dialog context) pair into one vector.
pub trait ContextEncoder {
    fn dim(&self) -> usize;
    fn encode(&self, candidate: &str, context: &str) -> Vec<f64>;
}

/// Deterministic encoder for tests and offline runs: hash-seeded token
/// vectors are averaged per side, concatenated and projected back to `dim`
/// with a fixed seeded matrix.
#[derive(Debug, Clone)]
pub struct HashContextEncoder {
    tokens: HashEncoder,
    /// `2*dim x dim`, row-major.
    projection: Vec<f64>,
}

impl HashContextEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
        let scale = (3.0 / (2 * dim) as f64).sqrt() * 2f64.sqrt();
        let projection = (0..2 * dim * dim).map(|_| rng.gen_range(-scale..scale)).collect();
        HashContextEncoder { tokens: HashEncoder::new(dim, seed), projection }
    }
}

impl ContextEncoder for HashContextEncoder {
    fn dim(&self) -> usize {
        self.tokens.dim
    }

    fn encode(&self, candidate: &str, context: &str) -> Vec<f64> {
        let d = self.tokens.dim;
        let a = self.tokens.encode_tokens(&candidate.split_whitespace().collect::<Vec<_>>());
        let b = self.tokens.encode_tokens(&context.split_whitespace().collect::<Vec<_>>());
        let mut out = vec![0.0; d];
        for (i, x) in a.iter().chain(&b).enumerate() {
            let row = &self.projection[i * d..(i + 1) * d];
            for (o, w) in out.iter_mut().zip(row) {
                *o += x * w;
            }
        }
        out
    }
}

/// Where context-node vectors come from.
pub enum ContextSource<'a> {
    Encoder(&'a dyn ContextEncoder),
    /// `[CLS]` vectors keyed `dialog_id:turn_index:sentence_id`.
    Precomputed(&'a SentenceEmbeddings),
}

impl ContextSource<'_> {
    pub fn dim(&self) -> usize {
        match self {
            ContextSource::Encoder(e) => e.dim(),
            ContextSource::Precomputed(t) => t.dim,
        }
    }

    pub(crate) fn embed(
        &self,
        turn: &DialogTurn,
        candidate: &Candidate,
        context: &str,
    ) -> Result<Vec<f64>, DialogError> {
        let v = match self {
            ContextSource::Encoder(e) => e.encode(&candidate.text, context),
            ContextSource::Precomputed(t) => {
                let key = turn.context_key(&candidate.sentence_id);
                t.get(&key).ok_or(DialogError::MissingContextEmbedding(key))?.cls.clone()
            }
        };
        if v.len() != self.dim() {
            return Err(DialogError::Dimension { expected: self.dim(), found: v.len() });
        }
        Ok(v)
    }
}
