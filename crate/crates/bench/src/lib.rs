//! Fixtures for the criterion benches in benches/.

use semsel::amr::parse_corpus;
use semsel::dialog::ContextSource;
use semsel::egat::GraphInput;
use semsel::harness::{gen_synthetic, prepare_turns, Dataset, PreparedTurn, SynthConfig, SynthDataset};
use semsel::semgraph::Variant;

pub struct Fixture {
    pub data: SynthDataset,
    pub dataset: Dataset,
    pub turns: Vec<PreparedTurn>,
}

/// Synthetic corpus with `dim`-wide embeddings, full graph variant.
pub fn fixture(docs: usize, dim: usize) -> Fixture {
    let cfg = SynthConfig { docs, test_docs: 0, dim, ..SynthConfig::default() };
    let data = gen_synthetic(3, &cfg);
    let corpus = parse_corpus(&data.corpus, Some(&data.manifest)).expect("synthetic corpus parses");
    let dataset = Dataset::build(corpus, &data.coref, Variant::Full, &data.sentences).expect("dataset");
    let turns = prepare_turns(&dataset, &data.train, &ContextSource::Precomputed(&data.contexts), semsel::DEFAULT_CONTEXT_WINDOW)
        .expect("turns");
    Fixture { data, dataset, turns }
}

impl Fixture {
    /// Network input for the first turn with every candidate attached.
    pub fn first_input(&self) -> (GraphInput, usize, Vec<f64>) {
        let t = &self.turns[0];
        let bundle = self.dataset.bundle(&t.turn.doc_id).expect("bundle");
        let all: Vec<usize> = (0..t.contexts.len()).collect();
        let g = t.graph_input(bundle, &all).expect("input");
        let labels = t.concept_labels(&g);
        (g, t.gold_index.expect("gold"), labels)
    }
}
