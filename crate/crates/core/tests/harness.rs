use std::collections::BTreeSet;

use semsel::amr::{parse_corpus, parse_manifest};
use semsel::dialog::{load_dialogs, ContextSource};
use semsel::egat::{EgatConfig, EgatParams};
use semsel::harness::{
    gen_synthetic, loss_log_csv, prepare_turns, sample_negatives, select_knowledge, train, Dataset, PreparedTurn,
    SynthConfig, SynthDataset, TrainConfig,
};
use semsel::semgraph::{read_embedding_file, CorefClusters, Provenance, Variant};

fn small() -> SynthConfig {
    SynthConfig { docs: 4, test_docs: 1, dim: 8, ..SynthConfig::default() }
}

fn prepared(data: &SynthDataset, variant: Variant) -> (Dataset, Vec<PreparedTurn>) {
    let docs = parse_corpus(&data.corpus, Some(&data.manifest)).unwrap();
    let ds = Dataset::build(docs, &data.coref, variant, &data.sentences).unwrap();
    let turns = prepare_turns(&ds, &data.train, &ContextSource::Precomputed(&data.contexts), 2).unwrap();
    (ds, turns)
}

fn tiny_train(seed: u64, dim: usize) -> TrainConfig {
    TrainConfig {
        seed,
        epochs: 2,
        batch_size: 4,
        learning_rate: 1e-2,
        egat: EgatConfig { hidden_dim: 8, type_dim: 4, input_dim: dim, ..EgatConfig::default() },
        ..TrainConfig::default()
    }
}

#[test]
fn negatives_exclude_gold_and_never_repeat() {
    let data = gen_synthetic(1, &small());
    let (_, turns) = prepared(&data, Variant::Full);
    for t in &turns {
        let gold = t.gold_index.unwrap();
        for epoch in 0..20 {
            for k in [0, 1, 3, 5, 50] {
                let neg = sample_negatives(4, t, epoch, k);
                assert_eq!(neg.len(), k.min(t.turn.candidates.len() - 1));
                assert!(!neg.contains(&gold));
                assert_eq!(neg.iter().collect::<BTreeSet<_>>().len(), neg.len());
                assert_eq!(neg, sample_negatives(4, t, epoch, k));
            }
        }
    }
    // streams are keyed by epoch
    let t = &turns[0];
    assert!((0..10).any(|e| sample_negatives(4, t, e, 2) != sample_negatives(4, t, e + 1, 2)));
}

#[test]
fn single_candidate_turn_still_trains_concepts() {
    let mut data = gen_synthetic(2, &SynthConfig { docs: 1, turns_per_doc: 1, test_docs: 0, dim: 8, ..SynthConfig::default() });
    let turn = &mut data.train[0];
    let gold = turn.gold_sentence_id.clone().unwrap();
    turn.candidates.retain(|c| c.sentence_id == gold);
    let (ds, turns) = prepared(&data, Variant::Full);
    let cfg = TrainConfig { epochs: 1, ..tiny_train(3, 8) };
    let init = EgatParams::init(&cfg.egat, cfg.seed).unwrap();
    let out = train(&ds, &turns, &cfg).unwrap();
    assert_eq!(out.log.len(), 1);
    assert_eq!(out.log[0].loss_c, 0.0);
    assert!(out.log[0].loss_n > 0.0);
    assert_ne!(out.params.tensors, init.tensors);
}

#[test]
fn loss_log_is_reproducible() {
    let data = gen_synthetic(3, &small());
    let (ds, turns) = prepared(&data, Variant::Full);
    let a = train(&ds, &turns, &tiny_train(5, 8)).unwrap();
    let b = train(&ds, &turns, &tiny_train(5, 8)).unwrap();
    let c = train(&ds, &turns, &tiny_train(6, 8)).unwrap();
    assert_eq!(loss_log_csv(&a.log), loss_log_csv(&b.log));
    assert_ne!(loss_log_csv(&a.log), loss_log_csv(&c.log));
    assert_eq!(a.log.len(), 2 * 15usize.div_ceil(4));
    assert!(loss_log_csv(&a.log).starts_with("epoch,step,loss_c,loss_n,loss_total\n"));
}

#[test]
fn selection_sorts_by_score_and_breaks_ties_by_corpus_order() {
    let data = gen_synthetic(4, &small());
    let (ds, mut turns) = prepared(&data, Variant::Full);
    let cfg = tiny_train(1, 8);
    let trained = train(&ds, &turns, &cfg).unwrap().params;
    let t = &turns[0];
    let bundle = ds.bundle(&t.turn.doc_id).unwrap();
    let sel = select_knowledge(&trained, bundle, t).unwrap();
    assert_eq!(sel.ranked.len(), t.turn.candidates.len());
    assert!(sel.ranked.windows(2).all(|w| w[0].1 >= w[1].1));
    assert!(!sel.concept_probs.is_empty());
    assert!(sel.concept_probs.values().all(|p| (0.0..=1.0).contains(p)));

    // all-zero weights give every candidate the same score
    let mut zero = trained.clone();
    for tensor in zero.tensors.iter_mut() {
        tensor.data_mut().fill(0.0);
    }
    let t = &mut turns[0];
    t.turn.candidates.reverse();
    t.contexts.reverse();
    let sel = select_knowledge(&zero, bundle, t).unwrap();
    let order: Vec<&str> = sel.ranked.iter().map(|r| r.0.as_str()).collect();
    let corpus: Vec<&str> = bundle.doc.sentence_order().filter(|s| order.contains(s)).collect();
    assert_eq!(order, corpus);
}

#[test]
fn synthetic_generation_is_deterministic() {
    let cfg = small();
    assert_eq!(gen_synthetic(9, &cfg), gen_synthetic(9, &cfg));
    assert_ne!(gen_synthetic(9, &cfg).corpus, gen_synthetic(10, &cfg).corpus);
}

#[test]
fn no_coreference_means_no_multi_mention_clusters() {
    let data = gen_synthetic(1, &SynthConfig { coref_rate: 0.0, ..small() });
    assert!(data.coref.iter().flat_map(|c| &c.clusters).all(|c| c.len() < 2));
    let (ds, _) = prepared(&data, Variant::Full);
    for b in ds.docs.values() {
        assert_eq!(b.graph.report.merges, 0);
    }
}

#[test]
fn gold_sentence_shares_a_merged_concept_with_the_named_entity() {
    let data = gen_synthetic(2, &small());
    let (ds, turns) = prepared(&data, Variant::Full);
    for t in &turns {
        let bundle = ds.bundle(&t.turn.doc_id).unwrap();
        let name = t.turn.history.last().unwrap().text.rsplit(' ').next().unwrap();
        let gold = t.labels.as_ref().unwrap();
        let shared = gold.concept_relevance.iter().filter(|(_, &r)| r == 1).any(|(&id, _)| {
            let Provenance::Concept { mentions, .. } = &bundle.graph.nodes[id].provenance else { return false };
            mentions.iter().any(|m| m.surface == name) && mentions.iter().any(|m| m.sentence_id == gold.positive_sentence_id)
        });
        assert!(shared, "turn {}", t.key());
        let gold_text = &t.turn.candidates[t.gold_index.unwrap()].text;
        assert!(!gold_text.split(' ').any(|w| w == name));
    }
}

#[test]
fn written_directory_passes_ingestion() {
    let data = gen_synthetic(1, &small());
    let dir = tempfile::tempdir().unwrap();
    data.write_dir(dir.path()).unwrap();
    let read = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap();
    let manifest = parse_manifest(&read("manifest.json")).unwrap();
    let docs = parse_corpus(&read("corpus.amr"), Some(&manifest)).unwrap();
    assert_eq!(docs.len(), 4);
    let coref = CorefClusters::parse_file(&read("coref.json")).unwrap();
    assert_eq!(coref, data.coref);
    let train = load_dialogs(&read("dialogs_train.jsonl")).unwrap();
    let test = load_dialogs(&read("dialogs_test.jsonl")).unwrap();
    assert_eq!((train, test), (data.train.clone(), data.test.clone()));
    for (name, want) in [("sentences.emb", &data.sentences), ("contexts.emb", &data.contexts)] {
        let got = read_embedding_file(std::fs::File::open(dir.path().join(name)).unwrap()).unwrap();
        assert_eq!(&got, want);
    }
}
