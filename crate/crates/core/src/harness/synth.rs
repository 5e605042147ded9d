//! Seeded synthetic corpora with planted coreference.
//!
//! Every document introduces its entities by name in one passage and then
//! refers to each of them only by pronoun in a second, shuffled passage.
//! A dialog turn asks about one entity by name; its gold sentence is the
//! pronoun sentence about that entity, so the only route from context to
//! gold runs through the coreference merge.

use std::fs;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    concept_map, eval_ranking, gold_map, prepare_turns, select_all, train, Dataset, HarnessError, RankingReport,
    TrainConfig, TrainOutput,
};
use crate::egat::EgatConfig;
use crate::amr::{parse_corpus, Manifest, Passage};
use crate::dialog::{write_dialogs, ContextSource, Candidate, DialogTurn, Utterance};
use crate::semgraph::{
    write_embedding_file, CorefClusters, CorefMention, SentenceEmbedding, SentenceEmbeddings,
    Variant,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub docs: usize,
    /// Entities per document; each gets one naming and one pronoun sentence.
    pub sentences_per_doc: usize,
    /// Size of the object word pool.
    pub vocab: usize,
    /// Size of the global entity pool shared by all documents.
    pub entities: usize,
    /// Probability that an entity's two mentions form a cluster.
    pub coref_rate: f64,
    pub turns_per_doc: usize,
    /// The last `test_docs` documents form the test split.
    pub test_docs: usize,
    pub dim: usize,
    /// Noise amplitude relative to a unit-scale vector.
    pub noise: f64,
    /// Overall vector magnitude; 1.0 gives roughly unit-norm embeddings.
    pub scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            docs: 30,
            sentences_per_doc: 5,
            vocab: 40,
            entities: 10,
            coref_rate: 1.0,
            turns_per_doc: 5,
            test_docs: 10,
            dim: 32,
            noise: 0.1,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub corpus: String,
    pub manifest: Manifest,
    pub coref: Vec<CorefClusters>,
    pub train: Vec<DialogTurn>,
    pub test: Vec<DialogTurn>,
    /// Keyed by sentence id.
    pub sentences: SentenceEmbeddings,
    /// Keyed by `dialog_id:turn_index:sentence_id`.
    pub contexts: SentenceEmbeddings,
}

const PLACES: [&str; 6] = ["desert", "canyon", "town", "valley", "mesa", "river"];
const VERBS: [(&str, &str); 6] = [
    ("found", "find-01"),
    ("took", "take-01"),
    ("sold", "sell-01"),
    ("hid", "hide-01"),
    ("lost", "lose-02"),
    ("carried", "carry-01"),
];
const PRONOUNS: [&str; 2] = ["he", "she"];
const OBJECTS: [&str; 12] =
    ["map", "key", "hat", "bottle", "coin", "rope", "lamp", "badge", "book", "bell", "drum", "cup"];
const SYLLABLES: [&str; 8] = ["ka", "ro", "mi", "zu", "te", "vo", "la", "ne"];

fn entity_name(i: usize) -> String {
    let s = format!("{}{}{}", SYLLABLES[i % 8], SYLLABLES[(i / 8) % 8], SYLLABLES[(i / 64) % 8]);
    let mut c = s.chars();
    let first = c.next().expect("non-empty").to_ascii_uppercase();
    format!("{first}{}", c.as_str())
}

fn object_word(i: usize) -> String {
    if i < OBJECTS.len() {
        OBJECTS[i].to_string()
    } else {
        format!("{}{}", OBJECTS[i % OBJECTS.len()], i / OBJECTS.len())
    }
}

struct Vectors {
    dim: usize,
    seed: u64,
    scale: f64,
}

impl Vectors {
    fn uniform(&self, key: &str, scale: f64) -> Vec<f64> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(key.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        let a = (3.0 / self.dim as f64).sqrt() * scale * self.scale;
        (0..self.dim).map(|_| rng.gen_range(-a..a)).collect()
    }

    fn word(&self, w: &str) -> Vec<f64> {
        self.uniform(&format!("word:{}", w.to_lowercase()), 1.0)
    }

    fn entity(&self, e: usize) -> Vec<f64> {
        self.uniform(&format!("entity:{e}"), 2.0)
    }
}

fn noisy(v: &[f64], rng: &mut ChaCha8Rng, noise: f64, dim: usize) -> Vec<f64> {
    let a = noise * (3.0 / dim as f64).sqrt();
    v.iter().map(|x| x + if a > 0.0 { rng.gen_range(-a..a) } else { 0.0 }).collect()
}

fn mean(vs: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for v in vs {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x / vs.len() as f64;
        }
    }
    out
}

/// Generates a complete dataset; identical seeds give identical output.
pub fn gen_synthetic(seed: u64, cfg: &SynthConfig) -> SynthDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vecs = Vectors { dim: cfg.dim, seed, scale: cfg.scale };
    let k = cfg.sentences_per_doc.max(1);
    let pool = cfg.entities.max(k);
    let mut corpus = String::new();
    let mut manifest = Manifest::new();
    let mut coref = Vec::new();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    let mut sentences = SentenceEmbeddings::new(cfg.dim);
    let mut contexts = SentenceEmbeddings::new(cfg.dim);

    for d in 0..cfg.docs {
        let doc_id = format!("doc{d}");
        let ents: Vec<usize> = rand::seq::index::sample(&mut rng, pool, k).into_vec();
        let mut embed = |sid: &str, tokens: &[String], entity: Option<usize>, rng: &mut ChaCha8Rng| {
            let tv: Vec<Vec<f64>> = tokens
                .iter()
                .enumerate()
                .map(|(i, t)| match entity {
                    Some(e) if i == 0 => noisy(&vecs.entity(e), rng, cfg.noise * cfg.scale, cfg.dim),
                    _ => noisy(&vecs.word(t), rng, cfg.noise * cfg.scale, cfg.dim),
                })
                .collect();
            let cls = mean(&tv, cfg.dim);
            sentences.insert(sid, SentenceEmbedding { cls, tokens: tv });
        };
        let mut write_sentence = |sid: &str, tokens: &[String], amr: &str| {
            let text = tokens.join(" ");
            corpus.push_str(&format!("# ::id {sid}\n# ::snt {text}\n# ::tok {text}\n{amr}\n\n"));
        };

        let mut intro_ids = Vec::with_capacity(k);
        for (i, &e) in ents.iter().enumerate() {
            let sid = format!("{doc_id}.n{i}");
            let name = entity_name(e);
            let place = PLACES[rng.gen_range(0..PLACES.len())];
            let tokens: Vec<String> =
                [name.as_str(), "lives", "in", "the", place, "."].iter().map(|s| s.to_string()).collect();
            let amr = format!(
                "(l / live-01~e.1 :ARG0 (p / person :name (n / name :op1 \"{name}\"~e.0)) :location (c / {place}~e.4))"
            );
            write_sentence(&sid, &tokens, &amr);
            embed(&sid, &tokens, Some(e), &mut rng);
            intro_ids.push(sid);
        }

        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(&mut rng);
        let mut body_of = vec![String::new(); k];
        let mut candidates = Vec::with_capacity(k);
        for (j, &i) in order.iter().enumerate() {
            let sid = format!("{doc_id}.b{j}");
            let pron = PRONOUNS[rng.gen_range(0..PRONOUNS.len())];
            let (verb, frame) = VERBS[rng.gen_range(0..VERBS.len())];
            let obj = object_word(rng.gen_range(0..cfg.vocab.max(1)));
            let tokens: Vec<String> = [pron, verb, "the", obj.as_str(), "."].iter().map(|s| s.to_string()).collect();
            let amr = format!("(v / {frame}~e.1 :ARG0 (h / {pron}~e.0) :ARG1 (o / {obj}~e.3))");
            write_sentence(&sid, &tokens, &amr);
            embed(&sid, &tokens, None, &mut rng);
            candidates.push(Candidate { sentence_id: sid.clone(), text: tokens.join(" ") });
            body_of[i] = sid;
        }

        manifest.insert(
            doc_id.clone(),
            vec![
                Passage { passage_id: format!("{doc_id}.intro"), sentence_ids: intro_ids.clone() },
                Passage { passage_id: format!("{doc_id}.body"), sentence_ids: candidates.iter().map(|c| c.sentence_id.clone()).collect() },
            ],
        );

        let clusters = (0..k)
            .filter(|_| rng.gen_bool(cfg.coref_rate.clamp(0.0, 1.0)))
            .map(|i| {
                vec![
                    CorefMention { sentence_id: intro_ids[i].clone(), start: 0, end: 1 },
                    CorefMention { sentence_id: body_of[i].clone(), start: 0, end: 1 },
                ]
            })
            .collect();
        coref.push(CorefClusters { doc_id: doc_id.clone(), clusters });

        let mut targets: Vec<usize> = (0..k).collect();
        targets.shuffle(&mut rng);
        let dialog_id = format!("dlg{d}");
        for t in 0..cfg.turns_per_doc {
            let i = targets[t % k];
            let e = ents[i];
            let turn = DialogTurn {
                dialog_id: dialog_id.clone(),
                turn_index: t,
                doc_id: doc_id.clone(),
                history: vec![
                    Utterance { speaker: "system".into(), text: "hello there".into() },
                    Utterance { speaker: "user".into(), text: format!("do you know {}", entity_name(e)) },
                ],
                candidates: candidates.clone(),
                gold_sentence_id: Some(body_of[i].clone()),
                gold_span: None,
            };
            let target = vecs.entity(e);
            for c in &candidates {
                let cls = &sentences.get(&c.sentence_id).expect("embedded").cls;
                let v: Vec<f64> = cls.iter().zip(&target).map(|(a, b)| a + b).collect();
                contexts.insert(turn.context_key(&c.sentence_id), SentenceEmbedding {
                    cls: noisy(&v, &mut rng, cfg.noise * cfg.scale, cfg.dim),
                    tokens: Vec::new(),
                });
            }
            if d + cfg.test_docs >= cfg.docs {
                test.push(turn);
            } else {
                train.push(turn);
            }
        }
    }
    // stored at file precision so written datasets reload unchanged
    for table in [&mut sentences, &mut contexts] {
        for rec in table.records.values_mut() {
            for x in rec.cls.iter_mut().chain(rec.tokens.iter_mut().flatten()) {
                *x = *x as f32 as f64;
            }
        }
    }
    SynthDataset { corpus, manifest, coref, train, test, sentences, contexts }
}

impl SynthDataset {
    /// Writes `corpus.amr`, `manifest.json`, `coref.json`,
    /// `dialogs_train.jsonl`, `dialogs_test.jsonl`, `sentences.emb` and
    /// `contexts.emb` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("corpus.amr"), &self.corpus)?;
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&self.manifest)?)?;
        fs::write(dir.join("coref.json"), serde_json::to_string_pretty(&self.coref)?)?;
        fs::write(dir.join("dialogs_train.jsonl"), write_dialogs(&self.train))?;
        fs::write(dir.join("dialogs_test.jsonl"), write_dialogs(&self.test))?;
        let emb = |name: &str, e: &SentenceEmbeddings| -> io::Result<()> {
            let f = io::BufWriter::new(fs::File::create(dir.join(name))?);
            write_embedding_file(f, e).map_err(|e| io::Error::new(io::ErrorKind::Other, e.to_string()))
        };
        emb("sentences.emb", &self.sentences)?;
        emb("contexts.emb", &self.contexts)?;
        Ok(())
    }
}

/// Training settings used for the synthetic ablation benchmark: a narrower,
/// deeper network and a larger step than the defaults, which are sized for
/// pretrained encoders and full datasets.
pub fn benchmark_train_config(seed: u64, input_dim: usize, beta: f64) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        epochs: 60,
        seed,
        egat: EgatConfig { hidden_dim: 64, layers: 3, input_dim, beta, ..EgatConfig::default() },
        ..TrainConfig::default()
    }
}

/// Outcome of training on a synthetic train split and scoring both splits.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub train: RankingReport,
    pub test: RankingReport,
    /// Concept ranking MAP on the test split.
    pub concept_map: f64,
    pub output: TrainOutput,
}

/// Builds graphs under `variant`, trains on the train split and evaluates.
pub fn run_synthetic(data: &SynthDataset, variant: Variant, cfg: &TrainConfig) -> Result<Experiment, HarnessError> {
    let docs = parse_corpus(&data.corpus, Some(&data.manifest))?;
    let ds = Dataset::build(docs, &data.coref, variant, &data.sentences)?;
    let source = ContextSource::Precomputed(&data.contexts);
    let train_turns = prepare_turns(&ds, &data.train, &source, crate::DEFAULT_CONTEXT_WINDOW)?;
    let test_turns = prepare_turns(&ds, &data.test, &source, crate::DEFAULT_CONTEXT_WINDOW)?;
    let output = train(&ds, &train_turns, cfg)?;
    let train_sel = select_all(&output.params, &ds, &train_turns)?;
    let test_sel = select_all(&output.params, &ds, &test_turns)?;
    Ok(Experiment {
        train: eval_ranking(&train_sel, &gold_map(&train_turns))?,
        test: eval_ranking(&test_sel, &gold_map(&test_turns))?,
        concept_map: concept_map(&ds, &test_turns, &test_sel)?,
        output,
    })
}
