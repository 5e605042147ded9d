use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{average_precision, Dataset, DocBundle, HarnessError, PreparedTurn, RankedSelection};
use crate::egat::{forward, turn_loss, EgatConfig, EgatParams, ParamVars};
use crate::tensor::{Adam, AdamConfig, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Turns per optimizer step, reached by gradient accumulation.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub egat: EgatConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-5,
            batch_size: 16,
            epochs: 3,
            seed: 0,
            adam: AdamConfig::default(),
            egat: EgatConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub step: usize,
    pub loss_c: f64,
    pub loss_n: f64,
    pub loss_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss_c: f64,
    pub loss_n: f64,
    pub loss_total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: EgatParams,
    /// One row per optimizer step, averaged over the batch.
    pub log: Vec<LossRow>,
    pub epochs: Vec<EpochLoss>,
}

fn keyed_rng(seed: u64, parts: &[&[u8]]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Up to `k` distinct non-gold candidate indices, drawn from a stream keyed
/// by `(seed, dialog_id, turn_index, epoch)`.
pub fn sample_negatives(seed: u64, turn: &PreparedTurn, epoch: usize, k: usize) -> Vec<usize> {
    let Some(gold) = turn.gold_index else {
        return Vec::new();
    };
    let gold_id = &turn.turn.candidates[gold].sentence_id;
    let pool: Vec<usize> = (0..turn.turn.candidates.len())
        .filter(|&i| &turn.turn.candidates[i].sentence_id != gold_id)
        .collect();
    let mut rng = keyed_rng(
        seed,
        &[
            turn.turn.dialog_id.as_bytes(),
            &(turn.turn.turn_index as u64).to_le_bytes(),
            &(epoch as u64).to_le_bytes(),
        ],
    );
    sample(&mut rng, pool.len(), k.min(pool.len())).into_iter().map(|i| pool[i]).collect()
}

/// Trains from a seeded initialization. Each turn contributes the joint loss
/// over its gold candidate plus sampled negatives; gradients are averaged
/// over a batch before one optimizer step.
pub fn train(ds: &Dataset, turns: &[PreparedTurn], cfg: &TrainConfig) -> Result<TrainOutput, HarnessError> {
    let params = EgatParams::init(&cfg.egat, cfg.seed)?;
    train_from(ds, turns, cfg, params)
}

pub fn train_from(
    ds: &Dataset,
    turns: &[PreparedTurn],
    cfg: &TrainConfig,
    mut params: EgatParams,
) -> Result<TrainOutput, HarnessError> {
    let labeled: Vec<usize> = (0..turns.len()).filter(|&i| turns[i].gold_index.is_some()).collect();
    if labeled.is_empty() {
        return Err(HarnessError::NoLabeledTurns);
    }
    let bundles: Vec<&DocBundle> = turns.iter().map(|t| ds.bundle(&t.turn.doc_id)).collect::<Result<_, _>>()?;
    let mut adam = Adam::new(cfg.learning_rate, cfg.adam, &params.tensors);
    let batch = cfg.batch_size.max(1);
    let mut log = Vec::new();
    let mut epochs = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order = labeled.clone();
        order.shuffle(&mut keyed_rng(cfg.seed, &[b"order", &(epoch as u64).to_le_bytes()]));
        let mut epoch_sum = [0.0; 3];
        for chunk in order.chunks(batch) {
            let mut grads: Vec<Vec<f64>> = params.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
            let mut sums = [0.0; 3];
            for &ti in chunk {
                let pt = &turns[ti];
                let gold = pt.gold_index.expect("labeled");
                let mut cands = vec![gold];
                cands.extend(sample_negatives(cfg.seed, pt, epoch, cfg.egat.negatives));
                let g = pt.graph_input(bundles[ti], &cands)?;
                let labels = pt.concept_labels(&g);
                let mut tape = Tape::new();
                let pv = ParamVars::trainable(&mut tape, &params);
                let tl = turn_loss(&mut tape, &pv, &params, &g, 0, &labels)?;
                tape.backward(tl.total).map_err(crate::egat::EgatError::from)?;
                let (lc, ln, total) = tl.values(&tape);
                for (s, v) in sums.iter_mut().zip([lc, ln, total]) {
                    *s += v;
                }
                let scale = 1.0 / chunk.len() as f64;
                for (acc, var) in grads.iter_mut().zip(&pv.0) {
                    if let Some(gr) = tape.grad(*var) {
                        for (a, x) in acc.iter_mut().zip(gr) {
                            *a += x * scale;
                        }
                    }
                }
            }
            adam.update(&mut params.tensors, &grads);
            if !params.is_finite() {
                return Err(crate::egat::EgatError::from(crate::tensor::TensorError::NonFinite { op: "adam" }).into());
            }
            step += 1;
            let n = chunk.len() as f64;
            log.push(LossRow { epoch, step, loss_c: sums[0] / n, loss_n: sums[1] / n, loss_total: sums[2] / n });
            for (e, s) in epoch_sum.iter_mut().zip(sums) {
                *e += s;
            }
        }
        let n = labeled.len() as f64;
        log::info!("epoch {epoch}: loss {:.6}", epoch_sum[2] / n);
        epochs.push(EpochLoss {
            epoch,
            loss_c: epoch_sum[0] / n,
            loss_n: epoch_sum[1] / n,
            loss_total: epoch_sum[2] / n,
        });
    }
    Ok(TrainOutput { params, log, epochs })
}

/// Scores every candidate in one forward pass. Equal scores keep corpus
/// order.
pub fn select_knowledge(params: &EgatParams, bundle: &DocBundle, turn: &PreparedTurn) -> Result<RankedSelection, HarnessError> {
    let all: Vec<usize> = (0..turn.contexts.len()).collect();
    let g = turn.graph_input(bundle, &all)?;
    let mut tape = Tape::new();
    let pv = ParamVars::frozen(&mut tape, params);
    let fw = forward(&mut tape, &pv, params, &g)?;
    let scores: Vec<f64> = fw.context_logits.map(|v| tape.value(v).data().to_vec()).unwrap_or_default();
    let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
    ranked.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| {
                bundle
                    .sentence_rank(&turn.contexts[a.0].sentence_id)
                    .cmp(&bundle.sentence_rank(&turn.contexts[b.0].sentence_id))
            })
            .then(a.0.cmp(&b.0))
    });
    let concept_probs = match fw.concept_probs {
        Some(p) => g
            .concepts
            .iter()
            .zip(tape.value(p).data())
            .map(|(&n, &prob)| (bundle.graph.nodes[n].key.clone(), prob))
            .collect(),
        None => BTreeMap::new(),
    };
    Ok(RankedSelection {
        turn: turn.key(),
        ranked: ranked.into_iter().map(|(i, s)| (turn.contexts[i].sentence_id.clone(), s)).collect(),
        concept_probs,
    })
}

pub fn select_all(params: &EgatParams, ds: &Dataset, turns: &[PreparedTurn]) -> Result<Vec<RankedSelection>, HarnessError> {
    turns.iter().map(|t| select_knowledge(params, ds.bundle(&t.turn.doc_id)?, t)).collect()
}

/// Gold sentence ids per turn key, for labeled turns.
pub fn gold_map(turns: &[PreparedTurn]) -> BTreeMap<String, BTreeSet<String>> {
    turns
        .iter()
        .filter_map(|t| {
            let l = t.labels.as_ref()?;
            Some((t.key(), BTreeSet::from([l.positive_sentence_id.clone()])))
        })
        .collect()
}

/// Mean average precision of the concept ranking, over turns with at least
/// one relevant concept. Equal probabilities keep node order.
pub fn concept_map(ds: &Dataset, turns: &[PreparedTurn], selections: &[RankedSelection]) -> Result<f64, HarnessError> {
    let by_turn: BTreeMap<&str, &RankedSelection> = selections.iter().map(|s| (s.turn.as_str(), s)).collect();
    let mut total = 0.0;
    let mut n = 0usize;
    for t in turns {
        let Some(labels) = &t.labels else { continue };
        let bundle = ds.bundle(&t.turn.doc_id)?;
        let relevant: BTreeSet<String> = labels
            .concept_relevance
            .iter()
            .filter(|(_, &r)| r == 1)
            .map(|(&id, _)| bundle.graph.nodes[id].key.clone())
            .collect();
        if relevant.is_empty() {
            continue;
        }
        let sel = by_turn.get(t.key().as_str()).ok_or_else(|| HarnessError::MissingGold(t.key()))?;
        let mut ranked: Vec<(&String, f64, usize)> = sel
            .concept_probs
            .iter()
            .map(|(k, &p)| (k, p, bundle.graph.node_by_key(k).map_or(usize::MAX, |n| n.id)))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)));
        let ids: Vec<&str> = ranked.iter().map(|r| r.0.as_str()).collect();
        total += average_precision(&ids, &relevant);
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

pub fn loss_log_csv(rows: &[LossRow]) -> String {
    let mut s = String::from("epoch,step,loss_c,loss_n,loss_total\n");
    for r in rows {
        writeln!(s, "{},{},{},{},{}", r.epoch, r.step, r.loss_c, r.loss_n, r.loss_total).expect("string write");
    }
    s
}
