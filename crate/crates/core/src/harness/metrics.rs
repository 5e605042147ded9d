use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{HarnessError, RankedSelection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnMetrics {
    pub turn: String,
    pub average_precision: f64,
    pub reciprocal_rank: f64,
    pub hit_at_1: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub p_at_1: f64,
    pub map: f64,
    pub mrr: f64,
    pub n_turns: usize,
    pub per_turn: Vec<TurnMetrics>,
}

/// Average precision of a ranked list against a relevant set.
pub fn average_precision<S: AsRef<str>>(ranked: &[S], gold: &BTreeSet<String>) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in ranked.iter().enumerate() {
        if gold.contains(id.as_ref()) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / gold.len() as f64
}

pub fn reciprocal_rank<S: AsRef<str>>(ranked: &[S], gold: &BTreeSet<String>) -> f64 {
    ranked.iter().position(|id| gold.contains(id.as_ref())).map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// P@1, MAP and MRR over selections; `gold` maps turn keys to gold ids.
pub fn eval_ranking(
    selections: &[RankedSelection],
    gold: &BTreeMap<String, BTreeSet<String>>,
) -> Result<RankingReport, HarnessError> {
    let mut per_turn = Vec::with_capacity(selections.len());
    for s in selections {
        let g = gold.get(&s.turn).filter(|g| !g.is_empty()).ok_or_else(|| HarnessError::MissingGold(s.turn.clone()))?;
        let ids: Vec<&str> = s.ranked.iter().map(|(id, _)| id.as_str()).collect();
        per_turn.push(TurnMetrics {
            turn: s.turn.clone(),
            average_precision: average_precision(&ids, g),
            reciprocal_rank: reciprocal_rank(&ids, g),
            hit_at_1: ids.first().is_some_and(|id| g.contains(*id)),
        });
    }
    let n = per_turn.len();
    let mean = |f: &dyn Fn(&TurnMetrics) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_turn.iter().map(f).sum::<f64>() / n as f64
        }
    };
    Ok(RankingReport {
        p_at_1: mean(&|t| t.hit_at_1 as u8 as f64),
        map: mean(&|t| t.average_precision),
        mrr: mean(&|t| t.reciprocal_rank),
        n_turns: n,
        per_turn,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScores {
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn rouge_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn f1(overlap: usize, cand: usize, refr: usize) -> f64 {
    if overlap == 0 || cand == 0 || refr == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand as f64;
    let r = overlap as f64 / refr as f64;
    2.0 * p * r / (p + r)
}

fn grams(t: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m: HashMap<&[String], usize> = HashMap::new();
    for g in t.windows(n) {
        *m.entry(g).or_default() += 1;
    }
    m
}

fn ngram_f1(c: &[String], r: &[String], n: usize) -> f64 {
    let (gc, gr) = (grams(c, n), grams(r, n));
    let overlap = gc.iter().map(|(g, k)| (*k).min(gr.get(g).copied().unwrap_or(0))).sum();
    f1(overlap, c.len().saturating_sub(n - 1), r.len().saturating_sub(n - 1))
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        prev = cur;
    }
    prev[b.len()]
}

/// ROUGE-1/2/L F1 of `candidate`, taking the best reference per metric.
pub fn rouge<S: AsRef<str>>(candidate: &str, references: &[S]) -> RougeScores {
    let c = rouge_tokens(candidate);
    let mut best = RougeScores::default();
    if c.is_empty() {
        return best;
    }
    for r in references {
        let r = rouge_tokens(r.as_ref());
        best.rouge1 = best.rouge1.max(ngram_f1(&c, &r, 1));
        best.rouge2 = best.rouge2.max(ngram_f1(&c, &r, 2));
        best.rouge_l = best.rouge_l.max(f1(lcs(&c, &r), c.len(), r.len()));
    }
    best
}
