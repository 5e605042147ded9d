use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::amr::parse_corpus;
use crate::dialog::{build_dialog_graph, Candidate, ContextSource, DialogTurn, HashContextEncoder, Utterance};
use crate::semgraph::{
    apply_variant, build_document_graph, init_node_embeddings, CorefClusters, CorefMention, HashEncoder, Variant,
};
use crate::tensor::{grad_check, Tape};

// ---- dense oracles -------------------------------------------------------

fn vecmat(x: &[f64], w: &Tensor) -> Vec<f64> {
    let (r, c) = (w.rows(), w.cols());
    assert_eq!(x.len(), r);
    let mut out = vec![0.0; c];
    for j in 0..c {
        let mut s = 0.0;
        for i in 0..r {
            s += x[i] * w.data()[i * c + j];
        }
        out[j] = s;
    }
    out
}

fn plus(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn cat(parts: &[&[f64]]) -> Vec<f64> {
    parts.concat()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn dense_mlp(x: &[f64], w: &EgatParams, first: usize) -> Vec<f64> {
    let h: Vec<f64> = plus(&vecmat(x, w.get(first)), w.get(first + 1).data()).into_iter().map(gelu).collect();
    plus(&vecmat(&h, w.get(first + 2)), w.get(first + 3).data())
}

fn type_row(w: &EgatParams, table: usize, id: usize) -> Vec<f64> {
    w.get(table).row(id).to_vec()
}

fn dense_message(w: &EgatParams, h: &[f64], nt: usize, et: usize) -> Vec<f64> {
    let x = cat(&[h, &type_row(w, p::NODE_TYPE, nt)]);
    let v = plus(&vecmat(&x, w.get(p::W_V)), w.get(p::B_V).data());
    plus(&v, &vecmat(&type_row(w, p::EDGE_TYPE, et), w.get(p::W_E)))
}

fn dense_logit(w: &EgatParams, hs: &[f64], st: usize, ht: &[f64], tt: usize, et: usize) -> f64 {
    let q = plus(&vecmat(&cat(&[hs, &type_row(w, p::NODE_TYPE, st)]), w.get(p::W_Q)), w.get(p::B_Q).data());
    let kin = cat(&[ht, &type_row(w, p::NODE_TYPE, tt), &type_row(w, p::EDGE_TYPE, et)]);
    let k = plus(&vecmat(&kin, w.get(p::W_K)), w.get(p::B_K).data());
    q.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>() / (w.config.hidden_dim as f64).sqrt()
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Whole-network forward computed node by node from the definitions.
fn dense_forward(w: &EgatParams, g: &GraphInput) -> Vec<Vec<Vec<f64>>> {
    let n = g.node_count();
    let mut h: Vec<Vec<f64>> =
        (0..n).map(|i| plus(&vecmat(g.features.row(i), w.get(p::W_IN)), w.get(p::B_IN).data())).collect();
    let mut states = vec![h.clone()];
    for _ in 0..w.config.layers {
        let mut next = Vec::with_capacity(n);
        for t in 0..n {
            let incoming: Vec<usize> = (0..g.edge_count()).filter(|&e| g.dst[e] == t).collect();
            let mut agg = vec![0.0; w.config.hidden_dim];
            if !incoming.is_empty() {
                let logits: Vec<f64> = incoming
                    .iter()
                    .map(|&e| {
                        let s = g.src[e];
                        dense_logit(w, &h[s], g.node_types[s], &h[t], g.node_types[t], g.edge_types[e])
                    })
                    .collect();
                let alpha = softmax(&logits);
                for (a, &e) in alpha.iter().zip(&incoming) {
                    let m = dense_message(w, &h[g.src[e]], g.node_types[g.src[e]], g.edge_types[e]);
                    for (o, x) in agg.iter_mut().zip(m) {
                        *o += a * x;
                    }
                }
            }
            next.push(plus(&dense_mlp(&agg, w, p::AGG_W1), &h[t]).into_iter().map(gelu).collect());
        }
        h = next;
        states.push(h.clone());
    }
    states
}

// ---- fixtures ------------------------------------------------------------

fn small_config() -> EgatConfig {
    EgatConfig { hidden_dim: 6, layers: 2, type_dim: 3, input_dim: 5, beta: 1.0, negatives: 5 }
}

fn randomized(cfg: &EgatConfig, seed: u64) -> EgatParams {
    let mut w = EgatParams::init(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    for t in w.tensors.iter_mut() {
        for x in t.data_mut() {
            *x += rng.gen_range(-0.3..0.3);
        }
    }
    w
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// 8 nodes: source, two sentences, three concepts, two contexts.
fn random_graph(cfg: &EgatConfig, seed: u64) -> GraphInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 8;
    let feats: Vec<f64> = (0..n * cfg.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let types = vec![0, 1, 1, 2, 2, 2, 3, 3];
    let mut edges = vec![(0, 1, 9), (0, 2, 9), (1, 0, 10), (2, 0, 10), (6, 1, 21), (1, 6, 21), (7, 2, 21), (2, 7, 21)];
    for &(c, s) in &[(3usize, 1usize), (4, 1), (5, 2)] {
        edges.push((c, s, 6));
        edges.push((s, c, 6));
    }
    edges.push((3, 4, 0));
    edges.push((4, 3, 1));
    edges.push((5, 4, rng.gen_range(2..6)));
    GraphInput::new(Tensor::matrix(n, cfg.input_dim, feats).unwrap(), types, &edges, vec![6, 7], vec![3, 4, 5])
        .unwrap()
}

// ---- message / attention / scores ---------------------------------------

#[test]
fn message_zero_inputs() {
    let cfg = small_config();
    let mut w = randomized(&cfg, 1);
    w.get_mut(p::NODE_TYPE).data_mut().fill(0.0);
    w.get_mut(p::EDGE_TYPE).data_mut().fill(0.0);
    w.get_mut(p::B_V).data_mut().fill(0.0);
    let m = message(&w, &[0.0; 6], 2, 5).unwrap();
    assert!(m.iter().all(|&x| x == 0.0));
}

#[test]
fn message_without_edge_weights_ignores_edge_type() {
    let cfg = small_config();
    let mut w = randomized(&cfg, 2);
    w.get_mut(p::W_E).data_mut().fill(0.0);
    let h = [0.3, -0.2, 0.5, 0.1, 0.0, -0.7];
    assert_eq!(message(&w, &h, 2, 0).unwrap(), message(&w, &h, 2, 17).unwrap());
}

#[test]
fn message_matches_dense_oracle() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..10 {
        let w = randomized(&cfg, seed);
        let h = rand_vec(&mut rng, 6);
        let (nt, et) = (rng.gen_range(0..4), rng.gen_range(0..22));
        let got = message(&w, &h, nt, et).unwrap();
        for (a, b) in got.iter().zip(dense_message(&w, &h, nt, et)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_trivial_cases() {
    let cfg = small_config();
    let w = randomized(&cfg, 4);
    let h = vec![0.1; 6];
    assert_eq!(attention_weights(&w, &h, 1, &[(vec![0.4; 6], 2, 6)]).unwrap(), vec![1.0]);
    let two = attention_weights(&w, &h, 1, &[(vec![0.4; 6], 2, 6), (vec![0.4; 6], 2, 6)]).unwrap();
    assert_eq!(two, vec![0.5, 0.5]);
    assert!(attention_weights(&w, &h, 1, &[]).is_err());
}

#[test]
fn attention_matches_softmax_oracle() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..10 {
        let w = randomized(&cfg, seed);
        let ht = rand_vec(&mut rng, 6);
        let nbrs: Vec<(Vec<f64>, usize, usize)> =
            (0..4).map(|_| (rand_vec(&mut rng, 6), rng.gen_range(0..4), rng.gen_range(0..22))).collect();
        let got = attention_weights(&w, &ht, 3, &nbrs).unwrap();
        let logits: Vec<f64> = nbrs.iter().map(|(h, st, et)| dense_logit(&w, h, *st, &ht, 3, *et)).collect();
        let want = softmax(&logits);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn score_heads() {
    let cfg = small_config();
    let mut w = randomized(&cfg, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (a, b) = (rand_vec(&mut rng, 6), rand_vec(&mut rng, 6));
    let sc = score_context(&w, &a, &b).unwrap();
    assert!((sc - dense_mlp(&cat(&[&a, &b]), &w, p::CTX_W1)[0]).abs() < 1e-12);
    assert_eq!(sc, score_context(&w, &a, &b).unwrap());
    let sn = score_concept(&w, &a).unwrap();
    let want = 1.0 / (1.0 + (-dense_mlp(&a, &w, p::CON_W1)[0]).exp());
    assert!((sn - want).abs() < 1e-12);
    assert!(sn > 0.0 && sn < 1.0);

    for i in [p::CTX_W1, p::CTX_B1, p::CTX_W2, p::CTX_B2, p::CON_W1, p::CON_B1, p::CON_W2, p::CON_B2] {
        w.get_mut(i).data_mut().fill(0.0);
    }
    assert_eq!(score_context(&w, &a, &b).unwrap(), 0.0);
    assert_eq!(score_concept(&w, &a).unwrap(), 0.5);
}

// ---- losses ----------------------------------------------------------------

#[test]
fn sentence_loss_cases() {
    assert!((loss_sentence(&[0.4; 6], 0).unwrap() - 6f64.ln()).abs() < 1e-12);
    assert!((loss_sentence(&[0.4; 6], 0).unwrap() - 1.791759).abs() < 1e-6);
    let gap = loss_sentence(&[50.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0).unwrap();
    assert!(gap < 1e-20 && gap >= 0.0);
    assert_eq!(loss_sentence(&[3.7], 0).unwrap(), 0.0);
    assert!(matches!(loss_sentence(&[], 0), Err(EgatError::NoPositive)));
    assert!(matches!(loss_sentence(&[1.0], 1), Err(EgatError::NoPositive)));
}

#[test]
fn concept_loss_cases() {
    let l = loss_concept(&[0.5; 4], &[1.0, 0.0, 0.0, 1.0]).unwrap();
    assert!((l.value - 2f64.ln()).abs() < 1e-12 && !l.empty);
    let perfect = loss_concept(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]).unwrap();
    assert!(perfect.value < 1e-10);
    let one = loss_concept(&[(-1f64).exp()], &[1.0]).unwrap();
    assert!((one.value - 1.0).abs() < 1e-12);
    let empty = loss_concept(&[], &[]).unwrap();
    assert_eq!((empty.value, empty.empty), (0.0, true));
}

#[test]
fn total_loss_cases() {
    assert_eq!(total_loss(1.3, 2.0, 0.0), 1.3);
    assert_eq!(total_loss(1.0, 2.0, 1.0), 3.0);
    assert_eq!(total_loss(2.0, 2.0, 0.5), 3.0);
}

// ---- whole network ---------------------------------------------------------

fn run(w: &EgatParams, g: &GraphInput) -> (Vec<Tensor>, Vec<Tensor>, (f64, f64, f64)) {
    let mut t = Tape::new();
    let pv = ParamVars::frozen(&mut t, w);
    let labels: Vec<f64> = (0..g.concepts.len()).map(|i| (i % 2) as f64).collect();
    let tl = turn_loss(&mut t, &pv, w, g, 0, &labels).unwrap();
    let states = tl.forward.states.iter().map(|v| t.value(*v).clone()).collect();
    let att = tl.forward.attention.iter().map(|v| t.value(*v).clone()).collect();
    (states, att, tl.values(&t))
}

#[test]
fn forward_matches_dense_oracle() {
    let cfg = small_config();
    for seed in 0..4 {
        let w = randomized(&cfg, seed);
        let g = random_graph(&cfg, seed + 50);
        let (states, _, _) = run(&w, &g);
        let want = dense_forward(&w, &g);
        assert_eq!(states.len(), cfg.layers + 1);
        for (l, s) in states.iter().enumerate() {
            for i in 0..g.node_count() {
                for (a, b) in s.row(i).iter().zip(&want[l][i]) {
                    assert!((a - b).abs() < 1e-12, "layer {l} node {i}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn zero_layers_keeps_projection_only() {
    let cfg = EgatConfig { layers: 0, ..small_config() };
    let w = randomized(&cfg, 7);
    let (states, att, _) = run(&w, &random_graph(&cfg, 7));
    assert_eq!(states.len(), 1);
    assert!(att.is_empty());
}

#[test]
fn isolated_node_uses_zero_aggregate() {
    let cfg = small_config();
    let w = randomized(&cfg, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let feats = Tensor::matrix(3, 5, (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let g = GraphInput::new(feats, vec![1, 3, 2], &[(0, 1, 21), (1, 0, 21)], vec![1], vec![2]).unwrap();
    let (states, _, _) = run(&w, &g);
    let zero_update = dense_mlp(&vec![0.0; 6], &w, p::AGG_W1);
    for l in 0..cfg.layers {
        let want: Vec<f64> = plus(&zero_update, states[l].row(2)).into_iter().map(gelu).collect();
        for (a, b) in states[l + 1].row(2).iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_sums_to_one_per_target() {
    let cfg = small_config();
    let w = randomized(&cfg, 9);
    let g = random_graph(&cfg, 9);
    let (_, att, _) = run(&w, &g);
    for a in &att {
        let mut sums = vec![0.0; g.node_count()];
        for (e, &t) in g.dst.iter().enumerate() {
            sums[t] += a.data()[e];
        }
        for (t, s) in sums.iter().enumerate() {
            if g.dst.contains(&t) {
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn relabeling_permutes_states() {
    let cfg = small_config();
    let w = randomized(&cfg, 10);
    let g = random_graph(&cfg, 10);
    let perm = [5, 2, 7, 0, 3, 6, 1, 4];
    let gp = g.permuted(&perm);
    let (s, _, loss) = run(&w, &g);
    let (sp, _, loss_p) = run(&w, &gp);
    for (a, b) in s.iter().zip(&sp) {
        for i in 0..g.node_count() {
            for (x, y) in a.row(i).iter().zip(b.row(perm[i])) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
    assert!((loss.0 - loss_p.0).abs() < 1e-12);
    assert!((loss.1 - loss_p.1).abs() < 1e-12);
}

#[test]
fn total_loss_gradients() {
    let cfg = small_config();
    let w = randomized(&cfg, 11);
    let g = random_graph(&cfg, 11);
    let err = grad_check(
        |t, vars| {
            let pv = ParamVars(vars.to_vec());
            Ok(turn_loss(t, &pv, &w, &g, 1, &[0.0, 1.0, 1.0]).map_err(|e| match e {
                EgatError::Tensor(e) | EgatError::Layer { source: e, .. } => e,
                other => panic!("{other}"),
            })?
            .total)
        },
        &w.tensors,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "max relative error {err}");
}

fn dialog_fixture() -> (crate::amr::CorpusDocument, CorefClusters, DialogTurn) {
    let text = "\
# ::id s1
# ::snt Rango the lizard wants water .
# ::tok Rango the lizard wants water .
(w / want-01 :ARG0 (l / lizard~e.2 :name (n / name :op1 \"Rango\"~e.0)) :ARG1 (w2 / water~e.4))

# ::id s2
# ::snt He finds the town .
# ::tok He finds the town .
(f / find-01 :ARG0 (h / he~e.0) :ARG1 (t / town~e.3))
";
    let doc = parse_corpus(text, None).unwrap().remove(0);
    let coref = CorefClusters {
        doc_id: "doc".into(),
        clusters: vec![vec![
            CorefMention { sentence_id: "s1".into(), start: 0, end: 3 },
            CorefMention { sentence_id: "s2".into(), start: 0, end: 1 },
        ]],
    };
    let turn = DialogTurn {
        dialog_id: "d".into(),
        turn_index: 0,
        doc_id: "doc".into(),
        history: vec![Utterance { speaker: "user".into(), text: "who is Rango".into() }],
        candidates: vec![
            Candidate { sentence_id: "s1".into(), text: "Rango the lizard wants water .".into() },
            Candidate { sentence_id: "s2".into(), text: "He finds the town .".into() },
        ],
        gold_sentence_id: Some("s2".into()),
        gold_span: None,
    };
    (doc, coref, turn)
}

#[test]
fn homogeneous_variant_matches_collapsed_full() {
    let (doc, coref, turn) = dialog_fixture();
    let full = build_document_graph(&doc, &coref, Variant::Full);
    let homo = apply_variant(&full, Variant::Homogeneous);
    let enc = HashEncoder::new(5, 3);
    let ctx = HashContextEncoder::new(5, 3);
    let table = init_node_embeddings(&full, &doc, &enc).unwrap();
    let mut a = GraphInput::from_dialog(&build_dialog_graph(&full, &turn, &ContextSource::Encoder(&ctx)).unwrap(), &table)
        .unwrap();
    a.collapse_types();
    let b = GraphInput::from_dialog(&build_dialog_graph(&homo, &turn, &ContextSource::Encoder(&ctx)).unwrap(), &table)
        .unwrap();
    let w = randomized(&small_config(), 12);
    let (sa, _, la) = run(&w, &a);
    let (sb, _, lb) = run(&w, &b);
    assert_eq!(la, lb);
    assert_eq!(sa, sb);
}

#[test]
fn checkpoint_names_round_trip() {
    let cfg = small_config();
    let w = randomized(&cfg, 13);
    let back = EgatParams::from_named(&cfg, w.named()).unwrap();
    assert_eq!(back, w);
    let mut named = w.named();
    named.swap(0, 1);
    assert!(matches!(EgatParams::from_named(&cfg, named), Err(EgatError::ParamShape { .. })));
}

#[test]
fn init_is_seeded_and_shaped() {
    let cfg = small_config();
    let a = EgatParams::init(&cfg, 1).unwrap();
    assert_eq!(a, EgatParams::init(&cfg, 1).unwrap());
    assert_ne!(a, EgatParams::init(&cfg, 2).unwrap());
    assert_eq!(a.get(p::W_K).shape(), &[6 + 6, 6]);
    assert_eq!(a.get(p::EDGE_TYPE).shape(), &[22, 3]);
    assert_eq!(a.get(p::CTX_W1).shape(), &[12, 6]);
    assert!(a.get(p::B_V).data().iter().all(|&x| x == 0.0));
    assert!(EgatParams::init(&EgatConfig { hidden_dim: 0, ..cfg }, 1).is_err());
}

#[test]
fn defaults() {
    let c = EgatConfig::default();
    assert_eq!((c.hidden_dim, c.layers, c.type_dim, c.negatives, c.beta), (200, 2, 20, 5, 1.0));
}

mod props {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn losses_are_non_negative(scores in proptest::collection::vec(-30.0f64..30.0, 1..8),
                                   probs in proptest::collection::vec(0.0f64..=1.0, 1..8),
                                   bits in proptest::collection::vec(0u8..2, 8)) {
            prop_assert!(loss_sentence(&scores, 0).unwrap() >= 0.0);
            let labels: Vec<f64> = probs.iter().zip(&bits).map(|(_, b)| *b as f64).collect();
            prop_assert!(loss_concept(&probs, &labels).unwrap().value >= 0.0);
        }
    }
}
