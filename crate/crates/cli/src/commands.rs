use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use semsel::config::RunConfig;
use semsel::harness::{eval_ranking, gen_synthetic, loss_log_csv, select_all, train, RankedSelection, SynthConfig};
use semsel::semgraph::{build_document_graph, CorefClusters};

use crate::error::CliError;
use crate::pipeline::{
    load_coref, load_corpus, load_dialog_file, load_model, prepare, read_text, require, save_model, to_json,
    write_file, Model, ModelManifest,
};

fn out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    require(&cfg.paths.out_dir, "out_dir", "out")
}

pub fn build_graph(cfg: &RunConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    let docs = load_corpus(cfg)?;
    let coref = load_coref(cfg)?;
    let mut totals = [0usize; 4];
    for doc in &docs {
        let clusters =
            coref.iter().find(|c| c.doc_id == doc.doc_id).cloned().unwrap_or_else(|| CorefClusters::empty(&doc.doc_id));
        let g = build_document_graph(doc, &clusters, cfg.variant);
        write_file(&out.join(format!("{}.graph.json", doc.doc_id)), to_json(&g))?;
        let stats = [g.nodes.len(), g.edges.len(), g.report.merges, g.report.dropped_mentions.len()];
        println!(
            "{}: nodes {} edges {} merges {} dropped {}",
            doc.doc_id, stats[0], stats[1], stats[2], stats[3]
        );
        for (t, s) in totals.iter_mut().zip(stats) {
            *t += s;
        }
    }
    println!(
        "total: documents {} nodes {} edges {} merges {} dropped {}",
        docs.len(),
        totals[0],
        totals[1],
        totals[2],
        totals[3]
    );
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    let tc = cfg.effective_train();
    tc.egat.validate().map_err(|e| CliError::Input(format!("config: {e}")))?;
    let dialogs = load_dialog_file(require(&cfg.paths.dialogs, "dialogs", "dialogs")?)?;
    let manifest = ModelManifest {
        egat: tc.egat.clone(),
        variant: cfg.variant,
        context_window: cfg.context_window,
        encoder_seed: tc.seed,
    };
    let prep = prepare(cfg, &manifest, &dialogs)?;
    let result = train(&prep.dataset, &prep.turns, &tc)?;
    let checkpoint = cfg.paths.checkpoint.clone().unwrap_or_else(|| out.join("checkpoint.bin"));
    save_model(&checkpoint, &Model { manifest, params: result.params })?;
    write_file(&out.join("loss_log.csv"), loss_log_csv(&result.log))?;
    write_file(&out.join("run_config.json"), to_json(cfg))?;
    if let Some(last) = result.epochs.last() {
        println!(
            "trained {} epochs on {} turns: loss {:.6} (sentence {:.6}, concept {:.6})",
            result.epochs.len(),
            prep.turns.iter().filter(|t| t.gold_index.is_some()).count(),
            last.loss_total,
            last.loss_c,
            last.loss_n
        );
    }
    println!("checkpoint: {}", checkpoint.display());
    Ok(())
}

pub fn select_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    let model = load_model(require(&cfg.paths.checkpoint, "checkpoint", "checkpoint")?)?;
    let dialogs = load_dialog_file(require(&cfg.paths.dialogs, "dialogs", "dialogs")?)?;
    let prep = prepare(cfg, &model.manifest, &dialogs)?;
    let selections = select_all(&model.params, &prep.dataset, &prep.turns)?;
    let mut text = String::new();
    for s in &selections {
        text.push_str(&serde_json::to_string(s).expect("serializable"));
        text.push('\n');
    }
    let path = out.join("selections.jsonl");
    write_file(&path, text)?;
    println!("selected for {} turns: {}", selections.len(), path.display());
    Ok(())
}

pub fn evaluate_cmd(cfg: &RunConfig, selections: Option<&Path>) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    let default_path = out.join("selections.jsonl");
    let sel_path = selections.unwrap_or(&default_path);
    let mut sels: Vec<RankedSelection> = Vec::new();
    for (i, line) in read_text(sel_path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s = serde_json::from_str(line).map_err(|e| CliError::in_file(sel_path, format!("line {}: {e}", i + 1)))?;
        sels.push(s);
    }
    let dialogs = load_dialog_file(require(&cfg.paths.dialogs, "dialogs", "dialogs")?)?;
    let gold: BTreeMap<String, BTreeSet<String>> = dialogs
        .iter()
        .filter_map(|t| Some((t.key(), BTreeSet::from([t.gold_sentence()?.to_string()]))))
        .collect();
    let report = eval_ranking(&sels, &gold)?;
    write_file(&out.join("report.json"), to_json(&report))?;
    println!("P@1 {:.4} MAP {:.4} MRR {:.4} over {} turns", report.p_at_1, report.map, report.mrr, report.n_turns);
    Ok(())
}

pub fn synth_cmd(seed: u64, synth: &SynthConfig, out: &Path) -> Result<(), CliError> {
    let data = gen_synthetic(seed, synth);
    data.write_dir(out).map_err(|e| CliError::in_file(out, e))?;
    let mut cfg = RunConfig::default();
    cfg.train.seed = seed;
    cfg.train.egat.input_dim = synth.dim;
    let rel = |s: &str| Some(PathBuf::from(s));
    cfg.paths.corpus = rel("corpus.amr");
    cfg.paths.manifest = rel("manifest.json");
    cfg.paths.coref = rel("coref.json");
    cfg.paths.embeddings = rel("sentences.emb");
    cfg.paths.context_embeddings = rel("contexts.emb");
    cfg.paths.dialogs = rel("dialogs_train.jsonl");
    write_file(&out.join("config.json"), to_json(&cfg))?;
    println!(
        "wrote {} documents, {} train and {} test turns to {}",
        synth.docs,
        data.train.len(),
        data.test.len(),
        out.display()
    );
    Ok(())
}
