use std::io::{BufRead, IsTerminal, Write};
use std::path::Path;

use semsel::harness::select_knowledge;
use semsel::semgraph::{linearize_paths, DocumentSemanticGraph, Node, Provenance};

use crate::error::CliError;
use crate::pipeline::{load_config, load_dialog_file, load_model, prepare, read_text, require, Model, Prepared};

const HELP: &str = "\
commands:
  node <id>                 show a node (numeric id or key)
  neighbors <id>            outgoing typed edges
  paths <sentence_id> <hops>  linearized role paths from a sentence
  score <dialog_id> <turn>  rank a turn's candidates (needs --checkpoint and --config)
  help                      this text
  quit                      leave";

struct Session<'a> {
    graph: DocumentSemanticGraph,
    checkpoint: Option<&'a Path>,
    config: Option<&'a Path>,
    scorer: Option<(Model, Prepared)>,
}

impl Session<'_> {
    fn lookup(&self, id: &str) -> Result<&Node, String> {
        let node = match id.parse::<usize>() {
            Ok(n) => self.graph.nodes.get(n),
            Err(_) => self.graph.node_by_key(id),
        };
        node.ok_or_else(|| format!("no node `{id}`"))
    }

    fn node(&self, id: &str) -> Result<String, String> {
        let n = self.lookup(id)?;
        let mut s = format!("{} {} {:?} key={}", n.id, n.kind, n.name, n.key);
        match &n.provenance {
            Provenance::Source { passage_id } => s.push_str(&format!("\n  passage {passage_id}")),
            Provenance::Sentence { sentence_id } => s.push_str(&format!("\n  sentence {sentence_id}")),
            Provenance::Concept { origins, mentions } => {
                for o in origins {
                    s.push_str(&format!("\n  origin {}.{} / {}", o.sentence_id, o.variable, o.concept));
                }
                for m in mentions {
                    s.push_str(&format!("\n  mention {}[{}..{}] {:?}", m.sentence_id, m.start, m.end, m.surface));
                }
            }
        }
        Ok(s)
    }

    fn neighbors(&self, id: &str) -> Result<String, String> {
        let n = self.lookup(id)?;
        let lines: Vec<String> = self
            .graph
            .edges
            .iter()
            .filter(|e| e.src == n.id)
            .map(|e| {
                let d = &self.graph.nodes[e.dst];
                let role = e.role.as_deref().map(|r| format!(" {r}")).unwrap_or_default();
                format!("-[{}{role}]-> {} {} {:?}", e.kind, d.id, d.kind, d.name)
            })
            .collect();
        Ok(if lines.is_empty() { "no outgoing edges".into() } else { lines.join("\n") })
    }

    fn paths(&self, sid: &str, hops: &str) -> Result<String, String> {
        let hops: usize = hops.parse().map_err(|_| format!("hops must be a non-negative integer, got `{hops}`"))?;
        if self.graph.sentence_node(sid).is_none() {
            return Err(format!("no sentence `{sid}`"));
        }
        let tuples = linearize_paths(&self.graph, sid, hops);
        let mut lines: Vec<String> = tuples.iter().map(ToString::to_string).collect();
        lines.push(format!("{} paths", tuples.len()));
        Ok(lines.join("\n"))
    }

    fn score(&mut self, dialog_id: &str, turn: &str) -> Result<String, String> {
        let turn_index: usize = turn.parse().map_err(|_| format!("turn must be an integer, got `{turn}`"))?;
        if self.scorer.is_none() {
            let (Some(ckpt), Some(cfg_path)) = (self.checkpoint, self.config) else {
                return Err("score needs a trained model: start inspect with --checkpoint <file> and --config <run config>".into());
            };
            let load = || -> Result<(Model, Prepared), CliError> {
                let cfg = load_config(Some(cfg_path))?;
                let model = load_model(ckpt)?;
                let dialogs = load_dialog_file(require(&cfg.paths.dialogs, "dialogs", "dialogs")?)?;
                let prep = prepare(&cfg, &model.manifest, &dialogs)?;
                Ok((model, prep))
            };
            self.scorer = Some(load().map_err(|e| e.to_string())?);
        }
        let (model, prep) = self.scorer.as_ref().expect("loaded");
        let pt = prep
            .turns
            .iter()
            .find(|t| t.turn.dialog_id == dialog_id && t.turn.turn_index == turn_index)
            .ok_or_else(|| format!("no turn {dialog_id}:{turn_index} in the dialogs file"))?;
        let bundle = prep.dataset.bundle(&pt.turn.doc_id).map_err(|e| e.to_string())?;
        let sel = select_knowledge(&model.params, bundle, pt).map_err(|e| e.to_string())?;
        let gold = pt.turn.gold_sentence();
        let mut lines: Vec<String> = sel
            .ranked
            .iter()
            .enumerate()
            .map(|(i, (sid, score))| {
                let mark = if Some(sid.as_str()) == gold { " *" } else { "" };
                format!("{:>3}. {sid} {score:.4}{mark}", i + 1)
            })
            .collect();
        let mut concepts: Vec<(&String, &f64)> = sel.concept_probs.iter().collect();
        concepts.sort_by(|a, b| b.1.total_cmp(a.1));
        for (key, p) in concepts.into_iter().take(5) {
            let name = bundle.graph.node_by_key(key).map_or("", |n| n.name.as_str());
            lines.push(format!("  concept {key} {name:?} {p:.4}"));
        }
        Ok(lines.join("\n"))
    }

    fn execute(&mut self, line: &str) -> Option<Result<String, String>> {
        let words: Vec<&str> = line.split_whitespace().collect();
        Some(match words.as_slice() {
            [] => return None,
            ["node", id] => self.node(id),
            ["neighbors", id] => self.neighbors(id),
            ["paths", sid, hops] => self.paths(sid, hops),
            ["score", d, t] => self.score(d, t),
            _ => Ok(HELP.to_string()),
        })
    }
}

pub fn run(
    graph_path: &Path,
    checkpoint: Option<&Path>,
    config: Option<&Path>,
    input: impl BufRead,
    mut out: impl Write,
) -> Result<(), CliError> {
    let graph: DocumentSemanticGraph =
        serde_json::from_str(&read_text(graph_path)?).map_err(|e| CliError::in_file(graph_path, e))?;
    let mut session = Session { graph, checkpoint, config, scorer: None };
    let interactive = std::io::stdin().is_terminal();
    let io_err = |e: std::io::Error| CliError::Input(format!("stdout: {e}"));
    if interactive {
        writeln!(out, "{} nodes, {} edges; `help` lists commands", session.graph.nodes.len(), session.graph.edges.len())
            .map_err(io_err)?;
    }
    let prompt = |out: &mut dyn Write| -> std::io::Result<()> {
        if interactive {
            write!(out, "> ")?;
            out.flush()?;
        }
        Ok(())
    };
    prompt(&mut out).map_err(io_err)?;
    for line in input.lines() {
        let line = line.map_err(|e| CliError::Input(format!("stdin: {e}")))?;
        if matches!(line.trim(), "quit" | "exit") {
            break;
        }
        match session.execute(&line) {
            Some(Ok(text)) => writeln!(out, "{text}").map_err(io_err)?,
            Some(Err(msg)) => writeln!(out, "error: {msg}").map_err(io_err)?,
            None => {}
        }
        prompt(&mut out).map_err(io_err)?;
    }
    Ok(())
}
