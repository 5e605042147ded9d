//! Config resolution and file loading shared by the subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use semsel::amr::{parse_corpus, parse_manifest, CorpusDocument};
use semsel::config::RunConfig;
use semsel::dialog::{load_dialogs, ContextSource, DialogTurn, HashContextEncoder};
use semsel::egat::{EgatConfig, EgatParams};
use semsel::harness::{prepare_turns, Dataset, PreparedTurn};
use semsel::semgraph::{read_embedding_file, CorefClusters, EmbeddingSource, HashEncoder, SentenceEmbeddings, Variant};
use semsel::tensor::{read_checkpoint, write_checkpoint};

use crate::error::CliError;

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::in_file(path, e))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::in_file(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::in_file(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Loads a run config; relative paths inside it resolve against its directory.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let mut cfg = RunConfig::from_json(&read_text(path)?).map_err(|e| CliError::in_file(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let p = &mut cfg.paths;
    for slot in [
        &mut p.corpus,
        &mut p.manifest,
        &mut p.coref,
        &mut p.embeddings,
        &mut p.context_embeddings,
        &mut p.dialogs,
        &mut p.checkpoint,
        &mut p.out_dir,
    ] {
        if let Some(rel) = slot.as_ref().filter(|p| p.is_relative()) {
            *slot = Some(base.join(rel));
        }
    }
    Ok(cfg)
}

pub fn require<'a>(path: &'a Option<PathBuf>, key: &str, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::Input(format!("no {key} given: set `paths.{key}` in the config or pass --{flag}")))
}

pub fn load_corpus(cfg: &RunConfig) -> Result<Vec<CorpusDocument>, CliError> {
    let corpus_path = require(&cfg.paths.corpus, "corpus", "corpus")?;
    let manifest = match &cfg.paths.manifest {
        Some(p) => Some(parse_manifest(&read_text(p)?).map_err(|e| CliError::in_file(p, e))?),
        None => None,
    };
    parse_corpus(&read_text(corpus_path)?, manifest.as_ref()).map_err(|e| CliError::in_file(corpus_path, e))
}

/// Documents without an entry get no clusters; an absent path means none at all.
pub fn load_coref(cfg: &RunConfig) -> Result<Vec<CorefClusters>, CliError> {
    match &cfg.paths.coref {
        Some(p) => CorefClusters::parse_file(&read_text(p)?).map_err(|e| CliError::in_file(p, e)),
        None => Ok(Vec::new()),
    }
}

pub fn load_dialog_file(path: &Path) -> Result<Vec<DialogTurn>, CliError> {
    load_dialogs(&read_text(path)?).map_err(|e| CliError::in_file(path, e))
}

fn load_embeddings(path: &Path, dim: usize) -> Result<SentenceEmbeddings, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::in_file(path, e))?;
    let table = read_embedding_file(std::io::BufReader::new(f)).map_err(|e| CliError::in_file(path, e))?;
    if table.dim != dim {
        return Err(CliError::in_file(path, format!("dimension {} does not match input_dim {dim}", table.dim)));
    }
    Ok(table)
}

/// Everything needed to rebuild a trained model's inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub egat: EgatConfig,
    pub variant: Variant,
    pub context_window: usize,
    /// Seed of the hash encoders used when no embedding files are given.
    pub encoder_seed: u64,
}

pub struct Model {
    pub manifest: ModelManifest,
    pub params: EgatParams,
}

pub fn manifest_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("json")
}

pub fn save_model(checkpoint: &Path, model: &Model) -> Result<(), CliError> {
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &model.params.named()).map_err(|e| CliError::in_file(checkpoint, e))?;
    write_file(checkpoint, bytes)?;
    write_file(&manifest_path(checkpoint), to_json(&model.manifest))
}

pub fn load_model(checkpoint: &Path) -> Result<Model, CliError> {
    let mpath = manifest_path(checkpoint);
    let manifest: ModelManifest =
        serde_json::from_str(&read_text(&mpath)?).map_err(|e| CliError::in_file(&mpath, e))?;
    manifest.egat.validate().map_err(|e| CliError::in_file(&mpath, e))?;
    let f = fs::File::open(checkpoint).map_err(|e| CliError::in_file(checkpoint, e))?;
    let named = read_checkpoint(std::io::BufReader::new(f)).map_err(|e| CliError::in_file(checkpoint, e))?;
    let params = EgatParams::from_named(&manifest.egat, named).map_err(|e| CliError::in_file(checkpoint, e))?;
    Ok(Model { manifest, params })
}

enum SentenceVectors {
    Hash(HashEncoder),
    Table(SentenceEmbeddings),
}

enum ContextVectors {
    Hash(HashContextEncoder),
    Table(SentenceEmbeddings),
}

/// Sentence and context vectors from embedding files, or seeded hash
/// encoders when the config names none.
pub struct Encoders {
    sentences: SentenceVectors,
    contexts: ContextVectors,
}

impl Encoders {
    pub fn load(cfg: &RunConfig, dim: usize, seed: u64) -> Result<Self, CliError> {
        let sentences = match &cfg.paths.embeddings {
            Some(p) => SentenceVectors::Table(load_embeddings(p, dim)?),
            None => SentenceVectors::Hash(HashEncoder::new(dim, seed)),
        };
        let contexts = match &cfg.paths.context_embeddings {
            Some(p) => ContextVectors::Table(load_embeddings(p, dim)?),
            None => ContextVectors::Hash(HashContextEncoder::new(dim, seed)),
        };
        Ok(Encoders { sentences, contexts })
    }

    pub fn sentences(&self) -> &dyn EmbeddingSource {
        match &self.sentences {
            SentenceVectors::Hash(h) => h,
            SentenceVectors::Table(t) => t,
        }
    }

    pub fn contexts(&self) -> ContextSource<'_> {
        match &self.contexts {
            ContextVectors::Hash(h) => ContextSource::Encoder(h),
            ContextVectors::Table(t) => ContextSource::Precomputed(t),
        }
    }
}

pub struct Prepared {
    pub dataset: Dataset,
    pub turns: Vec<PreparedTurn>,
}

/// Parses the corpus, builds graphs under `manifest.variant` and resolves
/// every dialog turn.
pub fn prepare(cfg: &RunConfig, manifest: &ModelManifest, dialogs: &[DialogTurn]) -> Result<Prepared, CliError> {
    let docs = load_corpus(cfg)?;
    let coref = load_coref(cfg)?;
    let enc = Encoders::load(cfg, manifest.egat.input_dim, manifest.encoder_seed)?;
    let dataset = Dataset::build(docs, &coref, manifest.variant, enc.sentences())?;
    let turns = prepare_turns(&dataset, dialogs, &enc.contexts(), manifest.context_window)?;
    Ok(Prepared { dataset, turns })
}
