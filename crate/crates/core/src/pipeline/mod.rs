//! File-based stage runner.
//!
//! Each stage reads its declared inputs from the workdir, writes its outputs
//! and records a manifest under `<workdir>/manifest/<stage>.json` holding the
//! config hash, the stage seed, SHA-256 digests of every input and output and
//! wall-clock timestamps. Artifacts themselves never contain timestamps or
//! absolute paths, so identical inputs produce byte-identical outputs. A
//! stage whose manifest matches the current config and input digests, and
//! whose outputs are intact, is skipped.

mod config;
mod stages;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{
    ClusterConfig, EvalConfig, GraphConfig, ImportanceConfig, MapConfig, ModelConfig, PathsConfig,
    PipelineConfig, SplitConfig, SweepConfig, SynthConfig,
};
pub use stages::{sweep, SweepRow, SWEEP_COLUMNS};

use crate::communities::CommunityError;
use crate::corpus::CorpusError;
use crate::embedder::EmbedError;
use crate::evalmetrics::EvalError;
use crate::experiment::ExperimentError;
use crate::importance::ImportanceError;
use crate::netgraph::GraphError;
use crate::sampler::SamplerError;
use crate::scimap::MapError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("missing artifact {}{}", path.display(), producer.map(|s| format!(" (run `{s}` first)")).unwrap_or_default())]
    MissingArtifact {
        path: PathBuf,
        producer: Option<Stage>,
    },
    #[error("workdir is locked by another run: {} (remove it if no run is active)", .0.display())]
    Locked(PathBuf),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{0}")]
    Internal(String),
}

impl PipelineError {
    pub(crate) fn io(context: impl Into<String>, source: io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code: 1 validation, 2 missing artifact, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Validation(_) | Self::Locked(_) => 1,
            Self::Corpus(CorpusError::Io(_)) => 3,
            Self::Corpus(_) => 1,
            Self::MissingArtifact { .. } => 2,
            Self::Io { .. } | Self::Internal(_) => 3,
        }
    }
}

macro_rules! internal_from {
    ($($t:ty),*) => {$(
        impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                Self::Internal(e.to_string())
            }
        }
    )*};
}
internal_from!(
    ImportanceError,
    SamplerError,
    EmbedError,
    GraphError,
    CommunityError,
    MapError,
    EvalError,
    ExperimentError
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Synth,
    Score,
    Sample,
    Train,
    Embed,
    Graph,
    Stats,
    Overlap,
    Cluster,
    Accuracy,
    Map,
    Eval,
    Sweep,
}

impl Stage {
    pub const ALL: [Stage; 13] = [
        Stage::Synth,
        Stage::Score,
        Stage::Sample,
        Stage::Train,
        Stage::Embed,
        Stage::Graph,
        Stage::Stats,
        Stage::Overlap,
        Stage::Cluster,
        Stage::Accuracy,
        Stage::Map,
        Stage::Eval,
        Stage::Sweep,
    ];

    /// The main chain, from scored citations to evaluation.
    pub const PIPELINE: [Stage; 10] = [
        Stage::Score,
        Stage::Sample,
        Stage::Train,
        Stage::Embed,
        Stage::Graph,
        Stage::Stats,
        Stage::Cluster,
        Stage::Accuracy,
        Stage::Map,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Score => "score",
            Stage::Sample => "sample",
            Stage::Train => "train",
            Stage::Embed => "embed",
            Stage::Graph => "graph",
            Stage::Stats => "stats",
            Stage::Overlap => "overlap",
            Stage::Cluster => "cluster",
            Stage::Accuracy => "accuracy",
            Stage::Map => "map",
            Stage::Eval => "eval",
            Stage::Sweep => "sweep",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// Artifact locations inside a workdir.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifacts {
    pub corpus: PathBuf,
    pub weights: PathBuf,
    pub scores: PathBuf,
    pub triplets_train: PathBuf,
    pub triplets_validation: PathBuf,
    pub model: PathBuf,
    pub training: PathBuf,
    pub embeddings: PathBuf,
    pub knn_edges: PathBuf,
    pub citation_edges: PathBuf,
    pub stats: PathBuf,
    pub overlap: PathBuf,
    pub partition: PathBuf,
    pub accuracy: PathBuf,
    pub relative_accuracy: PathBuf,
    pub map_table: PathBuf,
    pub map_svg: PathBuf,
    pub tasks: PathBuf,
    pub eval: PathBuf,
    pub sweep: PathBuf,
    pub manifest_dir: PathBuf,
    pub lock: PathBuf,
}

impl Artifacts {
    pub fn new(cfg: &PipelineConfig) -> Self {
        let w = &cfg.paths.workdir;
        Self {
            corpus: cfg.paths.corpus.clone(),
            weights: w.join("weights.json"),
            scores: w.join("scores.tsv"),
            triplets_train: w.join("triplets_train.tsv"),
            triplets_validation: w.join("triplets_validation.tsv"),
            model: w.join("model.json"),
            training: w.join("training.tsv"),
            embeddings: w.join("embeddings.tsv"),
            knn_edges: w.join("knn_edges.tsv"),
            citation_edges: w.join("citation_edges.tsv"),
            stats: w.join("stats.tsv"),
            overlap: w.join("overlap.tsv"),
            partition: w.join("partition.tsv"),
            accuracy: w.join("accuracy.tsv"),
            relative_accuracy: w.join("relative_accuracy.tsv"),
            map_table: w.join("map.tsv"),
            map_svg: w.join("map.svg"),
            tasks: w.join("tasks.tsv"),
            eval: w.join("eval.tsv"),
            sweep: w.join("sweep.tsv"),
            manifest_dir: w.join("manifest"),
            lock: w.join(".lock"),
        }
    }

    pub fn manifest(&self, stage: Stage) -> PathBuf {
        self.manifest_dir.join(format!("{stage}.json"))
    }

    /// Declared inputs of a stage, each paired with the stage producing it.
    pub fn inputs(&self, stage: Stage, cfg: &PipelineConfig) -> Vec<(PathBuf, Option<Stage>)> {
        let corpus = (self.corpus.clone(), Some(Stage::Synth));
        let p = |path: &PathBuf, s: Stage| (path.clone(), Some(s));
        match stage {
            Stage::Synth => vec![],
            Stage::Score | Stage::Sweep => vec![corpus],
            Stage::Sample => vec![corpus, p(&self.scores, Stage::Score)],
            Stage::Train => vec![
                corpus,
                p(&self.triplets_train, Stage::Sample),
                p(&self.triplets_validation, Stage::Sample),
            ],
            Stage::Embed => vec![corpus, p(&self.model, Stage::Train)],
            Stage::Graph => vec![corpus, p(&self.embeddings, Stage::Embed)],
            Stage::Stats | Stage::Overlap => vec![
                corpus,
                p(&self.knn_edges, Stage::Graph),
                p(&self.citation_edges, Stage::Graph),
            ],
            Stage::Cluster | Stage::Accuracy => vec![corpus, p(&self.knn_edges, Stage::Graph)],
            Stage::Map => {
                let mut v = vec![
                    corpus,
                    p(&self.partition, Stage::Cluster),
                    p(&self.embeddings, Stage::Embed),
                ];
                v.extend(cfg.paths.category_similarity.clone().map(|c| (c, None)));
                v
            }
            Stage::Eval => {
                let mut v = vec![
                    corpus,
                    p(&self.embeddings, Stage::Embed),
                    p(&self.triplets_validation, Stage::Sample),
                ];
                match &cfg.paths.tasks {
                    Some(t) => v.push((t.clone(), None)),
                    None => v.push(p(&self.scores, Stage::Score)),
                }
                v
            }
        }
    }

    pub fn outputs(&self, stage: Stage) -> Vec<PathBuf> {
        match stage {
            Stage::Synth => vec![self.corpus.clone()],
            Stage::Score => vec![self.weights.clone(), self.scores.clone()],
            Stage::Sample => vec![
                self.triplets_train.clone(),
                self.triplets_validation.clone(),
            ],
            Stage::Train => vec![self.model.clone(), self.training.clone()],
            Stage::Embed => vec![self.embeddings.clone()],
            Stage::Graph => vec![self.knn_edges.clone(), self.citation_edges.clone()],
            Stage::Stats => vec![self.stats.clone()],
            Stage::Overlap => vec![self.overlap.clone()],
            Stage::Cluster => vec![self.partition.clone()],
            Stage::Accuracy => vec![self.accuracy.clone(), self.relative_accuracy.clone()],
            Stage::Map => vec![self.map_table.clone(), self.map_svg.clone()],
            Stage::Eval => vec![self.tasks.clone(), self.eval.clone()],
            Stage::Sweep => vec![self.sweep.clone()],
        }
    }
}

/// The seed recorded for a stage: the seed that drives its randomness, or
/// the top-level seed for deterministic stages.
pub fn stage_seed(stage: Stage, cfg: &PipelineConfig) -> u64 {
    match stage {
        Stage::Synth => cfg.synth.seed,
        Stage::Sample => cfg.sampler.seed,
        Stage::Train => cfg.train.seed,
        Stage::Stats | Stage::Overlap => cfg.graph.random_seed,
        Stage::Cluster | Stage::Accuracy => cfg.cluster.seed,
        Stage::Map => cfg.map.seed,
        Stage::Eval => cfg.eval.tasks.seed,
        Stage::Sweep => cfg.sampler.seed,
        Stage::Score | Stage::Embed | Stage::Graph => cfg.seed,
    }
}

/// The provenance line that opens every artifact (without comment markers).
pub fn header_fields(stage: Stage, cfg: &PipelineConfig) -> String {
    format!(
        "stage={stage} config={} seed={}",
        cfg.hash(),
        stage_seed(stage, cfg)
    )
}

/// Parses `key=value` pairs from the first line of an artifact.
pub fn read_header(path: &Path) -> Result<BTreeMap<String, String>, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::io(format!("reading {}", path.display()), e))?;
    let first = text.lines().next().unwrap_or_default();
    let inner = first
        .strip_prefix("<!--")
        .and_then(|s| s.strip_suffix("-->"))
        .or_else(|| first.strip_prefix('#'))
        .unwrap_or_default();
    Ok(inner
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect())
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut h = Sha256::new();
    let mut f = File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: Stage,
    pub config_hash: String,
    pub seed: u64,
    /// Path to SHA-256 digest.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub finished_at: u64,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
    }
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn digests(paths: &[PathBuf]) -> Result<BTreeMap<String, String>, PipelineError> {
    paths
        .iter()
        .map(|p| {
            let d = sha256_file(p)
                .map_err(|e| PipelineError::io(format!("hashing {}", p.display()), e))?;
            Ok((p.display().to_string(), d))
        })
        .collect()
}

/// Exclusive claim on a workdir, released on drop.
#[derive(Debug)]
pub struct WorkdirLock {
    path: PathBuf,
}

impl WorkdirLock {
    pub fn acquire(path: &Path) -> Result<Self, PipelineError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)
                .map_err(|e| PipelineError::io(format!("creating {}", dir.display()), e))?;
        }
        match OpenOptions::new().write(true).create_new(true).open(path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self {
                    path: path.to_owned(),
                })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                Err(PipelineError::Locked(path.to_owned()))
            }
            Err(e) => Err(PipelineError::io(format!("creating {}", path.display()), e)),
        }
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    /// True when cached outputs were reused.
    pub skipped: bool,
    pub outputs: Vec<PathBuf>,
}

/// Runs one stage, or skips it when its manifest shows it is up to date.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<StageOutcome, PipelineError> {
    cfg.validate()?;
    let art = Artifacts::new(cfg);
    let _lock = WorkdirLock::acquire(&art.lock)?;

    let inputs = art.inputs(stage, cfg);
    for (path, producer) in &inputs {
        if !path.is_file() {
            return Err(PipelineError::MissingArtifact {
                path: path.clone(),
                producer: *producer,
            });
        }
    }
    let input_paths: Vec<PathBuf> = inputs.into_iter().map(|(p, _)| p).collect();
    let outputs = art.outputs(stage);
    let input_digests = digests(&input_paths)?;
    let manifest_path = art.manifest(stage);
    let config_hash = cfg.hash();

    if let Ok(old) = Manifest::load(&manifest_path) {
        let intact = outputs.iter().all(|p| p.is_file())
            && digests(&outputs).is_ok_and(|d| d == old.outputs);
        if old.config_hash == config_hash && old.inputs == input_digests && intact {
            log::info!("{stage}: up to date");
            return Ok(StageOutcome {
                stage,
                skipped: true,
                outputs,
            });
        }
    }

    let started_at = now();
    log::info!("{stage}: running");
    stages::execute(stage, cfg, &art)?;
    let manifest = Manifest {
        stage,
        config_hash,
        seed: stage_seed(stage, cfg),
        inputs: input_digests,
        outputs: digests(&outputs)?,
        started_at,
        finished_at: now(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| PipelineError::Internal(e.to_string()))?;
    write_atomic(&manifest_path, json.as_bytes())?;
    Ok(StageOutcome {
        stage,
        skipped: false,
        outputs,
    })
}

/// Runs the ten-stage chain in order.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Vec<StageOutcome>, PipelineError> {
    Stage::PIPELINE.iter().map(|&s| run_stage(s, cfg)).collect()
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial artifact.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let ctx = |e| PipelineError::io(format!("writing {}", path.display()), e);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(ctx)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(ctx)?;
    fs::rename(&tmp, path).map_err(ctx)
}
