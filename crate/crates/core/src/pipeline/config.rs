use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::communities::{LeidenConfig, QualityFunction};
use crate::corpus::SyntheticSpec;
use crate::embedder::{BaseEncoderConfig, TrainConfig};
use crate::evalmetrics::Similarity;
use crate::experiment::{ExperimentConfig, TaskConfig};
use crate::importance::{FeatureSet, WeightMethod};
use crate::netgraph::ClusteringVariant;
use crate::sampler::{ContradictionScope, SamplerConfig};
use crate::scimap::{ColorBy, LayoutMethod};

/// Complete pipeline configuration, read from a TOML file. Every section and
/// field is optional; missing values take their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed recorded in the headers of stages that consume no randomness.
    pub seed: u64,
    /// Reject unknown corpus fields and suspicious records instead of warning.
    pub strict: bool,
    pub paths: PathsConfig,
    pub importance: ImportanceConfig,
    pub sampler: SamplerConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub graph: GraphConfig,
    pub cluster: ClusterConfig,
    pub map: MapConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// JSON Lines corpus. Written by `synth`, read by every other stage.
    pub corpus: PathBuf,
    /// Directory holding all stage artifacts and manifests.
    pub workdir: PathBuf,
    /// Externally supplied ranking tasks; derived from held-out anchors when absent.
    pub tasks: Option<PathBuf>,
    /// Category similarity table for the interdisciplinarity overlay.
    pub category_similarity: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::from("corpus.jsonl"),
            workdir: PathBuf::from("work"),
            tasks: None,
            category_similarity: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportanceConfig {
    pub features: FeatureSet,
    pub method: WeightMethod,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        Self {
            features: FeatureSet::default(),
            method: WeightMethod::Entropy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub contradiction_scope: ContradictionScope,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            contradiction_scope: ContradictionScope::Global,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub base: BaseEncoderConfig,
    pub dim_out: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            base: BaseEncoderConfig::default(),
            dim_out: 128,
            init_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub k: usize,
    /// Sources sampled for the average shortest path estimate.
    pub path_sample_size: usize,
    pub clustering: ClusteringVariant,
    /// Seed of the density-matched random baseline.
    pub random_seed: u64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            k: 20,
            path_sample_size: 10_000,
            clustering: ClusteringVariant::MeanLocal,
            random_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub quality_function: QualityFunction,
    /// Resolution of the partition written by `cluster` and used by `map`.
    pub resolution: f64,
    /// Resolutions swept by `accuracy`.
    pub resolutions: Vec<f64>,
    pub seed: u64,
    pub restarts: usize,
    pub randomness: f64,
    pub max_iterations: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        let l = LeidenConfig::default();
        Self {
            quality_function: l.quality_function,
            resolution: 0.02,
            resolutions: vec![0.01, 0.02, 0.05, 0.1, 0.2],
            seed: 0,
            restarts: l.restarts,
            randomness: l.randomness,
            max_iterations: l.max_iterations,
        }
    }
}

impl ClusterConfig {
    pub fn leiden(&self) -> LeidenConfig {
        LeidenConfig {
            quality_function: self.quality_function,
            resolution: self.resolution,
            seed: self.seed,
            randomness: self.randomness,
            max_iterations: self.max_iterations,
            restarts: self.restarts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub layout: LayoutMethod,
    pub color_by: ColorBy,
    /// Size of the category system; defaults to the categories seen in the corpus.
    pub total_categories: Option<usize>,
    pub seed: u64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            layout: LayoutMethod::Pca,
            color_by: ColorBy::Field,
            total_categories: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub similarity: Similarity,
    pub tasks: TaskConfig,
    /// Share of documents held out for the label classification check.
    pub classification_test_fraction: f64,
    pub classification_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            similarity: Similarity::Cosine,
            tasks: TaskConfig::default(),
            classification_test_fraction: 0.2,
            classification_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub margins: Vec<f64>,
    pub h_values: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            margins: vec![0.0, 0.5, 1.0],
            h_values: (0..=5).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub spec: SyntheticSpec,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            spec: SyntheticSpec::fixture(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative paths inside it are resolved against
    /// the directory containing the file.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let dir = path.parent().unwrap_or_else(|| Path::new(""));
        cfg.resolve_paths(dir);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.paths.corpus);
        fix(&mut self.paths.workdir);
        if let Some(p) = self.paths.tasks.as_mut() {
            fix(p);
        }
        if let Some(p) = self.paths.category_similarity.as_mut() {
            fix(p);
        }
    }

    /// Overrides every seed in the configuration.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.sampler.seed = seed;
        self.split.seed = seed;
        self.model.init_seed = seed;
        self.train.seed = seed;
        self.graph.random_seed = seed;
        self.cluster.seed = seed;
        self.map.seed = seed;
        self.eval.tasks.seed = seed;
        self.eval.classification_seed = seed;
        self.synth.seed = seed;
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.importance
            .features
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.sampler
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.model
            .base
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.model.dim_out == 0 {
            return bad("model.dim_out must be positive".into());
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return bad(format!(
                "split.train_fraction must lie in (0, 1), got {}",
                self.split.train_fraction
            ));
        }
        if self.graph.k == 0 {
            return bad("graph.k must be positive".into());
        }
        let res_ok = |r: f64| r.is_finite() && r > 0.0;
        if !res_ok(self.cluster.resolution) {
            return bad(format!(
                "cluster.resolution must be positive, got {}",
                self.cluster.resolution
            ));
        }
        if self.cluster.resolutions.is_empty()
            || !self.cluster.resolutions.iter().all(|&r| res_ok(r))
        {
            return bad("cluster.resolutions must be a non-empty list of positive values".into());
        }
        if self.cluster.restarts == 0 {
            return bad("cluster.restarts must be at least 1".into());
        }
        let f = self.eval.classification_test_fraction;
        if !(f > 0.0 && f < 1.0) {
            return bad(format!(
                "eval.classification_test_fraction must lie in (0, 1), got {f}"
            ));
        }
        if self.sweep.margins.is_empty() || self.sweep.h_values.is_empty() {
            return bad("sweep.margins and sweep.h_values must be non-empty".into());
        }
        if let Some(m) = self
            .sweep
            .margins
            .iter()
            .find(|m| !m.is_finite() || **m < 0.0)
        {
            return bad(format!("sweep margin {m} must be finite and non-negative"));
        }
        if let Some(h) = self
            .sweep
            .h_values
            .iter()
            .find(|&&h| h > self.sampler.k_per_anchor)
        {
            return bad(format!(
                "sweep H value {h} exceeds sampler.k_per_anchor {}",
                self.sampler.k_per_anchor
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the `paths` section so
    /// that moving a workdir does not change any artifact.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = PathsConfig::default();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            features: self.importance.features,
            weight_method: self.importance.method,
            sampler: self.sampler,
            contradiction_scope: self.split.contradiction_scope,
            train_fraction: self.split.train_fraction,
            split_seed: self.split.seed,
            base: self.model.base,
            dim_out: self.model.dim_out,
            init_seed: self.model.init_seed,
            train: self.train,
            tasks: self.eval.tasks,
            similarity: self.eval.similarity,
        }
    }
}
