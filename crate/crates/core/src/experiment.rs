//! Citation-derived evaluation and the train-then-evaluate harness shared by
//! the pipeline sweep and the acceptance suite.

use std::collections::{BTreeSet, HashSet};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::embedder::{
    embed_base_corpus, project_matrix, satisfaction_rate, train, BaseEncoderConfig, EmbedError,
    EmbeddingMatrix, EmbeddingModel, TrainConfig, TrainingHistory,
};
use crate::evalmetrics::{evaluate_ranking, EvalError, RankingTask, Similarity};
use crate::importance::{
    entropy_weights, extract_citation_features, score_citations, uniform_weights, FeatureSet,
    ImportanceError, ImportanceWeights, ScoredCitation, WeightMethod,
};
use crate::sampler::{
    filter_contradictions, ranked_references, sample_triplets, split_train_validation,
    ContradictionScope, SamplerConfig, SamplerError, Triplet,
};
use crate::util::derive_seed;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Importance(#[from] ImportanceError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("no ranking task could be built for the held-out anchors")]
    NoTasks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    /// Top-importance references treated as relevant.
    pub relevant: usize,
    /// Pool size: relevant references plus uncited distractors.
    pub candidates: usize,
    pub seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            relevant: 5,
            candidates: 30,
            seed: 0,
        }
    }
}

/// One ranking task per anchor with at least `cfg.relevant` resolvable
/// references: its most important references are the relevant items, the
/// rest of the pool is drawn uniformly from documents the anchor does not
/// cite. Anchors are processed in the given order.
pub fn citation_ranking_tasks(
    corpus: &Corpus,
    scored: &[ScoredCitation],
    anchors: &[&str],
    cfg: &TaskConfig,
) -> Vec<RankingTask> {
    let ranked = ranked_references(corpus, scored);
    anchors
        .iter()
        .filter_map(|&a| {
            let refs = ranked.get(a)?;
            if refs.len() < cfg.relevant || cfg.relevant == 0 {
                return None;
            }
            let doc = corpus.get(a)?;
            let cited: HashSet<&str> = doc.references.iter().map(|r| r.cited_id.as_str()).collect();
            let pool: Vec<&str> = corpus
                .documents()
                .iter()
                .map(|d| d.id.as_str())
                .filter(|id| *id != a && !cited.contains(id))
                .collect();
            let distractors = cfg.candidates.saturating_sub(cfg.relevant).min(pool.len());
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, a));
            let relevant: BTreeSet<String> = refs[..cfg.relevant]
                .iter()
                .map(|(id, _)| (*id).to_owned())
                .collect();
            let mut candidates: Vec<String> = relevant.iter().cloned().collect();
            candidates.extend(
                index::sample(&mut rng, pool.len(), distractors)
                    .into_iter()
                    .map(|i| pool[i].to_owned()),
            );
            candidates.sort();
            Some(RankingTask {
                target: a.to_owned(),
                candidates,
                relevant,
            })
        })
        .collect()
}

/// Anchors in first-appearance order.
pub fn anchors_of(triplets: &[Triplet]) -> Vec<&str> {
    let mut seen = HashSet::new();
    triplets
        .iter()
        .map(|t| t.anchor_id.as_str())
        .filter(|a| seen.insert(*a))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub features: FeatureSet,
    pub weight_method: WeightMethod,
    pub sampler: SamplerConfig,
    pub contradiction_scope: ContradictionScope,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub base: BaseEncoderConfig,
    pub dim_out: usize,
    pub init_seed: u64,
    pub train: TrainConfig,
    pub tasks: TaskConfig,
    pub similarity: Similarity,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            features: FeatureSet::default(),
            weight_method: WeightMethod::Entropy,
            sampler: SamplerConfig::default(),
            contradiction_scope: ContradictionScope::Global,
            train_fraction: 0.8,
            split_seed: 0,
            base: BaseEncoderConfig::default(),
            dim_out: 128,
            init_seed: 0,
            train: TrainConfig::default(),
            tasks: TaskConfig::default(),
            similarity: Similarity::Cosine,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub train_triplets: usize,
    pub validation_triplets: usize,
    pub tasks: usize,
    pub untrained_satisfaction: f64,
    pub trained_satisfaction: f64,
    pub untrained_map: f64,
    pub trained_map: f64,
    pub untrained_ndcg: f64,
    pub trained_ndcg: f64,
    pub history: TrainingHistory,
}

/// Everything produced by one harness run.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub weights: ImportanceWeights,
    pub scores: Vec<ScoredCitation>,
    pub train_set: Vec<Triplet>,
    pub validation_set: Vec<Triplet>,
    pub tasks: Vec<RankingTask>,
    pub initial: EmbeddingModel,
    pub model: EmbeddingModel,
    pub report: ExperimentReport,
}

pub fn importance_scores(
    corpus: &Corpus,
    features: &FeatureSet,
    method: WeightMethod,
    base: Option<&EmbeddingMatrix>,
) -> Result<(ImportanceWeights, Vec<ScoredCitation>), ImportanceError> {
    let table = extract_citation_features(corpus, features, base)?;
    let weights = match method {
        WeightMethod::Entropy => entropy_weights(&table.resolved_only())?,
        WeightMethod::Uniform => uniform_weights(features)?,
    };
    let scores = score_citations(&table, &weights)?;
    Ok((weights, scores))
}

/// Score, sample, filter, split, train, then compare the initial and the
/// trained model on held-out triplets and held-out citation ranking tasks.
pub fn run_experiment(
    corpus: &Corpus,
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutcome, ExperimentError> {
    let base = embed_base_corpus(corpus, &cfg.base)?;
    let (weights, scores) =
        importance_scores(corpus, &cfg.features, cfg.weight_method, Some(&base))?;
    let sampled = sample_triplets(corpus, &scores, &cfg.sampler)?;
    let filtered = filter_contradictions(&sampled, cfg.contradiction_scope);
    let (train_set, validation_set) =
        split_train_validation(&filtered, cfg.train_fraction, cfg.split_seed)?;

    let initial = EmbeddingModel::random(cfg.base, cfg.dim_out, cfg.init_seed)?;
    let (model, history) = train(
        &initial,
        &train_set,
        corpus,
        &cfg.train,
        Some(&validation_set),
    )?;

    let mut held_out = anchors_of(&validation_set);
    held_out.sort_unstable();
    let tasks = citation_ranking_tasks(corpus, &scores, &held_out, &cfg.tasks);
    if tasks.is_empty() {
        return Err(ExperimentError::NoTasks);
    }
    let before = project_matrix(&base, &initial)?;
    let after = project_matrix(&base, &model)?;
    let eval_before = evaluate_ranking(&before, &tasks, cfg.similarity)?;
    let eval_after = evaluate_ranking(&after, &tasks, cfg.similarity)?;
    let report = ExperimentReport {
        train_triplets: train_set.len(),
        validation_triplets: validation_set.len(),
        tasks: tasks.len(),
        untrained_satisfaction: satisfaction_rate(&before, &validation_set),
        trained_satisfaction: satisfaction_rate(&after, &validation_set),
        untrained_map: eval_before.map,
        trained_map: eval_after.map,
        untrained_ndcg: eval_before.ndcg,
        trained_ndcg: eval_after.ndcg,
        history,
    };
    log::info!(
        "experiment: satisfaction {:.4} -> {:.4}, MAP {:.4} -> {:.4}",
        report.untrained_satisfaction,
        report.trained_satisfaction,
        report.untrained_map,
        report.trained_map
    );
    Ok(ExperimentOutcome {
        weights,
        scores,
        train_set,
        validation_set,
        tasks,
        initial,
        model,
        report,
    })
}

/// Shuffles `ids` deterministically; used to draw held-out anchor subsets.
pub fn shuffled<'a>(ids: &[&'a str], seed: u64) -> Vec<&'a str> {
    let mut v = ids.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SyntheticSpec};

    fn small() -> Corpus {
        generate_synthetic_corpus(&SyntheticSpec::default(), 3).unwrap()
    }

    #[test]
    fn tasks_are_valid_and_deterministic() {
        let c = small();
        let (_, scores) =
            importance_scores(&c, &FeatureSet::default(), WeightMethod::Entropy, None).unwrap();
        let anchors: Vec<&str> = c
            .documents()
            .iter()
            .take(20)
            .map(|d| d.id.as_str())
            .collect();
        let cfg = TaskConfig::default();
        let t = citation_ranking_tasks(&c, &scores, &anchors, &cfg);
        assert!(!t.is_empty());
        for task in &t {
            task.validate().unwrap();
            assert_eq!(task.relevant.len(), 5);
            assert_eq!(task.candidates.len(), 30);
            let doc = c.get(&task.target).unwrap();
            for cand in &task.candidates {
                let cited = doc.references.iter().any(|r| &r.cited_id == cand);
                assert_eq!(cited, task.relevant.contains(cand));
            }
        }
        assert_eq!(t, citation_ranking_tasks(&c, &scores, &anchors, &cfg));
    }

    #[test]
    fn harness_runs_on_small_corpus() {
        let c = small();
        let cfg = ExperimentConfig {
            sampler: SamplerConfig {
                n_total: 400,
                ..SamplerConfig::default()
            },
            base: BaseEncoderConfig {
                dim_base: 64,
                ..BaseEncoderConfig::default()
            },
            dim_out: 32,
            ..ExperimentConfig::default()
        };
        let out = run_experiment(&c, &cfg).unwrap();
        let r = &out.report;
        assert!(r.train_triplets > r.validation_triplets && r.validation_triplets > 0);
        assert!((0.0..=1.0).contains(&r.trained_satisfaction));
        assert!((0.0..=1.0).contains(&r.trained_map));
        let again = run_experiment(&c, &cfg).unwrap();
        assert_eq!(again.model, out.model);
        assert_eq!(again.report, out.report);
    }
}
