//! Mini-batch training of the projection head under the triplet margin loss.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    accumulate_gradient, embed_text, l2_distance, EmbedError, EmbeddingMatrix, EmbeddingModel,
    TripletInputs,
};
use crate::corpus::Corpus;
use crate::sampler::Triplet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    /// Adam with decoupled weight decay.
    AdamW,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub grad_accumulation: usize,
    pub epochs: usize,
    /// Fraction of optimizer steps spent on linear warm-up; the rate then
    /// decays linearly to zero.
    pub warmup_fraction: f64,
    pub optimizer: Optimizer,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            // The transformer fine-tuning rate is 2e-5; a linear head on
            // fixed features needs a much larger step.
            learning_rate: 1e-2,
            batch_size: 8,
            grad_accumulation: 4,
            epochs: 2,
            warmup_fraction: 0.1,
            optimizer: Optimizer::AdamW,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |m: &str| Err(EmbedError::InvalidConfig(m.into()));
        if !(self.margin >= 0.0) {
            return bad("margin must be >= 0");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be finite and >= 0");
        }
        if self.batch_size == 0 || self.grad_accumulation == 0 {
            return bad("batch_size and grad_accumulation must be >= 1");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("adam_eps must be > 0 and weight_decay >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    /// Mean training loss per epoch, measured on the forward pass of each
    /// triplet.
    pub train_loss: Vec<f64>,
    /// Mean validation loss after each epoch, when a validation set is given.
    pub validation_loss: Vec<f64>,
    pub optimizer_steps: usize,
}

/// Linear warm-up then linear decay to zero, as a factor of the base rate.
pub fn lr_factor(step: usize, total: usize, warmup: usize) -> f64 {
    if step < warmup {
        (step + 1) as f64 / warmup as f64
    } else {
        (total - step) as f64 / (total - warmup) as f64
    }
}

struct BaseCache {
    vectors: HashMap<String, Vec<f64>>,
}

impl BaseCache {
    fn build<'a>(
        corpus: &Corpus,
        model: &EmbeddingModel,
        triplets: impl Iterator<Item = &'a Triplet>,
    ) -> Result<Self, EmbedError> {
        let mut vectors = HashMap::new();
        for t in triplets {
            for id in [&t.anchor_id, &t.positive_id, &t.negative_id] {
                if vectors.contains_key(id) {
                    continue;
                }
                let doc = corpus
                    .get(id)
                    .ok_or_else(|| EmbedError::UnknownId(id.clone()))?;
                let v = embed_text(&doc.text(), &model.base)
                    .ok_or_else(|| EmbedError::EmptyText(id.clone()))?;
                vectors.insert(id.clone(), v);
            }
        }
        Ok(Self { vectors })
    }

    fn inputs<'a>(&'a self, t: &Triplet) -> TripletInputs<'a> {
        TripletInputs {
            anchor: &self.vectors[&t.anchor_id],
            positive: &self.vectors[&t.positive_id],
            negative: &self.vectors[&t.negative_id],
        }
    }
}

fn mean_loss(model: &EmbeddingModel, cache: &BaseCache, ts: &[Triplet], margin: f64) -> f64 {
    let total: f64 = ts
        .iter()
        .map(|t| super::model_loss(model, cache.inputs(t), margin).expect("dims validated"))
        .sum();
    total / ts.len() as f64
}

/// Trains the projection head. Single-threaded and bit-reproducible for
/// fixed inputs.
pub fn train(
    init: &EmbeddingModel,
    triplets: &[Triplet],
    corpus: &Corpus,
    cfg: &TrainConfig,
    validation: Option<&[Triplet]>,
) -> Result<(EmbeddingModel, TrainingHistory), EmbedError> {
    cfg.validate()?;
    init.validate()?;
    if triplets.is_empty() {
        return Err(EmbedError::EmptyTriplets);
    }
    let validation = validation.filter(|v| !v.is_empty());
    let cache = BaseCache::build(
        corpus,
        init,
        triplets.iter().chain(validation.unwrap_or_default()),
    )?;

    let mut model = init.clone();
    let mut history = TrainingHistory::default();
    if cfg.epochs == 0 {
        return Ok((model, history));
    }

    let n = triplets.len();
    let batches_per_epoch = n.div_ceil(cfg.batch_size);
    let steps_per_epoch = batches_per_epoch.div_ceil(cfg.grad_accumulation);
    let total_steps = steps_per_epoch * cfg.epochs;
    let warmup = (cfg.warmup_fraction * total_steps as f64).ceil() as usize;

    let p = model.projection.len();
    let mut grad = vec![0.0; p];
    let mut m1 = vec![0.0; p];
    let mut m2 = vec![0.0; p];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = vec![0.0; n];
    let mut step = 0usize;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        for group in batches.chunks(cfg.grad_accumulation) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let per_batch = 1.0 / group.len() as f64;
            for batch in group {
                let scale = per_batch / batch.len() as f64;
                for &i in *batch {
                    losses[i] = accumulate_gradient(
                        &model,
                        cache.inputs(&triplets[i]),
                        cfg.margin,
                        scale,
                        &mut grad,
                    );
                }
            }
            let lr = cfg.learning_rate * lr_factor(step, total_steps, warmup);
            step += 1;
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for (w, g) in model.projection.iter_mut().zip(&grad) {
                        *w -= lr * g;
                    }
                }
                Optimizer::AdamW => {
                    let t = step as i32;
                    let c1 = 1.0 - cfg.beta1.powi(t);
                    let c2 = 1.0 - cfg.beta2.powi(t);
                    for k in 0..p {
                        let g = grad[k];
                        m1[k] = cfg.beta1 * m1[k] + (1.0 - cfg.beta1) * g;
                        m2[k] = cfg.beta2 * m2[k] + (1.0 - cfg.beta2) * g * g;
                        let w = &mut model.projection[k];
                        *w -= lr * cfg.weight_decay * *w;
                        *w -= lr * (m1[k] / c1) / ((m2[k] / c2).sqrt() + cfg.adam_eps);
                    }
                }
            }
        }
        // Summed in triplet order so the mean does not depend on the shuffle.
        history
            .train_loss
            .push(losses.iter().sum::<f64>() / n as f64);
        if let Some(v) = validation {
            history
                .validation_loss
                .push(mean_loss(&model, &cache, v, cfg.margin));
        }
    }
    history.optimizer_steps = step;
    model.validate()?;
    Ok((model, history))
}

/// Fraction of triplets whose positive is strictly closer to the anchor than
/// the negative. Triplets with ids missing from the matrix are skipped.
pub fn satisfaction_rate(matrix: &EmbeddingMatrix, triplets: &[Triplet]) -> f64 {
    let mut hit = 0usize;
    let mut total = 0usize;
    for t in triplets {
        let (Some(a), Some(p), Some(n)) = (
            matrix.row_of(&t.anchor_id),
            matrix.row_of(&t.positive_id),
            matrix.row_of(&t.negative_id),
        ) else {
            continue;
        };
        total += 1;
        if l2_distance(a, p) < l2_distance(a, n) {
            hit += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}
