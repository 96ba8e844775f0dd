//! Document vectors: a deterministic surrogate base encoder (hashed-token
//! mean pooling) followed by a trainable linear projection head.

mod io;
mod train;

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Document};
use crate::util::{cosine, derive_seed};

pub use io::{
    read_matrix_bin, read_matrix_tsv, read_model, write_matrix_bin, write_matrix_tsv, write_model,
};
pub use train::{satisfaction_rate, train, Optimizer, TrainConfig, TrainingHistory};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("document `{0}` has no tokens")]
    EmptyText(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown document id `{0}`")]
    UnknownId(String),
    #[error("duplicate document id `{0}` in embedding matrix")]
    DuplicateId(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty triplet set")]
    EmptyTriplets,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseEncoderConfig {
    pub dim_base: usize,
    pub hash_seed: u64,
    /// Token budget over title followed by abstract.
    pub max_tokens: usize,
}

impl Default for BaseEncoderConfig {
    fn default() -> Self {
        Self {
            dim_base: 256,
            hash_seed: 0x5eed,
            max_tokens: 512,
        }
    }
}

impl BaseEncoderConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim_base < 2 {
            return Err(EmbedError::InvalidConfig("dim_base must be >= 2".into()));
        }
        if self.max_tokens == 0 {
            return Err(EmbedError::InvalidConfig("max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// The fixed pseudo-random unit vector of a token type.
pub fn token_vector(token: &str, cfg: &BaseEncoderConfig) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.hash_seed, token));
    let v: Vec<f64> = (0..cfg.dim_base)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    crate::util::l2_normalized(&v)
}

/// Mean of token vectors of title + abstract, L2-normalized.
pub fn base_embed(doc: &Document, cfg: &BaseEncoderConfig) -> Result<Vec<f64>, EmbedError> {
    embed_text(&doc.text(), cfg).ok_or_else(|| EmbedError::EmptyText(doc.id.clone()))
}

pub(crate) fn embed_text(text: &str, cfg: &BaseEncoderConfig) -> Option<Vec<f64>> {
    let mut tokens = tokenize(text);
    tokens.truncate(cfg.max_tokens);
    if tokens.is_empty() {
        return None;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &tokens {
        *counts.entry(t).or_default() += 1;
    }
    // Sorted so the floating-point sum does not depend on hash order.
    let mut types: Vec<(&str, usize)> = counts.into_iter().collect();
    types.sort_unstable();
    let mut acc = vec![0.0; cfg.dim_base];
    for (t, c) in types {
        let v = token_vector(t, cfg);
        for (a, x) in acc.iter_mut().zip(v) {
            *a += c as f64 * x;
        }
    }
    let n = tokens.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Some(crate::util::l2_normalized(&acc))
}

/// Base encoder configuration plus a `dim_out x dim_base` projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub base: BaseEncoderConfig,
    pub dim_out: usize,
    /// Row-major projection matrix.
    pub projection: Vec<f64>,
}

impl EmbeddingModel {
    pub fn new(
        base: BaseEncoderConfig,
        dim_out: usize,
        projection: Vec<f64>,
    ) -> Result<Self, EmbedError> {
        base.validate()?;
        if dim_out == 0 {
            return Err(EmbedError::InvalidConfig("dim_out must be >= 1".into()));
        }
        if projection.len() != dim_out * base.dim_base {
            return Err(EmbedError::DimensionMismatch {
                expected: dim_out * base.dim_base,
                found: projection.len(),
            });
        }
        let m = Self {
            base,
            dim_out,
            projection,
        };
        m.validate()?;
        Ok(m)
    }

    /// Gaussian initialisation with variance `1/dim_out`, which keeps
    /// expected vector norms unchanged.
    pub fn random(base: BaseEncoderConfig, dim_out: usize, seed: u64) -> Result<Self, EmbedError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dim_out.max(1) as f64).sqrt();
        let projection = (0..dim_out * base.dim_base)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect();
        Self::new(base, dim_out, projection)
    }

    pub fn identity(base: BaseEncoderConfig) -> Result<Self, EmbedError> {
        let d = base.dim_base;
        let mut projection = vec![0.0; d * d];
        for i in 0..d {
            projection[i * d + i] = 1.0;
        }
        Self::new(base, d, projection)
    }

    pub fn dim_base(&self) -> usize {
        self.base.dim_base
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.projection.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(EmbedError::NonFinite("projection"))
        }
    }
}

/// Matrix-vector product, no normalization.
pub fn project(model: &EmbeddingModel, v: &[f64]) -> Result<Vec<f64>, EmbedError> {
    let d = model.dim_base();
    if v.len() != d {
        return Err(EmbedError::DimensionMismatch {
            expected: d,
            found: v.len(),
        });
    }
    Ok(model
        .projection
        .chunks_exact(d)
        .map(|row| row.iter().zip(v).map(|(w, x)| w * x).sum())
        .collect())
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `max(|a - p| - |a - n| + margin, 0)` under Euclidean distance.
pub fn triplet_loss(v_a: &[f64], v_p: &[f64], v_n: &[f64], margin: f64) -> f64 {
    (l2_distance(v_a, v_p) - l2_distance(v_a, v_n) + margin).max(0.0)
}

/// Guard added to distances in the derivative `(v - u) / |v - u|`.
pub const DISTANCE_EPS: f64 = 1e-12;

/// Base vectors of one triplet.
#[derive(Debug, Clone, Copy)]
pub struct TripletInputs<'a> {
    pub anchor: &'a [f64],
    pub positive: &'a [f64],
    pub negative: &'a [f64],
}

/// Adds `scale * dL/dW` into `grad` and returns the loss. Nothing is added
/// when the hinge is inactive.
pub(crate) fn accumulate_gradient(
    model: &EmbeddingModel,
    x: TripletInputs<'_>,
    margin: f64,
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    let d = model.dim_base();
    let dp: Vec<f64> = x
        .anchor
        .iter()
        .zip(x.positive)
        .map(|(a, p)| a - p)
        .collect();
    let dn: Vec<f64> = x
        .anchor
        .iter()
        .zip(x.negative)
        .map(|(a, n)| a - n)
        .collect();
    // v_a - v_p = W (x_a - x_p) by linearity.
    let up = project(model, &dp).expect("dimensions checked by caller");
    let un = project(model, &dn).expect("dimensions checked by caller");
    let np = up.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nn = un.iter().map(|v| v * v).sum::<f64>().sqrt();
    let loss = np - nn + margin;
    if loss <= 0.0 {
        return 0.0;
    }
    let cp = scale / (np + DISTANCE_EPS);
    let cn = scale / (nn + DISTANCE_EPS);
    for (r, row) in grad.chunks_exact_mut(d).enumerate() {
        let a = cp * up[r];
        let b = cn * un[r];
        for ((g, p), n) in row.iter_mut().zip(&dp).zip(&dn) {
            *g += a * p - b * n;
        }
    }
    loss
}

fn check_inputs(model: &EmbeddingModel, x: &TripletInputs<'_>) -> Result<(), EmbedError> {
    for v in [x.anchor, x.positive, x.negative] {
        if v.len() != model.dim_base() {
            return Err(EmbedError::DimensionMismatch {
                expected: model.dim_base(),
                found: v.len(),
            });
        }
    }
    Ok(())
}

/// Loss of a triplet of base vectors under `model`.
pub fn model_loss(
    model: &EmbeddingModel,
    x: TripletInputs<'_>,
    margin: f64,
) -> Result<f64, EmbedError> {
    check_inputs(model, &x)?;
    Ok(triplet_loss(
        &project(model, x.anchor)?,
        &project(model, x.positive)?,
        &project(model, x.negative)?,
        margin,
    ))
}

/// Analytic gradient of the triplet loss with respect to the projection,
/// row-major `dim_out x dim_base`. Zero when the hinge is inactive.
pub fn loss_gradients(
    model: &EmbeddingModel,
    x: TripletInputs<'_>,
    margin: f64,
) -> Result<Vec<f64>, EmbedError> {
    check_inputs(model, &x)?;
    let mut grad = vec![0.0; model.projection.len()];
    accumulate_gradient(model, x, margin, 1.0, &mut grad);
    Ok(grad)
}

/// Max relative error between analytic and central-difference gradients.
pub fn finite_difference_check(
    model: &EmbeddingModel,
    x: TripletInputs<'_>,
    margin: f64,
    h: f64,
) -> Result<f64, EmbedError> {
    if !(h > 0.0) {
        return Err(EmbedError::InvalidConfig("step h must be positive".into()));
    }
    let analytic = loss_gradients(model, x, margin)?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, &g) in analytic.iter().enumerate() {
        let w = model.projection[i];
        probe.projection[i] = w + h;
        let up = model_loss(&probe, x, margin)?;
        probe.projection[i] = w - h;
        let down = model_loss(&probe, x, margin)?;
        probe.projection[i] = w;
        let numeric = (up - down) / (2.0 * h);
        let denom = g.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((g - numeric).abs() / denom);
    }
    Ok(worst)
}

/// Row-per-document vectors with an id index.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

impl PartialEq for EmbeddingMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids && self.dim == other.dim && self.data == other.data
    }
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self, EmbedError> {
        if data.len() != ids.len() * dim {
            return Err(EmbedError::DimensionMismatch {
                expected: ids.len() * dim,
                found: data.len(),
            });
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(EmbedError::NonFinite("embedding matrix"));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(EmbedError::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            ids,
            dim,
            data,
            index,
        })
    }

    pub fn from_rows(rows: Vec<(String, Vec<f64>)>, dim: usize) -> Result<Self, EmbedError> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, v) in rows {
            if v.len() != dim {
                return Err(EmbedError::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            ids.push(id);
            data.extend(v);
        }
        Self::new(ids, dim, data)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row_of(&self, id: &str) -> Option<&[f64]> {
        self.position(id).map(|i| self.row(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.data.chunks_exact(self.dim.max(1)))
    }

    /// Copy with every row scaled to unit length (zero rows left as is).
    pub fn normalized(&self) -> EmbeddingMatrix {
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.dim.max(1)) {
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|x| *x /= n);
            }
        }
        EmbeddingMatrix {
            ids: self.ids.clone(),
            dim: self.dim,
            data,
            index: self.index.clone(),
        }
    }
}

/// Base vectors of every corpus document, in corpus order.
pub fn embed_base_corpus(
    corpus: &Corpus,
    cfg: &BaseEncoderConfig,
) -> Result<EmbeddingMatrix, EmbedError> {
    cfg.validate()?;
    let rows: Result<Vec<Vec<f64>>, EmbedError> = corpus
        .documents()
        .par_iter()
        .map(|d| base_embed(d, cfg))
        .collect();
    let ids = corpus.documents().iter().map(|d| d.id.clone()).collect();
    EmbeddingMatrix::new(ids, cfg.dim_base, rows?.concat())
}

/// Row `i` is `project(model, base_embed(doc_i))`, in corpus order.
pub fn embed_corpus(
    corpus: &Corpus,
    model: &EmbeddingModel,
) -> Result<EmbeddingMatrix, EmbedError> {
    model.validate()?;
    let base = embed_base_corpus(corpus, &model.base)?;
    project_matrix(&base, model)
}

/// Applies the projection head to an already computed base matrix.
pub fn project_matrix(
    base: &EmbeddingMatrix,
    model: &EmbeddingModel,
) -> Result<EmbeddingMatrix, EmbedError> {
    let rows: Result<Vec<Vec<f64>>, EmbedError> = (0..base.len())
        .into_par_iter()
        .map(|i| project(model, base.row(i)))
        .collect();
    EmbeddingMatrix::new(base.ids.clone(), model.dim_out, rows?.concat())
}

/// Exhaustive cosine search; the query itself is excluded, ties go to the
/// smaller id.
pub fn nearest_documents(
    matrix: &EmbeddingMatrix,
    query_id: &str,
    n: usize,
) -> Result<Vec<(String, f64)>, EmbedError> {
    let q = matrix
        .row_of(query_id)
        .ok_or_else(|| EmbedError::UnknownId(query_id.to_owned()))?;
    if n == 0 {
        return Err(EmbedError::InvalidConfig("n must be >= 1".into()));
    }
    let mut hits: Vec<(String, f64)> = matrix
        .rows()
        .filter(|(id, _)| *id != query_id)
        .map(|(id, v)| (id.to_owned(), cosine(q, v)))
        .collect();
    hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    hits.truncate(n);
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::doc;
    use proptest::prelude::*;
    use rand::Rng;

    fn cfg() -> BaseEncoderConfig {
        BaseEncoderConfig {
            dim_base: 32,
            ..BaseEncoderConfig::default()
        }
    }

    fn text_doc(id: &str, title: &str, abs: &str) -> Document {
        let mut d = doc(id, &[], &[]);
        d.title = title.into();
        d.abstract_text = abs.into();
        d
    }

    #[test]
    fn base_embedding_properties() {
        let c = cfg();
        let a = base_embed(&text_doc("a", "alpha beta", ""), &c).unwrap();
        let b = base_embed(&text_doc("b", "beta alpha", ""), &c).unwrap();
        assert_eq!(a, b);
        let one = base_embed(&text_doc("c", "Gamma", ""), &c).unwrap();
        let tv = token_vector("gamma", &c);
        for (x, y) in one.iter().zip(&tv) {
            assert!((x - y).abs() < 1e-12);
        }
        let n: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-9);
        assert!(matches!(
            base_embed(&text_doc("e", " -- ", ""), &c),
            Err(EmbedError::EmptyText(_))
        ));
    }

    #[test]
    fn max_tokens_truncates() {
        let c = BaseEncoderConfig {
            max_tokens: 1,
            ..cfg()
        };
        let a = base_embed(&text_doc("a", "alpha", "beta gamma"), &c).unwrap();
        let b = base_embed(&text_doc("b", "alpha", ""), &c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn projection_basics() {
        let base = BaseEncoderConfig {
            dim_base: 3,
            ..cfg()
        };
        let id = EmbeddingModel::identity(base).unwrap();
        assert_eq!(
            project(&id, &[1.0, -2.0, 0.5]).unwrap(),
            vec![1.0, -2.0, 0.5]
        );
        let zero = EmbeddingModel::new(base, 2, vec![0.0; 6]).unwrap();
        assert_eq!(project(&zero, &[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        let m = EmbeddingModel::random(base, 2, 1).unwrap();
        let mut m2 = m.clone();
        m2.projection.iter_mut().for_each(|w| *w *= 3.0);
        let v = [0.3, -0.1, 0.7];
        for (a, b) in project(&m, &v)
            .unwrap()
            .iter()
            .zip(project(&m2, &v).unwrap())
        {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
        assert!(matches!(
            project(&m, &[1.0]),
            Err(EmbedError::DimensionMismatch { .. })
        ));
        assert!(EmbeddingModel::new(base, 1, vec![f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn loss_examples() {
        assert_eq!(triplet_loss(&[0., 0.], &[0., 0.], &[2., 0.], 1.0), 0.0);
        assert_eq!(triplet_loss(&[0., 0.], &[1., 0.], &[0.5, 0.], 1.0), 1.5);
        assert_eq!(triplet_loss(&[0.3, 1.], &[1., 2.], &[1., 2.], 0.7), 0.7);
    }

    fn random_instance(
        rng: &mut ChaCha8Rng,
        rows: usize,
        cols: usize,
    ) -> (EmbeddingModel, [Vec<f64>; 3]) {
        let base = BaseEncoderConfig {
            dim_base: cols,
            ..cfg()
        };
        let m = EmbeddingModel::random(base, rows, rng.random()).unwrap();
        let mut v = || {
            (0..cols)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect::<Vec<f64>>()
        };
        (m, [v(), v(), v()])
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 20 {
            let (m, [a, p, n]) = random_instance(&mut rng, 3, 2);
            let x = TripletInputs {
                anchor: &a,
                positive: &p,
                negative: &n,
            };
            if model_loss(&m, x, 1.0).unwrap() < 0.05 {
                continue;
            }
            assert!(finite_difference_check(&m, x, 1.0, 1e-5).unwrap() < 1e-4);
            checked += 1;
        }
    }

    #[test]
    fn inactive_hinge_has_zero_gradient() {
        let base = BaseEncoderConfig {
            dim_base: 2,
            ..cfg()
        };
        let m = EmbeddingModel::identity(base).unwrap();
        let x = TripletInputs {
            anchor: &[0.0, 0.0],
            positive: &[0.1, 0.0],
            negative: &[5.0, 0.0],
        };
        assert!(loss_gradients(&m, x, 1.0)
            .unwrap()
            .iter()
            .all(|g| *g == 0.0));
        assert_eq!(finite_difference_check(&m, x, 1.0, 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn coincident_anchor_and_positive_stay_finite() {
        let base = BaseEncoderConfig {
            dim_base: 2,
            ..cfg()
        };
        let m = EmbeddingModel::identity(base).unwrap();
        let x = TripletInputs {
            anchor: &[1.0, 1.0],
            positive: &[1.0, 1.0],
            negative: &[1.2, 1.0],
        };
        let g = loss_gradients(&m, x, 1.0).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn smaller_step_reduces_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (m, [a, p, n]) = random_instance(&mut rng, 3, 2);
        let x = TripletInputs {
            anchor: &a,
            positive: &p,
            negative: &n,
        };
        let coarse = finite_difference_check(&m, x, 5.0, 1e-2).unwrap();
        let fine = finite_difference_check(&m, x, 5.0, 1e-5).unwrap();
        assert!(fine < coarse, "{fine} !< {coarse}");
    }

    #[test]
    fn corpus_embedding_in_order_and_deterministic() {
        let mut d2 = text_doc("b", "same words here", "");
        let d3 = text_doc("c", "same words here", "");
        d2.references.clear();
        let c = Corpus::new(vec![text_doc("a", "first", "doc"), d2, d3]).unwrap();
        let m = EmbeddingModel::random(cfg(), 8, 3).unwrap();
        let e = embed_corpus(&c, &m).unwrap();
        assert_eq!(e.ids(), &["a", "b", "c"]);
        assert_eq!(e.row(1), e.row(2));
        assert_eq!(e, embed_corpus(&c, &m).unwrap());
    }

    #[test]
    fn nearest_documents_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut rows: Vec<(String, Vec<f64>)> = (0..300)
            .map(|i| {
                (
                    format!("d{i:03}"),
                    (0..6).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        rows.push(("zdup".into(), rows[10].1.clone()));
        let m = EmbeddingMatrix::from_rows(rows.clone(), 6).unwrap();
        let hits = nearest_documents(&m, "d010", 10).unwrap();
        assert_eq!(hits[0].0, "zdup");
        assert!((hits[0].1 - 1.0).abs() < 1e-9);
        // Oracle: all similarities sorted by (-sim, id).
        let q = &rows[10].1;
        let mut all: Vec<(String, f64)> = rows
            .iter()
            .filter(|(id, _)| id != "d010")
            .map(|(id, v)| {
                let dot: f64 = q.iter().zip(v).map(|(a, b)| a * b).sum();
                let nq = q.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                (id.clone(), dot / (nq * nv))
            })
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let expect: Vec<&str> = all.iter().take(10).map(|x| x.0.as_str()).collect();
        let got: Vec<&str> = hits.iter().map(|x| x.0.as_str()).collect();
        assert_eq!(got, expect);
        assert!(matches!(
            nearest_documents(&m, "nope", 3),
            Err(EmbedError::UnknownId(_))
        ));
    }

    proptest! {
        #[test]
        fn loss_properties(a in prop::collection::vec(-3.0f64..3.0, 3),
                           p in prop::collection::vec(-3.0f64..3.0, 3),
                           n in prop::collection::vec(-3.0f64..3.0, 3),
                           m in 0.0f64..2.0) {
            let l = triplet_loss(&a, &p, &n, m);
            prop_assert!(l >= 0.0);
            prop_assert_eq!(triplet_loss(&a, &p, &p, m), m);
            if l2_distance(&a, &n) >= l2_distance(&a, &p) + m {
                prop_assert!(l <= 1e-12);
            }
        }
    }
}
