//! Citation-importance scoring.
//!
//! Each (citing, cited) pair gets a feature vector of section-resolved
//! in-text citation counts, a self-citation indicator and optionally the
//! title similarity of the two documents. Feature weights are estimated with
//! the entropy weight method (or set uniformly), and the importance of a
//! citation is the weighted sum of its enabled features.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{is_self_citation, Corpus};
use crate::embedder::EmbeddingMatrix;
use crate::util::{cosine, parse_field, tsv_rows};

#[derive(Debug, Error)]
pub enum ImportanceError {
    #[error("title similarity requested but no base vector for `{0}`")]
    MissingBaseVector(String),
    #[error("entropy weights need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("every enabled feature column is all-zero")]
    AllColumnsZero,
    #[error("no enabled feature varies across rows; entropy weights undefined")]
    NoVariability,
    #[error("feature set enables no feature")]
    EmptyFeatureSet,
    #[error("weights cover {weights:?} but table has {table:?}")]
    FeatureMismatch {
        weights: Vec<Feature>,
        table: Vec<Feature>,
    },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Intro,
    Methods,
    Results,
    Discussion,
    SelfCitation,
    TitleSimilarity,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Intro,
        Feature::Methods,
        Feature::Results,
        Feature::Discussion,
        Feature::SelfCitation,
        Feature::TitleSimilarity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Intro => "intro",
            Feature::Methods => "methods",
            Feature::Results => "results",
            Feature::Discussion => "discussion",
            Feature::SelfCitation => "self_citation",
            Feature::TitleSimilarity => "title_similarity",
        }
    }

    /// Columns that may carry negative values and are shifted before
    /// entropy normalization.
    fn shift_before_entropy(self) -> bool {
        matches!(self, Feature::SelfCitation | Feature::TitleSimilarity)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown feature `{s}`"))
    }
}

/// Which features enter the importance score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSet {
    pub include_intro: bool,
    pub include_methods: bool,
    pub include_results: bool,
    pub include_discussion: bool,
    pub include_self_citation: bool,
    pub include_title_similarity: bool,
}

impl Default for FeatureSet {
    /// Introduction, Results, Discussion and self-citation; Methods excluded.
    fn default() -> Self {
        Self {
            include_intro: true,
            include_methods: false,
            include_results: true,
            include_discussion: true,
            include_self_citation: true,
            include_title_similarity: false,
        }
    }
}

impl FeatureSet {
    pub fn enabled(&self) -> Vec<Feature> {
        let flags = [
            self.include_intro,
            self.include_methods,
            self.include_results,
            self.include_discussion,
            self.include_self_citation,
            self.include_title_similarity,
        ];
        Feature::ALL
            .into_iter()
            .zip(flags)
            .filter_map(|(f, on)| on.then_some(f))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ImportanceError> {
        if self.enabled().is_empty() {
            Err(ImportanceError::EmptyFeatureSet)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CitationFeatures {
    pub citing_id: String,
    pub cited_id: String,
    /// Whether the cited document is part of the corpus.
    pub resolved: bool,
    pub f_intro: u32,
    pub f_methods: u32,
    pub f_results: u32,
    pub f_discussion: u32,
    pub s_self: u8,
    pub t_sim: Option<f64>,
}

impl CitationFeatures {
    pub fn value(&self, f: Feature) -> f64 {
        match f {
            Feature::Intro => f64::from(self.f_intro),
            Feature::Methods => f64::from(self.f_methods),
            Feature::Results => f64::from(self.f_results),
            Feature::Discussion => f64::from(self.f_discussion),
            Feature::SelfCitation => f64::from(self.s_self),
            Feature::TitleSimilarity => self.t_sim.unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub features: Vec<Feature>,
    pub rows: Vec<CitationFeatures>,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, f: Feature) -> Vec<f64> {
        self.rows.iter().map(|r| r.value(f)).collect()
    }

    /// Drops rows whose cited document is outside the corpus.
    pub fn resolved_only(&self) -> FeatureTable {
        FeatureTable {
            features: self.features.clone(),
            rows: self.rows.iter().filter(|r| r.resolved).cloned().collect(),
        }
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "citing_id\tcited_id\tresolved\tintro\tmethods\tresults\tdiscussion\tself_citation\ttitle_similarity"
        )?;
        for r in &self.rows {
            let t = r.t_sim.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.citing_id,
                r.cited_id,
                u8::from(r.resolved),
                r.f_intro,
                r.f_methods,
                r.f_results,
                r.f_discussion,
                r.s_self,
                t
            )?;
        }
        Ok(())
    }
}

/// Builds one feature row per reference entry in the corpus, in corpus order.
///
/// Methods counts are always extracted; whether they are scored depends on
/// `fs`. Title similarity is the cosine of the two documents' base vectors
/// and is 0 for references leaving the corpus.
pub fn extract_citation_features(
    corpus: &Corpus,
    fs: &FeatureSet,
    base_vectors: Option<&EmbeddingMatrix>,
) -> Result<FeatureTable, ImportanceError> {
    fs.validate()?;
    let base = if fs.include_title_similarity {
        let m = base_vectors.ok_or_else(|| {
            ImportanceError::MissingBaseVector(
                corpus
                    .documents()
                    .first()
                    .map(|d| d.id.clone())
                    .unwrap_or_default(),
            )
        })?;
        Some(m)
    } else {
        None
    };

    let rows: Result<Vec<Vec<CitationFeatures>>, ImportanceError> = corpus
        .documents()
        .par_iter()
        .map(|doc| {
            let mut out = Vec::with_capacity(doc.references.len());
            for r in &doc.references {
                let cited = corpus.get(&r.cited_id);
                let s_self = cited.map_or(0, |c| u8::from(is_self_citation(doc, c)));
                let t_sim = match (base, cited) {
                    (None, _) => None,
                    (Some(_), None) => Some(0.0),
                    (Some(m), Some(c)) => {
                        let a = m
                            .row_of(&doc.id)
                            .ok_or_else(|| ImportanceError::MissingBaseVector(doc.id.clone()))?;
                        let b = m
                            .row_of(&c.id)
                            .ok_or_else(|| ImportanceError::MissingBaseVector(c.id.clone()))?;
                        Some(cosine(a, b))
                    }
                };
                out.push(CitationFeatures {
                    citing_id: doc.id.clone(),
                    cited_id: r.cited_id.clone(),
                    resolved: cited.is_some(),
                    f_intro: r.counts.intro,
                    f_methods: r.counts.methods,
                    f_results: r.counts.results,
                    f_discussion: r.counts.discussion,
                    s_self,
                    t_sim,
                });
            }
            Ok(out)
        })
        .collect();
    Ok(FeatureTable {
        features: fs.enabled(),
        rows: rows?.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMethod {
    Entropy,
    Uniform,
}

impl fmt::Display for WeightMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightMethod::Entropy => "entropy",
            WeightMethod::Uniform => "uniform",
        })
    }
}

/// Per-feature weights, in the feature order of the table they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceWeights {
    pub method: WeightMethod,
    pub weights: Vec<(Feature, f64)>,
    /// Column entropies, when estimated by the entropy weight method.
    pub entropies: Option<Vec<f64>>,
}

impl ImportanceWeights {
    pub fn features(&self) -> Vec<Feature> {
        self.weights.iter().map(|(f, _)| *f).collect()
    }

    pub fn get(&self, f: Feature) -> Option<f64> {
        self.weights.iter().find(|(g, _)| *g == f).map(|(_, w)| *w)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut weights = serde_json::Map::new();
        for (f, w) in &self.weights {
            weights.insert(f.name().into(), (*w).into());
        }
        let mut obj = serde_json::Map::new();
        obj.insert("method".into(), self.method.to_string().into());
        obj.insert("weights".into(), weights.into());
        if let Some(e) = &self.entropies {
            let mut m = serde_json::Map::new();
            for ((f, _), v) in self.weights.iter().zip(e) {
                m.insert(f.name().into(), (*v).into());
            }
            obj.insert("entropies".into(), m.into());
        }
        obj.into()
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, ImportanceError> {
        let bad = |m: &str| ImportanceError::InvalidWeights(m.into());
        let method = match v.get("method").and_then(|m| m.as_str()) {
            Some("entropy") => WeightMethod::Entropy,
            Some("uniform") => WeightMethod::Uniform,
            _ => return Err(bad("missing or unknown method")),
        };
        let obj = v
            .get("weights")
            .and_then(|w| w.as_object())
            .ok_or_else(|| bad("missing weights object"))?;
        let mut weights = Vec::new();
        for f in Feature::ALL {
            if let Some(w) = obj.get(f.name()) {
                weights.push((f, w.as_f64().ok_or_else(|| bad("non-numeric weight"))?));
            }
        }
        if weights.len() != obj.len() {
            return Err(bad("unknown feature name in weights"));
        }
        let entropies = v.get("entropies").and_then(|e| e.as_object()).map(|e| {
            weights
                .iter()
                .map(|(f, _)| e.get(f.name()).and_then(|x| x.as_f64()).unwrap_or(f64::NAN))
                .collect()
        });
        Ok(Self {
            method,
            weights,
            entropies,
        })
    }
}

/// Normalized Shannon entropy of a nonnegative column, in [0, 1].
///
/// Returns `None` for an all-zero column. A constant positive column has
/// entropy exactly 1.
pub fn column_entropy(values: &[f64]) -> Option<f64> {
    let n = values.len();
    let sum: f64 = values.iter().sum();
    if sum == 0.0 {
        return None;
    }
    if values.iter().all(|v| *v == values[0]) {
        return Some(1.0);
    }
    let k = 1.0 / (n as f64).ln();
    let h: f64 = values
        .iter()
        .filter(|v| **v > 0.0)
        .map(|v| {
            let p = v / sum;
            p * p.ln()
        })
        .sum();
    Some(-k * h)
}

/// Converts column entropies to weights: `d_j = 1 - e_j`, `w_j = d_j / sum(d)`.
pub fn weights_from_entropies(entropies: &[f64]) -> Result<Vec<f64>, ImportanceError> {
    let d: Vec<f64> = entropies.iter().map(|e| (1.0 - e).max(0.0)).collect();
    let total: f64 = d.iter().sum();
    if total <= 0.0 {
        return Err(ImportanceError::NoVariability);
    }
    Ok(d.into_iter().map(|x| x / total).collect())
}

pub fn entropy_weights(table: &FeatureTable) -> Result<ImportanceWeights, ImportanceError> {
    let n = table.len();
    if n < 2 {
        return Err(ImportanceError::TooFewRows(n));
    }
    let mut entropies = Vec::with_capacity(table.features.len());
    let mut any_nonzero = false;
    for &f in &table.features {
        let mut col = table.column(f);
        if f.shift_before_entropy() {
            let min = col.iter().copied().fold(f64::INFINITY, f64::min);
            if min < 0.0 {
                col.iter_mut().for_each(|v| *v -= min);
            }
        }
        match column_entropy(&col) {
            Some(e) => {
                any_nonzero = true;
                entropies.push(e);
            }
            None => {
                log::warn!("feature column `{f}` is all-zero; assigning weight 0");
                entropies.push(1.0);
            }
        }
    }
    if !any_nonzero {
        return Err(ImportanceError::AllColumnsZero);
    }
    let w = weights_from_entropies(&entropies)?;
    Ok(ImportanceWeights {
        method: WeightMethod::Entropy,
        weights: table.features.iter().copied().zip(w).collect(),
        entropies: Some(entropies),
    })
}

pub fn uniform_weights(fs: &FeatureSet) -> Result<ImportanceWeights, ImportanceError> {
    fs.validate()?;
    let enabled = fs.enabled();
    let w = 1.0 / enabled.len() as f64;
    Ok(ImportanceWeights {
        method: WeightMethod::Uniform,
        weights: enabled.into_iter().map(|f| (f, w)).collect(),
        entropies: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCitation {
    pub citing_id: String,
    pub cited_id: String,
    pub importance: f64,
}

/// Weighted sum of each row's enabled features on raw (unnormalized) values.
pub fn score_citations(
    table: &FeatureTable,
    w: &ImportanceWeights,
) -> Result<Vec<ScoredCitation>, ImportanceError> {
    if w.features() != table.features {
        return Err(ImportanceError::FeatureMismatch {
            weights: w.features(),
            table: table.features.clone(),
        });
    }
    if let Some((f, x)) = w.weights.iter().find(|(_, x)| !x.is_finite() || *x < 0.0) {
        return Err(ImportanceError::InvalidWeights(format!(
            "weight {x} for {f}"
        )));
    }
    Ok(table
        .rows
        .iter()
        .map(|r| ScoredCitation {
            citing_id: r.citing_id.clone(),
            cited_id: r.cited_id.clone(),
            importance: w.weights.iter().map(|(f, x)| x * r.value(*f)).sum(),
        })
        .collect())
}

pub const SCORE_COLUMNS: [&str; 3] = ["citing_id", "cited_id", "importance"];

pub fn write_scores<W: Write>(scores: &[ScoredCitation], mut w: W) -> io::Result<()> {
    writeln!(w, "{}", SCORE_COLUMNS.join("\t"))?;
    for s in scores {
        writeln!(w, "{}\t{}\t{}", s.citing_id, s.cited_id, s.importance)?;
    }
    Ok(())
}

pub fn read_scores<R: BufRead>(r: R) -> io::Result<Vec<ScoredCitation>> {
    tsv_rows(r, &SCORE_COLUMNS)?
        .into_iter()
        .map(|(line, mut cols)| {
            let importance = parse_field(line, "importance", &cols[2])?;
            let cited_id = std::mem::take(&mut cols[1]);
            let citing_id = std::mem::take(&mut cols[0]);
            Ok(ScoredCitation {
                citing_id,
                cited_id,
                importance,
            })
        })
        .collect()
}
