//! Research-topic maps: topic vectors, 2-D layout, overlays and export.

mod export;
mod layout;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::communities::Partition;
use crate::corpus::{Corpus, Document};
use crate::embedder::EmbeddingMatrix;

pub use export::{
    export_map, read_map_table, render_svg, write_map_table, ColorBy, MapRow, MAP_COLUMNS,
};
pub use layout::{layout_2d, stress, LayoutMethod};

#[derive(Debug, Error)]
pub enum MapError {
    #[error("partition id `{0}` is not in the embedding matrix")]
    MissingEmbedding(String),
    #[error("partition id `{0}` is not in the corpus")]
    MissingDocument(String),
    #[error("layout needs at least 2 topics, got {0}")]
    TooFewTopics(usize),
    #[error("category `{0}` is not covered by the similarity matrix")]
    UnknownCategory(String),
    #[error("invalid category similarity: {0}")]
    InvalidSimilarity(String),
    #[error("total category count must be at least 1")]
    NoCategories,
    #[error("expected {expected} coordinates, got {got}")]
    CoordinateMismatch { expected: usize, got: usize },
    #[error("malformed map table: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One community drawn as a dot on the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub id: usize,
    pub members: Vec<String>,
    /// Mean of the member embedding rows.
    pub vector: Vec<f64>,
    pub size: usize,
    pub x: f64,
    pub y: f64,
    pub field: String,
    pub interdisciplinarity: f64,
    pub mean_year: f64,
}

/// One topic per community, ordered by community id.
pub fn topic_vectors(
    partition: &Partition,
    matrix: &EmbeddingMatrix,
) -> Result<Vec<Topic>, MapError> {
    partition
        .communities()
        .into_par_iter()
        .enumerate()
        .map(|(c, members)| {
            let mut sum = vec![0.0; matrix.dim()];
            let mut ids = Vec::with_capacity(members.len());
            for i in members {
                let id = &partition.ids[i];
                let row = matrix
                    .row_of(id)
                    .ok_or_else(|| MapError::MissingEmbedding(id.clone()))?;
                for (s, v) in sum.iter_mut().zip(row) {
                    *s += v;
                }
                ids.push(id.clone());
            }
            let size = ids.len();
            Ok(Topic {
                id: c + 1,
                members: ids,
                vector: sum.into_iter().map(|s| s / size as f64).collect(),
                size,
                x: 0.0,
                y: 0.0,
                field: String::new(),
                interdisciplinarity: 0.0,
                mean_year: 0.0,
            })
        })
        .collect()
}

/// Copies externally computed coordinates onto the topics.
pub fn apply_layout(topics: &mut [Topic], coords: &[(f64, f64)]) -> Result<(), MapError> {
    if topics.len() != coords.len() {
        return Err(MapError::CoordinateMismatch {
            expected: topics.len(),
            got: coords.len(),
        });
    }
    for (t, &(x, y)) in topics.iter_mut().zip(coords) {
        t.x = x;
        t.y = y;
    }
    Ok(())
}

/// Fills the field, interdisciplinarity and mean-year overlays in place.
pub fn apply_overlays(
    topics: &mut [Topic],
    partition: &Partition,
    corpus: &Corpus,
    catsim: Option<&CategorySimilarity>,
    total_categories: usize,
) -> Result<(), MapError> {
    let field = overlay_field(partition, corpus)?;
    let div = overlay_interdisciplinarity(partition, corpus, catsim, total_categories)?;
    let year = overlay_mean_year(partition, corpus)?;
    for t in topics {
        t.field = field[&t.id].clone();
        t.interdisciplinarity = div[&t.id];
        t.mean_year = year[&t.id];
    }
    Ok(())
}

fn member_docs<'a>(
    partition: &Partition,
    corpus: &'a Corpus,
) -> Result<Vec<Vec<&'a Document>>, MapError> {
    partition
        .communities()
        .into_iter()
        .map(|members| {
            members
                .into_iter()
                .map(|i| {
                    let id = &partition.ids[i];
                    corpus
                        .get(id)
                        .ok_or_else(|| MapError::MissingDocument(id.clone()))
                })
                .collect()
        })
        .collect()
}

pub const UNKNOWN_FIELD: &str = "unknown";

/// Most frequent field among member documents (each listed field counts
/// once per document), ties by lexicographic order.
pub fn overlay_field(
    partition: &Partition,
    corpus: &Corpus,
) -> Result<BTreeMap<usize, String>, MapError> {
    let groups = member_docs(partition, corpus)?;
    Ok(groups
        .par_iter()
        .enumerate()
        .map(|(c, docs)| {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for d in docs {
                for f in &d.fields {
                    *counts.entry(f.as_str()).or_default() += 1;
                }
            }
            let mut best: Option<(&str, usize)> = None;
            for (f, n) in counts {
                if best.is_none_or(|(_, b)| n > b) {
                    best = Some((f, n));
                }
            }
            (c + 1, best.map_or(UNKNOWN_FIELD, |(f, _)| f).to_owned())
        })
        .collect())
}

/// Symmetric category similarity with unit diagonal and entries in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySimilarity {
    categories: Vec<String>,
    values: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl CategorySimilarity {
    pub fn new(categories: Vec<String>, values: Vec<f64>) -> Result<Self, MapError> {
        let n = categories.len();
        if values.len() != n * n {
            return Err(MapError::InvalidSimilarity(format!(
                "{} values for {n} categories",
                values.len()
            )));
        }
        for i in 0..n {
            if values[i * n + i] != 1.0 {
                return Err(MapError::InvalidSimilarity(format!(
                    "diagonal of `{}` is not 1",
                    categories[i]
                )));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(0.0..=1.0).contains(&v) || v != values[j * n + i] {
                    return Err(MapError::InvalidSimilarity(format!(
                        "entry ({}, {}) is {v}",
                        categories[i], categories[j]
                    )));
                }
            }
        }
        let index: HashMap<String, usize> = categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        if index.len() != n {
            return Err(MapError::InvalidSimilarity("duplicate category".into()));
        }
        Ok(Self {
            categories,
            values,
            index,
        })
    }

    /// No similarity between distinct categories.
    pub fn identity(categories: Vec<String>) -> Self {
        let n = categories.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        Self::new(categories, values).expect("identity matrix is valid")
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn get(&self, a: &str, b: &str) -> Result<f64, MapError> {
        let i = self.position(a)?;
        let j = self.position(b)?;
        Ok(self.values[i * self.categories.len() + j])
    }

    fn position(&self, c: &str) -> Result<usize, MapError> {
        match self.index.get(c) {
            Some(&i) => Ok(i),
            // Deserialized values arrive without the index.
            None => self
                .categories
                .iter()
                .position(|x| x == c)
                .ok_or_else(|| MapError::UnknownCategory(c.to_owned())),
        }
    }
}

/// Gini coefficient of a proportion vector (0 when perfectly even).
pub fn gini(p: &[f64]) -> f64 {
    let n = p.len();
    let total: f64 = p.iter().sum();
    if n == 0 || total == 0.0 {
        return 0.0;
    }
    let mut diff = 0.0;
    for a in p {
        for b in p {
            diff += (a - b).abs();
        }
    }
    diff / (2.0 * n as f64 * total)
}

/// Variety × balance × disparity for category counts of one topic.
///
/// Variety is the share of all categories present, balance is `1 − Gini`
/// of the proportions, and disparity the mean `1 − s_ij` over ordered pairs
/// of distinct present categories. Fewer than two categories give 0.
pub fn interdisciplinarity(
    counts: &BTreeMap<String, usize>,
    catsim: &CategorySimilarity,
    total_categories: usize,
) -> Result<f64, MapError> {
    if total_categories == 0 {
        return Err(MapError::NoCategories);
    }
    let cats: Vec<&String> = counts.keys().collect();
    for c in &cats {
        catsim.position(c)?;
    }
    let n = cats.len();
    if n <= 1 {
        return Ok(0.0);
    }
    let total: usize = counts.values().sum();
    let p: Vec<f64> = counts.values().map(|&k| k as f64 / total as f64).collect();
    let variety = n as f64 / total_categories as f64;
    let balance = 1.0 - gini(&p);
    let mut dis = 0.0;
    for a in &cats {
        for b in &cats {
            if a != b {
                dis += 1.0 - catsim.get(a, b)?;
            }
        }
    }
    let disparity = dis / (n * (n - 1)) as f64;
    Ok(variety * balance * disparity)
}

/// Per topic interdisciplinarity over its members' category multiset.
/// Without a similarity matrix every pair of distinct categories is
/// treated as fully dissimilar.
pub fn overlay_interdisciplinarity(
    partition: &Partition,
    corpus: &Corpus,
    catsim: Option<&CategorySimilarity>,
    total_categories: usize,
) -> Result<BTreeMap<usize, f64>, MapError> {
    let groups = member_docs(partition, corpus)?;
    let fallback;
    let catsim = match catsim {
        Some(s) => s,
        None => {
            log::warn!("no category similarity supplied; using the identity matrix");
            let mut all: Vec<String> = corpus
                .documents()
                .iter()
                .flat_map(|d| d.categories.iter().cloned())
                .collect();
            all.sort();
            all.dedup();
            fallback = CategorySimilarity::identity(all);
            &fallback
        }
    };
    groups
        .par_iter()
        .enumerate()
        .map(|(c, docs)| {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for d in docs {
                for cat in &d.categories {
                    *counts.entry(cat.clone()).or_default() += 1;
                }
            }
            Ok((
                c + 1,
                interdisciplinarity(&counts, catsim, total_categories)?,
            ))
        })
        .collect()
}

pub fn overlay_mean_year(
    partition: &Partition,
    corpus: &Corpus,
) -> Result<BTreeMap<usize, f64>, MapError> {
    let groups = member_docs(partition, corpus)?;
    Ok(groups
        .par_iter()
        .enumerate()
        .map(|(c, docs)| {
            let sum: f64 = docs.iter().map(|d| f64::from(d.year)).sum();
            (c + 1, sum / docs.len() as f64)
        })
        .collect())
}

#[cfg(test)]
mod tests;
