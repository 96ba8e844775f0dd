//! Ranking and classification metrics over embedding matrices.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedder::EmbeddingMatrix;
use crate::util::{cosine, parse_field, tsv_rows};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("id `{0}` is not in the embedding matrix")]
    MissingId(String),
    #[error("invalid task for target `{target}`: {message}")]
    InvalidTask { target: String, message: String },
    #[error("no tasks to evaluate")]
    NoTasks,
    #[error("relevant set is empty")]
    EmptyRelevant,
    #[error("length mismatch: {predictions} predictions for {gold} gold labels")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("no gold labels")]
    EmptyGold,
    #[error("class `{0}` has no training items")]
    EmptyClass(String),
    #[error("test class `{0}` does not occur in training")]
    UnseenClass(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// A target document, its candidate pool and the relevant subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTask {
    pub target: String,
    pub candidates: Vec<String>,
    pub relevant: BTreeSet<String>,
}

impl RankingTask {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| EvalError::InvalidTask {
            target: self.target.clone(),
            message: m.to_owned(),
        };
        if self.relevant.is_empty() {
            return Err(bad("relevant set is empty"));
        }
        let cands: HashSet<&str> = self.candidates.iter().map(String::as_str).collect();
        if cands.len() != self.candidates.len() {
            return Err(bad("duplicate candidate"));
        }
        if cands.contains(self.target.as_str()) {
            return Err(bad("target listed among its candidates"));
        }
        if self.relevant.iter().any(|r| !cands.contains(r.as_str())) {
            return Err(bad("relevant id outside the candidate pool"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    Cosine,
    NegativeL2,
}

/// Candidates by descending similarity to the target, ties by ascending id.
pub fn rank_candidates(
    matrix: &EmbeddingMatrix,
    task: &RankingTask,
) -> Result<Vec<String>, EvalError> {
    rank_candidates_by(matrix, task, Similarity::Cosine)
}

pub fn rank_candidates_by(
    matrix: &EmbeddingMatrix,
    task: &RankingTask,
    sim: Similarity,
) -> Result<Vec<String>, EvalError> {
    let row = |id: &str| {
        matrix
            .row_of(id)
            .ok_or_else(|| EvalError::MissingId(id.to_owned()))
    };
    let t = row(&task.target)?;
    let mut scored: Vec<(f64, &String)> = task
        .candidates
        .iter()
        .map(|c| {
            let v = row(c)?;
            let s = match sim {
                Similarity::Cosine => cosine(t, v),
                Similarity::NegativeL2 => -t
                    .iter()
                    .zip(v)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
            };
            Ok((s, c))
        })
        .collect::<Result<_, EvalError>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(scored.into_iter().map(|(_, c)| c.clone()).collect())
}

/// `(1/|rel|)·Σ_{relevant at rank r} hits(r)/r`.
pub fn average_precision(
    ranking: &[String],
    relevant: &BTreeSet<String>,
) -> Result<f64, EvalError> {
    if relevant.is_empty() {
        return Err(EvalError::EmptyRelevant);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in ranking.iter().enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

/// Mean average precision over `(ranking, relevant)` pairs.
pub fn map_score(results: &[(Vec<String>, BTreeSet<String>)]) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::NoTasks);
    }
    let aps = results
        .iter()
        .map(|(r, rel)| average_precision(r, rel))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Binary-gain nDCG with a `log2(r + 1)` discount, optionally cut off.
pub fn ndcg(
    ranking: &[String],
    relevant: &BTreeSet<String>,
    cutoff: Option<usize>,
) -> Result<f64, EvalError> {
    if relevant.is_empty() {
        return Err(EvalError::EmptyRelevant);
    }
    let depth = cutoff.unwrap_or(usize::MAX);
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = ranking
        .iter()
        .take(depth)
        .enumerate()
        .filter(|(_, id)| relevant.contains(*id))
        .map(|(i, _)| discount(i))
        .sum();
    let ideal: f64 = (0..relevant.len().min(depth)).map(discount).sum();
    Ok(if ideal == 0.0 { 0.0 } else { dcg / ideal })
}

/// Fraction of rankings whose first entry is relevant.
pub fn precision_at_1(results: &[(Vec<String>, BTreeSet<String>)]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    let hits = results
        .iter()
        .filter(|(r, rel)| r.first().is_some_and(|top| rel.contains(top)))
        .count();
    hits as f64 / results.len() as f64
}

/// Unweighted mean of per-class F1 over the gold classes.
pub fn macro_f1(predictions: &[String], gold: &[String]) -> Result<f64, EvalError> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            gold: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let classes: BTreeSet<&str> = gold.iter().map(String::as_str).collect();
    let f1s: Vec<f64> = classes
        .iter()
        .map(|&c| {
            let tp = predictions
                .iter()
                .zip(gold)
                .filter(|(p, g)| *p == c && *g == c)
                .count() as f64;
            let predicted = predictions.iter().filter(|p| *p == c).count() as f64;
            let actual = gold.iter().filter(|g| *g == c).count() as f64;
            let precision = if predicted == 0.0 {
                0.0
            } else {
                tp / predicted
            };
            let recall = tp / actual;
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        })
        .collect();
    Ok(f1s.iter().sum::<f64>() / f1s.len() as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledSplit {
    pub train: Vec<(String, String)>,
    pub test: Vec<(String, String)>,
}

impl LabeledSplit {
    pub fn validate(&self) -> Result<(), EvalError> {
        let seen: HashSet<&str> = self.train.iter().map(|(_, c)| c.as_str()).collect();
        match self.test.iter().find(|(_, c)| !seen.contains(c.as_str())) {
            Some((_, c)) => Err(EvalError::UnseenClass(c.clone())),
            None => Ok(()),
        }
    }
}

/// Labels each test item with the class whose training centroid is most
/// cosine-similar, ties by ascending class name.
pub fn nearest_centroid_classify(
    matrix: &EmbeddingMatrix,
    split: &LabeledSplit,
) -> Result<Vec<String>, EvalError> {
    split.validate()?;
    let row = |id: &str| {
        matrix
            .row_of(id)
            .ok_or_else(|| EvalError::MissingId(id.to_owned()))
    };
    let mut sums: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    for (id, class) in &split.train {
        let v = row(id)?;
        let entry = sums
            .entry(class.as_str())
            .or_insert_with(|| (vec![0.0; matrix.dim()], 0));
        for (a, b) in entry.0.iter_mut().zip(v) {
            *a += b;
        }
        entry.1 += 1;
    }
    let centroids: Vec<(&str, Vec<f64>)> = sums
        .into_iter()
        .map(|(c, (s, k))| (c, s.into_iter().map(|x| x / k as f64).collect()))
        .collect();
    split
        .test
        .par_iter()
        .map(|(id, _)| {
            let v = row(id)?;
            let mut best: Option<(&str, f64)> = None;
            for (c, centroid) in &centroids {
                let s = cosine(v, centroid);
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((c, s));
                }
            }
            let (class, _) = best.ok_or_else(|| EvalError::EmptyClass(String::new()))?;
            Ok(class.to_owned())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub tasks: usize,
    pub map: f64,
    pub ndcg: f64,
    pub precision_at_1: f64,
}

/// Ranks every task and summarises MAP, mean nDCG and P@1.
pub fn evaluate_ranking(
    matrix: &EmbeddingMatrix,
    tasks: &[RankingTask],
    sim: Similarity,
) -> Result<RankingReport, EvalError> {
    if tasks.is_empty() {
        return Err(EvalError::NoTasks);
    }
    let results: Vec<(Vec<String>, BTreeSet<String>)> = tasks
        .par_iter()
        .map(|t| {
            t.validate()?;
            Ok((rank_candidates_by(matrix, t, sim)?, t.relevant.clone()))
        })
        .collect::<Result<_, EvalError>>()?;
    let ndcgs = results
        .iter()
        .map(|(r, rel)| ndcg(r, rel, None))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RankingReport {
        tasks: tasks.len(),
        map: map_score(&results)?,
        ndcg: ndcgs.iter().sum::<f64>() / ndcgs.len() as f64,
        precision_at_1: precision_at_1(&results),
    })
}

pub const TASK_COLUMNS: [&str; 3] = ["target", "candidate", "is_relevant"];

/// One row per candidate, grouped by target in task order.
pub fn write_tasks<W: Write>(tasks: &[RankingTask], mut w: W) -> io::Result<()> {
    writeln!(w, "{}", TASK_COLUMNS.join("\t"))?;
    for t in tasks {
        for c in &t.candidates {
            writeln!(
                w,
                "{}\t{}\t{}",
                t.target,
                c,
                u8::from(t.relevant.contains(c))
            )?;
        }
    }
    Ok(())
}

pub fn read_tasks<R: BufRead>(r: R) -> Result<Vec<RankingTask>, EvalError> {
    let mut tasks: Vec<RankingTask> = Vec::new();
    for (line, cols) in tsv_rows(r, &TASK_COLUMNS)? {
        let rel: u8 = parse_field(line, "is_relevant", &cols[2])?;
        if tasks.last().is_none_or(|t| t.target != cols[0]) {
            tasks.push(RankingTask {
                target: cols[0].clone(),
                candidates: Vec::new(),
                relevant: BTreeSet::new(),
            });
        }
        let t = tasks.last_mut().expect("pushed above");
        t.candidates.push(cols[1].clone());
        if rel == 1 {
            t.relevant.insert(cols[1].clone());
        }
    }
    for t in &tasks {
        t.validate()?;
    }
    Ok(tasks)
}

pub fn write_report<W: Write>(report: &RankingReport, mut w: W) -> io::Result<()> {
    writeln!(w, "tasks\t{}", report.tasks)?;
    writeln!(w, "map\t{}", report.map)?;
    writeln!(w, "ndcg\t{}", report.ndcg)?;
    writeln!(w, "precision_at_1\t{}", report.precision_at_1)
}
