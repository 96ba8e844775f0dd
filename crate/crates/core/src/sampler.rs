//! Importance-aware triplet sampling with hard negatives.
//!
//! For each sampled anchor the resolvable references are sorted by importance
//! (descending, ties by ascending id). Each of the `K` iterations pops the
//! most important remaining reference as the positive. The first `H`
//! iterations pop the least important remaining reference as a hard
//! negative; the rest draw an easy negative uniformly from documents the
//! anchor does not cite.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::importance::ScoredCitation;
use crate::util::{derive_seed, tsv_rows};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("no anchor has at least {0} resolvable scored references")]
    NoEligibleAnchors(usize),
    #[error("anchor `{0}` cites every other document; no easy negative available")]
    NoEasyNegative(String),
    #[error("need at least 2 distinct anchors to split, found {0}")]
    TooFewAnchors(usize),
    #[error("train fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeKind {
    Hard,
    Easy,
}

impl fmt::Display for NegativeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NegativeKind::Hard => "hard",
            NegativeKind::Easy => "easy",
        })
    }
}

impl FromStr for NegativeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hard" => Ok(NegativeKind::Hard),
            "easy" => Ok(NegativeKind::Easy),
            _ => Err(format!("unknown negative kind `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor_id: String,
    pub positive_id: String,
    pub negative_id: String,
    pub kind: NegativeKind,
}

pub type TripletSet = Vec<Triplet>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Target number of triplets `N`.
    pub n_total: usize,
    /// Triplets per anchor `K`.
    pub k_per_anchor: usize,
    /// Hard-negative triplets per anchor `H`.
    pub h_hard: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_total: 10_000,
            k_per_anchor: 5,
            h_hard: 2,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.k_per_anchor == 0 || self.n_total == 0 {
            return Err(SamplerError::InvalidConfig("K and N must be >= 1".into()));
        }
        if self.h_hard > self.k_per_anchor {
            return Err(SamplerError::InvalidConfig(format!(
                "H = {} exceeds K = {}",
                self.h_hard, self.k_per_anchor
            )));
        }
        Ok(())
    }

    /// References an anchor needs so front and back pops never collide.
    pub fn min_references(&self) -> usize {
        self.k_per_anchor + self.h_hard
    }
}

/// Resolvable scored references per citing document, sorted by importance
/// descending with ties broken by ascending cited id.
pub fn ranked_references<'a>(
    corpus: &Corpus,
    scored: &'a [ScoredCitation],
) -> HashMap<&'a str, Vec<(&'a str, f64)>> {
    let mut by_citing: HashMap<&str, Vec<(&str, f64)>> = HashMap::new();
    for s in scored {
        if s.citing_id != s.cited_id
            && corpus.contains(&s.citing_id)
            && corpus.contains(&s.cited_id)
        {
            by_citing
                .entry(s.citing_id.as_str())
                .or_default()
                .push((s.cited_id.as_str(), s.importance));
        }
    }
    for refs in by_citing.values_mut() {
        refs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        refs.dedup_by(|a, b| a.0 == b.0);
    }
    by_citing
}

pub fn sample_triplets(
    corpus: &Corpus,
    scored: &[ScoredCitation],
    cfg: &SamplerConfig,
) -> Result<TripletSet, SamplerError> {
    cfg.validate()?;
    let ranked = ranked_references(corpus, scored);
    let mut eligible: Vec<&str> = corpus
        .documents()
        .iter()
        .map(|d| d.id.as_str())
        .filter(|id| {
            ranked
                .get(id)
                .is_some_and(|r| r.len() >= cfg.min_references())
        })
        .collect();
    if eligible.is_empty() {
        return Err(SamplerError::NoEligibleAnchors(cfg.min_references()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    eligible.shuffle(&mut rng);

    // Every processed anchor contributes exactly K triplets.
    let wanted = cfg.n_total.div_ceil(cfg.k_per_anchor);
    if wanted > eligible.len() {
        log::warn!(
            "only {} eligible anchors; producing {} of the requested {} triplets",
            eligible.len(),
            eligible.len() * cfg.k_per_anchor,
            cfg.n_total
        );
    }
    let anchors = &eligible[..wanted.min(eligible.len())];
    let blocks: Result<Vec<Vec<Triplet>>, SamplerError> = anchors
        .par_iter()
        .map(|a| sample_anchor(corpus, a, &ranked[a], cfg))
        .collect();
    Ok(blocks?.into_iter().flatten().collect())
}

fn sample_anchor(
    corpus: &Corpus,
    anchor: &str,
    ranked: &[(&str, f64)],
    cfg: &SamplerConfig,
) -> Result<Vec<Triplet>, SamplerError> {
    let doc = corpus.get(anchor).expect("anchor drawn from corpus");
    let cited: HashSet<&str> = doc.references.iter().map(|r| r.cited_id.as_str()).collect();
    let resolved_cited = cited.iter().filter(|c| corpus.contains(c)).count();
    let easy_pool = corpus.len() - 1 - resolved_cited;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, anchor));
    let mut remaining: VecDeque<&str> = ranked.iter().map(|(id, _)| *id).collect();
    let mut out = Vec::with_capacity(cfg.k_per_anchor);
    for i in 0..cfg.k_per_anchor {
        let positive = remaining
            .pop_front()
            .expect("eligibility guarantees K + H references");
        let (negative, kind) = if i < cfg.h_hard {
            let n = remaining
                .pop_back()
                .expect("eligibility guarantees K + H references");
            (n.to_owned(), NegativeKind::Hard)
        } else {
            if easy_pool == 0 {
                return Err(SamplerError::NoEasyNegative(anchor.to_owned()));
            }
            let docs = corpus.documents();
            let n = loop {
                let cand = &docs[rng.random_range(0..docs.len())].id;
                if cand != anchor && !cited.contains(cand.as_str()) {
                    break cand.clone();
                }
            };
            (n, NegativeKind::Easy)
        };
        out.push(Triplet {
            anchor_id: anchor.to_owned(),
            positive_id: positive.to_owned(),
            negative_id: negative,
            kind,
        });
    }
    Ok(out)
}

/// Granularity at which positive/negative contradictions are detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContradictionScope {
    /// Unordered document pairs across the whole triplet set.
    #[default]
    Global,
    /// (anchor, other) pairs within the triplets of a single anchor.
    SameAnchor,
}

fn pair_key<'a>(scope: ContradictionScope, anchor: &'a str, other: &'a str) -> (&'a str, &'a str) {
    match scope {
        ContradictionScope::SameAnchor => (anchor, other),
        ContradictionScope::Global if anchor <= other => (anchor, other),
        ContradictionScope::Global => (other, anchor),
    }
}

/// Removes every triplet that involves a document pair occurring both as an
/// (anchor, positive) and as an (anchor, negative) pair. Order is preserved.
pub fn filter_contradictions(ts: &[Triplet], scope: ContradictionScope) -> TripletSet {
    let mut roles: HashMap<(&str, &str), (bool, bool)> = HashMap::new();
    for t in ts {
        roles
            .entry(pair_key(scope, &t.anchor_id, &t.positive_id))
            .or_default()
            .0 = true;
        roles
            .entry(pair_key(scope, &t.anchor_id, &t.negative_id))
            .or_default()
            .1 = true;
    }
    let contradictory = |k| roles.get(&k).is_some_and(|(p, n)| *p && *n);
    ts.iter()
        .filter(|t| {
            !contradictory(pair_key(scope, &t.anchor_id, &t.positive_id))
                && !contradictory(pair_key(scope, &t.anchor_id, &t.negative_id))
        })
        .cloned()
        .collect()
}

/// Anchor-level split: all triplets of an anchor land on the same side.
pub fn split_train_validation(
    ts: &[Triplet],
    train_fraction: f64,
    seed: u64,
) -> Result<(TripletSet, TripletSet), SamplerError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SamplerError::InvalidFraction(train_fraction));
    }
    let mut anchors: Vec<&str> = Vec::new();
    let mut seen = HashSet::new();
    for t in ts {
        if seen.insert(t.anchor_id.as_str()) {
            anchors.push(&t.anchor_id);
        }
    }
    if anchors.len() < 2 {
        return Err(SamplerError::TooFewAnchors(anchors.len()));
    }
    anchors.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train =
        ((anchors.len() as f64 * train_fraction).round() as usize).clamp(1, anchors.len() - 1);
    let train_anchors: HashSet<&str> = anchors[..n_train].iter().copied().collect();
    let (train, val): (Vec<_>, Vec<_>) = ts
        .iter()
        .cloned()
        .partition(|t| train_anchors.contains(t.anchor_id.as_str()));
    Ok((train, val))
}

pub const TRIPLET_COLUMNS: [&str; 4] = ["anchor_id", "positive_id", "negative_id", "kind"];

pub fn write_triplets<W: Write>(ts: &[Triplet], mut w: W) -> io::Result<()> {
    writeln!(w, "{}", TRIPLET_COLUMNS.join("\t"))?;
    for t in ts {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            t.anchor_id, t.positive_id, t.negative_id, t.kind
        )?;
    }
    Ok(())
}

pub fn read_triplets<R: BufRead>(r: R) -> io::Result<TripletSet> {
    tsv_rows(r, &TRIPLET_COLUMNS)?
        .into_iter()
        .map(|(line, mut c)| {
            let kind = c[3].parse().map_err(|e: String| {
                io::Error::new(io::ErrorKind::InvalidData, format!("line {line}: {e}"))
            })?;
            Ok(Triplet {
                anchor_id: std::mem::take(&mut c[0]),
                positive_id: std::mem::take(&mut c[1]),
                negative_id: std::mem::take(&mut c[2]),
                kind,
            })
        })
        .collect()
}
