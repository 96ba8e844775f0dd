//! Community detection (Leiden) and label-based partition evaluation.

mod leiden;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Document};
use crate::netgraph::Graph;
use crate::util::{parse_field, splitmix, tsv_rows};

use leiden::{compact, leiden_pass, Level};

#[derive(Debug, Error)]
pub enum CommunityError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("resolution must be positive and finite, got {0}")]
    InvalidResolution(f64),
    #[error("randomness must be positive and finite, got {0}")]
    InvalidRandomness(f64),
    #[error("need at least two documents, got {0}")]
    TooFewDocuments(usize),
    #[error("partition node `{0}` is not in the corpus")]
    UnknownDocument(String),
    #[error("empty resolution list")]
    NoResolutions,
    #[error("method `{method}` has no accuracy at resolution {resolution}")]
    MissingLevel { method: String, resolution: f64 },
    #[error("mean accuracy is zero at resolution {0}")]
    ZeroMeanAccuracy(f64),
    #[error("accuracy table is empty")]
    EmptyTable,
    #[error("malformed partition file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityFunction {
    #[default]
    Cpm,
    Modularity,
}

impl fmt::Display for QualityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cpm => "cpm",
            Self::Modularity => "modularity",
        })
    }
}

impl FromStr for QualityFunction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cpm" => Ok(Self::Cpm),
            "modularity" => Ok(Self::Modularity),
            other => Err(format!("unknown quality function `{other}`")),
        }
    }
}

/// Assignment of every graph node to a community numbered from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub ids: Vec<String>,
    pub membership: Vec<usize>,
    pub quality: f64,
    pub resolution: f64,
    pub quality_function: QualityFunction,
    pub seed: u64,
    /// Name of the similarity measure that produced the graph.
    pub tag: String,
}

impl Partition {
    pub fn community_count(&self) -> usize {
        self.membership.iter().copied().max().unwrap_or(0)
    }

    /// Member node indices per community; entry `c - 1` holds community `c`.
    pub fn communities(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.community_count()];
        for (i, &c) in self.membership.iter().enumerate() {
            out[c - 1].push(i);
        }
        out
    }

    pub fn community_of(&self, id: &str) -> Option<usize> {
        self.ids
            .iter()
            .position(|x| x == id)
            .map(|i| self.membership[i])
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.communities().iter().map(Vec::len).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeidenConfig {
    pub quality_function: QualityFunction,
    pub resolution: f64,
    pub seed: u64,
    /// Temperature of the randomized refinement step.
    pub randomness: f64,
    /// Cap on outer iterations; iteration stops earlier once stable.
    pub max_iterations: usize,
    /// Independent seeded runs; the best-quality result is kept.
    pub restarts: usize,
}

impl Default for LeidenConfig {
    fn default() -> Self {
        Self {
            quality_function: QualityFunction::Cpm,
            resolution: 0.05,
            seed: 0,
            randomness: 0.01,
            max_iterations: 50,
            restarts: 4,
        }
    }
}

impl LeidenConfig {
    pub fn new(quality_function: QualityFunction, resolution: f64, seed: u64) -> Self {
        Self {
            quality_function,
            resolution,
            seed,
            ..Self::default()
        }
    }
}

/// Quality of `membership` (any labels) on `g`.
///
/// CPM: `Σ_c e_c − γ·n_c(n_c−1)/2`. Modularity: `(1/m)·Σ_c [e_c − γ·K_c²/(4m)]`
/// with `K_c` the total strength of community `c` and `m` the total weight.
pub fn partition_quality(
    g: &Graph,
    membership: &[usize],
    qf: QualityFunction,
    resolution: f64,
) -> f64 {
    let mut labels = membership.to_vec();
    let k = compact(&mut labels);
    let mut internal = vec![0.0; k];
    for (i, j, w) in g.edges() {
        if labels[i] == labels[j] {
            internal[labels[i]] += w;
        }
    }
    match qf {
        QualityFunction::Cpm => {
            let mut size = vec![0.0; k];
            for &c in &labels {
                size[c] += 1.0;
            }
            (0..k)
                .map(|c| internal[c] - resolution * size[c] * (size[c] - 1.0) / 2.0)
                .sum()
        }
        QualityFunction::Modularity => {
            let m = g.total_weight();
            if m == 0.0 {
                return 0.0;
            }
            let mut strength = vec![0.0; k];
            for (v, &c) in labels.iter().enumerate() {
                strength[c] += g.neighbors(v).iter().map(|(_, w)| w).sum::<f64>();
            }
            (0..k)
                .map(|c| internal[c] - resolution * strength[c] * strength[c] / (4.0 * m))
                .sum::<f64>()
                / m
        }
    }
}

fn last(trace: &[f64]) -> f64 {
    *trace.last().expect("trace holds the start quality")
}

/// Splits every community into its connected components.
fn split_disconnected(g: &Graph, membership: &mut [usize]) {
    let n = g.node_count();
    let mut out = vec![usize::MAX; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for s in 0..n {
        if out[s] != usize::MAX {
            continue;
        }
        out[s] = next;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            for &(u, _) in g.neighbors(v) {
                if out[u] == usize::MAX && membership[u] == membership[v] {
                    out[u] = next;
                    queue.push_back(u);
                }
            }
        }
        next += 1;
    }
    membership.copy_from_slice(&out);
}

pub fn leiden(g: &Graph, cfg: &LeidenConfig) -> Result<Partition, CommunityError> {
    leiden_traced(g, cfg).map(|(p, _)| p)
}

/// Runs Leiden and also returns the quality after every outer iteration of
/// the selected run (entry 0 is the singleton start).
pub fn leiden_traced(
    g: &Graph,
    cfg: &LeidenConfig,
) -> Result<(Partition, Vec<f64>), CommunityError> {
    let n = g.node_count();
    if n == 0 {
        return Err(CommunityError::EmptyGraph);
    }
    if !(cfg.resolution > 0.0 && cfg.resolution.is_finite()) {
        return Err(CommunityError::InvalidResolution(cfg.resolution));
    }
    if !(cfg.randomness > 0.0 && cfg.randomness.is_finite()) {
        return Err(CommunityError::InvalidRandomness(cfg.randomness));
    }
    let (node_w, r) = match cfg.quality_function {
        QualityFunction::Cpm => (vec![1.0; n], cfg.resolution),
        QualityFunction::Modularity => {
            let strength: Vec<f64> = (0..n)
                .map(|v| g.neighbors(v).iter().map(|(_, w)| w).sum())
                .collect();
            let m = g.total_weight();
            let r = if m > 0.0 {
                cfg.resolution / (2.0 * m)
            } else {
                0.0
            };
            (strength, r)
        }
    };
    let base = Level::from_graph(g, node_w);
    let quality = |m: &[usize]| partition_quality(g, m, cfg.quality_function, cfg.resolution);
    let run = |restart: usize| {
        let seed = if restart == 0 {
            cfg.seed
        } else {
            splitmix(cfg.seed ^ restart as u64)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut membership: Vec<usize> = (0..n).collect();
        let mut trace = vec![quality(&membership)];
        for _ in 0..cfg.max_iterations.max(1) {
            let mut next = leiden_pass(&base, &membership, r, cfg.randomness, &mut rng);
            split_disconnected(g, &mut next);
            compact(&mut next);
            trace.push(quality(&next));
            let stable = next == membership;
            membership = next;
            if stable {
                break;
            }
        }
        (membership, trace)
    };
    let (membership, trace) = (0..cfg.restarts.max(1))
        .map(run)
        .reduce(|best, cur| {
            if last(&cur.1) > last(&best.1) {
                cur
            } else {
                best
            }
        })
        .expect("at least one run");
    log::debug!(
        "leiden: {} communities after {} iterations",
        membership.iter().max().map_or(0, |m| m + 1),
        trace.len() - 1
    );
    let partition = Partition {
        ids: g.ids().to_vec(),
        membership: membership.into_iter().map(|c| c + 1).collect(),
        quality: last(&trace),
        resolution: cfg.resolution,
        quality_function: cfg.quality_function,
        seed: cfg.seed,
        tag: String::new(),
    };
    Ok((partition, trace))
}

/// Binary-label cosine: `|Li ∩ Lj| / sqrt(|Li|·|Lj|)`, 0 if either is empty.
pub fn label_similarity(a: &Document, b: &Document) -> f64 {
    let la: HashSet<&str> = a.labels.iter().map(String::as_str).collect();
    let lb: HashSet<&str> = b.labels.iter().map(String::as_str).collect();
    if la.is_empty() || lb.is_empty() {
        return 0.0;
    }
    let shared = la.intersection(&lb).count() as f64;
    shared / ((la.len() * lb.len()) as f64).sqrt()
}

/// Share of all unordered document pairs weighted by label similarity,
/// counting only pairs placed in the same community.
pub fn clustering_accuracy(partition: &Partition, corpus: &Corpus) -> Result<f64, CommunityError> {
    clustering_accuracy_with(partition, corpus, label_similarity)
}

/// As [`clustering_accuracy`] with a custom pair similarity in `[0, 1]`.
pub fn clustering_accuracy_with<F>(
    partition: &Partition,
    corpus: &Corpus,
    sim: F,
) -> Result<f64, CommunityError>
where
    F: Fn(&Document, &Document) -> f64 + Sync,
{
    let n = partition.ids.len();
    if n < 2 {
        return Err(CommunityError::TooFewDocuments(n));
    }
    let docs: Vec<&Document> = partition
        .ids
        .iter()
        .map(|id| {
            corpus
                .get(id)
                .ok_or_else(|| CommunityError::UnknownDocument(id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let per_community: Vec<f64> = partition
        .communities()
        .par_iter()
        .map(|members| {
            let mut s = 0.0;
            for (a, &i) in members.iter().enumerate() {
                for &j in &members[a + 1..] {
                    s += sim(docs[i], docs[j]);
                }
            }
            s
        })
        .collect();
    let pairs = n as f64 * (n as f64 - 1.0) / 2.0;
    Ok(per_community.iter().sum::<f64>() / pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub method: String,
    pub resolution: f64,
    pub communities: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub rows: Vec<AccuracyRow>,
}

/// One Leiden run and accuracy per resolution, run in parallel.
pub fn granularity_sweep(
    g: &Graph,
    corpus: &Corpus,
    qf: QualityFunction,
    resolutions: &[f64],
    seed: u64,
    method: &str,
) -> Result<AccuracyTable, CommunityError> {
    if resolutions.is_empty() {
        return Err(CommunityError::NoResolutions);
    }
    let rows = resolutions
        .par_iter()
        .map(|&res| {
            let p = leiden(g, &LeidenConfig::new(qf, res, seed))?;
            Ok(AccuracyRow {
                method: method.to_owned(),
                resolution: res,
                communities: p.community_count(),
                accuracy: clustering_accuracy(&p, corpus)?,
            })
        })
        .collect::<Result<Vec<_>, CommunityError>>()?;
    Ok(AccuracyTable { rows })
}

/// Per method, the mean over resolution levels of its accuracy divided by
/// the mean accuracy of all methods at that level.
pub fn relative_accuracy(table: &AccuracyTable) -> Result<BTreeMap<String, f64>, CommunityError> {
    if table.rows.is_empty() {
        return Err(CommunityError::EmptyTable);
    }
    let mut levels: BTreeMap<u64, BTreeMap<&str, f64>> = BTreeMap::new();
    let mut methods: Vec<&str> = Vec::new();
    for row in &table.rows {
        levels
            .entry(row.resolution.to_bits())
            .or_default()
            .insert(row.method.as_str(), row.accuracy);
        if !methods.contains(&row.method.as_str()) {
            methods.push(&row.method);
        }
    }
    let mut totals: BTreeMap<String, f64> = BTreeMap::new();
    for (bits, accs) in &levels {
        let res = f64::from_bits(*bits);
        for m in &methods {
            if !accs.contains_key(m) {
                return Err(CommunityError::MissingLevel {
                    method: (*m).to_owned(),
                    resolution: res,
                });
            }
        }
        let mean = accs.values().sum::<f64>() / accs.len() as f64;
        if mean == 0.0 {
            return Err(CommunityError::ZeroMeanAccuracy(res));
        }
        for (m, a) in accs {
            *totals.entry((*m).to_owned()).or_default() += a / mean;
        }
    }
    let nlev = levels.len() as f64;
    Ok(totals.into_iter().map(|(m, t)| (m, t / nlev)).collect())
}

pub const PARTITION_COLUMNS: [&str; 2] = ["doc_id", "community_id"];
pub const ACCURACY_COLUMNS: [&str; 4] = ["method", "resolution", "communities", "accuracy"];

pub fn write_partition<W: Write>(p: &Partition, mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "# quality_function={} resolution={} seed={} quality={} tag={}",
        p.quality_function, p.resolution, p.seed, p.quality, p.tag
    )?;
    writeln!(w, "{}", PARTITION_COLUMNS.join("\t"))?;
    for (id, c) in p.ids.iter().zip(&p.membership) {
        writeln!(w, "{id}\t{c}")?;
    }
    Ok(())
}

pub fn read_partition<R: BufRead>(mut r: R) -> Result<Partition, CommunityError> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut meta: HashMap<&str, &str> = HashMap::new();
    for line in text.lines().filter(|l| l.starts_with('#')) {
        for kv in line.trim_start_matches('#').split_whitespace() {
            if let Some((k, v)) = kv.split_once('=') {
                meta.insert(k, v);
            }
        }
    }
    let get = |k: &str| {
        meta.get(k)
            .copied()
            .ok_or_else(|| CommunityError::Format(format!("header lacks `{k}`")))
    };
    let bad = |k: &str| CommunityError::Format(format!("cannot parse `{k}`"));
    let quality_function = get("quality_function")?
        .parse()
        .map_err(|_| bad("quality_function"))?;
    let resolution = get("resolution")?.parse().map_err(|_| bad("resolution"))?;
    let seed = get("seed")?.parse().map_err(|_| bad("seed"))?;
    let quality = get("quality")?.parse().map_err(|_| bad("quality"))?;
    let tag = meta.get("tag").copied().unwrap_or_default().to_owned();
    let mut ids = Vec::new();
    let mut membership = Vec::new();
    for (line, cols) in tsv_rows(text.as_bytes(), &PARTITION_COLUMNS)? {
        let c: usize = parse_field(line, "community_id", &cols[1])?;
        if c == 0 {
            return Err(CommunityError::Format(format!(
                "line {line}: community ids start at 1"
            )));
        }
        ids.push(cols[0].clone());
        membership.push(c);
    }
    Ok(Partition {
        ids,
        membership,
        quality,
        resolution,
        quality_function,
        seed,
        tag,
    })
}

pub fn write_accuracy_table<W: Write>(t: &AccuracyTable, mut w: W) -> io::Result<()> {
    writeln!(w, "{}", ACCURACY_COLUMNS.join("\t"))?;
    for r in &t.rows {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            r.method, r.resolution, r.communities, r.accuracy
        )?;
    }
    Ok(())
}

pub fn read_accuracy_table<R: BufRead>(r: R) -> io::Result<AccuracyTable> {
    let rows = tsv_rows(r, &ACCURACY_COLUMNS)?
        .into_iter()
        .map(|(line, c)| {
            Ok(AccuracyRow {
                method: c[0].clone(),
                resolution: parse_field(line, "resolution", &c[1])?,
                communities: parse_field(line, "communities", &c[2])?,
                accuracy: parse_field(line, "accuracy", &c[3])?,
            })
        })
        .collect::<io::Result<_>>()?;
    Ok(AccuracyTable { rows })
}

#[cfg(test)]
mod tests;
