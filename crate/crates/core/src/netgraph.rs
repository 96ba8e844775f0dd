//! Similarity and citation networks and their structural statistics.

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::{self, BufRead, Write};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::embedder::EmbeddingMatrix;
use crate::util::{parse_field, tsv_rows};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("k = {k} but the matrix has only {nodes} rows")]
    KTooLarge { k: usize, nodes: usize },
    #[error("self-loop on node `{0}`")]
    SelfLoop(String),
    #[error("node index {0} out of range")]
    NodeOutOfRange(usize),
    #[error("unknown node id `{0}`")]
    UnknownId(String),
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("cannot place {edges} edges on {nodes} nodes")]
    TooManyEdges { edges: usize, nodes: usize },
    #[error("graph needs at least {0} nodes")]
    TooFewNodes(usize),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Simple undirected weighted graph; adjacency lists sorted by neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    ids: Vec<String>,
    adj: Vec<Vec<(usize, f64)>>,
    edge_count: usize,
}

impl Graph {
    /// Builds an undirected graph. Duplicate edges keep the first weight.
    pub fn from_edges(
        ids: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, GraphError> {
        let n = ids.len();
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(GraphError::DuplicateId(id.clone()));
            }
        }
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (a, b, w) in edges {
            if a >= n || b >= n {
                return Err(GraphError::NodeOutOfRange(a.max(b)));
            }
            if a == b {
                return Err(GraphError::SelfLoop(ids[a].clone()));
            }
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        let mut edge_count = 0;
        for list in &mut adj {
            list.sort_by_key(|(j, _)| *j);
            list.dedup_by_key(|(j, _)| *j);
            edge_count += list.len();
        }
        Ok(Self {
            ids,
            adj,
            edge_count: edge_count / 2,
        })
    }

    pub fn empty(ids: Vec<String>) -> Result<Self, GraphError> {
        Self::from_edges(ids, std::iter::empty())
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    /// Edges `(i, j, w)` with `i < j`, ordered by `(i, j)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adj.iter().enumerate().flat_map(|(i, list)| {
            list.iter()
                .filter(move |(j, _)| *j > i)
                .map(move |(j, w)| (i, *j, *w))
        })
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search_by_key(&j, |(k, _)| *k).is_ok()
    }

    pub fn total_weight(&self) -> f64 {
        self.edges().map(|(_, _, w)| w).sum()
    }

    fn id_pairs(&self) -> HashSet<(&str, &str)> {
        self.edges()
            .map(|(i, j, _)| {
                let (a, b) = (self.ids[i].as_str(), self.ids[j].as_str());
                if a < b {
                    (a, b)
                } else {
                    (b, a)
                }
            })
            .collect()
    }
}

fn rank_by_id(ids: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|a, b| ids[*a].cmp(&ids[*b]));
    let mut rank = vec![0; ids.len()];
    for (r, i) in order.into_iter().enumerate() {
        rank[i] = r;
    }
    rank
}

const KNN_BLOCK: usize = 128;

/// The `k` most cosine-similar rows of every row (self excluded, ties by
/// ascending id), computed exhaustively in row blocks.
pub fn knn_selections(
    matrix: &EmbeddingMatrix,
    k: usize,
) -> Result<Vec<Vec<(usize, f64)>>, GraphError> {
    let n = matrix.len();
    if k >= n {
        return Err(GraphError::KTooLarge { k, nodes: n });
    }
    let unit = matrix.normalized();
    let rank = rank_by_id(matrix.ids());
    let blocks: Vec<Vec<Vec<(usize, f64)>>> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(KNN_BLOCK)
        .map(|block| {
            let mut sims: Vec<(usize, f64)> = Vec::with_capacity(n);
            block
                .iter()
                .map(|&i| {
                    let q = unit.row(i);
                    sims.clear();
                    sims.extend((0..n).filter(|&j| j != i).map(|j| {
                        let s: f64 = q.iter().zip(unit.row(j)).map(|(a, b)| a * b).sum();
                        (j, s)
                    }));
                    let cmp = |a: &(usize, f64), b: &(usize, f64)| {
                        b.1.total_cmp(&a.1).then(rank[a.0].cmp(&rank[b.0]))
                    };
                    if k > 0 && k < sims.len() {
                        sims.select_nth_unstable_by(k - 1, cmp);
                    }
                    let mut top: Vec<(usize, f64)> = sims[..k].to_vec();
                    top.sort_by(cmp);
                    top
                })
                .collect()
        })
        .collect();
    Ok(blocks.into_iter().flatten().collect())
}

/// Undirected union of every node's top-`k` cosine selections.
pub fn build_knn_graph(matrix: &EmbeddingMatrix, k: usize) -> Result<Graph, GraphError> {
    let sel = knn_selections(matrix, k)?;
    let edges = sel
        .into_iter()
        .enumerate()
        .flat_map(|(i, s)| s.into_iter().map(move |(j, w)| (i.min(j), i.max(j), w)));
    Graph::from_edges(matrix.ids().to_vec(), edges)
}

/// One unit-weight edge per resolvable citation; nodes in corpus order.
pub fn build_citation_graph(corpus: &Corpus) -> Graph {
    let ids: Vec<String> = corpus.documents().iter().map(|d| d.id.clone()).collect();
    let edges = corpus.documents().iter().enumerate().flat_map(|(i, d)| {
        d.references
            .iter()
            .filter_map(|r| corpus.position(&r.cited_id))
            .map(move |j| (i, j, 1.0))
    });
    Graph::from_edges(ids, edges).expect("corpus invariants exclude self-citations")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusteringVariant {
    /// Mean local clustering coefficient, degree < 2 nodes contributing 0.
    #[default]
    MeanLocal,
    /// Global transitivity: closed triplets over connected triplets.
    Transitivity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsOptions {
    pub path_sample_size: usize,
    pub seed: u64,
    pub clustering: ClusteringVariant,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self {
            path_sample_size: 10_000,
            seed: 0,
            clustering: ClusteringVariant::MeanLocal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub average_degree: f64,
    pub density: f64,
    pub is_connected: bool,
    pub component_count: usize,
    pub isolated_nodes: usize,
    pub clustering_coefficient: f64,
    pub clustering_variant: ClusteringVariant,
    /// Mean finite shortest-path length from the sampled sources.
    pub avg_shortest_path: f64,
    pub sample_size: usize,
}

pub fn graph_statistics(g: &Graph, path_sample_size: usize, seed: u64) -> GraphStats {
    graph_statistics_with(
        g,
        &StatsOptions {
            path_sample_size,
            seed,
            clustering: ClusteringVariant::MeanLocal,
        },
    )
}

pub fn graph_statistics_with(g: &Graph, opts: &StatsOptions) -> GraphStats {
    let n = g.node_count();
    let m = g.edge_count();
    let component_count = connected_components(g)
        .into_iter()
        .max()
        .map_or(0, |c| c + 1);
    let sample_size = opts.path_sample_size.max(1).min(n);
    let (dist_sum, pairs) = sampled_path_lengths(g, sample_size, opts.seed);
    GraphStats {
        nodes: n,
        edges: m,
        average_degree: if n == 0 {
            0.0
        } else {
            2.0 * m as f64 / n as f64
        },
        density: if n < 2 {
            0.0
        } else {
            2.0 * m as f64 / (n as f64 * (n as f64 - 1.0))
        },
        is_connected: component_count == 1,
        component_count,
        isolated_nodes: (0..n).filter(|&i| g.degree(i) == 0).count(),
        clustering_coefficient: clustering_coefficient(g, opts.clustering),
        clustering_variant: opts.clustering,
        avg_shortest_path: if pairs == 0 {
            0.0
        } else {
            dist_sum as f64 / pairs as f64
        },
        sample_size,
    }
}

/// Component index of every node, numbered in order of first node.
pub fn connected_components(g: &Graph) -> Vec<usize> {
    let n = g.node_count();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            for &(u, _) in g.neighbors(v) {
                if comp[u] == usize::MAX {
                    comp[u] = next;
                    queue.push_back(u);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Number of triangles through each node.
fn triangles(g: &Graph) -> Vec<usize> {
    (0..g.node_count())
        .into_par_iter()
        .map(|v| {
            let nb = g.neighbors(v);
            let mut t = 0;
            for (a, &(x, _)) in nb.iter().enumerate() {
                for &(y, _) in &nb[a + 1..] {
                    if g.has_edge(x, y) {
                        t += 1;
                    }
                }
            }
            t
        })
        .collect()
}

pub fn clustering_coefficient(g: &Graph, variant: ClusteringVariant) -> f64 {
    let n = g.node_count();
    if n == 0 {
        return 0.0;
    }
    let tri = triangles(g);
    match variant {
        ClusteringVariant::MeanLocal => {
            let sum: f64 = (0..n)
                .map(|v| {
                    let d = g.degree(v);
                    if d < 2 {
                        0.0
                    } else {
                        2.0 * tri[v] as f64 / (d as f64 * (d as f64 - 1.0))
                    }
                })
                .sum();
            sum / n as f64
        }
        ClusteringVariant::Transitivity => {
            let closed: usize = tri.iter().sum();
            let triples: usize = (0..n)
                .map(|v| g.degree(v) * g.degree(v).saturating_sub(1) / 2)
                .sum();
            if triples == 0 {
                0.0
            } else {
                closed as f64 / triples as f64
            }
        }
    }
}

fn bfs_distances(g: &Graph, source: usize) -> (u64, u64) {
    let mut dist = vec![u32::MAX; g.node_count()];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    let (mut sum, mut count) = (0u64, 0u64);
    while let Some(v) = queue.pop_front() {
        for &(u, _) in g.neighbors(v) {
            if dist[u] == u32::MAX {
                dist[u] = dist[v] + 1;
                sum += u64::from(dist[u]);
                count += 1;
                queue.push_back(u);
            }
        }
    }
    (sum, count)
}

fn sampled_path_lengths(g: &Graph, sources: usize, seed: u64) -> (u64, u64) {
    let n = g.node_count();
    if n == 0 {
        return (0, 0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, n, sources).into_vec();
    picked.sort_unstable();
    picked
        .par_iter()
        .map(|&s| bfs_distances(g, s))
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeOverlap {
    pub shared: usize,
    pub only_first: usize,
    pub only_second: usize,
}

impl EdgeOverlap {
    /// Shared edges as a fraction of the union.
    pub fn shared_fraction(&self) -> f64 {
        let union = self.shared + self.only_first + self.only_second;
        if union == 0 {
            0.0
        } else {
            self.shared as f64 / union as f64
        }
    }
}

/// Compares edge sets as unordered node-id pairs.
pub fn edge_overlap(g1: &Graph, g2: &Graph) -> EdgeOverlap {
    let a = g1.id_pairs();
    let b = g2.id_pairs();
    let shared = a.intersection(&b).count();
    EdgeOverlap {
        shared,
        only_first: a.len() - shared,
        only_second: b.len() - shared,
    }
}

/// Uniform simple graph on the same nodes with the same number of edges.
pub fn random_graph_like(g: &Graph, seed: u64) -> Result<Graph, GraphError> {
    let n = g.node_count();
    if n < 2 {
        return Err(GraphError::TooFewNodes(2));
    }
    let pairs = n * (n - 1) / 2;
    let m = g.edge_count();
    if m > pairs {
        return Err(GraphError::TooManyEdges { edges: m, nodes: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, pairs, m);
    let edges = picked.into_iter().map(|p| {
        let (i, j) = unrank_pair(p, n);
        (i, j, 1.0)
    });
    Graph::from_edges(g.ids().to_vec(), edges)
}

/// Maps a linear index over pairs `(i, j)`, `i < j`, in row-major order.
fn unrank_pair(mut p: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = n - 1 - i;
        if p < row {
            return (i, i + 1 + p);
        }
        p -= row;
        i += 1;
    }
}

pub const EDGE_COLUMNS: [&str; 3] = ["id_a", "id_b", "weight"];

/// Edge list with `id_a < id_b`, rows sorted by `(id_a, id_b)`.
pub fn write_edge_list<W: Write>(g: &Graph, mut w: W) -> io::Result<()> {
    let mut rows: Vec<(&str, &str, f64)> = g
        .edges()
        .map(|(i, j, wt)| {
            let (a, b) = (g.ids[i].as_str(), g.ids[j].as_str());
            if a < b {
                (a, b, wt)
            } else {
                (b, a, wt)
            }
        })
        .collect();
    rows.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    writeln!(w, "{}", EDGE_COLUMNS.join("\t"))?;
    for (a, b, wt) in rows {
        writeln!(w, "{a}\t{b}\t{wt}")?;
    }
    Ok(())
}

/// Reads an edge list over a known node set.
pub fn read_edge_list<R: BufRead>(r: R, ids: Vec<String>) -> Result<Graph, GraphError> {
    let pos: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut edges = Vec::new();
    for (line, cols) in tsv_rows(r, &EDGE_COLUMNS)? {
        let a = *pos
            .get(cols[0].as_str())
            .ok_or_else(|| GraphError::UnknownId(cols[0].clone()))?;
        let b = *pos
            .get(cols[1].as_str())
            .ok_or_else(|| GraphError::UnknownId(cols[1].clone()))?;
        edges.push((a, b, parse_field::<f64>(line, "weight", &cols[2])?));
    }
    drop(pos);
    Graph::from_edges(ids, edges)
}
