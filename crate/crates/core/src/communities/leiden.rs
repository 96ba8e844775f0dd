use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::netgraph::Graph;

/// Moves below this size are treated as no improvement, which keeps
/// floating-point noise from cycling nodes between equivalent communities.
const GAIN_EPS: f64 = 1e-12;

/// Working graph for one aggregation level. `node_w` is the node size (CPM)
/// or strength (modularity); `self_w` is the weight internal to the node.
#[derive(Clone)]
pub(super) struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_w: Vec<f64>,
    node_w: Vec<f64>,
}

impl Level {
    pub(super) fn from_graph(g: &Graph, node_w: Vec<f64>) -> Self {
        let n = g.node_count();
        Self {
            adj: (0..n).map(|i| g.neighbors(i).to_vec()).collect(),
            self_w: vec![0.0; n],
            node_w,
        }
    }

    fn n(&self) -> usize {
        self.adj.len()
    }

    fn aggregate(&self, part: &[usize], count: usize) -> Level {
        let mut self_w = vec![0.0; count];
        let mut node_w = vec![0.0; count];
        let mut cross: Vec<(usize, usize, f64)> = Vec::new();
        for v in 0..self.n() {
            let a = part[v];
            self_w[a] += self.self_w[v];
            node_w[a] += self.node_w[v];
            for &(u, w) in &self.adj[v] {
                let b = part[u];
                if a == b {
                    // Each internal edge is visited from both ends.
                    self_w[a] += w / 2.0;
                } else {
                    cross.push((a, b, w));
                }
            }
        }
        cross.sort_by_key(|&(a, b, _)| (a, b));
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); count];
        for (a, b, w) in cross {
            match adj[a].last_mut() {
                Some((last, acc)) if *last == b => *acc += w,
                _ => adj[a].push((b, w)),
            }
        }
        Level {
            adj,
            self_w,
            node_w,
        }
    }
}

/// Relabels to `0..k` in order of first appearance; returns `k`.
pub(super) fn compact(labels: &mut [usize]) -> usize {
    let mut map = vec![
        usize::MAX;
        labels
            .len()
            .max(labels.iter().copied().max().map_or(0, |m| m + 1))
    ];
    let mut next = 0;
    for l in labels.iter_mut() {
        if map[*l] == usize::MAX {
            map[*l] = next;
            next += 1;
        }
        *l = map[*l];
    }
    next
}

/// Scratch accumulator for node-to-community weights.
struct Accum {
    weight: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<usize>,
}

impl Accum {
    fn new(n: usize) -> Self {
        Self {
            weight: vec![0.0; n],
            seen: vec![false; n],
            touched: Vec::new(),
        }
    }

    fn add(&mut self, c: usize, w: f64) {
        if !self.seen[c] {
            self.seen[c] = true;
            self.touched.push(c);
        }
        self.weight[c] += w;
    }

    fn clear(&mut self) {
        for &c in &self.touched {
            self.weight[c] = 0.0;
            self.seen[c] = false;
        }
        self.touched.clear();
    }
}

/// Queue-based local moving. Labels in `comm` must be below `level.n()`.
fn move_nodes(level: &Level, comm: &mut [usize], r: f64, rng: &mut ChaCha8Rng) {
    let n = level.n();
    let mut comm_w = vec![0.0; n];
    let mut comm_n = vec![0usize; n];
    for v in 0..n {
        comm_w[comm[v]] += level.node_w[v];
        comm_n[comm[v]] += 1;
    }
    let mut empty: Vec<usize> = (0..n).rev().filter(|&c| comm_n[c] == 0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut queue: VecDeque<usize> = order.into();
    let mut queued = vec![true; n];
    let mut acc = Accum::new(n);

    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        let old = comm[v];
        let wv = level.node_w[v];
        comm_w[old] -= wv;
        comm_n[old] -= 1;
        for &(u, w) in &level.adj[v] {
            acc.add(comm[u], w);
        }
        let gain = |c: usize, k: f64| k - r * wv * comm_w[c];
        let stay = gain(old, acc.weight[old]);
        let (mut best, mut best_gain) = (old, stay);
        for &c in &acc.touched {
            let g = gain(c, acc.weight[c]);
            if g > best_gain {
                best = c;
                best_gain = g;
            }
        }
        if comm_n[old] > 0 && 0.0 > best_gain {
            best = *empty
                .last()
                .expect("a label is free whenever a community has two nodes");
            best_gain = 0.0;
        }
        if best != old && best_gain <= stay + GAIN_EPS {
            best = old;
        }
        acc.clear();

        comm_w[best] += wv;
        comm_n[best] += 1;
        comm[v] = best;
        if best != old {
            if empty.last() == Some(&best) {
                empty.pop();
            }
            if comm_n[old] == 0 {
                empty.push(old);
            }
            for &(u, _) in &level.adj[v] {
                if !queued[u] && comm[u] != best {
                    queued[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
}

/// Refinement: merges singletons inside each community into well-connected
/// sub-communities, choosing targets at random with probability
/// proportional to `exp(gain / theta)`.
fn refine(
    level: &Level,
    comm: &[usize],
    ncomm: usize,
    r: f64,
    theta: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let n = level.n();
    let mut refined: Vec<usize> = (0..n).collect();
    let mut rw = level.node_w.clone();
    let mut rn = vec![1usize; n];
    // Weight from each refined community to the rest of its parent community.
    let mut ext = vec![0.0; n];
    for v in 0..n {
        for &(u, w) in &level.adj[v] {
            if comm[u] == comm[v] {
                ext[v] += w;
            }
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); ncomm];
    for v in 0..n {
        members[comm[v]].push(v);
    }
    let mut acc = Accum::new(n);
    let mut cands: Vec<(usize, f64)> = Vec::new();
    for mut nodes in members {
        if nodes.len() < 2 {
            continue;
        }
        let total: f64 = nodes.iter().map(|&v| level.node_w[v]).sum();
        nodes.shuffle(rng);
        for v in nodes {
            if rn[refined[v]] != 1 {
                continue;
            }
            let wv = level.node_w[v];
            let well_connected = |e: f64, w: f64| e >= r * w * (total - w);
            if !well_connected(ext[v], wv) {
                continue;
            }
            for &(u, w) in &level.adj[v] {
                if comm[u] == comm[v] {
                    acc.add(refined[u], w);
                }
            }
            cands.clear();
            cands.push((refined[v], 0.0));
            for &c in &acc.touched {
                if c == refined[v] || !well_connected(ext[c], rw[c]) {
                    continue;
                }
                let g = acc.weight[c] - r * wv * rw[c];
                if g >= 0.0 {
                    cands.push((c, g));
                }
            }
            let top = cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
            let probs: Vec<f64> = cands.iter().map(|c| ((c.1 - top) / theta).exp()).collect();
            let mut pick = rng.random::<f64>() * probs.iter().sum::<f64>();
            let mut chosen = cands.len() - 1;
            for (i, p) in probs.iter().enumerate() {
                if pick < *p {
                    chosen = i;
                    break;
                }
                pick -= p;
            }
            let target = cands[chosen].0;
            if target != refined[v] {
                let k_vt = acc.weight[target];
                let own = refined[v];
                ext[target] += ext[v] - 2.0 * k_vt;
                rw[target] += wv;
                rn[target] += 1;
                rw[own] = 0.0;
                rn[own] = 0;
                refined[v] = target;
            }
            acc.clear();
        }
    }
    refined
}

/// One full move / refine / aggregate cycle started from `start`.
pub(super) fn leiden_pass(
    base: &Level,
    start: &[usize],
    r: f64,
    theta: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut level = base.clone();
    let mut comm = start.to_vec();
    compact(&mut comm);
    let mut node_of: Vec<usize> = (0..base.n()).collect();
    loop {
        move_nodes(&level, &mut comm, r, rng);
        let ncomm = compact(&mut comm);
        if ncomm == level.n() {
            break;
        }
        let mut refined = refine(&level, &comm, ncomm, r, theta, rng);
        let mut nref = compact(&mut refined);
        if nref == level.n() {
            // Refinement made no progress; aggregate the moved partition.
            refined = comm.clone();
            nref = ncomm;
        }
        let mut next = vec![0; nref];
        for v in 0..level.n() {
            next[refined[v]] = comm[v];
        }
        level = level.aggregate(&refined, nref);
        for x in &mut node_of {
            *x = refined[*x];
        }
        comm = next;
    }
    node_of.into_iter().map(|x| comm[x]).collect()
}
