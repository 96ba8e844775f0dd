use super::*;
use crate::corpus::test_support::doc;
use crate::netgraph::test_graphs::{named, unweighted};
use proptest::prelude::*;
use rand::Rng;

fn cpm(res: f64, seed: u64) -> LeidenConfig {
    LeidenConfig::new(QualityFunction::Cpm, res, seed)
}

fn two_cliques() -> Graph {
    let mut e = Vec::new();
    for base in [0, 5] {
        for i in 0..5 {
            for j in i + 1..5 {
                e.push((base + i, base + j));
            }
        }
    }
    e.push((4, 5));
    unweighted(10, &e)
}

/// All set partitions of `0..n` as restricted growth strings.
fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for c in 0..=max + 1 {
            cur.push(c);
            rec(i + 1, n, cur, max.max(c), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        let mut cur = vec![0];
        rec(1, n, &mut cur, 0, &mut out);
    }
    out
}

fn is_connected_subset(g: &Graph, members: &[usize]) -> bool {
    let set: HashSet<usize> = members.iter().copied().collect();
    let mut seen = HashSet::from([members[0]]);
    let mut queue = VecDeque::from([members[0]]);
    while let Some(v) = queue.pop_front() {
        for &(u, _) in g.neighbors(v) {
            if set.contains(&u) && seen.insert(u) {
                queue.push_back(u);
            }
        }
    }
    seen.len() == members.len()
}

fn random_graph(n: usize, p: f64, seed: u64, weighted: bool) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                let w = if weighted {
                    rng.random_range(0.1..1.0)
                } else {
                    1.0
                };
                e.push((i, j, w));
            }
        }
    }
    Graph::from_edges(named(n), e).unwrap()
}

#[test]
fn two_cliques_split() {
    let p = leiden(&two_cliques(), &cpm(0.5, 0)).unwrap();
    assert_eq!(p.community_count(), 2);
    assert!(p.membership[..5].iter().all(|&c| c == p.membership[0]));
    assert!(p.membership[5..].iter().all(|&c| c == p.membership[5]));
    assert_ne!(p.membership[0], p.membership[5]);
    let best = all_partitions(10)
        .iter()
        .map(|m| partition_quality(&two_cliques(), m, QualityFunction::Cpm, 0.5))
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((p.quality - best).abs() < 1e-9);
}

#[test]
fn complete_graph_merges_and_high_resolution_isolates() {
    let mut e = Vec::new();
    for i in 0..5 {
        for j in i + 1..5 {
            e.push((i, j));
        }
    }
    let k5 = unweighted(5, &e);
    assert_eq!(leiden(&k5, &cpm(0.9, 3)).unwrap().community_count(), 1);
    let p = leiden(&k5, &cpm(1.5, 3)).unwrap();
    assert_eq!(p.community_count(), 5);
    assert_eq!(p.membership, vec![1, 2, 3, 4, 5]);
}

#[test]
fn rejects_bad_input() {
    assert!(matches!(
        leiden(&unweighted(0, &[]), &cpm(1.0, 0)),
        Err(CommunityError::EmptyGraph)
    ));
    assert!(matches!(
        leiden(&unweighted(2, &[(0, 1)]), &cpm(0.0, 0)),
        Err(CommunityError::InvalidResolution(_))
    ));
}

/// Structured graphs with at most 8 nodes.
pub(crate) fn small_suite() -> Vec<(&'static str, Graph)> {
    let clique = |n: usize, offset: usize| -> Vec<(usize, usize)> {
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i + offset, j + offset)))
            .collect()
    };
    let cycle = |n: usize| -> Vec<(usize, usize)> { (0..n).map(|i| (i, (i + 1) % n)).collect() };
    let path = |n: usize| -> Vec<(usize, usize)> { (0..n - 1).map(|i| (i, i + 1)).collect() };
    let star = |n: usize| -> Vec<(usize, usize)> { (1..n).map(|i| (0, i)).collect() };
    let bipartite = |a: usize, b: usize| -> Vec<(usize, usize)> {
        (0..a)
            .flat_map(|i| (a..a + b).map(move |j| (i, j)))
            .collect()
    };
    let joined = |sizes: &[usize], bridges: &[(usize, usize)]| {
        let mut e = Vec::new();
        let mut off = 0;
        for &s in sizes {
            e.extend(clique(s, off));
            off += s;
        }
        e.extend_from_slice(bridges);
        (off, e)
    };
    let mut out: Vec<(&'static str, Graph)> = Vec::new();
    let mut add = |name, n: usize, e: Vec<(usize, usize)>| out.push((name, unweighted(n, &e)));
    add("K5", 5, clique(5, 0));
    add("K8", 8, clique(8, 0));
    add("C6", 6, cycle(6));
    add("C8", 8, cycle(8));
    add("P7", 7, path(7));
    add("S8", 8, star(8));
    add("K3,3", 6, bipartite(3, 3));
    add("K2,5", 7, bipartite(2, 5));
    let (n, e) = joined(&[4, 4], &[(3, 4)]);
    add("barbell-4-4", n, e);
    let (n, e) = joined(&[3, 3], &[(2, 3)]);
    add("two-triangles", n, e);
    let (n, e) = joined(&[3, 3, 2], &[(2, 3), (5, 6), (7, 0)]);
    add("ring-3-3-2", n, e);
    let (n, e) = joined(&[5, 3], &[(0, 5), (1, 6)]);
    add("K5-K3-double-bridge", n, e);
    add(
        "grid-2x4",
        8,
        vec![
            (0, 1),
            (1, 2),
            (2, 3),
            (4, 5),
            (5, 6),
            (6, 7),
            (0, 4),
            (1, 5),
            (2, 6),
            (3, 7),
        ],
    );
    add("isolated-and-edge", 4, vec![(0, 1)]);
    let weighted = Graph::from_edges(
        named(6),
        [
            (0, 1, 1.0),
            (1, 2, 0.9),
            (0, 2, 0.8),
            (3, 4, 0.7),
            (4, 5, 0.6),
            (3, 5, 0.5),
            (2, 3, 0.2),
        ],
    )
    .unwrap();
    out.push(("weighted-triangles", weighted));
    out
}

pub(crate) const SUITE_RESOLUTIONS: [f64; 6] = [0.05, 0.2, 0.4, 0.6, 0.8, 1.2];

#[test]
fn cpm_matches_exhaustive_optimum_on_small_graphs() {
    for (name, g) in small_suite() {
        let n = g.node_count();
        let parts = all_partitions(n);
        for res in SUITE_RESOLUTIONS {
            let best = parts
                .iter()
                .map(|m| partition_quality(&g, m, QualityFunction::Cpm, res))
                .fold(f64::NEG_INFINITY, f64::max);
            for seed in 0..3 {
                let p = leiden(&g, &cpm(res, seed)).unwrap();
                assert!(
                    (p.quality - best).abs() < 1e-9,
                    "{name} res {res}: {} vs {best}",
                    p.quality
                );
            }
        }
    }
}

#[test]
fn random_small_graphs_end_in_local_optimum() {
    // Random instances can require joint multi-community moves that no
    // local heuristic finds; the guarantee checked here is local optimality.
    for seed in 0..60u64 {
        let n = 3 + (seed as usize % 6);
        let g = random_graph(n, 0.5, seed, seed % 2 == 1);
        for res in [0.1, 0.3, 0.6] {
            let p = leiden(&g, &cpm(res, seed)).unwrap();
            let q = |m: &[usize]| partition_quality(&g, m, QualityFunction::Cpm, res);
            for v in 0..n {
                for c in 1..=n + 1 {
                    let mut m = p.membership.clone();
                    m[v] = c;
                    assert!(q(&m) <= p.quality + 1e-9);
                }
            }
            for a in 1..=n {
                for b in 1..=n {
                    let m: Vec<usize> = p
                        .membership
                        .iter()
                        .map(|&x| if x == b { a } else { x })
                        .collect();
                    assert!(q(&m) <= p.quality + 1e-9);
                }
            }
        }
    }
}

#[test]
fn communities_connected_and_quality_monotone() {
    for seed in 0..20u64 {
        let g = random_graph(200, 0.03, seed, true);
        for qf in [QualityFunction::Cpm, QualityFunction::Modularity] {
            let res = if qf == QualityFunction::Cpm {
                0.05
            } else {
                1.0
            };
            let (p, trace) = leiden_traced(&g, &LeidenConfig::new(qf, res, seed)).unwrap();
            for members in p.communities() {
                assert!(!members.is_empty());
                assert!(is_connected_subset(&g, &members));
            }
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "{trace:?}");
            }
            assert!((p.quality - partition_quality(&g, &p.membership, qf, res)).abs() < 1e-9);
        }
    }
}

#[test]
fn deterministic_per_seed() {
    let g = random_graph(150, 0.05, 9, true);
    let a = leiden(&g, &cpm(0.05, 4)).unwrap();
    let b = leiden(&g, &cpm(0.05, 4)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn modularity_finds_cliques() {
    let p = leiden(
        &two_cliques(),
        &LeidenConfig::new(QualityFunction::Modularity, 1.0, 0),
    )
    .unwrap();
    assert_eq!(p.community_count(), 2);
    assert!(p.quality > 0.3);
}

#[test]
fn label_similarity_examples() {
    let mut a = doc("a", &[], &[]);
    let mut b = doc("b", &[], &[]);
    a.labels = vec!["x".into(), "y".into()];
    b.labels = vec!["y".into(), "z".into()];
    assert!((label_similarity(&a, &b) - 0.5).abs() < 1e-15);
    assert_eq!(label_similarity(&a, &a), 1.0);
    b.labels = vec!["q".into()];
    assert_eq!(label_similarity(&a, &b), 0.0);
    b.labels.clear();
    assert_eq!(label_similarity(&a, &b), 0.0);
}

fn labelled_corpus(labels: &[&[&str]]) -> Corpus {
    Corpus::new(
        labels
            .iter()
            .enumerate()
            .map(|(i, ls)| {
                let mut d = doc(&format!("n{i:03}"), &[], &[]);
                d.labels = ls.iter().map(|s| s.to_string()).collect();
                d
            })
            .collect(),
    )
    .unwrap()
}

fn partition_of(membership: Vec<usize>) -> Partition {
    Partition {
        ids: named(membership.len()),
        membership,
        quality: 0.0,
        resolution: 1.0,
        quality_function: QualityFunction::Cpm,
        seed: 0,
        tag: String::new(),
    }
}

#[test]
fn accuracy_six_doc_fixture() {
    let c = labelled_corpus(&[
        &["a"],
        &["a", "b"],
        &["b"],
        &["c"],
        &["c", "d"],
        &["a", "c"],
    ]);
    let p = partition_of(vec![1, 1, 1, 2, 2, 2]);
    let docs = c.documents();
    let mut brute = 0.0;
    for i in 0..6 {
        for j in i + 1..6 {
            if p.membership[i] == p.membership[j] {
                brute += label_similarity(&docs[i], &docs[j]);
            }
        }
    }
    let got = clustering_accuracy(&p, &c).unwrap();
    assert!((got - brute / 15.0).abs() < 1e-12);
    assert_eq!(
        clustering_accuracy(&partition_of((1..=6).collect()), &c).unwrap(),
        0.0
    );
    assert!(matches!(
        clustering_accuracy(&partition_of(vec![1]), &c),
        Err(CommunityError::TooFewDocuments(1))
    ));
}

#[test]
fn relative_accuracy_examples() {
    let row = |m: &str, r: f64, a: f64| AccuracyRow {
        method: m.into(),
        resolution: r,
        communities: 1,
        accuracy: a,
    };
    let t = AccuracyTable {
        rows: vec![row("x", 1.0, 0.2), row("y", 1.0, 0.1)],
    };
    let s = relative_accuracy(&t).unwrap();
    assert!((s["x"] - 4.0 / 3.0).abs() < 1e-12);
    assert!((s["y"] - 2.0 / 3.0).abs() < 1e-12);
    let single = AccuracyTable {
        rows: vec![row("x", 1.0, 0.3), row("x", 2.0, 0.1)],
    };
    assert_eq!(relative_accuracy(&single).unwrap()["x"], 1.0);
    let missing = AccuracyTable {
        rows: vec![row("x", 1.0, 0.3), row("y", 2.0, 0.1)],
    };
    assert!(matches!(
        relative_accuracy(&missing),
        Err(CommunityError::MissingLevel { .. })
    ));
    let zero = AccuracyTable {
        rows: vec![row("x", 1.0, 0.0)],
    };
    assert!(matches!(
        relative_accuracy(&zero),
        Err(CommunityError::ZeroMeanAccuracy(_))
    ));
}

#[test]
fn sweep_single_resolution_matches_standalone() {
    let g = two_cliques();
    let c = labelled_corpus(&[&["a"] as &[&str]; 10]);
    let t = granularity_sweep(&g, &c, QualityFunction::Cpm, &[0.5], 7, "m").unwrap();
    let p = leiden(&g, &cpm(0.5, 7)).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.rows[0].communities, p.community_count());
    assert_eq!(t.rows[0].accuracy, clustering_accuracy(&p, &c).unwrap());
    assert!(granularity_sweep(&g, &c, QualityFunction::Cpm, &[], 7, "m").is_err());
}

#[test]
fn partition_and_table_round_trip() {
    let mut p = leiden(&two_cliques(), &cpm(0.5, 1)).unwrap();
    p.tag = "knn".into();
    let mut buf = Vec::new();
    write_partition(&p, &mut buf).unwrap();
    assert_eq!(read_partition(buf.as_slice()).unwrap(), p);
    let t = AccuracyTable {
        rows: vec![AccuracyRow {
            method: "m".into(),
            resolution: 0.125,
            communities: 3,
            accuracy: 0.1 + 0.2,
        }],
    };
    let mut buf = Vec::new();
    write_accuracy_table(&t, &mut buf).unwrap();
    assert_eq!(read_accuracy_table(buf.as_slice()).unwrap(), t);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn accuracy_matches_pair_loop(
        labels in prop::collection::vec(prop::collection::vec(0u8..4, 0..3), 2..30),
        comms in prop::collection::vec(1usize..5, 30),
    ) {
        let names: Vec<Vec<String>> = labels.iter().map(|l| l.iter().map(|x| format!("l{x}")).collect()).collect();
        let refs: Vec<Vec<&str>> = names.iter().map(|l| l.iter().map(String::as_str).collect()).collect();
        let slices: Vec<&[&str]> = refs.iter().map(Vec::as_slice).collect();
        let c = labelled_corpus(&slices);
        let n = labels.len();
        let mut m = comms[..n].to_vec();
        compact(&mut m);
        let p = partition_of(m.iter().map(|x| x + 1).collect());
        let docs = c.documents();
        let mut brute = 0.0;
        let mut max_sim: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let s = label_similarity(&docs[i], &docs[j]);
                max_sim = max_sim.max(s);
                if p.membership[i] == p.membership[j] {
                    brute += s;
                }
            }
        }
        let a = clustering_accuracy(&p, &c).unwrap();
        prop_assert!((a - brute / (n * (n - 1) / 2) as f64).abs() < 1e-12);
        prop_assert!(a >= 0.0 && a <= max_sim + 1e-12);
    }

    #[test]
    fn relative_scores_sum_to_method_count(accs in prop::collection::vec(0.01f64..1.0, 6)) {
        let rows = accs.iter().enumerate().map(|(i, &a)| AccuracyRow {
            method: format!("m{}", i % 3),
            resolution: (i / 3) as f64 + 0.5,
            communities: 1,
            accuracy: a,
        }).collect();
        let s = relative_accuracy(&AccuracyTable { rows }).unwrap();
        prop_assert!((s.values().sum::<f64>() - 3.0).abs() < 1e-12);
    }
}
