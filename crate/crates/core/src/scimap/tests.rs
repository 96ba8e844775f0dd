use super::*;
use crate::communities::QualityFunction;
use crate::corpus::test_support::doc;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn partition(ids: &[&str], membership: &[usize]) -> Partition {
    Partition {
        ids: ids.iter().map(|s| s.to_string()).collect(),
        membership: membership.to_vec(),
        quality: 0.0,
        resolution: 1.0,
        quality_function: QualityFunction::Cpm,
        seed: 0,
        tag: String::new(),
    }
}

fn matrix(rows: Vec<(String, Vec<f64>)>) -> EmbeddingMatrix {
    let dim = rows[0].1.len();
    EmbeddingMatrix::from_rows(rows, dim).unwrap()
}

fn topic(id: usize, vector: Vec<f64>) -> Topic {
    Topic {
        id,
        members: Vec::new(),
        vector,
        size: 1,
        x: 0.0,
        y: 0.0,
        field: String::new(),
        interdisciplinarity: 0.0,
        mean_year: 0.0,
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn vdist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn topic_vector_examples() {
    let m = matrix(vec![
        ("a".into(), vec![1.0, 2.0]),
        ("b".into(), vec![-1.0, -2.0]),
        ("c".into(), vec![3.0, 4.0]),
    ]);
    let t = topic_vectors(&partition(&["a", "b", "c"], &[1, 1, 2]), &m).unwrap();
    assert_eq!(t.len(), 2);
    assert_eq!(t[0].vector, vec![0.0, 0.0]);
    assert_eq!(t[1].vector, vec![3.0, 4.0]);
    assert_eq!((t[0].size, t[1].size), (2, 1));
    assert!(matches!(
        topic_vectors(&partition(&["zz"], &[1]), &m),
        Err(MapError::MissingEmbedding(_))
    ));

    let rows: Vec<(String, Vec<f64>)> =
        (0..10).map(|i| (format!("d{i}"), vec![i as f64])).collect();
    let ids: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    let t = topic_vectors(
        &partition(&ids, &[1, 2, 3, 1, 2, 3, 1, 2, 3, 1]),
        &matrix(rows.clone()),
    )
    .unwrap();
    assert_eq!(t.len(), 3);
    assert_eq!(t.iter().map(|t| t.size).sum::<usize>(), 10);
}

#[test]
fn pca_preserves_planar_distances() {
    // Points in a 2-D subspace of R^5.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (u, v) = ([1.0, 2.0, 0.0, -1.0, 0.5], [0.0, 1.0, 3.0, 1.0, -2.0]);
    let topics: Vec<Topic> = (0..12)
        .map(|i| {
            let (a, b): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            topic(i + 1, (0..5).map(|k| a * u[k] + b * v[k] + 7.0).collect())
        })
        .collect();
    let c = layout_2d(&topics, LayoutMethod::Pca, 0).unwrap();
    for i in 0..12 {
        for j in 0..12 {
            assert!((dist(c[i], c[j]) - vdist(&topics[i].vector, &topics[j].vector)).abs() < 1e-6);
        }
    }
}

#[test]
fn two_topics_keep_their_distance() {
    let topics = vec![
        topic(1, vec![1.0, 2.0, 3.0]),
        topic(2, vec![-1.0, 0.0, 5.0]),
    ];
    let d = vdist(&topics[0].vector, &topics[1].vector);
    for method in [LayoutMethod::Pca, LayoutMethod::Stress] {
        let c = layout_2d(&topics, method, 1).unwrap();
        assert!((dist(c[0], c[1]) - d).abs() < 1e-6, "{method:?}");
    }
    assert!(matches!(
        layout_2d(&topics[..1], LayoutMethod::Pca, 0),
        Err(MapError::TooFewTopics(1))
    ));
}

#[test]
fn degenerate_layout_is_jittered_and_seeded() {
    let topics = vec![
        topic(1, vec![1.0, 1.0]),
        topic(2, vec![1.0, 1.0]),
        topic(3, vec![1.0, 1.0]),
    ];
    let a = layout_2d(&topics, LayoutMethod::Stress, 9).unwrap();
    assert_eq!(a, layout_2d(&topics, LayoutMethod::Stress, 9).unwrap());
    assert_ne!(a[0], a[1]);
}

fn planted_topics(seed: u64) -> (Vec<Topic>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..16).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect();
    let mut topics = Vec::new();
    let mut cluster = Vec::new();
    for i in 0..20 {
        let c = i % 4;
        topics.push(topic(
            i + 1,
            centers[c]
                .iter()
                .map(|x| x + rng.random_range(-0.5..0.5))
                .collect(),
        ));
        cluster.push(c);
    }
    (topics, cluster)
}

#[test]
fn planted_clusters_stay_together() {
    let (topics, cluster) = planted_topics(3);
    for method in [LayoutMethod::Pca, LayoutMethod::Stress] {
        let c = layout_2d(&topics, method, 0).unwrap();
        let (mut within, mut nw, mut between, mut nb) = (0.0, 0, 0.0, 0);
        for i in 0..20 {
            for j in i + 1..20 {
                if cluster[i] == cluster[j] {
                    within += dist(c[i], c[j]);
                    nw += 1;
                } else {
                    between += dist(c[i], c[j]);
                    nb += 1;
                }
            }
        }
        assert!(within / (nw as f64) < between / (nb as f64), "{method:?}");
    }
}

#[test]
fn stress_does_not_increase_stress() {
    let (topics, _) = planted_topics(8);
    let vectors: Vec<&[f64]> = topics.iter().map(|t| t.vector.as_slice()).collect();
    let pca = layout_2d(&topics, LayoutMethod::Pca, 0).unwrap();
    let refined = layout_2d(&topics, LayoutMethod::Stress, 0).unwrap();
    let stress_of = |c: &[(f64, f64)]| {
        let mut s = 0.0;
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                s += (dist(c[i], c[j]) - vdist(vectors[i], vectors[j])).powi(2);
            }
        }
        s
    };
    assert!(stress_of(&refined) <= stress_of(&pca));
}

#[test]
fn pca_layout_ignores_input_order() {
    let (topics, _) = planted_topics(5);
    let c = layout_2d(&topics, LayoutMethod::Pca, 0).unwrap();
    let mut rev = topics.clone();
    rev.reverse();
    let r = layout_2d(&rev, LayoutMethod::Pca, 0).unwrap();
    for (a, b) in c.iter().zip(r.iter().rev()) {
        assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
    }
}

fn corpus_with(docs: Vec<(&str, &[&str], &[&str], i32)>) -> Corpus {
    Corpus::new(
        docs.into_iter()
            .map(|(id, fields, cats, year)| {
                let mut d = doc(id, &[], &[]);
                d.fields = fields.iter().map(|s| s.to_string()).collect();
                d.categories = cats.iter().map(|s| s.to_string()).collect();
                d.year = year;
                d
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn field_overlay_examples() {
    let c = corpus_with(vec![
        ("a", &["phys"], &[], 2000),
        ("b", &["phys"], &[], 2000),
        ("c", &["chem"], &[], 2000),
        ("d", &["b"], &[], 2000),
        ("e", &["a"], &[], 2000),
        ("f", &[], &[], 2000),
    ]);
    let p = partition(&["a", "b", "c", "d", "e", "f"], &[1, 1, 1, 2, 2, 3]);
    let f = overlay_field(&p, &c).unwrap();
    assert_eq!(f[&1], "phys");
    assert_eq!(f[&2], "a");
    assert_eq!(f[&3], UNKNOWN_FIELD);
}

#[test]
fn mean_year_examples() {
    let c = corpus_with(vec![
        ("a", &[], &[], 2020),
        ("b", &[], &[], 2022),
        ("c", &[], &[], 2019),
    ]);
    let y = overlay_mean_year(&partition(&["a", "b", "c"], &[1, 1, 2]), &c).unwrap();
    assert_eq!(y[&1], 2021.0);
    assert_eq!(y[&2], 2019.0);
}

fn counts(xs: &[(&str, usize)]) -> BTreeMap<String, usize> {
    xs.iter().map(|(c, n)| (c.to_string(), *n)).collect()
}

#[test]
fn interdisciplinarity_examples() {
    let cats: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let id = CategorySimilarity::identity(cats.clone());
    assert_eq!(
        interdisciplinarity(&counts(&[("a", 7)]), &id, 3).unwrap(),
        0.0
    );
    assert_eq!(
        interdisciplinarity(&counts(&[("a", 2), ("b", 2)]), &id, 2).unwrap(),
        1.0
    );

    // Proportions (0.5, 0.3, 0.2), s_ab = 0.2, s_ac = 0.5, s_bc = 0.1, 5 categories:
    // variety 3/5, Gini 1.2/6 = 0.2, disparity 2·(0.8 + 0.5 + 0.9)/6.
    let s =
        CategorySimilarity::new(cats, vec![1.0, 0.2, 0.5, 0.2, 1.0, 0.1, 0.5, 0.1, 1.0]).unwrap();
    let got = interdisciplinarity(&counts(&[("a", 5), ("b", 3), ("c", 2)]), &s, 5).unwrap();
    let expected = 0.6 * 0.8 * (4.4 / 6.0);
    assert!((got - expected).abs() < 1e-9);

    assert!(matches!(
        interdisciplinarity(&counts(&[("a", 1), ("zz", 1)]), &s, 5),
        Err(MapError::UnknownCategory(_))
    ));
    assert!(matches!(
        interdisciplinarity(&counts(&[("a", 1)]), &s, 0),
        Err(MapError::NoCategories)
    ));
}

#[test]
fn category_similarity_validation() {
    let two = || vec!["a".to_string(), "b".to_string()];
    assert!(CategorySimilarity::new(two(), vec![1.0, 0.3, 0.2, 1.0]).is_err());
    assert!(CategorySimilarity::new(two(), vec![0.9, 0.3, 0.3, 1.0]).is_err());
    assert!(CategorySimilarity::new(two(), vec![1.0, 1.3, 1.3, 1.0]).is_err());
    assert!(
        CategorySimilarity::new(vec!["a".into(), "a".into()], vec![1.0, 0.0, 0.0, 1.0]).is_err()
    );
}

#[test]
fn overlay_interdisciplinarity_uses_identity_fallback() {
    let c = corpus_with(vec![
        ("a", &[], &["x"], 2000),
        ("b", &[], &["y"], 2000),
        ("c", &[], &["x"], 2000),
    ]);
    let p = partition(&["a", "b", "c"], &[1, 1, 2]);
    let d = overlay_interdisciplinarity(&p, &c, None, 2).unwrap();
    assert_eq!(d[&1], 1.0);
    assert_eq!(d[&2], 0.0);
}

fn mapped(n: usize) -> Vec<Topic> {
    (0..n)
        .map(|i| Topic {
            size: i + 1,
            x: i as f64 * 0.5,
            y: -(i as f64),
            field: format!("f{}", i % 2),
            interdisciplinarity: 0.25,
            mean_year: 2000.5 + i as f64,
            ..topic(i + 1, vec![0.0])
        })
        .collect()
}

#[test]
fn export_table_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("map.tsv");
    let topics = mapped(3);
    let written = export_map(&topics, &path, Some(ColorBy::Field)).unwrap();
    assert_eq!(written.len(), 2);
    let rows = read_map_table(std::fs::read(&path).unwrap().as_slice()).unwrap();
    assert_eq!(rows, topics.iter().map(MapRow::from).collect::<Vec<_>>());
    let svg = std::fs::read_to_string(dir.path().join("map.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 3);
    assert!(svg.contains("viewBox="));
    assert!(svg.contains(">f0</text>") && svg.contains(">f1</text>"));
}

#[test]
fn constant_numeric_overlay_has_single_color() {
    let rows: Vec<MapRow> = mapped(4).iter().map(MapRow::from).collect();
    let svg = render_svg(&rows, ColorBy::Interdisciplinarity);
    let fills: std::collections::BTreeSet<&str> = svg
        .match_indices("<circle")
        .map(|(i, _)| {
            let rest = &svg[i..];
            let start = rest.find("fill=\"").unwrap() + 6;
            &rest[start..start + 7]
        })
        .collect();
    assert_eq!(fills.len(), 1);
    assert_eq!(svg.matches("<text").count(), 1);
    let years = render_svg(&rows, ColorBy::MeanYear);
    assert_eq!(years.matches("<text").count(), 2);
}

proptest! {
    #[test]
    fn topic_vectors_are_member_means(
        values in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 1..20),
        comms in prop::collection::vec(1usize..4, 20),
    ) {
        let n = values.len();
        let rows: Vec<(String, Vec<f64>)> = values.iter().enumerate().map(|(i, v)| (format!("d{i:02}"), v.clone())).collect();
        let ids: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
        let mut m = comms[..n].to_vec();
        let mut seen: Vec<usize> = Vec::new();
        for c in m.iter_mut() {
            let k = seen.iter().position(|x| x == c).unwrap_or_else(|| { seen.push(*c); seen.len() - 1 });
            *c = k + 1;
        }
        let p = partition(&ids, &m);
        let t = topic_vectors(&p, &matrix(rows.clone())).unwrap();
        prop_assert_eq!(t.iter().map(|t| t.size).sum::<usize>(), n);
        for topic in &t {
            for k in 0..3 {
                let mean = topic.members.iter().map(|id| rows.iter().find(|r| &r.0 == id).unwrap().1[k]).sum::<f64>() / topic.size as f64;
                prop_assert!((topic.vector[k] - mean).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn interdisciplinarity_in_unit_interval(
        ks in prop::collection::vec(1usize..20, 1..6),
        sims in prop::collection::vec(0.0f64..1.0, 36),
        extra in 0usize..5,
    ) {
        let n = ks.len();
        let cats: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
            for j in i + 1..n {
                values[i * n + j] = sims[i * 6 + j];
                values[j * n + i] = sims[i * 6 + j];
            }
        }
        let s = CategorySimilarity::new(cats.clone(), values).unwrap();
        let c: BTreeMap<String, usize> = cats.into_iter().zip(ks).collect();
        let d = interdisciplinarity(&c, &s, n + extra).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn mean_year_within_member_range(years in prop::collection::vec(1900i32..2030, 1..10)) {
        let docs: Vec<(String, i32)> = years.iter().enumerate().map(|(i, y)| (format!("d{i}"), *y)).collect();
        let c = corpus_with(docs.iter().map(|(id, y)| (id.as_str(), &[][..], &[][..], *y)).collect());
        let ids: Vec<&str> = docs.iter().map(|d| d.0.as_str()).collect();
        let m = overlay_mean_year(&partition(&ids, &vec![1; ids.len()]), &c).unwrap();
        let lo = *years.iter().min().unwrap() as f64;
        let hi = *years.iter().max().unwrap() as f64;
        prop_assert!(m[&1] >= lo - 1e-9 && m[&1] <= hi + 1e-9);
    }
}
