use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{header_fields, write_atomic, Artifacts, PipelineConfig, PipelineError, Stage};
use crate::communities::{
    granularity_sweep, leiden, read_partition, relative_accuracy, write_accuracy_table,
    write_partition,
};
use crate::corpus::{
    generate_synthetic_corpus, load_corpus, validate_corpus, write_corpus, Corpus, LoadOptions,
};
use crate::embedder::{
    embed_base_corpus, embed_corpus, read_matrix_tsv, read_model, satisfaction_rate, train,
    write_matrix_tsv, write_model, EmbeddingMatrix, EmbeddingModel,
};
use crate::evalmetrics::{
    evaluate_ranking, macro_f1, nearest_centroid_classify, read_tasks, write_tasks, LabeledSplit,
};
use crate::experiment::{
    anchors_of, citation_ranking_tasks, importance_scores, run_experiment, shuffled,
};
use crate::importance::{read_scores, write_scores};
use crate::netgraph::{
    build_citation_graph, build_knn_graph, edge_overlap, graph_statistics_with, random_graph_like,
    read_edge_list, write_edge_list, Graph, GraphStats, StatsOptions,
};
use crate::sampler::{
    filter_contradictions, read_triplets, sample_triplets, split_train_validation, write_triplets,
};
use crate::scimap::{
    apply_layout, apply_overlays, layout_2d, render_svg, topic_vectors, CategorySimilarity, MapRow,
};

pub(super) fn execute(
    stage: Stage,
    cfg: &PipelineConfig,
    art: &Artifacts,
) -> Result<(), PipelineError> {
    let out = Out {
        header: header_fields(stage, cfg),
    };
    match stage {
        Stage::Synth => synth(cfg, art, &out),
        Stage::Score => score(cfg, art, &out),
        Stage::Sample => sample(cfg, art, &out),
        Stage::Train => train_stage(cfg, art, &out),
        Stage::Embed => embed(cfg, art, &out),
        Stage::Graph => graph(cfg, art, &out),
        Stage::Stats => stats(cfg, art, &out),
        Stage::Overlap => overlap(cfg, art, &out),
        Stage::Cluster => cluster(cfg, art, &out),
        Stage::Accuracy => accuracy(cfg, art, &out),
        Stage::Map => map(cfg, art, &out),
        Stage::Eval => eval(cfg, art, &out),
        Stage::Sweep => sweep_stage(cfg, art, &out),
    }
}

/// Writes artifacts prefixed with the stage header.
struct Out {
    header: String,
}

impl Out {
    fn write<F>(&self, path: &Path, body: F) -> Result<(), PipelineError>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        let mut buf = format!("# {}\n", self.header).into_bytes();
        body(&mut buf)
            .map_err(|e| PipelineError::io(format!("serializing {}", path.display()), e))?;
        write_atomic(path, &buf)
    }
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path)
        .map_err(|e| PipelineError::io(format!("reading {}", path.display()), e))
}

/// Drops leading `#` comment lines so the remainder can go to a JSON parser.
fn strip_comments(text: &str) -> String {
    text.lines()
        .skip_while(|l| l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Validation(format!("{}: {e}", path.display()))
}

fn load(cfg: &PipelineConfig, art: &Artifacts) -> Result<Corpus, PipelineError> {
    let corpus = load_corpus(&art.corpus, LoadOptions { strict: cfg.strict })?;
    let report = validate_corpus(&corpus);
    if !report.unresolved.is_empty() {
        log::debug!(
            "{} references point outside the corpus",
            report.unresolved.len()
        );
    }
    let problems: Vec<String> = report
        .empty_titles
        .iter()
        .map(|id| format!("document `{id}` has an empty title"))
        .chain(report.count_anomalies.iter().cloned())
        .collect();
    if cfg.strict && !problems.is_empty() {
        return Err(PipelineError::Validation(problems.join("; ")));
    }
    for p in &problems {
        log::warn!("{p}");
    }
    Ok(corpus)
}

fn synth(cfg: &PipelineConfig, art: &Artifacts, out: &Out) -> Result<(), PipelineError> {
    let corpus =
        generate_synthetic_corpus(&cfg.synth.spec, cfg.synth.seed).map_err(|e| match e {
            crate::corpus::CorpusError::Infeasible(m) => PipelineError::Config(m),
            other => other.into(),
        })?;
    out.write(&art.corpus, |w| write_corpus(&corpus, w))
}

fn score(cfg: &PipelineConfig, art: &Artifacts, out: &Out) -> Result<(), PipelineError> {
    let corpus = load(cfg, art)?;
    let base = if cfg.importance.features.include_title_similarity {
        Some(embed_base_corpus(&corpus, &cfg.model.base)?)
    } else {
        None
    };
    let (weights, scores) = importance_scores(
        &corpus,
        &cfg.importance.features,
        cfg.importance.method,
        base.as_ref(),
    )?;
    let json = serde_json::to_string_pretty(&weights.to_json())
        .map_err(|e| PipelineError::Internal(e.to_string()))?;
    out.write(&art.weights, |w| writeln!(w, "{json}"))?;
    out.write(&art.scores, |w| write_scores(&scores, w))
}

fn sample(cfg: &PipelineConfig, art: &Artifacts, out: &Out) -> Result<(), PipelineError> {
    let corpus = load(cfg, art)?;
    let scores = read_scores(read_text(&art.scores)?.as_bytes()).map_err(io_err(&art.scores))?;
    let sampled = sample_triplets(&corpus, &scores, &cfg.sampler)?;
    let filtered = filter_contradictions(&sampled, cfg.split.contradiction_scope);
    log::info!(
        "sampled {} triplets, {} after contradiction filtering",
        sampled.len(),
        filtered.len()
    );
    let (train_set, validation) =
        split_train_validation(&filtered, cfg.split.train_fraction, cfg.split.seed)?;
    out.write(&art.triplets_train, |w| write_triplets(&train_set, w))?;
    out.write(&art.triplets_validation, |w| write_triplets(&validation, w))
}

fn train_stage(cfg: &PipelineConfig, art: &Artifacts, out: &Out) -> Result<(), PipelineError> {
    let corpus = load(cfg, art)?;
    let train_set = read_triplets(read_text(&art.triplets_train)?.as_bytes())
        .map_err(io_err(&art.triplets_train))?;
    let validation = read_triplets(read_text(&art.triplets_validation)?.as_bytes())
        .map_err(io_err(&art.triplets_validation))?;
    let initial = EmbeddingModel::random(cfg.model.base, cfg.model.dim_out, cfg.model.init_seed)?;
    let (model, history) = train(&initial, &train_set, &corpus, &cfg.train, Some(&validation))?;
    out.write(&art.model, |w| {
        write_model(&model, &mut *w)?;
        writeln!(w)
    })?;
    out.write(&art.training, |w| {
        writeln!(w, "epoch\ttrain_loss\tvalidation_loss")?;
        for (i, loss) in history.train_loss.iter().enumerate() {
            let v = history
                .validation_loss
                .get(i)
                .map_or(String::new(), f64::to_string);
            writeln!(w, "{}\t{loss}\t{v}", i + 1)?;
        }
        Ok(())
    })
}

fn read_model_file(path: &Path) -> Result<EmbeddingModel, PipelineError> {
    let text = strip_comments(&read_text(path)?);
    read_model(text.as_bytes())
        .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
}

fn read_embeddings(path: &Path, corpus: &Corpus) -> Result<EmbeddingMatrix, PipelineError> {
    let m = read_matrix_tsv(read_text(path)?.as_bytes())
        .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))?;
    let same = m
        .ids()
        .iter()
        .map(String::as_str)
        .eq(corpus.documents().iter().map(|d| d.id.as_str()));
    if !same {
        return Err(PipelineError::Validation(format!(
            "{} does not cover the corpus documents in order; re-run `embed`",
            path.display()
        )));
    }
    Ok(m)
}

fn corpus_ids(corpus: &Corpus) -> Vec<String> {
    corpus.documents().iter().map(|d| d.id.clone()).collect()
}

fn read_graph(path: &Path, corpus: &Corpus) -> Result<Graph, PipelineError> {
    read_edge_list(read_text(path)?.as_bytes(), corpus_ids(corpus))
        .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
}

fn embed(cfg: &PipelineConfig, art: &Artifacts, out: &Out) -> Result<(), PipelineError> {
    let corpus = load(cfg, art)?;
    let model = read_model_file(&art.model)?;
    let m = embed_corpus(&corpus, &model)?;
    out.write(&art.embeddings, |w| write_matrix_tsv(&m, w))
}

fn graph(cfg: &PipelineConfig, art: &Artifacts, out: &Out) -> Result<(), PipelineError> {
    let corpus = load(cfg, art)?;
    let m = read_embeddings(&art.embeddings, &corpus)?;
    let knn = build_knn_graph(&m, cfg.graph.k)?;
    let citation = build_citation_graph(&corpus);
    out.write(&art.knn_edges, |w| write_edge_list(&knn, w))?;
    out.write(&art.citation_edges, |w| write_edge_list(&citation, w))
}

fn stats(cfg: &PipelineConfig, art: &Artifacts, out: &Out) -> Result<(), PipelineError> {
    let corpus = load(cfg, art)?;
    let knn = read_graph(&art.knn_edges, &corpus)?;
    let citation = read_graph(&art.citation_edges, &corpus)?;
    let random = random_graph_like(&knn, cfg.graph.random_seed)?;
    let opts = StatsOptions {
        path_sample_size: cfg.graph.path_sample_size,
        seed: cfg.graph.random_seed,
        clustering: cfg.graph.clustering,
    };
    let all: Vec<GraphStats> = [&knn, &citation, &random]
        .par_iter()
        .map(|g| graph_statistics_with(g, &opts))
        .collect();
    type Row = (&'static str, fn(&GraphStats) -> String);
    let rows: [Row; 10] = [
        ("nodes", |s| s.nodes.to_string()),
        ("edges", |s| s.edges.to_string()),
        ("average_degree", |s| s.average_degree.to_string()),
        ("density", |s| s.density.to_string()),
        ("clustering_coefficient", |s| {
            s.clustering_coefficient.to_string()
        }),
        ("avg_shortest_path", |s| s.avg_shortest_path.to_string()),
        ("is_connected", |s| s.is_connected.to_string()),
        ("component_count", |s| s.component_count.to_string()),
        ("isolated_nodes", |s| s.isolated_nodes.to_string()),
        ("path_sample_size", |s| s.sample_size.to_string()),
    ];
    out.write(&art.stats, |w| {
        writeln!(w, "metric\tknn\tcitation\trandom")?;
        for (name, f) in rows {
            writeln!(w, "{name}\t{}\t{}\t{}", f(&all[0]), f(&all[1]), f(&all[2]))?;
        }
        Ok(())
    })
}

fn overlap(cfg: &PipelineConfig, art: &Artifacts, out: &Out) -> Result<(), PipelineError> {
    let corpus = load(cfg, art)?;
    let knn = read_graph(&art.knn_edges, &corpus)?;
    let citation = read_graph(&art.citation_edges, &corpus)?;
    let random = random_graph_like(&knn, cfg.graph.random_seed)?;
    let pairs = [
        ("knn", &knn, "citation", &citation),
        ("knn", &knn, "random", &random),
        ("citation", &citation, "random", &random),
    ];
    out.write(&art.overlap, |w| {
        writeln!(
            w,
            "first\tsecond\tshared\tonly_first\tonly_second\tshared_fraction"
        )?;
        for (na, a, nb, b) in pairs {
            let o = edge_overlap(a, b);
            writeln!(
                w,
                "{na}\t{nb}\t{}\t{}\t{}\t{}",
                o.shared,
                o.only_first,
                o.only_second,
                o.shared_fraction()
            )?;
        }
        Ok(())
    })
}

fn cluster(cfg: &PipelineConfig, art: &Artifacts, out: &Out) -> Result<(), PipelineError> {
    let corpus = load(cfg, art)?;
    let knn = read_graph(&art.knn_edges, &corpus)?;
    let mut p = leiden(&knn, &cfg.cluster.leiden())?;
    p.tag = "trained".into();
    log::info!("{} communities, quality {}", p.community_count(), p.quality);
    out.write(&art.partition, |w| write_partition(&p, w))
}

fn accuracy(cfg: &PipelineConfig, art: &Artifacts, out: &Out) -> Result<(), PipelineError> {
    let corpus = load(cfg, art)?;
    let knn = read_graph(&art.knn_edges, &corpus)?;
    let base = build_knn_graph(&embed_base_corpus(&corpus, &cfg.model.base)?, cfg.graph.k)?;
    let c = &cfg.cluster;
    let mut table = granularity_sweep(
        &knn,
        &corpus,
        c.quality_function,
        &c.resolutions,
        c.seed,
        "trained",
    )?;
    let base_table = granularity_sweep(
        &base,
        &corpus,
        c.quality_function,
        &c.resolutions,
        c.seed,
        "base",
    )?;
    table.rows.extend(base_table.rows);
    let relative = relative_accuracy(&table)?;
    out.write(&art.accuracy, |w| write_accuracy_table(&table, w))?;
    out.write(&art.relative_accuracy, |w| {
        writeln!(w, "method\trelative_accuracy")?;
        for (m, v) in &relative {
            writeln!(w, "{m}\t{v}")?;
        }
        Ok(())
    })
}

/// Reads a long-format category similarity table with columns
/// `category_a`, `category_b`, `similarity`. Pairs may be listed in either
/// order; unlisted off-diagonal pairs are 0 and the diagonal defaults to 1.
pub(crate) fn read_category_similarity(path: &Path) -> Result<CategorySimilarity, PipelineError> {
    let text = read_text(path)?;
    let rows = crate::util::tsv_rows(text.as_bytes(), &["category_a", "category_b", "similarity"])
        .map_err(io_err(path))?;
    let mut pairs: HashMap<(String, String), f64> = HashMap::new();
    let mut cats = BTreeSet::new();
    for (line, c) in rows {
        let v: f64 = crate::util::parse_field(line, "similarity", &c[2]).map_err(io_err(path))?;
        cats.insert(c[0].clone());
        cats.insert(c[1].clone());
        pairs.insert((c[0].clone(), c[1].clone()), v);
    }
    let cats: Vec<String> = cats.into_iter().collect();
    let mut values = Vec::with_capacity(cats.len() * cats.len());
    for a in &cats {
        for b in &cats {
            let v = pairs
                .get(&(a.clone(), b.clone()))
                .or_else(|| pairs.get(&(b.clone(), a.clone())))
                .copied()
                .unwrap_or(if a == b { 1.0 } else { 0.0 });
            values.push(v);
        }
    }
    CategorySimilarity::new(cats, values)
        .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
}

fn map(cfg: &PipelineConfig, art: &Artifacts, out: &Out) -> Result<(), PipelineError> {
    let corpus = load(cfg, art)?;
    let partition = read_partition(read_text(&art.partition)?.as_bytes())
        .map_err(|e| PipelineError::Validation(format!("{}: {e}", art.partition.display())))?;
    let m = read_embeddings(&art.embeddings, &corpus)?;
    let catsim = cfg
        .paths
        .category_similarity
        .as_deref()
        .map(read_category_similarity)
        .transpose()?;
    let total = cfg.map.total_categories.unwrap_or_else(|| {
        let seen: BTreeSet<&str> = corpus
            .documents()
            .iter()
            .flat_map(|d| d.categories.iter().map(String::as_str))
            .collect();
        seen.len().max(1)
    });
    let mut topics = topic_vectors(&partition, &m)?;
    let coords = layout_2d(&topics, cfg.map.layout, cfg.map.seed)?;
    apply_layout(&mut topics, &coords)?;
    apply_overlays(&mut topics, &partition, &corpus, catsim.as_ref(), total)?;
    let rows: Vec<MapRow> = topics.iter().map(MapRow::from).collect();
    out.write(&art.map_table, |w| crate::scimap::write_map_table(&rows, w))?;
    let svg = render_svg(&rows, cfg.map.color_by);
    let body: String = svg
        .lines()
        .skip_while(|l| l.starts_with("<?xml"))
        .flat_map(|l| [l, "\n"])
        .collect();
    let text = format!("<!-- {} -->\n{body}", out.header);
    write_atomic(&art.map_svg, text.as_bytes())
}

fn eval(cfg: &PipelineConfig, art: &Artifacts, out: &Out) -> Result<(), PipelineError> {
    let corpus = load(cfg, art)?;
    let m = read_embeddings(&art.embeddings, &corpus)?;
    let validation = read_triplets(read_text(&art.triplets_validation)?.as_bytes())
        .map_err(io_err(&art.triplets_validation))?;
    let tasks = match &cfg.paths.tasks {
        Some(path) => read_tasks(read_text(path)?.as_bytes())
            .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))?,
        None => {
            let scores =
                read_scores(read_text(&art.scores)?.as_bytes()).map_err(io_err(&art.scores))?;
            let mut anchors = anchors_of(&validation);
            anchors.sort_unstable();
            citation_ranking_tasks(&corpus, &scores, &anchors, &cfg.eval.tasks)
        }
    };
    if tasks.is_empty() {
        return Err(PipelineError::Validation(
            "no ranking tasks to evaluate".into(),
        ));
    }
    let report = evaluate_ranking(&m, &tasks, cfg.eval.similarity)?;
    let satisfaction = satisfaction_rate(&m, &validation);
    let classification = classify(&corpus, &m, cfg)?;
    out.write(&art.tasks, |w| write_tasks(&tasks, w))?;
    out.write(&art.eval, |w| {
        crate::evalmetrics::write_report(&report, &mut *w)?;
        writeln!(w, "validation_satisfaction\t{satisfaction}")?;
        if let Some((f1, n)) = classification {
            writeln!(w, "classification_test_size\t{n}")?;
            writeln!(w, "classification_macro_f1\t{f1}")?;
        }
        Ok(())
    })
}

/// Nearest-centroid classification of the first label on a seeded hold-out
/// split; `None` when the corpus carries no labels.
fn classify(
    corpus: &Corpus,
    m: &EmbeddingMatrix,
    cfg: &PipelineConfig,
) -> Result<Option<(f64, usize)>, PipelineError> {
    let labeled: BTreeMap<&str, &str> = corpus
        .documents()
        .iter()
        .filter_map(|d| d.labels.first().map(|l| (d.id.as_str(), l.as_str())))
        .collect();
    let ids: Vec<&str> = labeled.keys().copied().collect();
    let order = shuffled(&ids, cfg.eval.classification_seed);
    let n_test = ((order.len() as f64) * cfg.eval.classification_test_fraction).round() as usize;
    let (test, train_ids) = order.split_at(n_test.min(order.len()));
    let pair = |id: &&str| ((*id).to_owned(), labeled[*id].to_owned());
    let train: Vec<(String, String)> = train_ids.iter().map(pair).collect();
    let seen: BTreeSet<&str> = train.iter().map(|(_, c)| c.as_str()).collect();
    let test: Vec<(String, String)> = test
        .iter()
        .filter(|id| seen.contains(labeled[**id]))
        .map(pair)
        .collect();
    if train.is_empty() || test.is_empty() {
        return Ok(None);
    }
    let gold: Vec<String> = test.iter().map(|(_, c)| c.clone()).collect();
    let n = test.len();
    let predicted = nearest_centroid_classify(m, &LabeledSplit { train, test })?;
    Ok(Some((macro_f1(&predicted, &gold)?, n)))
}

pub const SWEEP_COLUMNS: [&str; 9] = [
    "margin",
    "h",
    "train_triplets",
    "validation_triplets",
    "untrained_satisfaction",
    "validation_satisfaction",
    "untrained_map",
    "validation_map",
    "validation_ndcg",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub margin: f64,
    pub h: usize,
    pub train_triplets: usize,
    pub validation_triplets: usize,
    pub untrained_satisfaction: f64,
    pub validation_satisfaction: f64,
    pub untrained_map: f64,
    pub validation_map: f64,
    pub validation_ndcg: f64,
}

/// Trains and evaluates one model per (margin, H) cell, margins outermost.
pub fn sweep(
    corpus: &Corpus,
    cfg: &PipelineConfig,
    margins: &[f64],
    h_values: &[usize],
) -> Result<Vec<SweepRow>, PipelineError> {
    if margins.is_empty() || h_values.is_empty() {
        return Err(PipelineError::Config(
            "sweep needs at least one margin and one H value".into(),
        ));
    }
    let cells: Vec<(f64, usize)> = margins
        .iter()
        .flat_map(|&m| h_values.iter().map(move |&h| (m, h)))
        .collect();
    cells
        .par_iter()
        .map(|&(margin, h)| {
            let mut e = cfg.experiment();
            e.train.margin = margin;
            e.sampler.h_hard = h;
            let r = run_experiment(corpus, &e)?.report;
            Ok(SweepRow {
                margin,
                h,
                train_triplets: r.train_triplets,
                validation_triplets: r.validation_triplets,
                untrained_satisfaction: r.untrained_satisfaction,
                validation_satisfaction: r.trained_satisfaction,
                untrained_map: r.untrained_map,
                validation_map: r.trained_map,
                validation_ndcg: r.trained_ndcg,
            })
        })
        .collect()
}

fn sweep_stage(cfg: &PipelineConfig, art: &Artifacts, out: &Out) -> Result<(), PipelineError> {
    let corpus = load(cfg, art)?;
    let rows = sweep(&corpus, cfg, &cfg.sweep.margins, &cfg.sweep.h_values)?;
    out.write(&art.sweep, |w| {
        writeln!(w, "{}", SWEEP_COLUMNS.join("\t"))?;
        for r in &rows {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.margin,
                r.h,
                r.train_triplets,
                r.validation_triplets,
                r.untrained_satisfaction,
                r.validation_satisfaction,
                r.untrained_map,
                r.validation_map,
                r.validation_ndcg
            )?;
        }
        Ok(())
    })
}
