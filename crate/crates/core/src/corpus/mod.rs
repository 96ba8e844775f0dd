//! Document data model, corpus loading/validation and synthetic corpora.

mod synthetic;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use synthetic::{
    generate_synthetic_corpus, planted_subtopic, planted_topic, topic_label, SyntheticSpec,
};

/// Keys every corpus record must carry, in canonical order.
pub const RECORD_KEYS: [&str; 10] = [
    "id",
    "title",
    "abstract",
    "authors",
    "year",
    "venue",
    "fields",
    "categories",
    "labels",
    "references",
];

pub const MIN_YEAR: i32 = 1900;
pub const MAX_YEAR: i32 = 2100;

/// Total in-text mentions above which a reference is reported as anomalous.
pub const ANOMALOUS_MENTION_COUNT: u32 = 100;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: String },
    #[error("line {line}: unknown field `{field}` (strict mode)")]
    UnknownField { line: usize, field: String },
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("document `{id}`: {message}")]
    Invalid { id: String, message: String },
    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),
}

/// In-text citation counts of one reference, split by IMRaD section.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionCounts {
    pub intro: u32,
    pub methods: u32,
    pub results: u32,
    pub discussion: u32,
}

impl SectionCounts {
    pub fn new(intro: u32, methods: u32, results: u32, discussion: u32) -> Self {
        Self {
            intro,
            methods,
            results,
            discussion,
        }
    }

    pub fn total(&self) -> u64 {
        u64::from(self.intro)
            + u64::from(self.methods)
            + u64::from(self.results)
            + u64::from(self.discussion)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceEntry {
    pub cited_id: String,
    pub counts: SectionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub authors: Vec<String>,
    pub year: i32,
    pub venue: String,
    pub fields: Vec<String>,
    pub categories: Vec<String>,
    pub labels: Vec<String>,
    pub references: Vec<ReferenceEntry>,
}

impl Document {
    /// Checks the per-document invariants. Cross-document checks (id
    /// uniqueness) live in [`Corpus::new`].
    pub fn check(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if !(MIN_YEAR..=MAX_YEAR).contains(&self.year) {
            return Err(format!(
                "year {} outside [{MIN_YEAR}, {MAX_YEAR}]",
                self.year
            ));
        }
        let mut seen = HashSet::new();
        for r in &self.references {
            if r.cited_id == self.id {
                return Err("document cites itself".into());
            }
            if !seen.insert(r.cited_id.as_str()) {
                return Err(format!("duplicate reference to `{}`", r.cited_id));
            }
            if r.counts.total() == 0 {
                return Err(format!(
                    "reference to `{}` has zero in-text citations",
                    r.cited_id
                ));
            }
        }
        Ok(())
    }

    /// Title and abstract joined the way the base encoder reads them.
    pub fn text(&self) -> String {
        if self.abstract_text.is_empty() {
            self.title.clone()
        } else {
            format!("{} {}", self.title, self.abstract_text)
        }
    }
}

/// Returns true iff the two documents share at least one author id.
pub fn is_self_citation(citing: &Document, cited: &Document) -> bool {
    let a: HashSet<&str> = citing.authors.iter().map(String::as_str).collect();
    cited.authors.iter().any(|x| a.contains(x.as_str()))
}

/// An immutable, indexed collection of documents.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(documents.len());
        for (pos, doc) in documents.iter().enumerate() {
            doc.check().map_err(|message| CorpusError::Invalid {
                id: doc.id.clone(),
                message,
            })?;
            if index.insert(doc.id.clone(), pos).is_some() {
                return Err(CorpusError::DuplicateId(doc.id.clone()));
            }
        }
        Ok(Self { documents, index })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.position(id).map(|i| &self.documents[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// References of `doc` that resolve to a document in this corpus.
    pub fn resolved_references<'a>(
        &'a self,
        doc: &'a Document,
    ) -> impl Iterator<Item = &'a ReferenceEntry> + 'a {
        doc.references
            .iter()
            .filter(move |r| self.contains(&r.cited_id))
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.documents
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Reject records carrying keys outside [`RECORD_KEYS`].
    pub strict: bool,
}

pub fn load_corpus(path: &Path, opts: LoadOptions) -> Result<Corpus, CorpusError> {
    let file = File::open(path)?;
    read_corpus(BufReader::new(file), opts)
}

pub fn read_corpus<R: BufRead>(reader: R, opts: LoadOptions) -> Result<Corpus, CorpusError> {
    let mut documents = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let doc = parse_record(&line, lineno, opts)?;
        doc.check().map_err(|message| CorpusError::Malformed {
            line: lineno,
            message: format!("document `{}`: {message}", doc.id),
        })?;
        if !seen.insert(doc.id.clone()) {
            return Err(CorpusError::DuplicateId(doc.id));
        }
        documents.push(doc);
    }
    Corpus::new(documents)
}

fn parse_record(line: &str, lineno: usize, opts: LoadOptions) -> Result<Document, CorpusError> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
    let mut obj = match value {
        serde_json::Value::Object(o) => o,
        _ => {
            return Err(CorpusError::Malformed {
                line: lineno,
                message: "record is not an object".into(),
            })
        }
    };
    for key in RECORD_KEYS {
        if !obj.contains_key(key) {
            return Err(CorpusError::MissingField {
                line: lineno,
                field: key.into(),
            });
        }
    }
    let unknown: Vec<String> = obj
        .keys()
        .filter(|k| !RECORD_KEYS.contains(&k.as_str()))
        .cloned()
        .collect();
    if let Some(first) = unknown.first() {
        if opts.strict {
            return Err(CorpusError::UnknownField {
                line: lineno,
                field: first.clone(),
            });
        }
        for k in &unknown {
            obj.remove(k);
        }
    }
    serde_json::from_value(serde_json::Value::Object(obj)).map_err(|e| CorpusError::Malformed {
        line: lineno,
        message: e.to_string(),
    })
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut w: W) -> io::Result<()> {
    for doc in corpus.documents() {
        serde_json::to_writer(&mut w, doc)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_corpus(corpus, &mut w)?;
    w.flush()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct UnresolvedReference {
    pub citing_id: String,
    pub cited_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub unresolved: Vec<UnresolvedReference>,
    pub empty_titles: Vec<String>,
    pub empty_abstracts: Vec<String>,
    /// Human-readable descriptions of suspicious reference counts.
    pub count_anomalies: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.unresolved.is_empty()
            && self.empty_titles.is_empty()
            && self.empty_abstracts.is_empty()
            && self.count_anomalies.is_empty()
    }
}

pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut report = ValidationReport::default();
    for doc in corpus.documents() {
        if doc.title.trim().is_empty() {
            report.empty_titles.push(doc.id.clone());
        }
        if doc.abstract_text.trim().is_empty() {
            report.empty_abstracts.push(doc.id.clone());
        }
        for r in &doc.references {
            if !corpus.contains(&r.cited_id) {
                report.unresolved.push(UnresolvedReference {
                    citing_id: doc.id.clone(),
                    cited_id: r.cited_id.clone(),
                });
            }
            let total = r.counts.total();
            if total > u64::from(ANOMALOUS_MENTION_COUNT) {
                report.count_anomalies.push(format!(
                    "{} -> {}: {total} in-text citations",
                    doc.id, r.cited_id
                ));
            }
        }
    }
    report
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn doc(id: &str, authors: &[&str], refs: &[(&str, [u32; 4])]) -> Document {
        Document {
            id: id.into(),
            title: format!("title of {id}"),
            abstract_text: format!("abstract of {id}"),
            authors: authors.iter().map(|s| s.to_string()).collect(),
            year: 2020,
            venue: "venue".into(),
            fields: vec![],
            categories: vec![],
            labels: vec![],
            references: refs
                .iter()
                .map(|(c, n)| ReferenceEntry {
                    cited_id: c.to_string(),
                    counts: SectionCounts::new(n[0], n[1], n[2], n[3]),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::doc;
    use super::*;

    fn line(id: &str) -> String {
        format!(
            r#"{{"id":"{id}","title":"t","abstract":"a","authors":["A1"],"year":2010,"venue":"v","fields":["phys"],"categories":["c"],"labels":["l"],"references":[]}}"#
        )
    }

    #[test]
    fn loads_three_records_in_order() {
        let text = format!("{}\n{}\n{}\n", line("d1"), line("d2"), line("d3"));
        let c = read_corpus(text.as_bytes(), LoadOptions::default()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.position("d3"), Some(2));
        assert_eq!(c.documents()[1].id, "d2");
    }

    #[test]
    fn duplicate_id_is_named() {
        let text = format!("{}\n{}\n", line("d1"), line("d1"));
        let err = read_corpus(text.as_bytes(), LoadOptions::default()).unwrap_err();
        assert!(matches!(&err, CorpusError::DuplicateId(id) if id == "d1"));
        assert!(err.to_string().contains("d1"));
    }

    #[test]
    fn zero_count_reference_rejected() {
        let rec = r#"{"id":"d1","title":"t","abstract":"a","authors":[],"year":2010,"venue":"v","fields":[],"categories":[],"labels":[],"references":[{"cited_id":"x","counts":{"intro":0,"methods":0,"results":0,"discussion":0}}]}"#;
        let err = read_corpus(rec.as_bytes(), LoadOptions::default()).unwrap_err();
        assert!(
            matches!(err, CorpusError::Malformed { line: 1, .. }),
            "{err}"
        );
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{}\n{{not json\n", line("d1"));
        let err = read_corpus(text.as_bytes(), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 2, .. }));
    }

    #[test]
    fn missing_field_reported() {
        let rec = r#"{"id":"d1","title":"t","abstract":"a","authors":[],"year":2010,"venue":"v","fields":[],"categories":[],"labels":[]}"#;
        let err = read_corpus(rec.as_bytes(), LoadOptions::default()).unwrap_err();
        assert!(
            matches!(&err, CorpusError::MissingField { line: 1, field } if field == "references")
        );
    }

    #[test]
    fn unknown_keys_depend_on_strict_flag() {
        let rec = line("d1").replace("\"venue\"", "\"extra\":1,\"venue\"");
        assert!(read_corpus(rec.as_bytes(), LoadOptions { strict: false }).is_ok());
        let err = read_corpus(rec.as_bytes(), LoadOptions { strict: true }).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownField { .. }));
    }

    #[test]
    fn year_and_self_reference_invariants() {
        let mut d = doc("d1", &[], &[]);
        d.year = 1899;
        assert!(Corpus::new(vec![d]).is_err());
        let d = doc("d1", &[], &[("d1", [1, 0, 0, 0])]);
        assert!(Corpus::new(vec![d]).is_err());
        let d = doc("d1", &[], &[("x", [1, 0, 0, 0]), ("x", [0, 1, 0, 0])]);
        assert!(Corpus::new(vec![d]).is_err());
    }

    #[test]
    fn validation_reports_unresolved_and_empty_abstract() {
        let mut d2 = doc("d2", &[], &[]);
        d2.abstract_text.clear();
        let c = Corpus::new(vec![doc("d1", &[], &[("zzz", [1, 0, 0, 0])]), d2]).unwrap();
        let r = validate_corpus(&c);
        assert_eq!(r.unresolved.len(), 1);
        assert_eq!(r.unresolved[0].cited_id, "zzz");
        assert_eq!(r.empty_abstracts, vec!["d2".to_string()]);

        let clean = Corpus::new(vec![
            doc("d1", &[], &[("d2", [1, 0, 0, 0])]),
            doc("d2", &[], &[]),
        ])
        .unwrap();
        assert!(validate_corpus(&clean).is_empty());
    }

    #[test]
    fn self_citation_by_shared_author() {
        let a = doc("a", &["A1", "A2"], &[]);
        let b = doc("b", &["A2", "A3"], &[]);
        let c = doc("c", &["A2"], &[]);
        let d = doc("d", &["A9"], &[]);
        let e = doc("e", &[], &[]);
        assert!(is_self_citation(&a, &b));
        assert!(is_self_citation(&b, &a));
        assert!(!is_self_citation(&c, &d));
        assert!(!is_self_citation(&e, &c));
    }

    #[test]
    fn empty_abstract_falls_back_to_title() {
        let mut d = doc("d", &[], &[]);
        d.abstract_text.clear();
        assert_eq!(d.text(), d.title);
    }
}
