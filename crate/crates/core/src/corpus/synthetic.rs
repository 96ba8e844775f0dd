//! Synthetic corpora with planted topical structure.
//!
//! Every document belongs to exactly one planted topic and, optionally, to
//! one subtopic of it (document `i` of a topic sits in subtopic
//! `i % subtopics`). Its text mixes words from the topic and subtopic
//! vocabularies with background words shared by all topics, it carries the
//! topic as label and primary category, and it cites
//!
//! * documents of its own subtopic (substantive citations),
//! * documents of sibling subtopics (peripheral citations),
//! * documents of other topics (noise citations).
//!
//! Citation counts follow a fixed correlation rule: substantive citations
//! are mentioned in Results and Discussion (1 to 3 times each, plus 0 or 1
//! Introduction and 0 to 2 Methods mentions); peripheral and noise citations
//! get a single Introduction mention. Authors are drawn from a per-topic
//! pool, so self-citations only occur inside a topic.

use rand::seq::{index, IndexedRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Document, ReferenceEntry, SectionCounts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub topics: usize,
    pub docs_per_topic: usize,
    /// Words private to each topic.
    pub topic_vocab: usize,
    /// Background words shared by all topics.
    pub shared_vocab: usize,
    pub title_tokens: usize,
    pub abstract_tokens: usize,
    /// Probability that a token is drawn from the topic vocabulary.
    pub topic_token_share: f64,
    /// Subtopics per topic; 1 disables the subtopic level.
    pub subtopics: usize,
    /// Words private to each subtopic.
    pub subtopic_vocab: usize,
    /// Share of topical tokens drawn from the subtopic vocabulary.
    pub subtopic_token_share: f64,
    /// Within-subtopic references per document.
    pub intra_refs: usize,
    /// References to sibling subtopics of the same topic per document.
    pub peripheral_refs: usize,
    /// Cross-topic (noise) references per document.
    pub noise_refs: usize,
    /// References to ids outside the corpus per document.
    pub external_refs: usize,
    pub authors_per_topic: usize,
    pub authors_per_doc: usize,
    /// Broad fields; topic `t` belongs to `fields[t % fields.len()]`.
    pub fields: Vec<String>,
    /// Probability of a secondary category borrowed from another topic.
    pub secondary_category_prob: f64,
    pub first_year: i32,
    pub last_year: i32,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            topics: 4,
            docs_per_topic: 50,
            topic_vocab: 40,
            shared_vocab: 400,
            title_tokens: 8,
            abstract_tokens: 60,
            topic_token_share: 0.3,
            subtopics: 1,
            subtopic_vocab: 0,
            subtopic_token_share: 0.0,
            intra_refs: 8,
            peripheral_refs: 0,
            noise_refs: 3,
            external_refs: 1,
            authors_per_topic: 30,
            authors_per_doc: 2,
            fields: ["life", "physical", "health", "engineering", "social"]
                .into_iter()
                .map(String::from)
                .collect(),
            secondary_category_prob: 0.2,
            first_year: 2000,
            last_year: 2022,
        }
    }
}

impl SyntheticSpec {
    /// The 4 topics x 250 documents fixture used by the end-to-end suites.
    /// Perfunctory citations point to sibling subtopics, so the least
    /// important references are topically close to the citing document.
    pub fn fixture() -> Self {
        Self {
            docs_per_topic: 250,
            subtopics: 3,
            subtopic_vocab: 20,
            subtopic_token_share: 0.5,
            peripheral_refs: 3,
            noise_refs: 0,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<(), CorpusError> {
        let fail = |m: String| Err(CorpusError::Infeasible(m));
        if self.topics == 0 || self.docs_per_topic == 0 {
            return fail("topics and docs_per_topic must be positive".into());
        }
        if self.topic_vocab + self.shared_vocab == 0 {
            return fail("empty vocabulary".into());
        }
        if self.topic_vocab == 0 && self.topic_token_share > 0.0 {
            return fail("topic_token_share > 0 requires a topic vocabulary".into());
        }
        if self.shared_vocab == 0 && self.topic_token_share < 1.0 {
            return fail("topic_token_share < 1 requires a shared vocabulary".into());
        }
        if !(0.0..=1.0).contains(&self.topic_token_share)
            || !(0.0..=1.0).contains(&self.secondary_category_prob)
        {
            return fail("probabilities must lie in [0, 1]".into());
        }
        if self.title_tokens == 0 {
            return fail("title_tokens must be positive".into());
        }
        if self.subtopics == 0 || self.subtopics > self.docs_per_topic {
            return fail("subtopics must lie in [1, docs_per_topic]".into());
        }
        if !(0.0..=1.0).contains(&self.subtopic_token_share)
            || (self.subtopic_vocab == 0 && self.subtopic_token_share > 0.0)
        {
            return fail(
                "subtopic_token_share must lie in [0, 1] and needs a subtopic vocabulary".into(),
            );
        }
        let smallest = self.docs_per_topic / self.subtopics;
        if self.intra_refs > smallest - 1 {
            return fail(format!(
                "intra_refs = {} but a subtopic may only have {} other documents",
                self.intra_refs,
                smallest - 1
            ));
        }
        let siblings = self.docs_per_topic - self.docs_per_topic.div_ceil(self.subtopics);
        if self.peripheral_refs > siblings {
            return fail(format!(
                "peripheral_refs = {} but sibling subtopics may only hold {siblings} documents",
                self.peripheral_refs
            ));
        }
        let outside = (self.topics - 1) * self.docs_per_topic;
        if self.noise_refs > outside {
            return fail(format!(
                "noise_refs = {} but only {outside} documents lie outside a topic",
                self.noise_refs
            ));
        }
        if self.authors_per_doc > self.authors_per_topic {
            return fail("authors_per_doc exceeds authors_per_topic".into());
        }
        if self.fields.is_empty() {
            return fail("at least one field is required".into());
        }
        if self.first_year > self.last_year
            || self.first_year < super::MIN_YEAR
            || self.last_year > super::MAX_YEAR
        {
            return fail("invalid year range".into());
        }
        Ok(())
    }
}

pub fn topic_label(t: usize) -> String {
    format!("topic-{t}")
}

fn category(t: usize) -> String {
    format!("cat-{t}")
}

fn doc_id(t: usize, i: usize) -> String {
    format!("t{t}-{i:04}")
}

/// Generates a corpus; a pure function of `(spec, seed)`.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<Corpus, CorpusError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shared: Vec<String> = (0..spec.shared_vocab).map(|w| format!("w{w}")).collect();
    let n = spec.topics * spec.docs_per_topic;
    let mut documents = Vec::with_capacity(n);

    for t in 0..spec.topics {
        let vocab: Vec<String> = (0..spec.topic_vocab).map(|w| format!("t{t}x{w}")).collect();
        let sub_vocab: Vec<Vec<String>> = (0..spec.subtopics)
            .map(|s| {
                (0..spec.subtopic_vocab)
                    .map(|w| format!("t{t}s{s}x{w}"))
                    .collect()
            })
            .collect();
        let pool: Vec<String> = (0..spec.authors_per_topic)
            .map(|a| format!("au-{t}-{a}"))
            .collect();
        for i in 0..spec.docs_per_topic {
            let sub = i % spec.subtopics;
            let draw_text = |len: usize, rng: &mut ChaCha8Rng| -> String {
                (0..len)
                    .map(|_| {
                        let words = if !rng.random_bool(spec.topic_token_share) {
                            &shared
                        } else if rng.random_bool(spec.subtopic_token_share) {
                            &sub_vocab[sub]
                        } else {
                            &vocab
                        };
                        words
                            .choose(rng)
                            .expect("vocabulary checked non-empty")
                            .as_str()
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let title = draw_text(spec.title_tokens, &mut rng);
            let abstract_text = draw_text(spec.abstract_tokens, &mut rng);
            let authors: Vec<String> = index::sample(&mut rng, pool.len(), spec.authors_per_doc)
                .into_iter()
                .map(|a| pool[a].clone())
                .collect();
            let mut categories = vec![category(t)];
            if spec.topics > 1 && rng.random_bool(spec.secondary_category_prob) {
                let other = (t + 1 + rng.random_range(0..spec.topics - 1)) % spec.topics;
                categories.push(category(other));
            }

            let mut references = Vec::new();
            let (same, siblings): (Vec<usize>, Vec<usize>) = (0..spec.docs_per_topic)
                .filter(|&j| j != i)
                .partition(|j| j % spec.subtopics == sub);
            for j in index::sample(&mut rng, same.len(), spec.intra_refs) {
                let j = same[j];
                references.push(ReferenceEntry {
                    cited_id: doc_id(t, j),
                    counts: SectionCounts::new(
                        rng.random_range(0..=1),
                        rng.random_range(0..=2),
                        rng.random_range(1..=3),
                        rng.random_range(1..=3),
                    ),
                });
            }
            for j in index::sample(&mut rng, siblings.len(), spec.peripheral_refs) {
                references.push(ReferenceEntry {
                    cited_id: doc_id(t, siblings[j]),
                    counts: SectionCounts::new(1, 0, 0, 0),
                });
            }
            let outside = (spec.topics - 1) * spec.docs_per_topic;
            for k in index::sample(&mut rng, outside, spec.noise_refs) {
                let ot = k / spec.docs_per_topic;
                let ot = if ot >= t { ot + 1 } else { ot };
                references.push(ReferenceEntry {
                    cited_id: doc_id(ot, k % spec.docs_per_topic),
                    counts: SectionCounts::new(1, 0, 0, 0),
                });
            }
            for e in 0..spec.external_refs {
                references.push(ReferenceEntry {
                    cited_id: format!("ext-{t}-{i}-{e}"),
                    counts: SectionCounts::new(1, 0, rng.random_range(0..=1), 0),
                });
            }
            references.sort_by(|a, b| a.cited_id.cmp(&b.cited_id));

            documents.push(Document {
                id: doc_id(t, i),
                title,
                abstract_text,
                authors,
                year: rng.random_range(spec.first_year..=spec.last_year),
                venue: format!("journal-{t}"),
                fields: vec![spec.fields[t % spec.fields.len()].clone()],
                categories,
                labels: vec![topic_label(t)],
                references,
            });
        }
    }
    Corpus::new(documents)
}

/// Planted subtopic index of a synthetic document id under `spec`.
pub fn planted_subtopic(id: &str, spec: &SyntheticSpec) -> Option<usize> {
    let i: usize = id.rsplit('-').next()?.parse().ok()?;
    Some(i % spec.subtopics.max(1))
}

/// Planted topic index of a synthetic document id.
pub fn planted_topic(id: &str) -> Option<usize> {
    id.strip_prefix('t')?.split('-').next()?.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::write_corpus;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            docs_per_topic: 50,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn four_topics_of_fifty() {
        let c = generate_synthetic_corpus(&small(), 7).unwrap();
        assert_eq!(c.len(), 200);
        for d in c.documents() {
            let t = planted_topic(&d.id).unwrap();
            assert_eq!(d.labels, vec![topic_label(t)]);
            assert_eq!(d.categories[0], category(t));
        }
    }

    #[test]
    fn deterministic_bytes() {
        let a = generate_synthetic_corpus(&small(), 7).unwrap();
        let b = generate_synthetic_corpus(&small(), 7).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_corpus(&a, &mut x).unwrap();
        write_corpus(&b, &mut y).unwrap();
        assert_eq!(x, y);
        let c = generate_synthetic_corpus(&small(), 8).unwrap();
        let mut z = Vec::new();
        write_corpus(&c, &mut z).unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn zero_intra_rate_has_no_within_topic_refs() {
        let spec = SyntheticSpec {
            intra_refs: 0,
            ..small()
        };
        let c = generate_synthetic_corpus(&spec, 1).unwrap();
        for d in c.documents() {
            let t = planted_topic(&d.id);
            for r in &d.references {
                assert_ne!(planted_topic(&r.cited_id), t);
            }
        }
    }

    #[test]
    fn correlation_rule_holds() {
        let c = generate_synthetic_corpus(&small(), 3).unwrap();
        for d in c.documents() {
            let t = planted_topic(&d.id);
            for r in c.resolved_references(d) {
                if planted_topic(&r.cited_id) == t {
                    assert!(r.counts.results >= 1 && r.counts.discussion >= 1);
                } else {
                    assert_eq!(r.counts, SectionCounts::new(1, 0, 0, 0));
                }
            }
        }
    }

    #[test]
    fn fixture_subtopic_citations() {
        let spec = SyntheticSpec {
            docs_per_topic: 60,
            ..SyntheticSpec::fixture()
        };
        let c = generate_synthetic_corpus(&spec, 2).unwrap();
        for d in c.documents() {
            let (t, s) = (planted_topic(&d.id), planted_subtopic(&d.id, &spec));
            let mut peripheral = 0;
            for r in c.resolved_references(d) {
                assert_eq!(planted_topic(&r.cited_id), t);
                if planted_subtopic(&r.cited_id, &spec) == s {
                    assert!(r.counts.results >= 1 && r.counts.discussion >= 1);
                } else {
                    assert_eq!(r.counts, SectionCounts::new(1, 0, 0, 0));
                    peripheral += 1;
                }
            }
            assert_eq!(peripheral, spec.peripheral_refs);
        }
    }

    #[test]
    fn infeasible_rates_rejected() {
        let spec = SyntheticSpec {
            intra_refs: 50,
            ..small()
        };
        assert!(matches!(
            generate_synthetic_corpus(&spec, 1),
            Err(CorpusError::Infeasible(_))
        ));
        let spec = SyntheticSpec {
            topics: 1,
            noise_refs: 1,
            ..small()
        };
        assert!(generate_synthetic_corpus(&spec, 1).is_err());
    }
}
