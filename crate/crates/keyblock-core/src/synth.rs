//! Deterministic synthetic corpus generation for desk-scale experiments.
//!
//! Each query gets fresh random terms. Relevant documents plant those terms in
//! one block drawn uniformly from the blocks whose position bins lie in
//! `signal_positions`, plus one block containing only synonyms of the query
//! terms; irrelevant documents contain only filler vocabulary. A lexicon ships
//! with the corpus: per-term synonym sets and a pool of terms that never occur
//! in any document, so random expansions match nothing.
//!
//! Sentences are sized so that two of them exceed the default 63-token block
//! limit: the DP segmenter then reproduces the generated blocks exactly, and
//! position-bin arithmetic carries over from generation to analysis.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::position_of;
use crate::corpus::{Document, Lexicon, Qrels, Query};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_queries: usize,
    pub docs_per_query: usize,
    pub blocks_per_doc: usize,
    /// Fraction of each query's documents that are relevant (grade 1).
    pub relevant_fraction: f64,
    /// Position bins (1-based, within 1..=p) eligible for planted signals.
    pub signal_positions: Vec<usize>,
    pub p: usize,
    /// Terms per query.
    pub query_terms: usize,
    pub synonyms_per_term: usize,
    /// Words per sentence including the trailing period token.
    pub sentence_len: usize,
    pub filler_vocab: usize,
    pub pool_size: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_queries: 8,
            docs_per_query: 20,
            blocks_per_doc: 20,
            relevant_fraction: 0.2,
            signal_positions: (1..=10).collect(),
            p: 10,
            query_terms: 3,
            synonyms_per_term: 2,
            sentence_len: 32,
            filler_vocab: 200,
            pool_size: 50,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_queries == 0 || self.docs_per_query == 0 || self.blocks_per_doc == 0 {
            return Err(Error::InvalidParam(
                "all synthetic counts must be >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.relevant_fraction) {
            return Err(Error::InvalidParam(
                "relevant_fraction must be in [0, 1]".into(),
            ));
        }
        if self.p == 0 {
            return Err(Error::InvalidParam("p must be >= 1".into()));
        }
        if self.signal_positions.iter().any(|&b| b < 1 || b > self.p) {
            return Err(Error::InvalidParam(format!(
                "signal_positions must lie in 1..={}, got {:?}",
                self.p, self.signal_positions
            )));
        }
        if self.sentence_len < 2 {
            return Err(Error::InvalidParam("sentence_len must be >= 2".into()));
        }
        let planted = 2 * self.query_terms + self.query_terms * self.synonyms_per_term;
        if self.sentence_len - 1 < planted.max(1) {
            return Err(Error::InvalidParam(format!(
                "sentence_len {} too short to plant {} terms",
                self.sentence_len, planted
            )));
        }
        if self.query_terms == 0 || self.filler_vocab == 0 {
            return Err(Error::InvalidParam(
                "query_terms and filler_vocab must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub corpus: Vec<Document>,
    pub queries: Vec<Query>,
    pub qrels: Qrels,
    pub lexicon: Lexicon,
}

fn fresh_word(rng: &mut ChaCha12Rng, used: &mut HashSet<String>) -> String {
    loop {
        let len = rng.gen_range(5..=8);
        let word: String = (0..len)
            .map(|_| rng.gen_range(b'a'..=b'z') as char)
            .collect();
        if used.insert(word.clone()) {
            return word;
        }
    }
}

/// Generate (corpus, queries, qrels, lexicon); bit-identical for a fixed seed.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut used = HashSet::new();

    let filler: Vec<String> = (0..spec.filler_vocab)
        .map(|_| fresh_word(&mut rng, &mut used))
        .collect();
    let pool: Vec<String> = (0..spec.pool_size)
        .map(|_| fresh_word(&mut rng, &mut used))
        .collect();

    // signal-eligible block indices (identical for every document)
    let candidates: Vec<usize> = (1..=spec.blocks_per_doc)
        .filter(|&i| {
            let bin = position_of(i, spec.blocks_per_doc, spec.p).expect("index in range");
            spec.signal_positions.contains(&bin)
        })
        .collect();

    let rel_count = ((spec.docs_per_query as f64 * spec.relevant_fraction).round() as usize)
        .min(spec.docs_per_query);

    let mut corpus = Vec::new();
    let mut queries = Vec::new();
    let mut qrels = Qrels::default();
    let mut lexicon = Lexicon {
        pool,
        ..Lexicon::default()
    };

    for qi in 0..spec.n_queries {
        let qid = format!("q{:03}", qi + 1);
        let terms: Vec<String> = (0..spec.query_terms)
            .map(|_| fresh_word(&mut rng, &mut used))
            .collect();
        let mut synonyms = Vec::new();
        for term in &terms {
            let related: Vec<String> = (0..spec.synonyms_per_term)
                .map(|_| fresh_word(&mut rng, &mut used))
                .collect();
            synonyms.extend(related.iter().cloned());
            lexicon.related.insert(term.clone(), related);
        }
        queries.push(Query::new(&qid, terms.join(" ")));

        let relevant: HashSet<usize> =
            rand::seq::index::sample(&mut rng, spec.docs_per_query, rel_count)
                .into_iter()
                .collect();

        for dj in 0..spec.docs_per_query {
            let doc_id = format!("d{:03}_{:03}", qi + 1, dj + 1);
            let is_relevant = relevant.contains(&dj);

            let (signal_block, synonym_block) = if is_relevant && !candidates.is_empty() {
                let s = candidates[rng.gen_range(0..candidates.len())];
                let rest: Vec<usize> = candidates.iter().copied().filter(|&i| i != s).collect();
                let syn = if rest.is_empty() {
                    None
                } else {
                    Some(rest[rng.gen_range(0..rest.len())])
                };
                (Some(s), syn)
            } else {
                (None, None)
            };

            let mut sentences = Vec::with_capacity(spec.blocks_per_doc);
            for bi in 1..=spec.blocks_per_doc {
                let mut words: Vec<&str> = (0..spec.sentence_len - 1)
                    .map(|_| filler[rng.gen_range(0..filler.len())].as_str())
                    .collect();
                if Some(bi) == signal_block {
                    for (t, term) in terms.iter().enumerate() {
                        words[2 * t] = term;
                        words[2 * t + 1] = term;
                    }
                } else if Some(bi) == synonym_block {
                    for (s, syn) in synonyms.iter().enumerate() {
                        words[s] = syn;
                    }
                }
                sentences.push(format!("{}.", words.join(" ")));
            }
            corpus.push(Document::new(&doc_id, sentences.join(" ")));
            qrels.insert(&qid, &doc_id, if is_relevant { 1 } else { 0 });
        }
    }

    Ok(SynthData {
        corpus,
        queries,
        qrels,
        lexicon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::{segment_blocks, CostTable, DEFAULT_MAX_BLOCK_LEN};

    fn small_spec() -> SynthSpec {
        SynthSpec {
            n_queries: 2,
            docs_per_query: 5,
            blocks_per_doc: 16,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn fixed_seed_reproduces_bit_identical_data() {
        let spec = small_spec();
        let a = generate_synthetic(&spec, 7).unwrap();
        let b = generate_synthetic(&spec, 7).unwrap();
        assert_eq!(a.corpus.len(), b.corpus.len());
        for (x, y) in a.corpus.iter().zip(&b.corpus) {
            assert_eq!(x.doc_id, y.doc_id);
            assert_eq!(x.raw_text, y.raw_text);
        }
        assert_eq!(a.qrels, b.qrels);
        assert_eq!(a.lexicon, b.lexicon);
    }

    #[test]
    fn zero_relevant_fraction_gives_all_zero_grades() {
        let spec = SynthSpec {
            relevant_fraction: 0.0,
            ..small_spec()
        };
        let data = generate_synthetic(&spec, 3).unwrap();
        for docs in data.qrels.0.values() {
            assert!(docs.values().all(|&g| g == 0));
        }
    }

    #[test]
    fn segmenter_reproduces_generated_blocks() {
        let spec = small_spec();
        let data = generate_synthetic(&spec, 11).unwrap();
        for doc in &data.corpus {
            let blocks = segment_blocks(
                &doc.doc_id,
                &doc.tokens,
                DEFAULT_MAX_BLOCK_LEN,
                &CostTable::default(),
            );
            assert_eq!(blocks.len(), spec.blocks_per_doc, "doc {}", doc.doc_id);
            assert!(blocks.iter().all(|b| b.len() == spec.sentence_len));
        }
    }

    #[test]
    fn signal_terms_only_in_eligible_bins_of_relevant_docs() {
        let spec = SynthSpec {
            signal_positions: (6..=10).collect(),
            ..small_spec()
        };
        let data = generate_synthetic(&spec, 13).unwrap();
        let term_sets: Vec<HashSet<&str>> = data
            .queries
            .iter()
            .map(|q| q.tokens.texts().collect::<HashSet<&str>>())
            .collect();
        for doc in &data.corpus {
            let blocks = segment_blocks(
                &doc.doc_id,
                &doc.tokens,
                DEFAULT_MAX_BLOCK_LEN,
                &CostTable::default(),
            );
            for (qi, q) in data.queries.iter().enumerate() {
                let grade = data.qrels.grade(&q.qid, &doc.doc_id);
                for block in &blocks {
                    let hit = block
                        .tokens(&doc.tokens)
                        .iter()
                        .any(|t| term_sets[qi].contains(t.text.as_str()));
                    if hit {
                        assert_eq!(grade, Some(1), "query terms only in its relevant docs");
                        let bin = position_of(block.index, blocks.len(), spec.p).unwrap();
                        assert!((6..=10).contains(&bin), "signal bin {bin}");
                    }
                }
            }
        }
    }

    #[test]
    fn pool_terms_never_occur_in_the_corpus() {
        let data = generate_synthetic(&small_spec(), 17).unwrap();
        let pool: HashSet<&str> = data.lexicon.pool.iter().map(String::as_str).collect();
        for doc in &data.corpus {
            assert!(doc.tokens.texts().all(|t| !pool.contains(t)));
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate_synthetic(
            &SynthSpec {
                n_queries: 0,
                ..small_spec()
            },
            1
        )
        .is_err());
        assert!(generate_synthetic(
            &SynthSpec {
                signal_positions: vec![11],
                ..small_spec()
            },
            1
        )
        .is_err());
        assert!(generate_synthetic(
            &SynthSpec {
                relevant_fraction: 1.5,
                ..small_spec()
            },
            1
        )
        .is_err());
    }
}
