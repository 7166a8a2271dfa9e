//! Corpus, query, qrels, run and lexicon I/O.
//!
//! File formats (all UTF-8, LF line endings):
//! - corpus: JSONL, one `{"doc_id": ..., "text": ...}` object per line
//! - queries: TSV `qid<TAB>text`
//! - qrels: whitespace-separated `qid 0 doc_id grade`, grade in {0,1,2}
//! - run: `qid Q0 doc_id rank score tag`, score printed with 6 decimals
//! - lexicon: TSV `term<TAB>rel1,rel2,...`, optional `#POOL` section with one
//!   term per line
//!
//! Loaders are pure functions over file contents; the returned structures are
//! never mutated afterwards and are safe for concurrent reads.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenize::{tokenize, TokenSeq};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub raw_text: String,
    pub tokens: TokenSeq,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Document {
        let raw_text = text.into();
        let tokens = tokenize(&raw_text);
        Document {
            doc_id: doc_id.into(),
            raw_text,
            tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub qid: String,
    pub text: String,
    pub tokens: TokenSeq,
}

impl Query {
    pub fn new(qid: impl Into<String>, text: impl Into<String>) -> Query {
        let text = text.into();
        let tokens = tokenize(&text);
        Query {
            qid: qid.into(),
            text,
            tokens,
        }
    }
}

/// Graded relevance judgments: qid -> doc_id -> grade in {0,1,2}.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qrels(pub BTreeMap<String, BTreeMap<String, u8>>);

impl Qrels {
    pub fn grade(&self, qid: &str, doc_id: &str) -> Option<u8> {
        self.0.get(qid).and_then(|m| m.get(doc_id)).copied()
    }

    /// Doc ids with grade >= 1 for the query.
    pub fn positives(&self, qid: &str) -> Vec<&str> {
        self.0
            .get(qid)
            .map(|m| {
                m.iter()
                    .filter(|(_, &g)| g >= 1)
                    .map(|(d, _)| d.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn insert(&mut self, qid: impl Into<String>, doc_id: impl Into<String>, grade: u8) {
        debug_assert!(grade <= 2, "grades are 0, 1 or 2");
        self.0
            .entry(qid.into())
            .or_default()
            .insert(doc_id.into(), grade);
    }
}

/// One line of a TREC-format run file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub qid: String,
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

/// Term -> related terms, plus a vocabulary pool for random sampling.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    pub related: BTreeMap<String, Vec<String>>,
    pub pool: Vec<String>,
}

impl Lexicon {
    pub fn related_terms(&self, term: &str) -> &[String] {
        self.related.get(term).map(Vec::as_slice).unwrap_or(&[])
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
struct CorpusLine {
    doc_id: String,
    text: String,
}

/// Load a JSONL corpus. Line order is preserved; duplicate doc_ids and
/// malformed lines are errors naming the offending line.
pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    let contents = read_to_string(path)?;
    let mut docs = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (i, line) in contents.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CorpusLine = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, lineno, format!("malformed corpus line: {e}")))?;
        if seen.insert(parsed.doc_id.clone(), lineno).is_some() {
            return Err(Error::DuplicateDocId {
                doc_id: parsed.doc_id,
                line: lineno,
            });
        }
        docs.push(Document::new(parsed.doc_id, parsed.text));
    }
    Ok(docs)
}

/// Write a corpus in the JSONL format `load_corpus` reads.
pub fn write_corpus(docs: &[Document], path: &Path) -> Result<()> {
    let mut out = String::new();
    for d in docs {
        let line = serde_json::json!({"doc_id": d.doc_id, "text": d.raw_text});
        out.push_str(&line.to_string());
        out.push('\n');
    }
    write_string(path, &out)
}

/// Load TSV queries `qid<TAB>text`. Duplicate qids are errors.
pub fn load_queries(path: &Path) -> Result<Vec<Query>> {
    let contents = read_to_string(path)?;
    let mut queries = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (i, line) in contents.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (qid, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, lineno, "expected qid<TAB>text"))?;
        if qid.is_empty() {
            return Err(Error::parse(path, lineno, "empty qid"));
        }
        if seen.insert(qid.to_string(), lineno).is_some() {
            return Err(Error::DuplicateQid {
                qid: qid.to_string(),
                line: lineno,
            });
        }
        queries.push(Query::new(qid, text));
    }
    Ok(queries)
}

pub fn write_queries(queries: &[Query], path: &Path) -> Result<()> {
    let mut out = String::new();
    for q in queries {
        let _ = writeln!(out, "{}\t{}", q.qid, q.text);
    }
    write_string(path, &out)
}

/// Load qrels `qid 0 doc_id grade`. Later duplicate (qid, doc_id) lines
/// overwrite earlier ones; grades outside {0,1,2} are errors.
pub fn load_qrels(path: &Path) -> Result<Qrels> {
    let contents = read_to_string(path)?;
    let mut qrels = Qrels::default();
    for (i, line) in contents.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                lineno,
                format!(
                    "expected 4 fields 'qid 0 doc_id grade', got {}",
                    fields.len()
                ),
            ));
        }
        let grade: i64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad grade {:?}", fields[3])))?;
        if !(0..=2).contains(&grade) {
            return Err(Error::GradeOutOfRange { grade });
        }
        qrels.insert(fields[0], fields[2], grade as u8);
    }
    Ok(qrels)
}

pub fn write_qrels(qrels: &Qrels, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (qid, docs) in &qrels.0 {
        for (doc_id, grade) in docs {
            let _ = writeln!(out, "{qid} 0 {doc_id} {grade}");
        }
    }
    write_string(path, &out)
}

/// Check RunEntry invariants: per qid, ranks are exactly 1..n with no
/// duplicates, scores non-increasing with rank, and score ties ordered by
/// doc_id descending (trec_eval convention).
pub fn validate_run(entries: &[RunEntry]) -> Result<()> {
    let mut per_qid: BTreeMap<&str, Vec<&RunEntry>> = BTreeMap::new();
    for e in entries {
        per_qid.entry(&e.qid).or_default().push(e);
    }
    for (qid, mut group) in per_qid {
        group.sort_by_key(|e| e.rank);
        for (i, e) in group.iter().enumerate() {
            if e.rank != i + 1 {
                if group.iter().filter(|o| o.rank == e.rank).count() > 1 {
                    return Err(Error::InvalidRun(format!(
                        "duplicate rank {} for qid {qid}",
                        e.rank
                    )));
                }
                return Err(Error::InvalidRun(format!(
                    "qid {qid}: ranks must be 1..n, found {} at position {}",
                    e.rank,
                    i + 1
                )));
            }
        }
        for w in group.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b.score > a.score {
                return Err(Error::InvalidRun(format!(
                    "qid {qid}: score increases from rank {} to {}",
                    a.rank, b.rank
                )));
            }
            if b.score == a.score && b.doc_id >= a.doc_id {
                return Err(Error::InvalidRun(format!(
                    "qid {qid}: tied scores at ranks {}/{} must order doc_ids descending",
                    a.rank, b.rank
                )));
            }
        }
    }
    Ok(())
}

/// Write a run file. Invariants are checked before anything is written.
pub fn write_run(entries: &[RunEntry], path: &Path) -> Result<()> {
    validate_run(entries)?;
    let mut out = String::new();
    for e in entries {
        let _ = writeln!(
            out,
            "{} Q0 {} {} {:.6} {}",
            e.qid, e.doc_id, e.rank, e.score, e.tag
        );
    }
    write_string(path, &out)
}

/// Load and validate a run file.
pub fn load_run(path: &Path) -> Result<Vec<RunEntry>> {
    let contents = read_to_string(path)?;
    let mut entries = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                path,
                lineno,
                format!(
                    "expected 6 fields 'qid Q0 doc_id rank score tag', got {}",
                    fields.len()
                ),
            ));
        }
        let rank: usize = fields[3]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad rank {:?}", fields[3])))?;
        if rank == 0 {
            return Err(Error::parse(path, lineno, "rank must be positive"));
        }
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad score {:?}", fields[4])))?;
        entries.push(RunEntry {
            qid: fields[0].to_string(),
            doc_id: fields[2].to_string(),
            rank,
            score,
            tag: fields[5].to_string(),
        });
    }
    validate_run(&entries)?;
    Ok(entries)
}

/// Load a lexicon: TSV `term<TAB>rel1,rel2,...` lines, then an optional
/// `#POOL` header followed by one pool term per line. A term present in its
/// own related list is dropped from it.
pub fn load_lexicon(path: &Path) -> Result<Lexicon> {
    let contents = read_to_string(path)?;
    let mut lex = Lexicon::default();
    let mut in_pool = false;
    for (i, line) in contents.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if line.trim() == "#POOL" {
            in_pool = true;
            continue;
        }
        if in_pool {
            let term = line.trim();
            if term.is_empty() {
                return Err(Error::parse(path, lineno, "empty pool term"));
            }
            lex.pool.push(term.to_string());
            continue;
        }
        let (term, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, lineno, "expected term<TAB>related,terms"))?;
        if term.is_empty() {
            return Err(Error::parse(path, lineno, "empty term"));
        }
        let related: Vec<String> = rest
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty() && *t != term)
            .map(str::to_string)
            .collect();
        lex.related.insert(term.to_string(), related);
    }
    Ok(lex)
}

pub fn write_lexicon(lex: &Lexicon, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (term, related) in &lex.related {
        let _ = writeln!(out, "{term}\t{}", related.join(","));
    }
    if !lex.pool.is_empty() {
        out.push_str("#POOL\n");
        for term in &lex.pool {
            let _ = writeln!(out, "{term}");
        }
    }
    write_string(path, &out)
}
