//! Document-level IDF tables and TF-IDF / BM25 retrieval status values.
//!
//! IDF is always computed over documents, never over blocks, and both RSVs sum
//! over the distinct query terms present in the scored unit. All text is
//! lowercased by the tokenizer before any score is computed.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Query, RunEntry};
use crate::error::{Error, Result};
use crate::exec;
use crate::tokenize::Token;

pub const DEFAULT_FIRST_STAGE_K: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdfVariant {
    /// idf(w) = ln((N+1)/(df+1))
    Scikit,
    /// idf(w) = ln((N+1)/(df+0.5))
    Lucene,
}

impl IdfVariant {
    pub fn name(self) -> &'static str {
        match self {
            IdfVariant::Scikit => "scikit",
            IdfVariant::Lucene => "lucene",
        }
    }
}

impl std::str::FromStr for IdfVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scikit" => Ok(IdfVariant::Scikit),
            "lucene" => Ok(IdfVariant::Lucene),
            other => Err(Error::InvalidParam(format!(
                "unknown idf variant {other:?}"
            ))),
        }
    }
}

/// Corpus-level document frequencies with one of the two IDF formulas.
/// Built once, immutable afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    n_docs: usize,
    variant: IdfVariant,
    df: BTreeMap<String, usize>,
}

impl IdfTable {
    /// Count, for every term, the number of documents whose token set
    /// contains it. Errors on an empty corpus.
    pub fn build(corpus: &[Document], variant: IdfVariant) -> Result<IdfTable> {
        if corpus.is_empty() {
            return Err(Error::InvalidParam(
                "cannot build IDF over an empty corpus".into(),
            ));
        }
        let per_doc: Vec<HashSet<&str>> =
            exec::map_ordered(corpus, |d| d.tokens.texts().collect::<HashSet<&str>>());
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for set in &per_doc {
            for term in set {
                *df.entry((*term).to_string()).or_insert(0) += 1;
            }
        }
        Ok(IdfTable {
            n_docs: corpus.len(),
            variant,
            df,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn variant(&self) -> IdfVariant {
        self.variant
    }

    /// Document frequency; 0 for unseen terms.
    pub fn df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    /// IDF under this table's variant; finite for every df in [0, N].
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.n_docs as f64;
        let df = self.df(term) as f64;
        match self.variant {
            IdfVariant::Scikit => ((n + 1.0) / (df + 1.0)).ln(),
            IdfVariant::Lucene => ((n + 1.0) / (df + 0.5)).ln(),
        }
    }

    /// Binary format: magic `KBIF`, u32 version, u64 N, u8 variant,
    /// u64 term count, then per term (u32 length, bytes, u64 df) in sorted
    /// term order. All integers little-endian.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(path, e);
        w.write_all(b"KBIF").map_err(io_err)?;
        w.write_all(&1u32.to_le_bytes()).map_err(io_err)?;
        w.write_all(&(self.n_docs as u64).to_le_bytes())
            .map_err(io_err)?;
        let variant_byte = match self.variant {
            IdfVariant::Scikit => 0u8,
            IdfVariant::Lucene => 1u8,
        };
        w.write_all(&[variant_byte]).map_err(io_err)?;
        w.write_all(&(self.df.len() as u64).to_le_bytes())
            .map_err(io_err)?;
        for (term, &df) in &self.df {
            w.write_all(&(term.len() as u32).to_le_bytes())
                .map_err(io_err)?;
            w.write_all(term.as_bytes()).map_err(io_err)?;
            w.write_all(&(df as u64).to_le_bytes()).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn read_binary(path: &Path) -> Result<IdfTable> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let bad = |msg: &str| Error::parse(path, 0, msg);

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != b"KBIF" {
            return Err(bad("bad magic, not an idf table"));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
        if u32::from_le_bytes(u32buf) != 1 {
            return Err(bad("unsupported idf table version"));
        }
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
        let n_docs = u64::from_le_bytes(u64buf) as usize;
        let mut vbuf = [0u8; 1];
        r.read_exact(&mut vbuf).map_err(|e| Error::io(path, e))?;
        let variant = match vbuf[0] {
            0 => IdfVariant::Scikit,
            1 => IdfVariant::Lucene,
            _ => return Err(bad("unknown variant byte")),
        };
        r.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
        let n_terms = u64::from_le_bytes(u64buf) as usize;
        let mut df = BTreeMap::new();
        for _ in 0..n_terms {
            r.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
            let len = u32::from_le_bytes(u32buf) as usize;
            let mut term = vec![0u8; len];
            r.read_exact(&mut term).map_err(|e| Error::io(path, e))?;
            let term = String::from_utf8(term).map_err(|_| bad("term is not utf-8"))?;
            r.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
            df.insert(term, u64::from_le_bytes(u64buf) as usize);
        }
        Ok(IdfTable {
            n_docs,
            variant,
            df,
        })
    }

    /// JSON export for inspection.
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("idf table serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if self.k1 >= 0.0 && (0.0..=1.0).contains(&self.b) {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!(
                "need k1 >= 0 and 0 <= b <= 1, got {self:?}"
            )))
        }
    }
}

/// Average token length of the scoring units in the enclosing scope: blocks
/// within a document for block scoring, documents within the corpus for
/// document scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub l_avg: f64,
}

impl LengthStats {
    pub fn from_lengths(lengths: impl IntoIterator<Item = usize>) -> LengthStats {
        let mut n = 0usize;
        let mut total = 0usize;
        for len in lengths {
            n += 1;
            total += len;
        }
        let l_avg = if n == 0 { 0.0 } else { total as f64 / n as f64 };
        LengthStats { l_avg }
    }
}

/// Number of occurrences of `term` in the unit.
pub fn term_freq(unit: &[Token], term: &str) -> usize {
    unit.iter().filter(|t| t.text == term).count()
}

/// Distinct query terms in order of first appearance.
pub fn distinct_terms(query: &Query) -> Vec<&str> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for t in query.tokens.texts() {
        if seen.insert(t) {
            out.push(t);
        }
    }
    out
}

/// TF-IDF RSV: sum over distinct query terms present in the unit of
/// (ln(tf) + 1) * idf(w). Requires the scikit IDF variant.
pub fn tfidf_rsv(query: &Query, unit: &[Token], idf: &IdfTable) -> Result<f64> {
    if idf.variant() != IdfVariant::Scikit {
        return Err(Error::VariantMismatch {
            op: "TF-IDF",
            expected: "scikit",
            found: idf.variant().name(),
        });
    }
    let mut score = 0.0;
    for term in distinct_terms(query) {
        let tf = term_freq(unit, term);
        if tf > 0 {
            score += ((tf as f64).ln() + 1.0) * idf.idf(term);
        }
    }
    Ok(score)
}

/// BM25 RSV: sum over distinct query terms present in the unit of
/// idf(w) * tf / (k1 * (1 - b + b * l_unit / l_avg) + tf). Requires the Lucene
/// IDF variant and a positive average unit length.
pub fn bm25_rsv(
    query: &Query,
    unit: &[Token],
    idf: &IdfTable,
    params: &Bm25Params,
    stats: &LengthStats,
) -> Result<f64> {
    if idf.variant() != IdfVariant::Lucene {
        return Err(Error::VariantMismatch {
            op: "BM25",
            expected: "lucene",
            found: idf.variant().name(),
        });
    }
    if stats.l_avg <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "l_avg must be positive, got {}",
            stats.l_avg
        )));
    }
    let l_unit = unit.len() as f64;
    let norm = params.k1 * (1.0 - params.b + params.b * l_unit / stats.l_avg);
    let mut score = 0.0;
    for term in distinct_terms(query) {
        let tf = term_freq(unit, term) as f64;
        if tf > 0.0 {
            score += idf.idf(term) * tf / (norm + tf);
        }
    }
    Ok(score)
}

/// First-stage retrieval: score every document with BM25 at corpus-level
/// average document length, drop zero-score documents, keep the top k by
/// score (ties broken by doc_id descending) and assign ranks 1..k.
pub fn first_stage_retrieve(
    query: &Query,
    corpus: &[Document],
    idf: &IdfTable,
    params: &Bm25Params,
    k: usize,
    tag: &str,
) -> Result<Vec<RunEntry>> {
    if k == 0 {
        return Err(Error::InvalidParam("k must be >= 1".into()));
    }
    if idf.variant() != IdfVariant::Lucene {
        return Err(Error::VariantMismatch {
            op: "BM25",
            expected: "lucene",
            found: idf.variant().name(),
        });
    }
    let stats = LengthStats::from_lengths(corpus.iter().map(|d| d.tokens.len()));
    if stats.l_avg <= 0.0 {
        // every document is empty, so nothing can match
        return Ok(Vec::new());
    }
    let mut scored: Vec<(f64, &str)> = exec::map_ordered(corpus, |d| {
        let score = bm25_rsv(query, &d.tokens, idf, params, &stats).expect("validated inputs");
        (score, d.doc_id.as_str())
    })
    .into_iter()
    .filter(|(s, _)| *s > 0.0)
    .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| b.1.cmp(a.1)));
    scored.truncate(k);
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (score, doc_id))| RunEntry {
            qid: query.qid.clone(),
            doc_id: doc_id.to_string(),
            rank: i + 1,
            score,
            tag: tag.to_string(),
        })
        .collect())
}
