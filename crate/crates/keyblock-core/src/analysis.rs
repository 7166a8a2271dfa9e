//! Positional RSV distributions, boolean expansion matching, gap curves and
//! top-block position heatmaps.
//!
//! Per-pair scoring runs in parallel; aggregation folds the per-pair partials
//! in pair order with compensated summation, so results do not depend on the
//! worker count. Undefined bins are reported as explicit `None`, never 0.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::corpus::{Document, Lexicon, Query};
use crate::error::{Error, Result};
use crate::exec::{self, KahanSum};
use crate::segment::Block;
use crate::select::{rank_blocks, SelectionContext, Strategy};
use crate::tokenize::Token;

pub const DEFAULT_POSITIONS: usize = 10;
pub const DEFAULT_MIN_BLOCKS: usize = 15;
pub const DEFAULT_TOP_N: usize = 8;

/// Position bin of the i-th block (1-based) in a b-block document:
/// ceil(p * i / b). Surjective onto 1..=p whenever b >= p.
pub fn position_of(i: usize, b: usize, p: usize) -> Result<usize> {
    if i < 1 || i > b {
        return Err(Error::InvalidParam(format!(
            "block index {i} out of range 1..={b}"
        )));
    }
    Ok((p * i).div_ceil(b))
}

/// One labeled (query, document) pair with the document's blocks.
#[derive(Debug, Clone, Copy)]
pub struct AnalysisPair<'a> {
    pub query: &'a Query,
    pub doc: &'a Document,
    pub blocks: &'a [Block],
    pub grade: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    Full,
    /// grade >= 1 (the paper's relevant and very relevant merged)
    Relevant,
    /// grade == 0
    Irrelevant,
}

impl Subset {
    fn admits(self, grade: u8) -> bool {
        match self {
            Subset::Full => true,
            Subset::Relevant => grade >= 1,
            Subset::Irrelevant => grade == 0,
        }
    }
}

/// Mean scorer output per position bin over every block of the qualifying
/// pairs (documents with at least `min_blocks` blocks, grades filtered by
/// `subset`). Bins no block maps to are None.
pub fn avg_rsv_by_position<F>(
    pairs: &[AnalysisPair],
    scorer: F,
    subset: Subset,
    p: usize,
    min_blocks: usize,
) -> Vec<Option<f64>>
where
    F: Fn(&AnalysisPair, &[Token]) -> f64 + Sync,
{
    // per-pair partial (sum, count) per bin, in pair order
    let partials: Vec<Option<Vec<(f64, usize)>>> = exec::map_ordered(pairs, |pair| {
        if !subset.admits(pair.grade) || pair.blocks.len() < min_blocks {
            return None;
        }
        let b = pair.blocks.len();
        let mut bins = vec![(0.0, 0usize); p];
        for block in pair.blocks {
            let bin = position_of(block.index, b, p).expect("block index within document");
            let score = scorer(pair, block.tokens(&pair.doc.tokens));
            bins[bin - 1].0 += score;
            bins[bin - 1].1 += 1;
        }
        Some(bins)
    });

    let mut sums = vec![KahanSum::new(); p];
    let mut counts = vec![0usize; p];
    for bins in partials.into_iter().flatten() {
        for (i, (s, c)) in bins.into_iter().enumerate() {
            sums[i].add(s);
            counts[i] += c;
        }
    }
    (0..p)
        .map(|i| {
            if counts[i] == 0 {
                None
            } else {
                Some(sums[i].value() / counts[i] as f64)
            }
        })
        .collect()
}

/// Elementwise relevant-minus-irrelevant positional means; None wherever
/// either side is undefined.
pub fn gap_curve<F>(
    pairs: &[AnalysisPair],
    scorer: F,
    p: usize,
    min_blocks: usize,
) -> Vec<Option<f64>>
where
    F: Fn(&AnalysisPair, &[Token]) -> f64 + Sync,
{
    let relevant = avg_rsv_by_position(pairs, &scorer, Subset::Relevant, p, min_blocks);
    let irrelevant = avg_rsv_by_position(pairs, &scorer, Subset::Irrelevant, p, min_blocks);
    relevant
        .into_iter()
        .zip(irrelevant)
        .map(|(r, i)| match (r, i) {
            (Some(r), Some(i)) => Some(r - i),
            _ => None,
        })
        .collect()
}

/// Boolean query tree over term leaves. An empty OR matches nothing; an empty
/// AND matches everything. NOT only ever appears as an AND-NOT conjunct in the
/// constructions built here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BooleanQuery {
    Term(String),
    Or(Vec<BooleanQuery>),
    And(Vec<BooleanQuery>),
    Not(Box<BooleanQuery>),
}

impl BooleanQuery {
    pub fn matches(&self, token_set: &HashSet<&str>) -> bool {
        match self {
            BooleanQuery::Term(t) => token_set.contains(t.as_str()),
            BooleanQuery::Or(children) => children.iter().any(|c| c.matches(token_set)),
            BooleanQuery::And(children) => children.iter().all(|c| c.matches(token_set)),
            BooleanQuery::Not(child) => !child.matches(token_set),
        }
    }

    fn or_terms(terms: &[String]) -> BooleanQuery {
        BooleanQuery::Or(
            terms
                .iter()
                .map(|t| BooleanQuery::Term(t.clone()))
                .collect(),
        )
    }
}

impl std::fmt::Display for BooleanQuery {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BooleanQuery::Term(t) => write!(f, "\"{t}\""),
            BooleanQuery::Or(c) => {
                write!(
                    f,
                    "({})",
                    c.iter()
                        .map(|x| x.to_string())
                        .collect::<Vec<_>>()
                        .join(" OR ")
                )
            }
            BooleanQuery::And(c) => {
                write!(
                    f,
                    "({})",
                    c.iter()
                        .map(|x| x.to_string())
                        .collect::<Vec<_>>()
                        .join(" AND ")
                )
            }
            BooleanQuery::Not(c) => write!(f, "NOT {c}"),
        }
    }
}

/// Base query terms plus appended expansion terms; no duplicates across the
/// whole list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpandedQuery {
    pub base: Vec<String>,
    pub expansion: Vec<String>,
}

impl ExpandedQuery {
    pub fn all_terms(&self) -> impl Iterator<Item = &str> {
        self.base.iter().chain(&self.expansion).map(String::as_str)
    }

    /// Flat query usable with the lexical scorers.
    pub fn to_query(&self, qid: &str) -> Query {
        Query::new(qid, self.all_terms().collect::<Vec<_>>().join(" "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionMode {
    /// Every query term's related terms, in term order, deduplicated.
    Synonyms,
    /// `count` distinct seeded pool draws; None matches the synonym expansion
    /// size for length-matched comparison.
    Random { seed: u64, count: Option<usize> },
}

fn base_terms(query: &Query) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut base = Vec::new();
    for t in query.tokens.texts() {
        if seen.insert(t.to_string()) {
            base.push(t.to_string());
        }
    }
    base
}

fn synonym_expansion(base: &[String], lexicon: &Lexicon) -> Vec<String> {
    let mut seen: HashSet<&str> = base.iter().map(String::as_str).collect();
    let mut out = Vec::new();
    for term in base {
        for related in lexicon.related_terms(term) {
            if seen.insert(related) {
                out.push(related.clone());
            }
        }
    }
    out
}

/// Expand a query with its synonyms or with random pool terms.
pub fn expand_query(
    query: &Query,
    lexicon: &Lexicon,
    mode: ExpansionMode,
) -> Result<ExpandedQuery> {
    let base = base_terms(query);
    let expansion = match mode {
        ExpansionMode::Synonyms => synonym_expansion(&base, lexicon),
        ExpansionMode::Random { seed, count } => {
            let count = count.unwrap_or_else(|| synonym_expansion(&base, lexicon).len());
            let base_set: HashSet<&str> = base.iter().map(String::as_str).collect();
            let mut seen_pool = HashSet::new();
            let eligible: Vec<&String> = lexicon
                .pool
                .iter()
                .filter(|t| !base_set.contains(t.as_str()) && seen_pool.insert(t.as_str()))
                .collect();
            if eligible.len() < count {
                return Err(Error::PoolTooSmall {
                    need: count,
                    have: eligible.len(),
                });
            }
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rand::seq::index::sample(&mut rng, eligible.len(), count)
                .into_iter()
                .map(|i| eligible[i].clone())
                .collect()
        }
    };
    Ok(ExpandedQuery { base, expansion })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BooleanForm {
    /// OR over the query terms.
    Base,
    /// (OR over synonym expansion) AND NOT (OR over query terms).
    Syn,
    /// Same shape with random pool terms.
    Rand { seed: u64 },
}

/// Build the boolean representations used by the expansion analysis.
pub fn build_boolean(query: &Query, lexicon: &Lexicon, form: BooleanForm) -> Result<BooleanQuery> {
    let base = base_terms(query);
    match form {
        BooleanForm::Base => Ok(BooleanQuery::or_terms(&base)),
        BooleanForm::Syn => {
            let exp = expand_query(query, lexicon, ExpansionMode::Synonyms)?;
            Ok(BooleanQuery::And(vec![
                BooleanQuery::or_terms(&exp.expansion),
                BooleanQuery::Not(Box::new(BooleanQuery::or_terms(&base))),
            ]))
        }
        BooleanForm::Rand { seed } => {
            let exp = expand_query(query, lexicon, ExpansionMode::Random { seed, count: None })?;
            Ok(BooleanQuery::And(vec![
                BooleanQuery::or_terms(&exp.expansion),
                BooleanQuery::Not(Box::new(BooleanQuery::or_terms(&base))),
            ]))
        }
    }
}

/// Number of units whose token set satisfies the boolean tree.
pub fn count_matches<'a>(bq: &BooleanQuery, units: impl IntoIterator<Item = &'a [Token]>) -> usize {
    units
        .into_iter()
        .filter(|unit| {
            let set: HashSet<&str> = unit.iter().map(|t| t.text.as_str()).collect();
            bq.matches(&set)
        })
        .count()
}

/// Row r, column c: fraction of qualifying pairs whose rank-(r+1) selected
/// block falls in bin c+1. Every row is a probability distribution over its
/// defined entries. Errors when no pair qualifies.
pub fn top_block_heatmap(
    pairs: &[AnalysisPair],
    strategy: Strategy,
    ctx: &SelectionContext,
    top_n: usize,
    p: usize,
    min_blocks: usize,
) -> Result<Vec<Vec<f64>>> {
    let per_pair: Vec<Result<Option<Vec<usize>>>> = exec::map_ordered(pairs, |pair| {
        if pair.blocks.len() < min_blocks {
            return Ok(None);
        }
        let ranked = rank_blocks(pair.query, &pair.doc.tokens, pair.blocks, strategy, ctx)?;
        let b = pair.blocks.len();
        Ok(Some(
            ranked
                .iter()
                .take(top_n)
                .map(|sb| position_of(sb.block.index, b, p).expect("index in range"))
                .collect(),
        ))
    });

    let mut counts = vec![vec![0usize; p]; top_n];
    let mut row_totals = vec![0usize; top_n];
    let mut qualifying = 0usize;
    for bins in per_pair {
        let Some(bins) = bins? else { continue };
        qualifying += 1;
        for (r, bin) in bins.into_iter().enumerate() {
            counts[r][bin - 1] += 1;
            row_totals[r] += 1;
        }
    }
    if qualifying == 0 {
        return Err(Error::InvalidParam(format!(
            "no qualifying pair (documents need at least {min_blocks} blocks)"
        )));
    }
    Ok(counts
        .into_iter()
        .zip(row_totals)
        .map(|(row, total)| {
            row.into_iter()
                .map(|c| {
                    if total == 0 {
                        0.0
                    } else {
                        c as f64 / total as f64
                    }
                })
                .collect()
        })
        .collect())
}
