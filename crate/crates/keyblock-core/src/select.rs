//! Block/passage ranking strategies and token-budgeted digest assembly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Query;
use crate::error::{Error, Result};
use crate::exec::mix_seed;
use crate::learned::{features, LinearScorer};
use crate::lexical::{bm25_rsv, tfidf_rsv, Bm25Params, IdfTable, LengthStats};
use crate::segment::{Block, Passage};
use crate::tokenize::Token;

pub const DEFAULT_BUDGET: usize = 512;
/// Marker-token slots reserved by the digest budget equation.
pub const SPECIAL_TOKENS: usize = 3;
pub const DEFAULT_TOP_K_PASSAGES: usize = 5;
pub const DEFAULT_PARADE_SAMPLE: usize = 16;

/// How a unit is scored during local pre-ranking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Tfidf,
    Bm25,
    /// One uniform score per block from a seeded generator.
    Random {
        seed: u64,
    },
    /// Score = -index: keeps document order.
    FirstN,
    /// Linear scorer over lexical features; the scorer is carried by the
    /// [`SelectionContext`].
    Learned,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Tfidf => "tfidf",
            Strategy::Bm25 => "bm25",
            Strategy::Random { .. } => "random",
            Strategy::FirstN => "firstn",
            Strategy::Learned => "learned",
        }
    }
}

/// Everything a strategy may need: IDF tables, BM25 parameters, a bound
/// scorer, and the corpus-level document length average used when a digest is
/// scored as a document stand-in.
#[derive(Debug, Clone, Copy, Default)]
pub struct SelectionContext<'a> {
    pub idf_scikit: Option<&'a IdfTable>,
    pub idf_lucene: Option<&'a IdfTable>,
    pub params: Bm25Params,
    pub scorer: Option<&'a LinearScorer>,
    pub doc_stats: Option<LengthStats>,
}

impl<'a> SelectionContext<'a> {
    pub fn lexical(idf_scikit: &'a IdfTable, idf_lucene: &'a IdfTable, params: Bm25Params) -> Self {
        SelectionContext {
            idf_scikit: Some(idf_scikit),
            idf_lucene: Some(idf_lucene),
            params,
            scorer: None,
            doc_stats: None,
        }
    }

    pub fn with_scorer(mut self, scorer: &'a LinearScorer) -> Self {
        self.scorer = Some(scorer);
        self
    }

    pub fn with_doc_stats(mut self, stats: LengthStats) -> Self {
        self.doc_stats = Some(stats);
        self
    }

    fn scikit(&self) -> Result<&'a IdfTable> {
        self.idf_scikit
            .ok_or_else(|| Error::InvalidParam("strategy requires a scikit IDF table".into()))
    }

    fn lucene(&self) -> Result<&'a IdfTable> {
        self.idf_lucene
            .ok_or_else(|| Error::InvalidParam("strategy requires a lucene IDF table".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredBlock<'a> {
    pub block: &'a Block,
    pub score: f64,
}

/// One kept span of a digest: block `index` and how many of its leading
/// tokens are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestBlock {
    pub index: usize,
    pub kept: usize,
}

/// Ordered subset of a document's blocks fitting the token budget together
/// with the query: 3 + l_q + sum(kept) <= budget, with equality whenever
/// enough block tokens exist. Selected indices are strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Digest {
    pub qid: String,
    pub doc_id: String,
    #[serde(rename = "blocks")]
    pub selected: Vec<DigestBlock>,
    pub total_tokens: usize,
}

fn score_units<U>(
    query: &Query,
    doc_tokens: &[Token],
    units: &[U],
    span: impl Fn(&U) -> (usize, usize, usize), // (index, start, end)
    doc_id: &str,
    strategy: Strategy,
    ctx: &SelectionContext,
) -> Result<Vec<(usize, f64)>> {
    let lens = units.iter().map(|u| {
        let (_, s, e) = span(u);
        e - s
    });
    let stats = LengthStats::from_lengths(lens);
    let mut rng = match strategy {
        Strategy::Random { seed } => Some(ChaCha12Rng::seed_from_u64(mix_seed(
            seed,
            &[&query.qid, doc_id],
        ))),
        _ => None,
    };
    let mut out = Vec::with_capacity(units.len());
    for u in units {
        let (index, start, end) = span(u);
        let unit = &doc_tokens[start..end];
        let score = match strategy {
            Strategy::Tfidf => tfidf_rsv(query, unit, ctx.scikit()?)?,
            Strategy::Bm25 => bm25_rsv(query, unit, ctx.lucene()?, &ctx.params, &stats)?,
            Strategy::Random { .. } => rng.as_mut().expect("rng for random strategy").gen::<f64>(),
            Strategy::FirstN => -(index as f64),
            Strategy::Learned => {
                let scorer = ctx.scorer.ok_or(Error::MissingScorer)?;
                let fv = features(
                    query,
                    unit,
                    ctx.scikit()?,
                    ctx.lucene()?,
                    &ctx.params,
                    &stats,
                )?;
                scorer.score(&fv)?
            }
        };
        out.push((index, score));
    }
    Ok(out)
}

/// Score and rank a single document's blocks for a query. Output is sorted by
/// score descending, ties broken by earlier block index. Random scores are
/// drawn in block-index order from a stream derived from (seed, qid, doc_id).
pub fn rank_blocks<'a>(
    query: &Query,
    doc_tokens: &[Token],
    blocks: &'a [Block],
    strategy: Strategy,
    ctx: &SelectionContext,
) -> Result<Vec<ScoredBlock<'a>>> {
    if blocks.is_empty() {
        return Ok(Vec::new());
    }
    let scores = score_units(
        query,
        doc_tokens,
        blocks,
        |b| (b.index, b.start, b.end),
        &blocks[0].doc_id,
        strategy,
        ctx,
    )?;
    let mut ranked: Vec<ScoredBlock<'a>> = blocks
        .iter()
        .zip(scores)
        .map(|(block, (_, score))| ScoredBlock { block, score })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.block.index.cmp(&b.block.index))
    });
    Ok(ranked)
}

/// Greedily take ranked blocks until the budget equation saturates, truncating
/// the final taken block to the remaining budget; the selection is then
/// re-sorted into document order. Errors when the query alone exhausts the
/// budget.
pub fn build_digest(
    query: &Query,
    doc_id: &str,
    ranked: &[ScoredBlock],
    budget: usize,
) -> Result<Digest> {
    let l_q = query.tokens.len();
    if budget <= SPECIAL_TOKENS + l_q {
        return Err(Error::InvalidParam(format!(
            "query exhausts budget: budget {budget} <= {} + query length {l_q}",
            SPECIAL_TOKENS
        )));
    }
    let mut remaining = budget - SPECIAL_TOKENS - l_q;
    let mut selected = Vec::new();
    for sb in ranked {
        if remaining == 0 {
            break;
        }
        let len = sb.block.len();
        if len == 0 {
            continue;
        }
        let kept = len.min(remaining);
        selected.push(DigestBlock {
            index: sb.block.index,
            kept,
        });
        remaining -= kept;
        if kept < len {
            break; // only the last selected block may be truncated
        }
    }
    selected.sort_by_key(|d| d.index);
    let total_tokens = SPECIAL_TOKENS + l_q + selected.iter().map(|d| d.kept).sum::<usize>();
    Ok(Digest {
        qid: query.qid.clone(),
        doc_id: doc_id.to_string(),
        selected,
        total_tokens,
    })
}

/// Materialize a digest's token sequence: kept prefixes of the selected
/// blocks, concatenated in document order.
pub fn digest_tokens(digest: &Digest, doc_tokens: &[Token], blocks: &[Block]) -> Vec<Token> {
    let mut out = Vec::new();
    for sel in &digest.selected {
        let block = blocks
            .iter()
            .find(|b| b.index == sel.index)
            .expect("digest references an existing block");
        out.extend_from_slice(&doc_tokens[block.start..block.start + sel.kept]);
    }
    out
}

/// Top-k passages by strategy score, returned in document order. Fewer than k
/// passages means all of them.
pub fn select_passages<'a>(
    query: &Query,
    doc_tokens: &[Token],
    passages: &'a [Passage],
    strategy: Strategy,
    ctx: &SelectionContext,
    k: usize,
) -> Result<Vec<&'a Passage>> {
    if k == 0 {
        return Err(Error::InvalidParam("k must be >= 1".into()));
    }
    if passages.is_empty() {
        return Ok(Vec::new());
    }
    let scores = score_units(
        query,
        doc_tokens,
        passages,
        |p| (p.index, p.start, p.end),
        &passages[0].doc_id,
        strategy,
        ctx,
    )?;
    let mut order: Vec<usize> = (0..passages.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .1
            .total_cmp(&scores[a].1)
            .then_with(|| passages[a].index.cmp(&passages[b].index))
    });
    let mut chosen: Vec<&Passage> = order.into_iter().take(k).map(|i| &passages[i]).collect();
    chosen.sort_by_key(|p| p.index);
    Ok(chosen)
}

/// First and last passage always kept; the interior is sampled uniformly
/// without replacement down to `n` total. Documents with at most `n` passages
/// are returned whole. Output is in document order.
pub fn sample_passages_parade(passages: &[Passage], n: usize, seed: u64) -> Vec<&Passage> {
    assert!(n >= 2, "parade sampling needs n >= 2");
    if passages.len() <= n {
        return passages.iter().collect();
    }
    let interior = passages.len() - 2;
    let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, &[&passages[0].doc_id]));
    let mut picks: Vec<usize> = rand::seq::index::sample(&mut rng, interior, n - 2)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    picks.push(0);
    picks.push(passages.len() - 1);
    picks.sort_unstable();
    picks.into_iter().map(|i| &passages[i]).collect()
}
