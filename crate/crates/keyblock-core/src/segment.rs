//! Block segmentation (dynamic programming over punctuation costs) and fixed
//! sliding-window passages.

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::exec;
use crate::tokenize::Token;

pub const DEFAULT_MAX_BLOCK_LEN: usize = 63;
pub const DEFAULT_PASSAGE_LEN: usize = 225;
pub const DEFAULT_PASSAGE_STRIDE: usize = 200;

/// Split cost per punctuation class. Lower cost means a preferred split point;
/// a valid table satisfies strong <= medium <= weak <= none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostTable {
    pub strong: u64,
    pub medium: u64,
    pub weak: u64,
    pub none: u64,
}

impl Default for CostTable {
    fn default() -> Self {
        CostTable {
            strong: 0,
            medium: 2,
            weak: 4,
            none: 8,
        }
    }
}

impl CostTable {
    pub fn new(strong: u64, medium: u64, weak: u64, none: u64) -> Result<CostTable> {
        let t = CostTable {
            strong,
            medium,
            weak,
            none,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.strong <= self.medium && self.medium <= self.weak && self.weak <= self.none {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!(
                "cost table must satisfy strong <= medium <= weak <= none, got {self:?}"
            )))
        }
    }

    pub fn cost(&self, class: crate::tokenize::PunctClass) -> u64 {
        use crate::tokenize::PunctClass::*;
        match class {
            Strong => self.strong,
            Medium => self.medium,
            Weak => self.weak,
            None => self.none,
        }
    }
}

/// A contiguous token span of a document, 1-based `index`, half-open
/// `[start, end)` offsets. Blocks of a document tile it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub doc_id: String,
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn tokens<'a>(&self, doc_tokens: &'a [Token]) -> &'a [Token] {
        &doc_tokens[self.start..self.end]
    }
}

/// A fixed sliding-window token span; same layout as [`Block`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub doc_id: String,
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

impl Passage {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn tokens<'a>(&self, doc_tokens: &'a [Token]) -> &'a [Token] {
        &doc_tokens[self.start..self.end]
    }
}

/// Segment a token sequence into blocks of at most `max_block_len` tokens,
/// minimizing the summed split-point cost (the cost of splitting after token t
/// is the cost of t's punctuation class; the end of the document is a free
/// boundary). Ties prefer fewer blocks, then the lexicographically earliest
/// split positions.
pub fn segment_blocks(
    doc_id: &str,
    tokens: &[Token],
    max_block_len: usize,
    costs: &CostTable,
) -> Vec<Block> {
    assert!(max_block_len >= 1, "max_block_len must be >= 1");
    let n = tokens.len();
    if n == 0 {
        return Vec::new();
    }

    // suffix DP: best (cost, block count) to segment tokens[i..]
    const INF: (u64, u64) = (u64::MAX, u64::MAX);
    let mut best = vec![INF; n + 1];
    best[n] = (0, 0);
    for i in (0..n).rev() {
        let hi = (i + max_block_len).min(n);
        let mut b = INF;
        for j in i + 1..=hi {
            let (scost, sblocks) = best[j];
            if scost == u64::MAX {
                continue;
            }
            let boundary = if j < n {
                costs.cost(tokens[j - 1].class)
            } else {
                0
            };
            let cand = (scost + boundary, sblocks + 1);
            if cand < b {
                b = cand;
            }
        }
        best[i] = b;
    }

    // forward walk, taking the earliest block end that preserves optimality
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        let (cost, nblocks) = best[i];
        let hi = (i + max_block_len).min(n);
        let mut chosen = None;
        for j in i + 1..=hi {
            let (scost, sblocks) = best[j];
            if scost == u64::MAX {
                continue;
            }
            let boundary = if j < n {
                costs.cost(tokens[j - 1].class)
            } else {
                0
            };
            if scost + boundary == cost && sblocks + 1 == nblocks {
                chosen = Some(j);
                break;
            }
        }
        let j = chosen.expect("dp table admits a continuation");
        blocks.push(Block {
            doc_id: doc_id.to_string(),
            index: blocks.len() + 1,
            start: i,
            end: j,
        });
        i = j;
    }
    blocks
}

/// Total split cost of the optimal segmentation (0 for empty input).
pub fn segmentation_cost(blocks: &[Block], tokens: &[Token], costs: &CostTable) -> u64 {
    blocks
        .iter()
        .filter(|b| b.end < tokens.len())
        .map(|b| costs.cost(tokens[b.end - 1].class))
        .sum()
}

/// Cut a token sequence into sliding-window passages starting at offsets
/// 0, stride, 2*stride, ...; generation stops once a passage reaches the final
/// token. Empty input yields no passages.
pub fn window_passages(
    doc_id: &str,
    tokens: &[Token],
    passage_len: usize,
    passage_stride: usize,
) -> Vec<Passage> {
    assert!(
        passage_len >= passage_stride && passage_stride >= 1,
        "need passage_len >= passage_stride >= 1"
    );
    let n = tokens.len();
    let mut passages = Vec::new();
    if n == 0 {
        return passages;
    }
    let mut start = 0;
    loop {
        let end = (start + passage_len).min(n);
        passages.push(Passage {
            doc_id: doc_id.to_string(),
            index: passages.len() + 1,
            start,
            end,
        });
        if end >= n {
            break;
        }
        start += passage_stride;
    }
    passages
}

/// A corpus with per-document block segmentations and a doc_id index.
#[derive(Debug, Clone)]
pub struct SegmentedCorpus {
    docs: Vec<Document>,
    blocks: Vec<Vec<Block>>,
    by_id: std::collections::HashMap<String, usize>,
}

impl SegmentedCorpus {
    /// Segment every document (in parallel when enabled).
    pub fn build(docs: Vec<Document>, max_block_len: usize, costs: &CostTable) -> SegmentedCorpus {
        let blocks = exec::map_ordered(&docs, |d| {
            segment_blocks(&d.doc_id, &d.tokens, max_block_len, costs)
        });
        let by_id = docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id.clone(), i))
            .collect();
        SegmentedCorpus {
            docs,
            blocks,
            by_id,
        }
    }

    /// Attach precomputed blocks (e.g. loaded from a blocks.jsonl file).
    pub fn from_blocks(
        docs: Vec<Document>,
        mut blocks_by_doc: std::collections::HashMap<String, Vec<Block>>,
    ) -> SegmentedCorpus {
        let blocks = docs
            .iter()
            .map(|d| {
                let mut b = blocks_by_doc.remove(&d.doc_id).unwrap_or_default();
                b.sort_by_key(|bl| bl.index);
                b
            })
            .collect();
        let by_id = docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id.clone(), i))
            .collect();
        SegmentedCorpus {
            docs,
            blocks,
            by_id,
        }
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, doc_id: &str) -> Option<(&Document, &[Block])> {
        self.by_id
            .get(doc_id)
            .map(|&i| (&self.docs[i], self.blocks[i].as_slice()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Document, &[Block])> {
        self.docs.iter().zip(self.blocks.iter().map(Vec::as_slice))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::tokenize;

    #[test]
    fn short_doc_is_one_block() {
        let tokens = tokenize("one two three four five six seven eight nine ten");
        let blocks = segment_blocks("d", &tokens, DEFAULT_MAX_BLOCK_LEN, &CostTable::default());
        assert_eq!(blocks.len(), 1);
        assert_eq!((blocks[0].start, blocks[0].end), (0, 10));
    }

    #[test]
    fn splits_after_strong_punctuation() {
        // 10 tokens "a b c d . e f g h i", max len 6: the only zero-cost
        // 2-block segmentation splits after "." (brute force confirms the
        // minimum in the enumeration test suite).
        let tokens = tokenize("a b c d . e f g h i");
        assert_eq!(tokens.len(), 10);
        let blocks = segment_blocks("d", &tokens, 6, &CostTable::default());
        assert_eq!(blocks.len(), 2);
        assert_eq!((blocks[0].start, blocks[0].end), (0, 5));
        assert_eq!((blocks[1].start, blocks[1].end), (5, 10));
        assert_eq!(
            segmentation_cost(&blocks, &tokens, &CostTable::default()),
            0
        );
    }

    #[test]
    fn long_plain_run_uses_minimum_split_count() {
        // 130 NONE-class tokens, max 63: ceil(130/63) = 3 blocks is the fewest
        // feasible, so the optimal cost is two word splits.
        let text = (0..130)
            .map(|i| format!("w{i}"))
            .collect::<Vec<_>>()
            .join(" ");
        let tokens = tokenize(&text);
        let costs = CostTable::default();
        let blocks = segment_blocks("d", &tokens, 63, &costs);
        assert_eq!(blocks.len(), 3);
        assert!(blocks.iter().all(|b| b.len() <= 63));
        assert_eq!(segmentation_cost(&blocks, &tokens, &costs), 2 * costs.none);
    }

    #[test]
    fn empty_input_gives_no_blocks() {
        let blocks = segment_blocks("d", &[], 63, &CostTable::default());
        assert!(blocks.is_empty());
    }

    #[test]
    fn blocks_tile_the_document() {
        let tokens = tokenize("a b c. d e f; g h i, j k l m n o p q r s t");
        let blocks = segment_blocks("d", &tokens, 5, &CostTable::default());
        assert_eq!(blocks[0].start, 0);
        assert_eq!(blocks.last().unwrap().end, tokens.len());
        for w in blocks.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
        for (i, b) in blocks.iter().enumerate() {
            assert_eq!(b.index, i + 1);
            assert!(!b.is_empty() && b.len() <= 5);
        }
    }

    #[test]
    fn cost_table_ordering_enforced() {
        assert!(CostTable::new(0, 2, 4, 8).is_ok());
        assert!(CostTable::new(3, 2, 4, 8).is_err());
    }

    #[test]
    fn passage_shorter_than_window() {
        let tokens = tokenize(&vec!["w"; 100].join(" "));
        let ps = window_passages("d", &tokens, 225, 200);
        assert_eq!(ps.len(), 1);
        assert_eq!((ps[0].start, ps[0].end), (0, 100));
    }

    #[test]
    fn passage_offsets_hand_unrolled() {
        let tokens = tokenize(&vec!["w"; 425].join(" "));
        let ps = window_passages("d", &tokens, 225, 200);
        let spans: Vec<(usize, usize)> = ps.iter().map(|p| (p.start, p.end)).collect();
        assert_eq!(spans, vec![(0, 225), (200, 425)]);
    }

    #[test]
    fn no_passages_for_empty_doc() {
        assert!(window_passages("d", &[], 225, 200).is_empty());
    }

    #[test]
    fn passage_exact_window_stops() {
        let tokens = tokenize(&vec!["w"; 225].join(" "));
        let ps = window_passages("d", &tokens, 225, 200);
        assert_eq!(ps.len(), 1);
    }
}
