//! Analysis invariants on the synthetic construction: planted-bin laws for
//! the positional curves, expansion-counting monotonicity, heatmap rows as
//! probability distributions, determinism.

use keyblock_core::analysis::{
    avg_rsv_by_position, build_boolean, count_matches, gap_curve, top_block_heatmap, AnalysisPair,
    BooleanForm, BooleanQuery, Subset,
};
use keyblock_core::corpus::{Lexicon, Query};
use keyblock_core::lexical::{bm25_rsv, Bm25Params, IdfTable, IdfVariant, LengthStats};
use keyblock_core::segment::{CostTable, SegmentedCorpus, DEFAULT_MAX_BLOCK_LEN};
use keyblock_core::select::{SelectionContext, Strategy};
use keyblock_core::synth::{generate_synthetic, SynthData, SynthSpec};
use keyblock_core::tokenize::{tokenize, Token};

struct Fixture {
    data: SynthData,
    store: SegmentedCorpus,
    scikit: IdfTable,
    lucene: IdfTable,
}

fn fixture(signal_positions: Vec<usize>, seed: u64) -> Fixture {
    let spec = SynthSpec {
        n_queries: 6,
        docs_per_query: 12,
        blocks_per_doc: 20,
        relevant_fraction: 0.25,
        signal_positions,
        ..SynthSpec::default()
    };
    let data = generate_synthetic(&spec, seed).unwrap();
    let scikit = IdfTable::build(&data.corpus, IdfVariant::Scikit).unwrap();
    let lucene = IdfTable::build(&data.corpus, IdfVariant::Lucene).unwrap();
    let store = SegmentedCorpus::build(
        data.corpus.clone(),
        DEFAULT_MAX_BLOCK_LEN,
        &CostTable::default(),
    );
    Fixture {
        data,
        store,
        scikit,
        lucene,
    }
}

fn pairs_of<'a>(fx: &'a Fixture) -> Vec<AnalysisPair<'a>> {
    let mut pairs = Vec::new();
    for q in &fx.data.queries {
        if let Some(docs) = fx.data.qrels.0.get(&q.qid) {
            for (doc_id, &grade) in docs {
                let (doc, blocks) = fx.store.get(doc_id).unwrap();
                pairs.push(AnalysisPair {
                    query: q,
                    doc,
                    blocks,
                    grade,
                });
            }
        }
    }
    pairs
}

fn bm25_block_scorer<'a>(fx: &'a Fixture) -> impl Fn(&AnalysisPair, &[Token]) -> f64 + Sync + 'a {
    move |pair, unit| {
        let stats = LengthStats::from_lengths(pair.blocks.iter().map(|b| b.len()));
        bm25_rsv(pair.query, unit, &fx.lucene, &Bm25Params::default(), &stats).unwrap()
    }
}

#[test]
fn planted_bins_control_where_relevant_means_are_positive() {
    let fx = fixture((6..=10).collect(), 2025);
    let pairs = pairs_of(&fx);
    let scorer = bm25_block_scorer(&fx);
    let relevant = avg_rsv_by_position(&pairs, &scorer, Subset::Relevant, 10, 15);
    for bin in 0..5 {
        assert_eq!(
            relevant[bin],
            Some(0.0),
            "bin {} must be exactly zero",
            bin + 1
        );
    }
    for bin in 5..10 {
        let v = relevant[bin].unwrap();
        assert!(v > 0.0, "bin {} must be positive, got {v}", bin + 1);
    }
    // irrelevant docs never contain query terms at all
    let irrelevant = avg_rsv_by_position(&pairs, &scorer, Subset::Irrelevant, 10, 15);
    assert!(irrelevant.iter().all(|v| *v == Some(0.0)));

    let gap = gap_curve(&pairs, &scorer, 10, 15);
    for bin in 0..10 {
        let g = gap[bin].unwrap();
        if bin < 5 {
            assert_eq!(g, 0.0);
        } else {
            assert!(g > 0.0, "gap positive exactly where signals are planted");
        }
    }
}

#[test]
fn first_half_signals_leave_late_bins_at_zero() {
    let fx = fixture((1..=5).collect(), 909);
    let pairs = pairs_of(&fx);
    let scorer = bm25_block_scorer(&fx);
    let relevant = avg_rsv_by_position(&pairs, &scorer, Subset::Relevant, 10, 15);
    for (i, v) in relevant.iter().enumerate() {
        if i < 5 {
            assert!(v.unwrap() > 0.0, "bin {} must be positive", i + 1);
        } else {
            assert_eq!(*v, Some(0.0), "bin {} must be exactly zero", i + 1);
        }
    }
}

#[test]
fn syn_counting_exceeds_base_and_rand_matches_base() {
    let fx = fixture((1..=10).collect(), 77);
    let pairs = pairs_of(&fx);
    let mut base_total = 0;
    let mut syn_total = 0;
    let mut rand_total = 0;
    for q in &fx.data.queries {
        let rel_blocks: Vec<&[Token]> = pairs
            .iter()
            .filter(|p| p.query.qid == q.qid && p.grade >= 1)
            .flat_map(|p| p.blocks.iter().map(|b| b.tokens(&p.doc.tokens)))
            .collect();
        let base = build_boolean(q, &fx.data.lexicon, BooleanForm::Base).unwrap();
        let syn = build_boolean(q, &fx.data.lexicon, BooleanForm::Syn).unwrap();
        let rand = build_boolean(q, &fx.data.lexicon, BooleanForm::Rand { seed: 5 }).unwrap();
        base_total += count_matches(&base, rel_blocks.iter().copied());
        syn_total += count_matches(
            &BooleanQuery::Or(vec![base.clone(), syn]),
            rel_blocks.iter().copied(),
        );
        rand_total += count_matches(
            &BooleanQuery::Or(vec![base, rand]),
            rel_blocks.iter().copied(),
        );
    }
    assert!(base_total > 0);
    assert!(
        syn_total > base_total,
        "synonym-only blocks must add matches: {syn_total} vs {base_total}"
    );
    assert_eq!(
        rand_total, base_total,
        "pool terms never occur in the corpus"
    );
}

#[test]
fn union_counting_is_monotone_for_any_block_set() {
    let mut lex = Lexicon::default();
    lex.related.insert("alpha".into(), vec!["beta".into()]);
    let q = Query::new("q", "alpha");
    let base = build_boolean(&q, &lex, BooleanForm::Base).unwrap();
    let syn = build_boolean(&q, &lex, BooleanForm::Syn).unwrap();
    let blocks = [
        tokenize("alpha x"),
        tokenize("beta y"),
        tokenize("alpha beta"),
        tokenize("gamma z"),
    ];
    let units: Vec<&[Token]> = blocks.iter().map(|b| b.as_slice()).collect();
    let base_count = count_matches(&base, units.iter().copied());
    let union_count = count_matches(
        &BooleanQuery::Or(vec![base.clone(), syn]),
        units.iter().copied(),
    );
    assert!(union_count >= base_count);
    assert_eq!(base_count, 2);
    assert_eq!(union_count, 3, "the synonym-only block is the extra match");
}

#[test]
fn heatmap_rows_are_probability_distributions() {
    let fx = fixture((1..=10).collect(), 13);
    let pairs = pairs_of(&fx);
    let ctx = SelectionContext::lexical(&fx.scikit, &fx.lucene, Bm25Params::default());
    for strategy in [
        Strategy::Bm25,
        Strategy::Random { seed: 3 },
        Strategy::FirstN,
    ] {
        let rows = top_block_heatmap(&pairs, strategy, &ctx, 8, 10, 15).unwrap();
        assert_eq!(rows.len(), 8);
        for row in &rows {
            assert_eq!(row.len(), 10);
            assert!(row.iter().all(|&v| v >= 0.0));
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "row sums to {sum}");
        }
    }
}

#[test]
fn analyses_are_deterministic_given_seeds() {
    let fx = fixture((1..=10).collect(), 555);
    let pairs = pairs_of(&fx);
    let scorer = bm25_block_scorer(&fx);
    let a = avg_rsv_by_position(&pairs, &scorer, Subset::Full, 10, 15);
    let b = avg_rsv_by_position(&pairs, &scorer, Subset::Full, 10, 15);
    assert_eq!(a, b);
    let ctx = SelectionContext::lexical(&fx.scikit, &fx.lucene, Bm25Params::default());
    let h1 = top_block_heatmap(&pairs, Strategy::Random { seed: 9 }, &ctx, 8, 10, 15).unwrap();
    let h2 = top_block_heatmap(&pairs, Strategy::Random { seed: 9 }, &ctx, 8, 10, 15).unwrap();
    assert_eq!(h1, h2);
}

#[test]
fn single_qualifying_pair_gives_one_hot_rows() {
    let fx = fixture((1..=10).collect(), 31);
    let pairs = pairs_of(&fx);
    let one = vec![pairs[0]];
    let ctx = SelectionContext::lexical(&fx.scikit, &fx.lucene, Bm25Params::default());
    let rows = top_block_heatmap(&one, Strategy::Bm25, &ctx, 8, 10, 15).unwrap();
    for row in rows {
        assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(row.iter().filter(|&&v| v == 0.0).count(), 9);
    }
}
