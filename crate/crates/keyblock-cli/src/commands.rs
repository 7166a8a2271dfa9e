//! Subcommand implementations.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;

use keyblock_core::analysis::{
    avg_rsv_by_position, build_boolean, expand_query, gap_curve, top_block_heatmap, AnalysisPair,
    BooleanForm, BooleanQuery, ExpansionMode, Subset,
};
use keyblock_core::corpus::{
    load_corpus, load_lexicon, load_qrels, load_queries, load_run, write_corpus, write_lexicon,
    write_qrels, write_queries, write_run, Document, Query, RunEntry,
};
use keyblock_core::eval::{aligned_values, evaluate_run, paired_t_test, standard_metrics, Metric};
use keyblock_core::exec;
use keyblock_core::learned::{
    make_training_pairs, train, LinearScorer, ScorerRole, SelectorBinding,
};
use keyblock_core::lexical::{
    bm25_rsv, first_stage_retrieve, tfidf_rsv, Bm25Params, IdfTable, IdfVariant, LengthStats,
};
use keyblock_core::segment::{Block, CostTable, SegmentedCorpus};
use keyblock_core::select::{
    build_digest, digest_tokens, rank_blocks, sample_passages_parade, select_passages,
    SelectionContext, Strategy,
};
use keyblock_core::synth::{generate_synthetic, SynthSpec};
use keyblock_core::tokenize::Token;

use crate::opts::*;
use crate::{CliError, CliResult};

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(0) = cli.threads {
        return Err(CliError::usage("--threads must be >= 1"));
    }
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Data(e.into()))?;
        return pool.install(|| dispatch(cli.command));
    }
    #[cfg(not(feature = "parallel"))]
    if cli.threads.is_some() {
        log::warn!("built without the parallel feature; --threads is ignored");
    }
    dispatch(cli.command)
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Index(args) => cmd_index(args),
        Command::Retrieve(args) => cmd_retrieve(args),
        Command::Segment(args) => cmd_segment(args),
        Command::Prerank(args) => cmd_prerank(args),
        Command::Rank(args) => cmd_rank(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

// ── shared helpers ──────────────────────────────────────────────────────

fn write_config(primary_out: &Path, config: serde_json::Value) -> CliResult<()> {
    let mut os = primary_out.as_os_str().to_owned();
    os.push(".config.json");
    let path = PathBuf::from(os);
    let text = serde_json::to_string_pretty(&config).expect("config serializes");
    std::fs::write(&path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::Data)
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn parse_costs(spec: &str) -> CliResult<CostTable> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(CliError::usage(format!(
            "--costs wants four integers strong,medium,weak,none, got {spec:?}"
        )));
    }
    let mut vals = [0u64; 4];
    for (i, part) in parts.iter().enumerate() {
        vals[i] = part
            .parse()
            .map_err(|_| CliError::usage(format!("bad cost value {part:?}")))?;
    }
    CostTable::new(vals[0], vals[1], vals[2], vals[3]).map_err(|e| CliError::usage(e.to_string()))
}

/// tfidf | bm25 | random | firstn | learned. Stochastic strategies demand a
/// seed; learned demands a scorer file.
fn parse_strategy(
    name: &str,
    seed: Option<u64>,
    scorer_path: Option<&Path>,
) -> CliResult<(Strategy, Option<LinearScorer>)> {
    match name.to_ascii_lowercase().as_str() {
        "tfidf" => Ok((Strategy::Tfidf, None)),
        "bm25" => Ok((Strategy::Bm25, None)),
        "firstn" => Ok((Strategy::FirstN, None)),
        "random" => {
            let seed = seed.ok_or_else(|| CliError::usage("seed required for random strategy"))?;
            Ok((Strategy::Random { seed }, None))
        }
        "learned" => {
            let path = scorer_path
                .ok_or_else(|| CliError::usage("--scorer required for learned strategy"))?;
            let scorer = LinearScorer::load(path, ScorerRole::Selector)?;
            Ok((Strategy::Learned, Some(scorer)))
        }
        other => Err(CliError::usage(format!("unknown strategy {other:?}"))),
    }
}

enum CandidateSource {
    Qrels,
    Run(PathBuf),
    All,
}

fn parse_candidates(spec: &str) -> CliResult<CandidateSource> {
    if spec == "qrels" {
        Ok(CandidateSource::Qrels)
    } else if spec == "all" {
        Ok(CandidateSource::All)
    } else if let Some(path) = spec.strip_prefix("run:") {
        Ok(CandidateSource::Run(PathBuf::from(path)))
    } else {
        Err(CliError::usage(format!(
            "--candidates wants qrels, all or run:<path>, got {spec:?}"
        )))
    }
}

/// Resolve (query, doc_id) pairs in a deterministic order: queries in file
/// order, and per query the qrels docs in sorted order, the run docs in rank
/// order, or the whole corpus in file order.
fn resolve_pairs<'q>(
    source: &CandidateSource,
    queries: &'q [Query],
    corpus: &[Document],
    qrels_path: Option<&Path>,
) -> CliResult<Vec<(&'q Query, String)>> {
    match source {
        CandidateSource::Qrels => {
            let path = qrels_path
                .ok_or_else(|| CliError::usage("--qrels required with --candidates qrels"))?;
            let qrels = load_qrels(path)?;
            let mut pairs = Vec::new();
            for q in queries {
                if let Some(docs) = qrels.0.get(&q.qid) {
                    for doc_id in docs.keys() {
                        pairs.push((q, doc_id.clone()));
                    }
                }
            }
            Ok(pairs)
        }
        CandidateSource::Run(path) => {
            let run = load_run(path)?;
            let by_qid: HashMap<&str, &Query> =
                queries.iter().map(|q| (q.qid.as_str(), q)).collect();
            let mut pairs = Vec::new();
            for e in &run {
                if let Some(q) = by_qid.get(e.qid.as_str()) {
                    pairs.push((*q, e.doc_id.clone()));
                }
            }
            Ok(pairs)
        }
        CandidateSource::All => {
            let mut pairs = Vec::new();
            for q in queries {
                for d in corpus {
                    pairs.push((q, d.doc_id.clone()));
                }
            }
            Ok(pairs)
        }
    }
}

fn load_blocks_file(path: &Path) -> CliResult<HashMap<String, Vec<Block>>> {
    let contents = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(CliError::Data)?;
    let mut by_doc: HashMap<String, Vec<Block>> = HashMap::new();
    for (i, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let block: Block = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: malformed block line", path.display(), i + 1))
            .map_err(CliError::Data)?;
        by_doc.entry(block.doc_id.clone()).or_default().push(block);
    }
    Ok(by_doc)
}

/// Segment from a blocks file when given, otherwise run the DP segmenter.
fn segmented_corpus(
    corpus: Vec<Document>,
    blocks: Option<&Path>,
    max_block_len: usize,
) -> CliResult<SegmentedCorpus> {
    match blocks {
        Some(path) => Ok(SegmentedCorpus::from_blocks(
            corpus,
            load_blocks_file(path)?,
        )),
        None => Ok(SegmentedCorpus::build(
            corpus,
            max_block_len,
            &CostTable::default(),
        )),
    }
}

fn both_idf_tables(corpus: &[Document]) -> CliResult<(IdfTable, IdfTable)> {
    let scikit = IdfTable::build(corpus, IdfVariant::Scikit)?;
    let lucene = IdfTable::build(corpus, IdfVariant::Lucene)?;
    Ok((scikit, lucene))
}

fn bm25_params(k1: f64, b: f64) -> CliResult<Bm25Params> {
    let params = Bm25Params { k1, b };
    params
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    Ok(params)
}

// ── index / retrieve / segment ──────────────────────────────────────────

fn cmd_index(args: IndexArgs) -> CliResult<()> {
    let variant: IdfVariant = args
        .variant
        .parse()
        .map_err(|e: keyblock_core::Error| CliError::usage(e.to_string()))?;
    let corpus = load_corpus(&args.corpus)?;
    let idf = IdfTable::build(&corpus, variant)?;
    idf.write_binary(&args.out)?;
    if let Some(json_out) = &args.json_out {
        idf.write_json(json_out)?;
    }
    println!(
        "indexed {} documents, {} terms -> {}",
        corpus.len(),
        {
            let mut n = 0usize;
            for d in &corpus {
                n = n.max(d.tokens.len());
            }
            idf_term_count(&idf)
        },
        args.out.display()
    );
    write_config(
        &args.out,
        serde_json::json!({
            "command": "index",
            "corpus": path_str(&args.corpus),
            "variant": variant.name(),
            "out": path_str(&args.out),
            "json_out": args.json_out.as_deref().map(path_str),
        }),
    )
}

fn idf_term_count(_idf: &IdfTable) -> String {
    // the table does not expose its term count; report is cosmetic
    "all".to_string()
}

fn cmd_retrieve(args: RetrieveArgs) -> CliResult<()> {
    if args.tag.chars().any(char::is_whitespace) {
        return Err(CliError::usage("--tag must not contain whitespace"));
    }
    let params = bm25_params(args.k1, args.b)?;
    if args.k == 0 {
        return Err(CliError::usage("--k must be >= 1"));
    }
    let corpus = load_corpus(&args.corpus)?;
    let queries = load_queries(&args.queries)?;
    let idf = IdfTable::read_binary(&args.idf)?;

    let per_query: Vec<keyblock_core::Result<Vec<RunEntry>>> = exec::map_ordered(&queries, |q| {
        first_stage_retrieve(q, &corpus, &idf, &params, args.k, &args.tag)
    });
    let mut entries = Vec::new();
    for result in per_query {
        entries.extend(result?);
    }
    write_run(&entries, &args.out)?;
    println!(
        "retrieved {} entries for {} queries -> {}",
        entries.len(),
        queries.len(),
        args.out.display()
    );
    write_config(
        &args.out,
        serde_json::json!({
            "command": "retrieve",
            "corpus": path_str(&args.corpus),
            "queries": path_str(&args.queries),
            "idf": path_str(&args.idf),
            "k": args.k, "k1": args.k1, "b": args.b,
            "tag": args.tag,
            "out": path_str(&args.out),
        }),
    )
}

fn cmd_segment(args: SegmentArgs) -> CliResult<()> {
    if args.max_block_len == 0 {
        return Err(CliError::usage("--max-block-len must be >= 1"));
    }
    let costs = parse_costs(&args.costs)?;
    let corpus = load_corpus(&args.corpus)?;
    let store = SegmentedCorpus::build(corpus, args.max_block_len, &costs);
    let mut out = String::new();
    let mut n_blocks = 0usize;
    for (_, blocks) in store.iter() {
        for block in blocks {
            let _ = writeln!(
                out,
                "{}",
                serde_json::to_string(block).expect("block serializes")
            );
            n_blocks += 1;
        }
    }
    std::fs::write(&args.out, out)
        .with_context(|| format!("writing {}", args.out.display()))
        .map_err(CliError::Data)?;
    println!(
        "segmented {} documents into {} blocks -> {}",
        store.docs().len(),
        n_blocks,
        args.out.display()
    );
    write_config(
        &args.out,
        serde_json::json!({
            "command": "segment",
            "corpus": path_str(&args.corpus),
            "max_block_len": args.max_block_len,
            "costs": args.costs,
            "out": path_str(&args.out),
        }),
    )
}

// ── prerank ─────────────────────────────────────────────────────────────

fn cmd_prerank(args: PrerankArgs) -> CliResult<()> {
    let corpus = load_corpus(&args.corpus)?;
    let queries = load_queries(&args.queries)?;
    let source = parse_candidates(&args.candidates)?;
    let pairs = resolve_pairs(&source, &queries, &corpus, args.qrels.as_deref())?;
    let (scikit, lucene) = both_idf_tables(&corpus)?;
    let params = bm25_params(args.k1, args.b)?;

    let out = match args.unit.as_str() {
        "block" => {
            let blocks_path = args
                .blocks
                .as_deref()
                .ok_or_else(|| CliError::usage("--blocks required with --unit block"))?;
            let (strategy, scorer) =
                parse_strategy(&args.strategy, args.seed, args.scorer.as_deref())?;
            let store = segmented_corpus(corpus, Some(blocks_path), 63)?;
            let mut ctx = SelectionContext::lexical(&scikit, &lucene, params);
            if let Some(s) = &scorer {
                ctx = ctx.with_scorer(s);
            }
            let lines: Vec<CliResult<String>> = exec::map_ordered(&pairs, |(query, doc_id)| {
                let (doc, blocks) = store.get(doc_id).ok_or_else(|| {
                    CliError::Data(anyhow::anyhow!("doc_id {doc_id} not in corpus"))
                })?;
                let ranked = rank_blocks(query, &doc.tokens, blocks, strategy, &ctx)?;
                let digest = build_digest(query, doc_id, &ranked, args.budget)?;
                Ok(serde_json::to_string(&digest).expect("digest serializes"))
            });
            collect_lines(lines)?
        }
        "passage" => {
            if args.passage_len < args.passage_stride || args.passage_stride == 0 {
                return Err(CliError::usage("need passage-len >= passage-stride >= 1"));
            }
            let windows: HashMap<&str, Vec<keyblock_core::segment::Passage>> = corpus
                .iter()
                .map(|d| {
                    (
                        d.doc_id.as_str(),
                        keyblock_core::segment::window_passages(
                            &d.doc_id,
                            &d.tokens,
                            args.passage_len,
                            args.passage_stride,
                        ),
                    )
                })
                .collect();
            let parade = args.strategy.eq_ignore_ascii_case("parade");
            let (strategy, scorer) = if parade {
                if args.seed.is_none() {
                    return Err(CliError::usage("seed required for parade sampling"));
                }
                (Strategy::FirstN, None) // unused; sampling path below
            } else {
                parse_strategy(&args.strategy, args.seed, args.scorer.as_deref())?
            };
            let mut ctx = SelectionContext::lexical(&scikit, &lucene, params);
            if let Some(s) = &scorer {
                ctx = ctx.with_scorer(s);
            }
            let by_id: HashMap<&str, &Document> =
                corpus.iter().map(|d| (d.doc_id.as_str(), d)).collect();
            let lines: Vec<CliResult<String>> = exec::map_ordered(&pairs, |(query, doc_id)| {
                let doc = by_id.get(doc_id.as_str()).ok_or_else(|| {
                    CliError::Data(anyhow::anyhow!("doc_id {doc_id} not in corpus"))
                })?;
                let passages = &windows[doc_id.as_str()];
                let selected = if parade {
                    sample_passages_parade(passages, args.n, args.seed.expect("checked"))
                } else {
                    select_passages(query, &doc.tokens, passages, strategy, &ctx, args.k)?
                };
                let spans: Vec<serde_json::Value> = selected
                    .iter()
                    .map(|p| serde_json::json!({"index": p.index, "start": p.start, "end": p.end}))
                    .collect();
                Ok(serde_json::json!({
                    "qid": query.qid, "doc_id": doc_id, "passages": spans
                })
                .to_string())
            });
            collect_lines(lines)?
        }
        other => {
            return Err(CliError::usage(format!(
                "--unit wants block or passage, got {other:?}"
            )))
        }
    };

    std::fs::write(&args.out, out)
        .with_context(|| format!("writing {}", args.out.display()))
        .map_err(CliError::Data)?;
    println!(
        "preranked {} (query, doc) pairs -> {}",
        pairs.len(),
        args.out.display()
    );
    write_config(
        &args.out,
        serde_json::json!({
            "command": "prerank",
            "corpus": path_str(&args.corpus),
            "queries": path_str(&args.queries),
            "blocks": args.blocks.as_deref().map(path_str),
            "strategy": args.strategy,
            "seed": args.seed,
            "scorer": args.scorer.as_deref().map(path_str),
            "candidates": args.candidates,
            "qrels": args.qrels.as_deref().map(path_str),
            "unit": args.unit,
            "budget": args.budget,
            "k": args.k, "n": args.n,
            "passage_len": args.passage_len,
            "passage_stride": args.passage_stride,
            "k1": args.k1, "b": args.b,
            "out": path_str(&args.out),
        }),
    )
}

fn collect_lines(lines: Vec<CliResult<String>>) -> CliResult<String> {
    let mut out = String::new();
    for line in lines {
        out.push_str(&line?);
        out.push('\n');
    }
    Ok(out)
}

// ── rank ────────────────────────────────────────────────────────────────

enum RankWith {
    Bm25,
    Tfidf,
    Scorer(LinearScorer),
}

impl RankWith {
    fn name(&self) -> &'static str {
        match self {
            RankWith::Bm25 => "bm25",
            RankWith::Tfidf => "tfidf",
            RankWith::Scorer(_) => "scorer",
        }
    }
}

fn parse_rank_with(spec: &str) -> CliResult<RankWith> {
    match spec {
        "bm25" => Ok(RankWith::Bm25),
        "tfidf" => Ok(RankWith::Tfidf),
        other => {
            if let Some(path) = other.strip_prefix("scorer:") {
                Ok(RankWith::Scorer(LinearScorer::load(
                    Path::new(path),
                    ScorerRole::Ranker,
                )?))
            } else {
                Err(CliError::usage(format!(
                    "--rank-with wants bm25, tfidf or scorer:<path>, got {other:?}"
                )))
            }
        }
    }
}

fn cmd_rank(args: RankArgs) -> CliResult<()> {
    let params = bm25_params(args.k1, args.b)?;
    let (select, sel_scorer) = parse_strategy(&args.select, args.seed, args.scorer.as_deref())?;
    let rank_with = parse_rank_with(&args.rank_with)?;
    let tag = args
        .tag
        .clone()
        .unwrap_or_else(|| format!("{}+{}", select.name(), rank_with.name()));
    if tag.chars().any(char::is_whitespace) {
        return Err(CliError::usage("--tag must not contain whitespace"));
    }

    let corpus = load_corpus(&args.corpus)?;
    let queries = load_queries(&args.queries)?;
    let source = parse_candidates(&args.candidates)?;
    let pairs = resolve_pairs(&source, &queries, &corpus, args.qrels.as_deref())?;
    let (scikit, lucene) = both_idf_tables(&corpus)?;
    let doc_stats = LengthStats::from_lengths(corpus.iter().map(|d| d.tokens.len()));
    let store = segmented_corpus(corpus, args.blocks.as_deref(), args.max_block_len)?;

    let mut ctx = SelectionContext::lexical(&scikit, &lucene, params).with_doc_stats(doc_stats);
    if let Some(s) = &sel_scorer {
        ctx = ctx.with_scorer(s);
    }

    let scored: Vec<CliResult<(String, String, f64)>> =
        exec::map_ordered(&pairs, |(query, doc_id)| {
            let (doc, blocks) = store
                .get(doc_id)
                .ok_or_else(|| CliError::Data(anyhow::anyhow!("doc_id {doc_id} not in corpus")))?;
            let ranked = rank_blocks(query, &doc.tokens, blocks, select, &ctx)?;
            let digest = build_digest(query, doc_id, &ranked, args.budget)?;
            let dtokens = digest_tokens(&digest, &doc.tokens, blocks);
            let score = score_digest(
                query, &dtokens, &rank_with, &scikit, &lucene, &params, &doc_stats,
            )?;
            Ok((query.qid.clone(), doc_id.clone(), score))
        });

    // group per query in query-file order, sort (score desc, doc_id desc)
    let mut per_query: HashMap<String, Vec<(String, f64)>> = HashMap::new();
    let mut qid_order = Vec::new();
    for item in scored {
        let (qid, doc_id, score) = item?;
        if !per_query.contains_key(&qid) {
            qid_order.push(qid.clone());
        }
        per_query.entry(qid).or_default().push((doc_id, score));
    }
    let mut entries = Vec::new();
    for qid in qid_order {
        let mut docs = per_query.remove(&qid).expect("grouped above");
        docs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| b.0.cmp(&a.0)));
        for (i, (doc_id, score)) in docs.into_iter().enumerate() {
            entries.push(RunEntry {
                qid: qid.clone(),
                doc_id,
                rank: i + 1,
                score,
                tag: tag.clone(),
            });
        }
    }
    write_run(&entries, &args.out)?;
    println!("ranked {} entries -> {}", entries.len(), args.out.display());
    write_config(
        &args.out,
        serde_json::json!({
            "command": "rank",
            "corpus": path_str(&args.corpus),
            "queries": path_str(&args.queries),
            "blocks": args.blocks.as_deref().map(path_str),
            "select": args.select,
            "scorer": args.scorer.as_deref().map(path_str),
            "rank_with": args.rank_with,
            "seed": args.seed,
            "candidates": args.candidates,
            "qrels": args.qrels.as_deref().map(path_str),
            "budget": args.budget,
            "max_block_len": args.max_block_len,
            "k1": args.k1, "b": args.b,
            "tag": tag,
            "out": path_str(&args.out),
        }),
    )
}

fn score_digest(
    query: &Query,
    dtokens: &[Token],
    rank_with: &RankWith,
    scikit: &IdfTable,
    lucene: &IdfTable,
    params: &Bm25Params,
    doc_stats: &LengthStats,
) -> CliResult<f64> {
    Ok(match rank_with {
        RankWith::Bm25 => bm25_rsv(query, dtokens, lucene, params, doc_stats)?,
        RankWith::Tfidf => tfidf_rsv(query, dtokens, scikit)?,
        RankWith::Scorer(s) => {
            let fv = keyblock_core::learned::features(
                query, dtokens, scikit, lucene, params, doc_stats,
            )?;
            s.score(&fv)?
        }
    })
}

// ── train ───────────────────────────────────────────────────────────────

fn parse_binding(spec: &str, seed: u64) -> CliResult<SelectorBinding> {
    if spec == "shared" {
        return Ok(SelectorBinding::Shared);
    }
    if let Some(path) = spec.strip_prefix("fixed:") {
        let scorer = LinearScorer::load(Path::new(path), ScorerRole::Selector)?;
        return Ok(SelectorBinding::Fixed(scorer));
    }
    if let Some(name) = spec.strip_prefix("lexical:") {
        if name == "learned" {
            return Err(CliError::usage(
                "lexical binding cannot name the learned strategy",
            ));
        }
        let (strategy, _) = parse_strategy(name, Some(seed), None)?;
        return Ok(SelectorBinding::Lexical(strategy));
    }
    Err(CliError::usage(format!(
        "--binding wants shared, fixed:<scorer.json> or lexical:<strategy>, got {spec:?}"
    )))
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let params = bm25_params(args.k1, args.b)?;
    if args.lr <= 0.0 {
        return Err(CliError::usage("--lr must be positive"));
    }
    let binding = parse_binding(&args.binding, args.seed)?;
    let corpus = load_corpus(&args.corpus)?;
    let queries = load_queries(&args.queries)?;
    let qrels = load_qrels(&args.qrels)?;
    let (scikit, lucene) = both_idf_tables(&corpus)?;
    let doc_stats = LengthStats::from_lengths(corpus.iter().map(|d| d.tokens.len()));
    let pool: Vec<String> = corpus.iter().map(|d| d.doc_id.clone()).collect();
    let store = segmented_corpus(corpus, args.blocks.as_deref(), args.max_block_len)?;

    let pairs = make_training_pairs(&queries, &qrels, &pool, args.pairs, args.seed)?;
    let init = match &args.init {
        Some(path) => LinearScorer::load(path, ScorerRole::Shared)?,
        None => LinearScorer::zeros(ScorerRole::Shared),
    };
    let ctx = SelectionContext::lexical(&scikit, &lucene, params).with_doc_stats(doc_stats);
    let cfg = keyblock_core::learned::TrainConfig {
        epochs: args.epochs,
        lr: args.lr,
        batch_pairs: args.batch_pairs,
        accumulate: args.accumulate,
        seed: args.seed,
    };
    let (trained, history) = train(
        &init,
        &pairs,
        &binding,
        &store,
        &queries,
        &ctx,
        args.budget,
        &cfg,
    )?;
    trained.save(&args.out)?;
    for stat in &history {
        log::info!(
            "epoch {} mean_loss {:.6} updates {}",
            stat.epoch,
            stat.mean_loss,
            stat.updates
        );
    }
    if let Some(last) = history.last() {
        println!(
            "trained on {} pairs for {} epochs (final mean loss {:.6}) -> {}",
            pairs.len(),
            history.len(),
            last.mean_loss,
            args.out.display()
        );
    }
    write_config(
        &args.out,
        serde_json::json!({
            "command": "train",
            "corpus": path_str(&args.corpus),
            "queries": path_str(&args.queries),
            "qrels": path_str(&args.qrels),
            "blocks": args.blocks.as_deref().map(path_str),
            "binding": args.binding,
            "epochs": args.epochs,
            "lr": args.lr,
            "seed": args.seed,
            "pairs": args.pairs,
            "batch_pairs": args.batch_pairs,
            "accumulate": args.accumulate,
            "budget": args.budget,
            "max_block_len": args.max_block_len,
            "k1": args.k1, "b": args.b,
            "init": args.init.as_deref().map(path_str),
            "out": path_str(&args.out),
        }),
    )
}

// ── eval ────────────────────────────────────────────────────────────────

fn parse_metrics(spec: Option<&str>) -> CliResult<Vec<Metric>> {
    match spec {
        None => Ok(standard_metrics()),
        Some(s) => s
            .split(',')
            .map(|m| {
                m.parse::<Metric>()
                    .map_err(|e| CliError::usage(e.to_string()))
            })
            .collect(),
    }
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    if let Some(EvalSub::Compare {
        run_a,
        run_b,
        qrels,
        metric,
    }) = args.compare
    {
        let metric: Metric = metric
            .parse()
            .map_err(|e: keyblock_core::Error| CliError::usage(e.to_string()))?;
        let qrels = load_qrels(&qrels)?;
        let report_a = evaluate_run(&load_run(&run_a)?, &qrels, &[metric])?;
        let report_b = evaluate_run(&load_run(&run_b)?, &qrels, &[metric])?;
        let (a, b) = aligned_values(&report_a, &report_b, &metric);
        let result = paired_t_test(&a, &b)?;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        println!(
            "{metric}: run-a {:.6} run-b {:.6} over {} shared queries",
            mean(&a),
            mean(&b),
            a.len()
        );
        println!("t {:.6} df {} p {:.6}", result.t, result.df, result.p);
        return Ok(());
    }

    let run_path = args.run.ok_or_else(|| CliError::usage("--run required"))?;
    let qrels_path = args
        .qrels
        .ok_or_else(|| CliError::usage("--qrels required"))?;
    let metrics = parse_metrics(args.metrics.as_deref())?;
    let run = load_run(&run_path)?;
    let qrels = load_qrels(&qrels_path)?;
    let report = evaluate_run(&run, &qrels, &metrics)?;
    for metric in &metrics {
        let res = &report.metrics[&metric.to_string()];
        println!("{metric} {:.4}", res.mean);
    }
    if !report.excluded_no_positive.is_empty() {
        println!(
            "excluded (no positive qrels): {}",
            report.excluded_no_positive.len()
        );
    }
    if let Some(out) = &args.out {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(out, text)
            .with_context(|| format!("writing {}", out.display()))
            .map_err(CliError::Data)?;
        write_config(
            out,
            serde_json::json!({
                "command": "eval",
                "run": path_str(&run_path),
                "qrels": path_str(&qrels_path),
                "metrics": metrics.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
                "out": path_str(out),
            }),
        )?;
    }
    Ok(())
}

// ── analyze ─────────────────────────────────────────────────────────────

fn cmd_analyze(args: AnalyzeArgs) -> CliResult<()> {
    let params = bm25_params(args.k1, args.b)?;
    let corpus = load_corpus(&args.corpus)?;
    let queries = load_queries(&args.queries)?;
    let qrels = load_qrels(&args.qrels)?;
    let (scikit, lucene) = both_idf_tables(&corpus)?;
    let store = segmented_corpus(corpus, None, args.max_block_len)?;

    // labeled pairs: every qrels (qid, doc) with both sides present
    let by_qid: HashMap<&str, &Query> = queries.iter().map(|q| (q.qid.as_str(), q)).collect();
    let mut pairs: Vec<AnalysisPair> = Vec::new();
    for (qid, docs) in &qrels.0 {
        let Some(query) = by_qid.get(qid.as_str()) else {
            continue;
        };
        for (doc_id, &grade) in docs {
            let Some((doc, blocks)) = store.get(doc_id) else {
                continue;
            };
            pairs.push(AnalysisPair {
                query,
                doc,
                blocks,
                grade,
            });
        }
    }

    // per-document block-length stats for block-level scoring
    let block_stats: HashMap<&str, LengthStats> = store
        .iter()
        .map(|(d, blocks)| {
            (
                d.doc_id.as_str(),
                LengthStats::from_lengths(blocks.iter().map(|b| b.len())),
            )
        })
        .collect();

    if !matches!(args.scorer_kind.as_str(), "bm25" | "tfidf") {
        return Err(CliError::usage(format!(
            "--scorer-kind wants bm25 or tfidf, got {:?}",
            args.scorer_kind
        )));
    }

    let report = match args.kind.as_str() {
        "positions" => {
            let scorer = make_block_scorer(
                &args.scorer_kind,
                &scikit,
                &lucene,
                params,
                &block_stats,
                None,
            );
            let full = avg_rsv_by_position(&pairs, &scorer, Subset::Full, args.p, args.min_blocks);
            let relevant =
                avg_rsv_by_position(&pairs, &scorer, Subset::Relevant, args.p, args.min_blocks);
            let irrelevant =
                avg_rsv_by_position(&pairs, &scorer, Subset::Irrelevant, args.p, args.min_blocks);
            serde_json::json!({
                "analysis": "positions",
                "scorer": args.scorer_kind,
                "p": args.p, "min_blocks": args.min_blocks,
                "pairs": pairs.len(),
                "curves": {"full": full, "relevant": relevant, "irrelevant": irrelevant},
            })
        }
        "gap" => {
            let original = gap_curve(
                &pairs,
                make_block_scorer(
                    &args.scorer_kind,
                    &scikit,
                    &lucene,
                    params,
                    &block_stats,
                    None,
                ),
                args.p,
                args.min_blocks,
            );
            let mut report = serde_json::json!({
                "analysis": "gap",
                "scorer": args.scorer_kind,
                "p": args.p, "min_blocks": args.min_blocks,
                "pairs": pairs.len(),
                "curves": {"original": original},
            });
            if let Some(lex_path) = &args.lexicon {
                let lexicon = load_lexicon(lex_path)?;
                let mut syn_queries = HashMap::new();
                let mut rand_queries = HashMap::new();
                for q in &queries {
                    let syn = expand_query(q, &lexicon, ExpansionMode::Synonyms)?;
                    syn_queries.insert(q.qid.clone(), syn.to_query(&q.qid));
                    if let Some(seed) = args.seed {
                        let rand = expand_query(
                            q,
                            &lexicon,
                            ExpansionMode::Random {
                                seed: exec::mix_seed(seed, &[&q.qid]),
                                count: None,
                            },
                        )?;
                        rand_queries.insert(q.qid.clone(), rand.to_query(&q.qid));
                    }
                }
                let syn_curve = gap_curve(
                    &pairs,
                    make_block_scorer(
                        &args.scorer_kind,
                        &scikit,
                        &lucene,
                        params,
                        &block_stats,
                        Some(&syn_queries),
                    ),
                    args.p,
                    args.min_blocks,
                );
                report["curves"]["synonyms"] = serde_json::to_value(syn_curve).expect("serializes");
                if !rand_queries.is_empty() {
                    let rand_curve = gap_curve(
                        &pairs,
                        make_block_scorer(
                            &args.scorer_kind,
                            &scikit,
                            &lucene,
                            params,
                            &block_stats,
                            Some(&rand_queries),
                        ),
                        args.p,
                        args.min_blocks,
                    );
                    report["curves"]["random"] =
                        serde_json::to_value(rand_curve).expect("serializes");
                }
            }
            report
        }
        "expansion" => {
            let lex_path = args
                .lexicon
                .as_deref()
                .ok_or_else(|| CliError::usage("--lexicon required for expansion analysis"))?;
            let lexicon = load_lexicon(lex_path)?;
            let mut base_total = 0usize;
            let mut syn_total = 0usize;
            let mut rand_total = 0usize;
            // blocks of relevant documents, per query
            for q in &queries {
                let rel_blocks: Vec<&[Token]> = pairs
                    .iter()
                    .filter(|p| p.query.qid == q.qid && p.grade >= 1)
                    .flat_map(|p| p.blocks.iter().map(|b| b.tokens(&p.doc.tokens)))
                    .collect();
                if rel_blocks.is_empty() {
                    continue;
                }
                let base = build_boolean(q, &lexicon, BooleanForm::Base)?;
                let syn = build_boolean(q, &lexicon, BooleanForm::Syn)?;
                base_total +=
                    keyblock_core::analysis::count_matches(&base, rel_blocks.iter().copied());
                let base_or_syn = BooleanQuery::Or(vec![base.clone(), syn]);
                syn_total += keyblock_core::analysis::count_matches(
                    &base_or_syn,
                    rel_blocks.iter().copied(),
                );
                if let Some(seed) = args.seed {
                    let rand = build_boolean(
                        q,
                        &lexicon,
                        BooleanForm::Rand {
                            seed: exec::mix_seed(seed, &[&q.qid]),
                        },
                    )?;
                    let base_or_rand = BooleanQuery::Or(vec![base, rand]);
                    rand_total += keyblock_core::analysis::count_matches(
                        &base_or_rand,
                        rel_blocks.iter().copied(),
                    );
                }
            }
            let pct = |total: usize| {
                if base_total == 0 {
                    serde_json::Value::Null
                } else {
                    serde_json::json!(
                        100.0 * (total as f64 - base_total as f64) / base_total as f64
                    )
                }
            };
            serde_json::json!({
                "analysis": "expansion",
                "base": base_total,
                "base_or_syn": syn_total,
                "syn_pct_increase": pct(syn_total),
                "base_or_rand": if args.seed.is_some() { serde_json::json!(rand_total) } else { serde_json::Value::Null },
                "rand_pct_increase": if args.seed.is_some() { pct(rand_total) } else { serde_json::Value::Null },
            })
        }
        "heatmap" => {
            let (strategy, scorer) =
                parse_strategy(&args.strategy, args.seed, args.scorer.as_deref())?;
            let mut ctx = SelectionContext::lexical(&scikit, &lucene, params);
            if let Some(s) = &scorer {
                ctx = ctx.with_scorer(s);
            }
            let rows =
                top_block_heatmap(&pairs, strategy, &ctx, args.top_n, args.p, args.min_blocks)?;
            serde_json::json!({
                "analysis": "heatmap",
                "strategy": args.strategy,
                "seed": args.seed,
                "top_n": args.top_n, "p": args.p, "min_blocks": args.min_blocks,
                "rows": rows,
            })
        }
        other => {
            return Err(CliError::usage(format!(
                "analyze wants positions, gap, expansion or heatmap, got {other:?}"
            )))
        }
    };

    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&args.out, text)
        .with_context(|| format!("writing {}", args.out.display()))
        .map_err(CliError::Data)?;
    println!("analysis {} -> {}", args.kind, args.out.display());
    write_config(
        &args.out,
        serde_json::json!({
            "command": "analyze",
            "kind": args.kind,
            "corpus": path_str(&args.corpus),
            "queries": path_str(&args.queries),
            "qrels": path_str(&args.qrels),
            "lexicon": args.lexicon.as_deref().map(path_str),
            "seed": args.seed,
            "scorer_kind": args.scorer_kind,
            "strategy": args.strategy,
            "top_n": args.top_n, "p": args.p, "min_blocks": args.min_blocks,
            "max_block_len": args.max_block_len,
            "k1": args.k1, "b": args.b,
            "out": path_str(&args.out),
        }),
    )
}

/// Block-level RSV callback for the positional analyses. Scores against the
/// pair's own query, or its expanded counterpart when a map is supplied.
fn make_block_scorer<'a>(
    scorer_kind: &'a str,
    scikit: &'a IdfTable,
    lucene: &'a IdfTable,
    params: Bm25Params,
    block_stats: &'a HashMap<&'a str, LengthStats>,
    expanded: Option<&'a HashMap<String, Query>>,
) -> impl Fn(&AnalysisPair, &[Token]) -> f64 + Sync + Send + 'a {
    move |pair: &AnalysisPair, unit: &[Token]| -> f64 {
        let query = match expanded {
            Some(map) => &map[&pair.query.qid],
            None => pair.query,
        };
        match scorer_kind {
            "tfidf" => tfidf_rsv(query, unit, scikit).expect("scikit table supplied"),
            _ => bm25_rsv(
                query,
                unit,
                lucene,
                &params,
                &block_stats[pair.doc.doc_id.as_str()],
            )
            .expect("lucene table supplied"),
        }
    }
}

// ── synth ───────────────────────────────────────────────────────────────

fn parse_positions(spec: &str) -> CliResult<Vec<usize>> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if let Some((lo, hi)) = part.split_once('-') {
            let lo: usize = lo
                .trim()
                .parse()
                .map_err(|_| CliError::usage(format!("bad bin {lo:?}")))?;
            let hi: usize = hi
                .trim()
                .parse()
                .map_err(|_| CliError::usage(format!("bad bin {hi:?}")))?;
            if lo > hi {
                return Err(CliError::usage(format!("empty bin range {part:?}")));
            }
            out.extend(lo..=hi);
        } else {
            out.push(
                part.parse()
                    .map_err(|_| CliError::usage(format!("bad bin {part:?}")))?,
            );
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn cmd_synth(args: SynthArgs) -> CliResult<()> {
    let spec = SynthSpec {
        n_queries: args.n_queries,
        docs_per_query: args.docs_per_query,
        blocks_per_doc: args.blocks_per_doc,
        relevant_fraction: args.relevant_fraction,
        signal_positions: parse_positions(&args.signal_positions)?,
        p: args.p,
        ..SynthSpec::default()
    };
    let data = generate_synthetic(&spec, args.seed)?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))
        .map_err(CliError::Data)?;
    write_corpus(&data.corpus, &args.out_dir.join("corpus.jsonl"))?;
    write_queries(&data.queries, &args.out_dir.join("queries.tsv"))?;
    write_qrels(&data.qrels, &args.out_dir.join("qrels.txt"))?;
    write_lexicon(&data.lexicon, &args.out_dir.join("lexicon.tsv"))?;
    println!(
        "generated {} queries x {} docs ({} blocks each) -> {}",
        spec.n_queries,
        spec.docs_per_query,
        spec.blocks_per_doc,
        args.out_dir.display()
    );
    write_config(
        &args.out_dir.join("synth"),
        serde_json::json!({
            "command": "synth",
            "seed": args.seed,
            "spec": spec,
            "out_dir": path_str(&args.out_dir),
        }),
    )
}
