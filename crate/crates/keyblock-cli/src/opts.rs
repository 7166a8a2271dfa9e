//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "keyblock",
    version,
    about = "Long-document retrieval: block segmentation, local pre-ranking, digests, training and evaluation"
)]
pub struct Cli {
    /// Worker threads for batch stages; 1 produces identical output to any N.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a document-level IDF table and write it in binary form.
    Index(IndexArgs),
    /// First-stage BM25 retrieval: top-k documents per query.
    Retrieve(RetrieveArgs),
    /// Segment a corpus into blocks via dynamic programming.
    Segment(SegmentArgs),
    /// Pre-rank blocks (or passages) per (query, document) pair and emit
    /// token-budgeted digests (or selected passages).
    Prerank(PrerankArgs),
    /// Score documents by their digest and write a run file.
    Rank(RankArgs),
    /// Train the linear scorer with pairwise hinge loss.
    Train(TrainArgs),
    /// Evaluate a run against qrels, or compare two runs with a paired t-test.
    Eval(EvalArgs),
    /// Positional, gap, expansion and heatmap analyses.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic corpus, queries, qrels and lexicon.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// IDF formula: scikit or lucene.
    #[arg(long)]
    pub variant: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a JSON export for inspection.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// Binary IDF table (lucene variant) from `index`.
    #[arg(long)]
    pub idf: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub k: usize,
    #[arg(long, default_value_t = 0.9)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.4)]
    pub b: f64,
    #[arg(long, default_value = "bm25")]
    pub tag: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 63)]
    pub max_block_len: usize,
    /// Split costs strong,medium,weak,none.
    #[arg(long, default_value = "0,2,4,8")]
    pub costs: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PrerankArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// blocks.jsonl from `segment` (block unit only).
    #[arg(long)]
    pub blocks: Option<PathBuf>,
    /// tfidf | bm25 | random | firstn | learned | parade (passage unit only).
    #[arg(long)]
    pub strategy: String,
    /// Required whenever the strategy is stochastic.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scorer JSON for the learned strategy.
    #[arg(long)]
    pub scorer: Option<PathBuf>,
    /// qrels | run:<path> | all — which (query, doc) pairs to process.
    #[arg(long, default_value = "qrels")]
    pub candidates: String,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// block (digests) or passage (top-k selection).
    #[arg(long, default_value = "block")]
    pub unit: String,
    #[arg(long, default_value_t = 512)]
    pub budget: usize,
    /// Top passages kept in passage mode.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Passage sample size for the parade strategy.
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    #[arg(long, default_value_t = 225)]
    pub passage_len: usize,
    #[arg(long, default_value_t = 200)]
    pub passage_stride: usize,
    #[arg(long, default_value_t = 0.9)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.4)]
    pub b: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub blocks: Option<PathBuf>,
    /// Block selection strategy: tfidf | bm25 | random | firstn | learned.
    #[arg(long)]
    pub select: String,
    /// Scorer JSON for learned selection.
    #[arg(long)]
    pub scorer: Option<PathBuf>,
    /// Document score of the digest: bm25 | tfidf | scorer:<path>.
    #[arg(long, default_value = "bm25")]
    pub rank_with: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "qrels")]
    pub candidates: String,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    pub budget: usize,
    #[arg(long, default_value_t = 63)]
    pub max_block_len: usize,
    #[arg(long, default_value_t = 0.9)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.4)]
    pub b: f64,
    #[arg(long)]
    pub tag: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long)]
    pub blocks: Option<PathBuf>,
    /// shared | fixed:<scorer.json> | lexical:<tfidf|bm25|random|firstn>.
    #[arg(long)]
    pub binding: String,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long)]
    pub seed: u64,
    /// Training pairs sampled from the qrels.
    #[arg(long, default_value_t = 512)]
    pub pairs: usize,
    #[arg(long, default_value_t = 2)]
    pub batch_pairs: usize,
    #[arg(long, default_value_t = 8)]
    pub accumulate: usize,
    #[arg(long, default_value_t = 512)]
    pub budget: usize,
    #[arg(long, default_value_t = 63)]
    pub max_block_len: usize,
    #[arg(long, default_value_t = 0.9)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.4)]
    pub b: f64,
    /// Warm-start scorer; zero weights otherwise.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(subcommand)]
    pub compare: Option<EvalSub>,
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Comma-separated metrics (p@k, map, ndcg@k, ndcg); the full standard
    /// battery when omitted.
    #[arg(long)]
    pub metrics: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalSub {
    /// Paired t-test between two runs on one metric.
    Compare {
        #[arg(long)]
        run_a: PathBuf,
        #[arg(long)]
        run_b: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, default_value = "map")]
        metric: String,
    },
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// positions | gap | expansion | heatmap.
    pub kind: String,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scorer for positions/gap: bm25 or tfidf.
    #[arg(long, default_value = "bm25")]
    pub scorer_kind: String,
    /// Selection strategy for the heatmap.
    #[arg(long, default_value = "bm25")]
    pub strategy: String,
    /// Scorer JSON for a learned heatmap strategy.
    #[arg(long)]
    pub scorer: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub top_n: usize,
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    #[arg(long, default_value_t = 15)]
    pub min_blocks: usize,
    #[arg(long, default_value_t = 63)]
    pub max_block_len: usize,
    #[arg(long, default_value_t = 0.9)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.4)]
    pub b: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub n_queries: usize,
    #[arg(long, default_value_t = 20)]
    pub docs_per_query: usize,
    #[arg(long, default_value_t = 20)]
    pub blocks_per_doc: usize,
    #[arg(long, default_value_t = 0.2)]
    pub relevant_fraction: f64,
    /// Bins eligible for planted signals, e.g. "1-10" or "6,7,8,9,10".
    #[arg(long, default_value = "1-10")]
    pub signal_positions: String,
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}
