//! Trainable linear scorer over lexical features.
//!
//! The scorer fills the same contract a neural query-unit encoder would: one
//! parameter set scores both candidate blocks (selection) and the assembled
//! digest (document ranking). The shared binding updates that single scorer
//! through the digest-scoring path only; the fixed binding freezes a separate
//! selector. Training is pairwise subgradient descent on the hinge loss.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Qrels, Query};
use crate::error::{Error, Result};
use crate::lexical::{bm25_rsv, term_freq, tfidf_rsv, Bm25Params, IdfTable, LengthStats};
use crate::segment::Block;
use crate::select::{build_digest, digest_tokens, rank_blocks, SelectionContext, Strategy};
use crate::tokenize::Token;

pub const FEATURE_DIM: usize = 5;
pub const FEATURE_VERSION: u32 = 1;

/// Fixed-order features: [bm25_rsv, tfidf_rsv, distinct query-term overlap,
/// unit length / 100, bias 1].
pub type FeatureVector = [f64; FEATURE_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerRole {
    Selector,
    Ranker,
    Shared,
}

/// Linear model over [`FeatureVector`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    pub weights: Vec<f64>,
    #[serde(skip, default = "default_role")]
    pub role: ScorerRole,
}

fn default_role() -> ScorerRole {
    ScorerRole::Shared
}

#[derive(Serialize, Deserialize)]
struct ScorerFile {
    weights: Vec<f64>,
    feature_version: u32,
}

impl LinearScorer {
    pub fn zeros(role: ScorerRole) -> LinearScorer {
        LinearScorer {
            weights: vec![0.0; FEATURE_DIM],
            role,
        }
    }

    pub fn new(weights: Vec<f64>, role: ScorerRole) -> Result<LinearScorer> {
        if weights.len() != FEATURE_DIM {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_DIM,
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParam("scorer weights must be finite".into()));
        }
        Ok(LinearScorer { weights, role })
    }

    /// Dot product with a feature vector.
    pub fn score(&self, fv: &FeatureVector) -> Result<f64> {
        if self.weights.len() != FEATURE_DIM {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_DIM,
                found: self.weights.len(),
            });
        }
        Ok(self.weights.iter().zip(fv.iter()).map(|(w, x)| w * x).sum())
    }

    /// Persist as `{"weights": [...], "feature_version": 1}`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ScorerFile {
            weights: self.weights.clone(),
            feature_version: FEATURE_VERSION,
        };
        let text = serde_json::to_string_pretty(&file).expect("scorer serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, role: ScorerRole) -> Result<LinearScorer> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ScorerFile = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, 0, format!("bad scorer file: {e}")))?;
        if file.feature_version != FEATURE_VERSION {
            return Err(Error::parse(
                path,
                0,
                format!(
                    "feature_version {} unsupported (expected {FEATURE_VERSION})",
                    file.feature_version
                ),
            ));
        }
        LinearScorer::new(file.weights, role)
    }
}

/// Who selects blocks: the trained scorer itself, a frozen scorer, or a
/// lexical strategy.
#[derive(Debug, Clone)]
pub enum SelectorBinding {
    /// Selector = ranker; both are the scorer being trained.
    Shared,
    /// Frozen selector, never modified by training.
    Fixed(LinearScorer),
    /// Selection delegated to a lexical strategy.
    Lexical(Strategy),
}

impl SelectorBinding {
    pub fn name(&self) -> String {
        match self {
            SelectorBinding::Shared => "shared".to_string(),
            SelectorBinding::Fixed(_) => "fixed".to_string(),
            SelectorBinding::Lexical(s) => format!("lexical:{}", s.name()),
        }
    }
}

/// A positive/negative document pair for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub qid: String,
    pub positive: String,
    pub negative: String,
}

/// Lexical feature vector for a (query, unit) pair. `stats` carries the
/// average length of the unit's scope.
pub fn features(
    query: &Query,
    unit: &[Token],
    idf_scikit: &IdfTable,
    idf_lucene: &IdfTable,
    params: &Bm25Params,
    stats: &LengthStats,
) -> Result<FeatureVector> {
    if unit.is_empty() {
        return Ok([0.0, 0.0, 0.0, 0.0, 1.0]);
    }
    let bm25 = bm25_rsv(query, unit, idf_lucene, params, stats)?;
    let tfidf = tfidf_rsv(query, unit, idf_scikit)?;
    let overlap = crate::lexical::distinct_terms(query)
        .iter()
        .filter(|t| term_freq(unit, t) > 0)
        .count() as f64;
    Ok([bm25, tfidf, overlap, unit.len() as f64 / 100.0, 1.0])
}

/// Pairwise hinge loss max(0, 1 - s_pos + s_neg).
pub fn hinge_loss(s_pos: f64, s_neg: f64) -> f64 {
    (1.0 - s_pos + s_neg).max(0.0)
}

/// Rank blocks with the selector the binding names, assemble the digest, and
/// return the digest's feature vector. `current` is the scorer being trained
/// (used directly under the shared binding).
pub fn digest_features(
    query: &Query,
    doc: &Document,
    blocks: &[Block],
    binding: &SelectorBinding,
    current: &LinearScorer,
    ctx: &SelectionContext,
    budget: usize,
) -> Result<FeatureVector> {
    let (strategy, selector_ctx) = match binding {
        SelectorBinding::Shared => (Strategy::Learned, ctx.with_scorer(current)),
        SelectorBinding::Fixed(frozen) => (Strategy::Learned, ctx.with_scorer(frozen)),
        SelectorBinding::Lexical(Strategy::Learned) => {
            return Err(Error::InvalidParam(
                "lexical binding cannot name the learned strategy".into(),
            ));
        }
        SelectorBinding::Lexical(strategy) => (*strategy, *ctx),
    };
    let ranked = rank_blocks(query, &doc.tokens, blocks, strategy, &selector_ctx)?;
    let digest = build_digest(query, &doc.doc_id, &ranked, budget)?;
    let dtokens = digest_tokens(&digest, &doc.tokens, blocks);
    let doc_stats = ctx
        .doc_stats
        .ok_or_else(|| Error::InvalidParam("document-level length stats required".into()))?;
    let idf_scikit = ctx
        .idf_scikit
        .ok_or_else(|| Error::InvalidParam("scorer features require a scikit IDF table".into()))?;
    let idf_lucene = ctx
        .idf_lucene
        .ok_or_else(|| Error::InvalidParam("scorer features require a lucene IDF table".into()))?;
    features(
        query,
        &dtokens,
        idf_scikit,
        idf_lucene,
        &ctx.params,
        &doc_stats,
    )
}

/// Full pipeline score of one document: select blocks per the binding, build
/// the digest, score its features with `scorer`.
pub fn score_document(
    query: &Query,
    doc: &Document,
    blocks: &[Block],
    binding: &SelectorBinding,
    scorer: &LinearScorer,
    ctx: &SelectionContext,
    budget: usize,
) -> Result<f64> {
    let fv = digest_features(query, doc, blocks, binding, scorer, ctx, budget)?;
    scorer.score(&fv)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Pairs per mini-batch.
    pub batch_pairs: usize,
    /// Mini-batches accumulated into one weight update.
    pub accumulate: usize,
    /// Shuffles the pair order once before the first epoch; the order then
    /// stays fixed. Block selection under the shared binding always uses the
    /// weights current at forward time.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            lr: 0.1,
            batch_pairs: 2,
            accumulate: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub updates: usize,
}

/// Subgradient descent on the mean hinge loss per effective batch
/// (batch_pairs * accumulate pairs). When the loss is positive the gradient
/// w.r.t. the weights is fv(neg) - fv(pos); selection inside the featurizer is
/// treated as constant during the update. The featurizer sees the current
/// weights each forward pass.
pub fn train_with_featurizer<F>(
    scorer: &LinearScorer,
    pairs: &[TrainingPair],
    cfg: &TrainConfig,
    featurize: F,
) -> Result<(LinearScorer, Vec<EpochStats>)>
where
    F: Fn(&TrainingPair, &LinearScorer) -> Result<(FeatureVector, FeatureVector)>,
{
    if pairs.is_empty() {
        return Err(Error::InvalidParam(
            "training needs at least one pair".into(),
        ));
    }
    if cfg.lr <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "lr must be positive, got {}",
            cfg.lr
        )));
    }
    if cfg.batch_pairs == 0 || cfg.accumulate == 0 {
        return Err(Error::InvalidParam(
            "batch_pairs and accumulate must be >= 1".into(),
        ));
    }

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha12Rng::seed_from_u64(cfg.seed));

    let mut current = scorer.clone();
    let effective = cfg.batch_pairs * cfg.accumulate;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut updates = 0;
        for chunk in order.chunks(effective) {
            let mut grad = [0.0; FEATURE_DIM];
            let mut any = false;
            for &idx in chunk {
                let pair = &pairs[idx];
                let (fv_pos, fv_neg) = featurize(pair, &current)?;
                let s_pos = current.score(&fv_pos)?;
                let s_neg = current.score(&fv_neg)?;
                let loss = hinge_loss(s_pos, s_neg);
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss(format!(
                        "pair (qid {}, +{}, -{}) at epoch {epoch}: s_pos={s_pos}, s_neg={s_neg}",
                        pair.qid, pair.positive, pair.negative
                    )));
                }
                loss_sum += loss;
                if loss > 0.0 {
                    for d in 0..FEATURE_DIM {
                        grad[d] += fv_neg[d] - fv_pos[d];
                    }
                    any = true;
                }
            }
            if any {
                let scale = cfg.lr / chunk.len() as f64;
                for (w, g) in current.weights.iter_mut().zip(&grad) {
                    *w -= scale * g;
                }
                if grad.iter().any(|&g| g != 0.0) {
                    updates += 1;
                }
            }
        }
        history.push(EpochStats {
            epoch,
            mean_loss: loss_sum / pairs.len() as f64,
            updates,
        });
    }
    Ok((current, history))
}

/// Train the scorer over the document pipeline: each pair's positive and
/// negative documents go through selection (per `binding`), digest assembly
/// and digest featurization. The fixed selector of a `Fixed` binding is never
/// modified.
#[allow(clippy::too_many_arguments)]
pub fn train(
    scorer: &LinearScorer,
    pairs: &[TrainingPair],
    binding: &SelectorBinding,
    store: &crate::segment::SegmentedCorpus,
    queries: &[Query],
    ctx: &SelectionContext,
    budget: usize,
    cfg: &TrainConfig,
) -> Result<(LinearScorer, Vec<EpochStats>)> {
    let by_qid: std::collections::HashMap<&str, &Query> =
        queries.iter().map(|q| (q.qid.as_str(), q)).collect();
    let lookup = |doc_id: &str| {
        store
            .get(doc_id)
            .ok_or_else(|| Error::InvalidParam(format!("unknown doc_id {doc_id} in training pair")))
    };
    train_with_featurizer(scorer, pairs, cfg, |pair, current| {
        let query = by_qid.get(pair.qid.as_str()).ok_or_else(|| {
            Error::InvalidParam(format!("unknown qid {} in training pair", pair.qid))
        })?;
        let (pos_doc, pos_blocks) = lookup(&pair.positive)?;
        let (neg_doc, neg_blocks) = lookup(&pair.negative)?;
        let fv_pos = digest_features(query, pos_doc, pos_blocks, binding, current, ctx, budget)?;
        let fv_neg = digest_features(query, neg_doc, neg_blocks, binding, current, ctx, budget)?;
        Ok((fv_pos, fv_neg))
    })
}

/// Uniform seeded draw from the pool documents that are not positives of the
/// query (labeled not relevant or unlabeled are both eligible).
pub fn sample_negatives(qrels: &Qrels, pool: &[String], qid: &str, seed: u64) -> Result<String> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    sample_negatives_with(qrels, pool, qid, &mut rng)
}

pub fn sample_negatives_with(
    qrels: &Qrels,
    pool: &[String],
    qid: &str,
    rng: &mut impl Rng,
) -> Result<String> {
    let eligible: Vec<&String> = pool
        .iter()
        .filter(|d| qrels.grade(qid, d).is_none_or(|g| g == 0))
        .collect();
    if eligible.is_empty() {
        return Err(Error::EmptyPool {
            qid: qid.to_string(),
        });
    }
    Ok(eligible[rng.gen_range(0..eligible.len())].clone())
}

/// Build `n_pairs` training pairs from qrels: a random query with at least one
/// positive, a random positive, and a negative sampled from the query's
/// labeled non-positives (falling back to the whole pool minus positives).
pub fn make_training_pairs(
    queries: &[Query],
    qrels: &Qrels,
    pool: &[String],
    n_pairs: usize,
    seed: u64,
) -> Result<Vec<TrainingPair>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let eligible: Vec<&Query> = queries
        .iter()
        .filter(|q| !qrels.positives(&q.qid).is_empty())
        .collect();
    if eligible.is_empty() {
        return Err(Error::InvalidParam(
            "no query with a positive judgment".into(),
        ));
    }
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let q = eligible[rng.gen_range(0..eligible.len())];
        let positives = qrels.positives(&q.qid);
        let positive = positives[rng.gen_range(0..positives.len())].to_string();
        let labeled: Vec<String> = qrels
            .0
            .get(&q.qid)
            .map(|m| {
                m.iter()
                    .filter(|(_, &g)| g == 0)
                    .map(|(d, _)| d.clone())
                    .collect()
            })
            .unwrap_or_default();
        let negative = if labeled.is_empty() {
            sample_negatives_with(qrels, pool, &q.qid, &mut rng)?
        } else {
            labeled[rng.gen_range(0..labeled.len())].clone()
        };
        pairs.push(TrainingPair {
            qid: q.qid.clone(),
            positive,
            negative,
        });
    }
    Ok(pairs)
}
