//! trec_eval-compatible metrics, per-query reports and paired significance
//! testing.
//!
//! NDCG uses the linear gain grade / log2(rank + 1) to match trec_eval.
//! Queries lacking any positive judgment are excluded from every metric, with
//! exclusion counts reported.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::corpus::{Qrels, RunEntry};
use crate::error::{Error, Result};
use crate::exec;
use crate::stats::student_t_two_sided_p;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    /// P@k
    Precision(usize),
    /// Mean average precision over the full ranking.
    Map,
    /// NDCG@k, or full-ranking NDCG when k is None.
    Ndcg(Option<usize>),
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Metric::Precision(k) => write!(f, "p@{k}"),
            Metric::Map => write!(f, "map"),
            Metric::Ndcg(Some(k)) => write!(f, "ndcg@{k}"),
            Metric::Ndcg(None) => write!(f, "ndcg"),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Metric> {
        let s = s.trim().to_ascii_lowercase();
        let parse_k = |k: &str| -> Result<usize> {
            let k: usize = k
                .parse()
                .map_err(|_| Error::InvalidParam(format!("bad metric cutoff {k:?}")))?;
            if k == 0 {
                return Err(Error::InvalidParam("metric cutoff must be >= 1".into()));
            }
            Ok(k)
        };
        if s == "map" {
            Ok(Metric::Map)
        } else if s == "ndcg" {
            Ok(Metric::Ndcg(None))
        } else if let Some(k) = s.strip_prefix("ndcg@") {
            Ok(Metric::Ndcg(Some(parse_k(k)?)))
        } else if let Some(k) = s.strip_prefix("p@") {
            Ok(Metric::Precision(parse_k(k)?))
        } else {
            Err(Error::InvalidParam(format!("unknown metric {s:?}")))
        }
    }
}

/// The paper's metric battery: P@k, MAP, NDCG@k, NDCG for k in {1,5,10,20}.
pub fn standard_metrics() -> Vec<Metric> {
    let mut m = Vec::new();
    for k in [1, 5, 10, 20] {
        m.push(Metric::Precision(k));
    }
    m.push(Metric::Map);
    for k in [1, 5, 10, 20] {
        m.push(Metric::Ndcg(Some(k)));
    }
    m.push(Metric::Ndcg(None));
    m
}

fn grade(qrels_q: &BTreeMap<String, u8>, doc_id: &str) -> u8 {
    qrels_q.get(doc_id).copied().unwrap_or(0)
}

/// Fraction of the top k that is relevant (grade >= 1); a ranking shorter
/// than k counts the missing slots as non-relevant.
pub fn precision_at_k(ranked: &[&str], qrels_q: &BTreeMap<String, u8>, k: usize) -> f64 {
    assert!(k >= 1, "k must be >= 1");
    let hits = ranked
        .iter()
        .take(k)
        .filter(|d| grade(qrels_q, d) >= 1)
        .count();
    hits as f64 / k as f64
}

/// Average precision: mean of precision at each relevant retrieved rank,
/// normalized by the total number of relevant documents in the qrels. None
/// when the query has no relevant document.
pub fn average_precision(ranked: &[&str], qrels_q: &BTreeMap<String, u8>) -> Option<f64> {
    let total_relevant = qrels_q.values().filter(|&&g| g >= 1).count();
    if total_relevant == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, doc) in ranked.iter().enumerate() {
        if grade(qrels_q, doc) >= 1 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / total_relevant as f64)
}

fn dcg(grades: impl Iterator<Item = u8>) -> f64 {
    grades
        .enumerate()
        .map(|(i, g)| g as f64 / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG with linear gain grade / log2(rank + 1); the ideal ranking sorts all
/// judged grades descending. None when every grade is zero.
pub fn ndcg(ranked: &[&str], qrels_q: &BTreeMap<String, u8>, k: Option<usize>) -> Option<f64> {
    let cut = k.unwrap_or(usize::MAX);
    let mut ideal: Vec<u8> = qrels_q.values().copied().filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return None;
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(ideal.into_iter().take(cut));
    let got = dcg(ranked.iter().take(cut).map(|d| grade(qrels_q, d)));
    Some(got / idcg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    pub p: f64,
}

/// Two-sided paired t-test over per-query values aligned by position.
/// Zero-variance differences give t=0, p=1 when the mean is zero and p=0
/// (infinite t) otherwise.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidParam(format!(
            "paired t-test needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidParam(
            "paired t-test needs at least 2 samples".into(),
        ));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTestResult { t: 0.0, df, p: 1.0 }
        } else {
            TTestResult {
                t: mean.signum() * f64::INFINITY,
                df,
                p: 0.0,
            }
        });
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    Ok(TTestResult {
        t,
        df,
        p: student_t_two_sided_p(t, df),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricResult {
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub metrics: BTreeMap<String, MetricResult>,
    /// Queries present in the run and the qrels but lacking any positive
    /// judgment; excluded from every metric.
    pub excluded_no_positive: Vec<String>,
    /// Queries present in the run but absent from the qrels; skipped.
    pub skipped_unjudged: Vec<String>,
    pub evaluated_queries: usize,
}

/// Group a run's doc_ids by qid, preserving rank order.
pub fn run_rankings(run: &[RunEntry]) -> BTreeMap<&str, Vec<&str>> {
    let mut grouped: BTreeMap<&str, Vec<(usize, &str)>> = BTreeMap::new();
    for e in run {
        grouped.entry(&e.qid).or_default().push((e.rank, &e.doc_id));
    }
    grouped
        .into_iter()
        .map(|(qid, mut docs)| {
            docs.sort_by_key(|(rank, _)| *rank);
            (qid, docs.into_iter().map(|(_, d)| d).collect())
        })
        .collect()
}

/// Evaluate a run against qrels for the requested metrics. Errors when no
/// query is evaluable.
pub fn evaluate_run(run: &[RunEntry], qrels: &Qrels, metrics: &[Metric]) -> Result<MetricReport> {
    let rankings = run_rankings(run);
    let mut skipped_unjudged = Vec::new();
    let mut excluded_no_positive = Vec::new();
    let mut evaluable: Vec<(&str, &Vec<&str>, &BTreeMap<String, u8>)> = Vec::new();
    for (qid, ranked) in &rankings {
        match qrels.0.get(*qid) {
            None => skipped_unjudged.push(qid.to_string()),
            Some(qrels_q) => {
                if qrels_q.values().all(|&g| g == 0) {
                    excluded_no_positive.push(qid.to_string());
                } else {
                    evaluable.push((qid, ranked, qrels_q));
                }
            }
        }
    }
    if evaluable.is_empty() {
        return Err(Error::NoEvaluableQuery);
    }

    let mut report = BTreeMap::new();
    for metric in metrics {
        let values: Vec<f64> = exec::map_ordered(&evaluable, |(_, ranked, qrels_q)| match metric {
            Metric::Precision(k) => precision_at_k(ranked, qrels_q, *k),
            Metric::Map => average_precision(ranked, qrels_q).expect("positives checked"),
            Metric::Ndcg(k) => ndcg(ranked, qrels_q, *k).expect("positives checked"),
        });
        let per_query: BTreeMap<String, f64> = evaluable
            .iter()
            .zip(&values)
            .map(|((qid, _, _), v)| (qid.to_string(), *v))
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        report.insert(metric.to_string(), MetricResult { per_query, mean });
    }
    Ok(MetricReport {
        metrics: report,
        excluded_no_positive,
        skipped_unjudged,
        evaluated_queries: evaluable.len(),
    })
}

/// Per-query values of one metric for the queries both reports share, aligned
/// by qid — the input rows for a paired t-test.
pub fn aligned_values(a: &MetricReport, b: &MetricReport, metric: &Metric) -> (Vec<f64>, Vec<f64>) {
    let name = metric.to_string();
    let (Some(ra), Some(rb)) = (a.metrics.get(&name), b.metrics.get(&name)) else {
        return (Vec::new(), Vec::new());
    };
    let mut va = Vec::new();
    let mut vb = Vec::new();
    for (qid, x) in &ra.per_query {
        if let Some(y) = rb.per_query.get(qid) {
            va.push(*x);
            vb.push(*y);
        }
    }
    (va, vb)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qrels_q(pairs: &[(&str, u8)]) -> BTreeMap<String, u8> {
        pairs.iter().map(|(d, g)| (d.to_string(), *g)).collect()
    }

    #[test]
    fn precision_basic_and_padding() {
        let q = qrels_q(&[("d1", 1), ("d2", 1), ("d3", 1), ("d4", 0)]);
        assert_eq!(precision_at_k(&["d1", "d2", "d4", "d5", "d3"], &q, 5), 0.6);
        assert_eq!(precision_at_k(&[], &q, 5), 0.0);
        // 2 retrieved, both relevant, k=5: missing slots count as non-relevant
        assert_eq!(precision_at_k(&["d1", "d2"], &q, 5), 0.4);
    }

    #[test]
    fn average_precision_hand_values() {
        let q = qrels_q(&[("d1", 1)]);
        assert_eq!(average_precision(&["d1"], &q), Some(1.0));

        let q = qrels_q(&[("d1", 1), ("d3", 2)]);
        let ap = average_precision(&["d1", "dx", "d3"], &q).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((ap - 0.8333).abs() < 1e-4);

        let q = qrels_q(&[("d1", 1)]);
        assert_eq!(average_precision(&["dx", "dy"], &q), Some(0.0));
        let none = qrels_q(&[("d1", 0)]);
        assert_eq!(average_precision(&["d1"], &none), None);
    }

    #[test]
    fn ndcg_hand_value() {
        // ranked grades [1,2], ideal [2,1]
        let q = qrels_q(&[("a", 1), ("b", 2)]);
        let got = ndcg(&["a", "b"], &q, None).unwrap();
        let dcg = 1.0 + 2.0 / 3f64.log2();
        let idcg = 2.0 + 1.0 / 3f64.log2();
        assert!((got - dcg / idcg).abs() < 1e-12);
        assert!((got - 0.8597).abs() < 1e-4);
    }

    #[test]
    fn ndcg_perfect_and_cut() {
        let q = qrels_q(&[("a", 2), ("b", 1), ("c", 0)]);
        assert_eq!(ndcg(&["a", "b", "c"], &q, None), Some(1.0));
        assert_eq!(ndcg(&["a", "c", "b"], &q, Some(1)), Some(1.0));
        let zeros = qrels_q(&[("a", 0)]);
        assert_eq!(ndcg(&["a"], &zeros, None), None);
    }

    #[test]
    fn paired_t_identical_samples() {
        let a = [0.5, 0.6, 0.7];
        let r = paired_t_test(&a, &a).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        assert_eq!(r.df, 2);
    }

    #[test]
    fn paired_t_hand_value() {
        // d = [1,2,3]: t = 2*sqrt(3), df=2, p ~ 0.0742
        let a = [2.0, 3.0, 4.0];
        let b = [1.0, 1.0, 1.0];
        let r = paired_t_test(&a, &b).unwrap();
        assert!((r.t - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert!((r.t - 3.4641).abs() < 1e-4);
        assert_eq!(r.df, 2);
        assert!((r.p - 0.0742).abs() < 1e-3);
    }

    #[test]
    fn paired_t_needs_two_samples() {
        assert!(paired_t_test(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn paired_t_zero_sd_nonzero_mean() {
        let r = paired_t_test(&[2.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!(r.p, 0.0);
        assert!(r.t.is_infinite() && r.t > 0.0);
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("map".parse::<Metric>().unwrap(), Metric::Map);
        assert_eq!("NDCG@10".parse::<Metric>().unwrap(), Metric::Ndcg(Some(10)));
        assert_eq!("ndcg".parse::<Metric>().unwrap(), Metric::Ndcg(None));
        assert_eq!("p@20".parse::<Metric>().unwrap(), Metric::Precision(20));
        assert!("p@0".parse::<Metric>().is_err());
        assert!("bogus".parse::<Metric>().is_err());
    }

    fn entry(qid: &str, doc: &str, rank: usize, score: f64) -> RunEntry {
        RunEntry {
            qid: qid.into(),
            doc_id: doc.into(),
            rank,
            score,
            tag: "t".into(),
        }
    }

    #[test]
    fn evaluate_run_perfect_single_query() {
        let run = vec![entry("q1", "d1", 1, 1.0)];
        let mut qrels = Qrels::default();
        qrels.insert("q1", "d1", 1);
        let report = evaluate_run(&run, &qrels, &standard_metrics()).unwrap();
        assert_eq!(report.metrics["p@1"].mean, 1.0);
        assert_eq!(report.metrics["map"].mean, 1.0);
        for k in [1, 5, 10, 20] {
            assert_eq!(report.metrics[&format!("ndcg@{k}")].mean, 1.0);
        }
        assert_eq!(report.metrics["ndcg"].mean, 1.0);
        // P@k pads short rankings with non-relevant slots
        assert_eq!(report.metrics["p@5"].mean, 0.2);
    }

    #[test]
    fn evaluate_run_exclusion_counted() {
        let run = vec![entry("q1", "d1", 1, 1.0), entry("q2", "d1", 1, 1.0)];
        let mut qrels = Qrels::default();
        qrels.insert("q1", "d1", 1);
        qrels.insert("q2", "d1", 0);
        let report = evaluate_run(&run, &qrels, &[Metric::Map]).unwrap();
        assert_eq!(report.evaluated_queries, 1);
        assert_eq!(report.excluded_no_positive, vec!["q2".to_string()]);
        let map = &report.metrics["map"];
        assert_eq!(map.per_query.len(), 1);
        assert_eq!(map.mean, 1.0);
    }

    #[test]
    fn evaluate_run_mean_is_mean_of_reported_values() {
        let run = vec![
            entry("q1", "d1", 1, 2.0),
            entry("q1", "d2", 2, 1.0),
            entry("q2", "d2", 1, 2.0),
            entry("q2", "d1", 2, 1.0),
        ];
        let mut qrels = Qrels::default();
        qrels.insert("q1", "d1", 1);
        qrels.insert("q2", "d1", 1);
        let report = evaluate_run(&run, &qrels, &[Metric::Map]).unwrap();
        let res = &report.metrics["map"];
        let mean = res.per_query.values().sum::<f64>() / res.per_query.len() as f64;
        assert_eq!(res.mean, mean);
    }

    #[test]
    fn evaluate_run_errors_when_nothing_evaluable() {
        let run = vec![entry("q9", "d1", 1, 1.0)];
        let qrels = Qrels::default();
        assert!(matches!(
            evaluate_run(&run, &qrels, &[Metric::Map]),
            Err(Error::NoEvaluableQuery)
        ));
    }
}
