//! I/O invariants: tokenizer idempotence, run round-trips, qrels overwrite
//! order.

use proptest::prelude::*;

use keyblock_core::corpus::{load_qrels, load_run, write_run, RunEntry};
use keyblock_core::tokenize::tokenize;

proptest! {
    #[test]
    fn tokenize_is_idempotent_on_joined_output(input in ".{0,200}") {
        let once = tokenize(&input);
        let twice = tokenize(&once.join());
        prop_assert_eq!(&once, &twice);
    }

    #[test]
    fn tokens_are_nonempty_and_whitespace_free(input in ".{0,200}") {
        for t in &tokenize(&input) {
            prop_assert!(!t.text.is_empty());
            prop_assert!(!t.text.chars().any(char::is_whitespace));
        }
    }

    #[test]
    fn run_round_trip_preserves_fields(
        qids in proptest::collection::vec(1usize..4, 1..4),
        scores in proptest::collection::vec(0.0f64..100.0, 1..20),
    ) {
        // build a valid run: per qid, scores sorted descending, doc_ids
        // descending on ties, ranks 1..n
        let mut entries = Vec::new();
        for (qi, _) in qids.iter().enumerate() {
            let mut scores: Vec<f64> =
                scores.iter().map(|s| (s * 1e4).round() / 1e4).collect();
            scores.sort_by(|a, b| b.total_cmp(a));
            for (i, score) in scores.iter().enumerate() {
                entries.push(RunEntry {
                    qid: format!("q{qi}"),
                    // descending doc ids keep tied scores valid
                    doc_id: format!("d{:04}", 9999 - i),
                    rank: i + 1,
                    score: *score,
                    tag: "prop".into(),
                });
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.txt");
        write_run(&entries, &path).unwrap();
        let loaded = load_run(&path).unwrap();
        prop_assert_eq!(loaded.len(), entries.len());
        for (a, b) in entries.iter().zip(&loaded) {
            prop_assert_eq!(&a.qid, &b.qid);
            prop_assert_eq!(&a.doc_id, &b.doc_id);
            prop_assert_eq!(a.rank, b.rank);
            prop_assert_eq!(&a.tag, &b.tag);
            prop_assert!((a.score - b.score).abs() <= 1e-6);
        }
    }

    #[test]
    fn qrels_last_line_wins_under_prefix_permutations(
        grades in proptest::collection::vec(0u8..=2, 2..6),
    ) {
        use std::io::Write;
        // repeated (q1, d1) lines with different grades: whichever grade is
        // on the last line must win, independent of the earlier order
        let mut perm = grades.clone();
        perm[..grades.len() - 1].reverse();
        for variant in [grades.clone(), perm] {
            let mut f = tempfile::NamedTempFile::new().unwrap();
            for g in &variant {
                writeln!(f, "q1 0 d1 {g}").unwrap();
            }
            f.flush().unwrap();
            let qrels = load_qrels(f.path()).unwrap();
            prop_assert_eq!(qrels.grade("q1", "d1"), variant.last().copied());
        }
    }
}
