//! Long-document retrieval toolkit: documents are segmented into blocks,
//! blocks are locally pre-ranked against the query (TF-IDF, BM25, random,
//! first-n or a trainable linear scorer), the top blocks are assembled into a
//! token-budgeted digest, and selection strategies are compared with standard
//! IR metrics, paired significance tests and positional analyses.
//!
//! The `parallel` feature (on by default) runs batch stages on rayon; outputs
//! are byte-identical to the sequential build at any worker count.

pub mod analysis;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod exec;
pub mod learned;
pub mod lexical;
pub mod segment;
pub mod select;
pub mod stats;
pub mod synth;
pub mod tokenize;

pub use error::{Error, Result};
