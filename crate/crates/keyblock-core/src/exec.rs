//! Ordered batch execution and deterministic seeding helpers.
//!
//! Every batch stage in the crate funnels through [`map_ordered`], which
//! preserves input order in its output. Reductions over the mapped results are
//! then folded sequentially (with compensated summation where it matters), so
//! runs are byte-identical whatever the worker count — and identical to the
//! sequential build with the `parallel` feature disabled.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Sequential ordered map; always available.
pub fn map_ordered_seq<'a, T, R>(items: &'a [T], f: impl Fn(&'a T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}

/// Rayon-backed ordered map. `par_iter().map().collect()` on a slice is an
/// indexed pipeline, so output order matches input order exactly.
#[cfg(feature = "parallel")]
pub fn map_ordered_par<'a, T: Sync, R: Send>(
    items: &'a [T],
    f: impl Fn(&'a T) -> R + Sync + Send,
) -> Vec<R> {
    items.par_iter().map(f).collect()
}

/// Ordered map over a slice: parallel when the `parallel` feature is enabled,
/// sequential otherwise. Output index i is f(&items[i]) either way.
pub fn map_ordered<'a, T: Sync, R: Send>(
    items: &'a [T],
    f: impl Fn(&'a T) -> R + Sync + Send,
) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        map_ordered_par(items, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_ordered_seq(items, f)
    }
}

/// Kahan compensated summation accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a_step(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Derive a per-item RNG seed from a base seed and string labels.
///
/// FNV-1a over the seed bytes and the labels (with separators), so the
/// derivation is stable across platforms and runs.
pub fn mix_seed(seed: u64, labels: &[&str]) -> u64 {
    let mut hash = fnv1a_step(FNV_OFFSET, &seed.to_le_bytes());
    for label in labels {
        hash = fnv1a_step(hash, label.as_bytes());
        hash = fnv1a_step(hash, &[0x1f]);
    }
    hash
}
