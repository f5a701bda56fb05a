//! Counter-based stream splitting for reproducible parallel Monte Carlo.
//!
//! All randomness in the crate flows from one master seed. Each unit of
//! parallel work (a path, an instance, an inner sampler) gets its own
//! ChaCha stream addressed by `(ladder index, work index)`, so results are
//! bit-identical no matter how work is scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Derive the stream for work item `item` on ladder level `level`.
///
/// The stream id packs `level` into the high 24 bits and `item` into the
/// low 40, so distinct `(level, item)` pairs never collide for any
/// realistic experiment size.
pub fn stream_for(seed: u64, level: u32, item: u64) -> Stream {
    assert!(item < 1 << 40, "work index too large for stream split");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((level as u64) << 40) | item);
    rng
}

/// Sum `xs` with a fixed pairwise tree so the result does not depend on
/// the order work finished in.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Streaming pairwise summation: a binary-counter merge that reproduces the
/// association of [`pairwise_sum`] for power-of-two counts without holding
/// the terms. The tree shape depends only on how many values were pushed.
#[derive(Debug, Default)]
pub struct TreeAccumulator {
    levels: Vec<Option<f64>>,
}

impl TreeAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        let mut carry = x;
        for slot in self.levels.iter_mut() {
            match slot.take() {
                Some(partial) => carry += partial,
                None => {
                    *slot = Some(carry);
                    return;
                }
            }
        }
        self.levels.push(Some(carry));
    }

    pub fn finish(&self) -> f64 {
        self.levels
            .iter()
            .filter_map(|slot| *slot)
            .fold(0.0, |acc, partial| acc + partial)
    }
}

/// Sample mean via pairwise summation.
pub fn mean(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance via pairwise summation.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    assert!(n >= 2);
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (n - 1) as f64
}
