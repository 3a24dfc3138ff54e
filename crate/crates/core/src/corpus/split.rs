use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Conversation;
use crate::error::{Error, Result};

/// Seed used for the train/dev split unless configured otherwise.
pub const DEFAULT_SPLIT_SEED: u64 = 2024;

/// Number of development dialogs for a corpus of `n` dialogs.
///
/// Rounds the fractional count up (1,374 dialogs at 0.1 gives 138), with a
/// small tolerance so that exact products such as `0.1 * 10` stay at 1.
pub fn dev_count(n: usize, dev_fraction: f64) -> usize {
    let raw = dev_fraction * n as f64;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Partitions whole conversations into `(train, dev)`.
///
/// Both halves keep the corpus order; membership depends only on `seed`.
pub fn split_corpus(
    corpus: &[Conversation],
    dev_fraction: f64,
    seed: u64,
) -> Result<(Vec<Conversation>, Vec<Conversation>)> {
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "dev_fraction must lie in (0, 1), got {dev_fraction}"
        )));
    }
    if corpus.is_empty() {
        return Err(Error::Argument("cannot split an empty corpus".into()));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_dev = dev_count(corpus.len(), dev_fraction);
    let mut in_dev = vec![false; corpus.len()];
    for &i in &order[..n_dev] {
        in_dev[i] = true;
    }
    let (dev, train): (Vec<_>, Vec<_>) = corpus
        .iter()
        .zip(&in_dev)
        .partition(|(_, &is_dev)| is_dev);
    Ok((
        train.into_iter().map(|(c, _)| c.clone()).collect(),
        dev.into_iter().map(|(c, _)| c.clone()).collect(),
    ))
}
