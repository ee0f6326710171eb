//! Mini-batch samplers over a window set.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Window, WindowSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    Random,
    Synchronized,
}

/// Group windows by anchor, shuffle articles within each anchor and chunk
/// them into batches of at most `batch_size`. Anchors are visited in random
/// order. Every batch has a single anchor.
pub fn synchronized_batches(windows: &WindowSet, batch_size: usize, seed: u64) -> Vec<Vec<Window>> {
    let batch_size = batch_size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: BTreeMap<usize, Vec<Window>> = BTreeMap::new();
    for w in &windows.entries {
        groups.entry(w.anchor).or_default().push(*w);
    }
    let mut groups: Vec<Vec<Window>> = groups.into_values().collect();
    groups.shuffle(&mut rng);
    let mut batches = Vec::new();
    for mut g in groups {
        g.shuffle(&mut rng);
        batches.extend(g.chunks(batch_size).map(<[Window]>::to_vec));
    }
    batches
}

/// Uniform shuffle of all windows, chunked.
pub fn random_batches(windows: &WindowSet, batch_size: usize, seed: u64) -> Vec<Vec<Window>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all = windows.entries.clone();
    all.shuffle(&mut rng);
    all.chunks(batch_size.max(1)).map(<[Window]>::to_vec).collect()
}

pub fn make_batches(mode: BatchMode, windows: &WindowSet, batch_size: usize, seed: u64) -> Vec<Vec<Window>> {
    match mode {
        BatchMode::Random => random_batches(windows, batch_size, seed),
        BatchMode::Synchronized => synchronized_batches(windows, batch_size, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn grid(anchors: usize, articles: usize) -> WindowSet {
        WindowSet {
            entries: (0..anchors)
                .flat_map(|a| (0..articles).map(move |article| Window { article, anchor: a + 3 }))
                .collect(),
            context_length: 2,
            horizon: 1,
        }
    }

    #[test]
    fn two_anchors_three_articles_pairs() {
        let b = synchronized_batches(&grid(2, 3), 2, 0);
        assert_eq!(b.len(), 4);
        assert!(b.iter().all(|x| x.iter().all(|w| w.anchor == x[0].anchor)));
    }

    #[test]
    fn large_batches_are_one_per_anchor() {
        assert_eq!(synchronized_batches(&grid(5, 3), 3, 1).len(), 5);
        assert_eq!(synchronized_batches(&grid(5, 3), 100, 1).len(), 5);
    }

    #[test]
    fn random_chunking_and_determinism() {
        let ws = grid(2, 3);
        let b = random_batches(&ws, 4, 9);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 2]);
        assert_eq!(b, random_batches(&ws, 4, 9));
        let mut all: Vec<Window> = b.concat();
        all.sort();
        let mut want = ws.entries.clone();
        want.sort();
        assert_eq!(all, want);
    }
}
