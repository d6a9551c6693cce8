//! Seeded synthetic vocabularies and datasets for smoke tests and desk-scale sweeps.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{PairDataset, PairRecord, Task};
use crate::embeddings::{EmbeddingStore, OovPolicy};
use crate::error::Result;
use crate::model::TrainingInstance;

pub fn vocab_token(i: usize) -> String {
    format!("w{i}")
}

/// `vocab_size` tokens `w0, w1, ...` with standard normal vectors.
pub fn random_store(vocab_size: usize, dim: usize, seed: u64) -> Result<EmbeddingStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(String, Vec<f64>)> = (0..vocab_size)
        .map(|i| {
            let v = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            (vocab_token(i), v)
        })
        .collect();
    EmbeddingStore::from_pairs(pairs, OovPolicy::HashRandom)
}

fn random_sentence<R: Rng>(rng: &mut R, vocab_size: usize, min_len: usize, max_len: usize) -> Vec<String> {
    let len = rng.gen_range(min_len..=max_len);
    (0..len).map(|_| vocab_token(rng.gen_range(0..vocab_size))).collect()
}

/// Positives pair a sentence with itself; negatives pair two independent random sentences.
pub fn duplicate_pairs(vocab_size: usize, n_pos: usize, n_neg: usize, seed: u64) -> Vec<TrainingInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_pos + n_neg);
    for _ in 0..n_pos {
        let s = random_sentence(&mut rng, vocab_size, 3, 8);
        out.push(TrainingInstance {
            t: s.clone(),
            s,
            label: true,
        });
    }
    for _ in 0..n_neg {
        out.push(TrainingInstance {
            s: random_sentence(&mut rng, vocab_size, 3, 8),
            t: random_sentence(&mut rng, vocab_size, 3, 8),
            label: false,
        });
    }
    out
}

/// Question/answer style ranking data.
///
/// Each query gets `positives` candidates that reuse most of its words in a
/// shuffled order plus a couple of random words, and `negatives` unrelated
/// random sentences; candidate order within a group is shuffled.
pub fn ranking_fixture(
    vocab_size: usize,
    queries: usize,
    positives: usize,
    negatives: usize,
    seed: u64,
) -> PairDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for q in 0..queries {
        let query = random_sentence(&mut rng, vocab_size, 4, 7);
        let mut group = Vec::new();
        for _ in 0..positives {
            let mut answer: Vec<String> = query
                .iter()
                .filter(|_| rng.gen_bool(0.75))
                .cloned()
                .collect();
            answer.extend(random_sentence(&mut rng, vocab_size, 1, 3));
            answer.shuffle(&mut rng);
            group.push((answer, true));
        }
        for _ in 0..negatives {
            group.push((random_sentence(&mut rng, vocab_size, 3, 8), false));
        }
        group.shuffle(&mut rng);
        records.extend(group.into_iter().map(|(t, label)| PairRecord {
            group: Some(format!("q{q}")),
            instance: TrainingInstance {
                s: query.clone(),
                t,
                label,
            },
        }));
    }
    PairDataset {
        task: Task::Ranking,
        records,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_seeded() {
        assert_eq!(duplicate_pairs(40, 3, 3, 1), duplicate_pairs(40, 3, 3, 1));
        assert_ne!(duplicate_pairs(40, 3, 3, 1), duplicate_pairs(40, 3, 3, 2));
        let ds = ranking_fixture(30, 4, 1, 4, 9);
        assert_eq!(ds.len(), 20);
        assert_eq!(ds.groups().len(), 4);
        assert_eq!(ds.positives(), 4);
        assert!(ds.records.iter().all(|r| !r.instance.t.is_empty()));
        let store = random_store(30, 5, 0).unwrap();
        assert_eq!((store.len(), store.dim()), (30, 5));
    }

    #[test]
    fn duplicates_are_identical() {
        for x in duplicate_pairs(20, 5, 0, 3) {
            assert_eq!(x.s, x.t);
            assert!(x.label);
        }
    }
}
