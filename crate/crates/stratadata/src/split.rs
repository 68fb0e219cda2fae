use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    Random,
    FixedTail,
}

/// Realization ids (1-based) assigned to each subset, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<u64>,
    pub validation: Vec<u64>,
    pub test: Vec<u64>,
    pub mode: SplitMode,
}

pub fn make_split(n_total: usize, n_train: usize, n_val: usize, n_test: usize, mode: SplitMode, seed: u64) -> Result<SplitPlan> {
    let wanted = n_train + n_val + n_test;
    if wanted > n_total {
        return Err(DataError::SplitExceeds(wanted, n_total));
    }
    let mut ids: Vec<u64> = (1..=n_total as u64).collect();
    if mode == SplitMode::Random {
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let take = |r: std::ops::Range<usize>| {
        let mut v = ids[r].to_vec();
        v.sort_unstable();
        v
    };
    Ok(SplitPlan {
        train: take(0..n_train),
        validation: take(n_train..n_train + n_val),
        test: take(n_train + n_val..wanted),
        mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_tail_blocks() {
        let p = make_split(20_200, 19_000, 1_000, 200, SplitMode::FixedTail, 0).unwrap();
        assert_eq!(p.train, (1..=19_000).collect::<Vec<_>>());
        assert_eq!(p.validation, (19_001..=20_000).collect::<Vec<_>>());
        assert_eq!(p.test, (20_001..=20_200).collect::<Vec<_>>());
    }

    #[test]
    fn random_is_seeded_and_disjoint() {
        let a = make_split(100, 60, 30, 10, SplitMode::Random, 4).unwrap();
        assert_eq!(a, make_split(100, 60, 30, 10, SplitMode::Random, 4).unwrap());
        assert_ne!(a, make_split(100, 60, 30, 10, SplitMode::Random, 5).unwrap());
        let mut all: Vec<u64> = a.train.iter().chain(&a.validation).chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (1..=100).collect::<Vec<_>>());
        assert!(make_split(10, 5, 5, 1, SplitMode::Random, 0).is_err());
    }
}
