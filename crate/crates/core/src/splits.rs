//! Train/test partitions: the `Split` type plus heuristic (threshold) and
//! adversarial (distance-maximizing) alternatives to random splitting.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::wasserstein1;
use crate::corpus::Word;
use crate::sampling::{rng_from_seed, DataSet, Fraction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMethod {
    Random,
    Heuristic,
    Adversarial,
}

impl fmt::Display for SplitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMethod::Random => "random",
            SplitMethod::Heuristic => "heuristic",
            SplitMethod::Adversarial => "adversarial",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<Word>,
    pub test: Vec<Word>,
    pub method: SplitMethod,
    pub replicate: usize,
}

/// Sidecar record persisted next to `train.tsv` / `test.tsv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMeta {
    pub method: SplitMethod,
    pub replicate: usize,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub threshold: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wasserstein: Option<f64>,
}

impl Split {
    pub fn meta(&self) -> SplitMeta {
        SplitMeta {
            method: self.method,
            replicate: self.replicate,
            n_train: self.train.len(),
            n_test: self.test.len(),
            threshold: None,
            wasserstein: None,
        }
    }

    /// W1 between the morphs-per-word distributions of the two halves.
    pub fn morph_count_distance(&self) -> f64 {
        wasserstein1(&morph_counts(&self.train), &morph_counts(&self.test))
    }
}

pub fn morph_counts(words: &[Word]) -> Vec<f64> {
    words.iter().map(|w| w.morph_count() as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeuristicOutcome {
    Applicable { split: Split, threshold: usize },
    NotApplicable,
}

impl HeuristicOutcome {
    pub fn split(&self) -> Option<&Split> {
        match self {
            HeuristicOutcome::Applicable { split, .. } => Some(split),
            HeuristicOutcome::NotApplicable => None,
        }
    }
}

pub const DEFAULT_TEST_FRACTION: Fraction = Fraction::new(2, 5);
pub const DEFAULT_HEURISTIC_TOLERANCE: f64 = 0.05;

/// Looks for an integer threshold on morphs per word that sends words with
/// more morphs than the threshold to test at roughly the requested ratio.
///
/// Among qualifying thresholds the one whose test fraction is closest to
/// `test_fraction` wins, smaller thresholds first on ties.
pub fn heuristic_split(dataset: &DataSet, test_fraction: Fraction, tolerance: f64) -> HeuristicOutcome {
    let n = dataset.len();
    if n == 0 {
        return HeuristicOutcome::NotApplicable;
    }
    let target = test_fraction.as_f64();
    let max_count = dataset.tokens.iter().map(Word::morph_count).max().unwrap_or(0);
    let mut best: Option<(usize, f64)> = None;
    for theta in 0..=max_count {
        let n_test = dataset.tokens.iter().filter(|w| w.morph_count() > theta).count();
        let frac = n_test as f64 / n as f64;
        let gap = (frac - target).abs();
        // Tiny slack so that 0.35 / 0.45 boundaries survive rounding.
        if gap <= tolerance + 1e-12 && best.is_none_or(|(_, g)| gap < g) {
            best = Some((theta, gap));
        }
    }
    match best {
        None => HeuristicOutcome::NotApplicable,
        Some((threshold, _)) => {
            let (test, train): (Vec<Word>, Vec<Word>) = dataset
                .tokens
                .iter()
                .cloned()
                .partition(|w| w.morph_count() > threshold);
            HeuristicOutcome::Applicable {
                split: Split {
                    train,
                    test,
                    method: SplitMethod::Heuristic,
                    replicate: 0,
                },
                threshold,
            }
        }
    }
}

/// Sorts tokens by morphs per word (seeded shuffle among ties), cuts off
/// `N - floor((1 - test_fraction) * N)` tokens at the low or the high end and
/// keeps whichever end gives the larger W1 between the halves.
pub fn adversarial_split(dataset: &DataSet, test_fraction: Fraction, replicate: usize, seed: u64) -> Split {
    let n = dataset.len();
    let n_test = n - test_fraction.complement().floor_of(n);
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|&i| dataset.tokens[i].morph_count());

    let take = |idx: &[usize]| -> Vec<Word> { idx.iter().map(|&i| dataset.tokens[i].clone()).collect() };
    let (low_test, low_train) = order.split_at(n_test);
    let (high_train, high_test) = order.split_at(n - n_test);
    let stat = |idx: &[usize]| -> Vec<f64> {
        idx.iter().map(|&i| dataset.tokens[i].morph_count() as f64).collect()
    };
    let dist = |train: &[usize], test: &[usize]| {
        if train.is_empty() || test.is_empty() {
            0.0
        } else {
            wasserstein1(&stat(train), &stat(test))
        }
    };
    let d_low = dist(low_train, low_test);
    let d_high = dist(high_train, high_test);
    let use_high = if d_high != d_low { d_high > d_low } else { rng.random_bool(0.5) };
    let (train, test) = if use_high {
        (take(high_train), take(high_test))
    } else {
        (take(low_train), take(low_test))
    };
    Split {
        train,
        test,
        method: SplitMethod::Adversarial,
        replicate,
    }
}
