//! Data set construction, random splits and unseen test sets.
//!
//! Every operation is a pure function of its inputs and a 64-bit seed. Seeds
//! for individual jobs are derived from a master seed with [`derive_seed`], so
//! any (setting, data set, split, model) job can be reproduced on its own.

use std::collections::HashSet;
use std::fmt;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Word};
use crate::splits::{Split, SplitMethod};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SamplingError {
    #[error("cannot draw {requested} distinct items from {available}")]
    InfeasibleSize { requested: usize, available: usize },
    #[error("size must be at least 1")]
    ZeroSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    #[serde(alias = "with")]
    WithReplacement,
    #[serde(alias = "without")]
    WithoutReplacement,
}

impl SamplingStrategy {
    pub fn short_name(self) -> &'static str {
        match self {
            SamplingStrategy::WithReplacement => "with",
            SamplingStrategy::WithoutReplacement => "without",
        }
    }
}

impl fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// One (language, data set size, sampling strategy) triple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExperimentalSetting {
    pub language_tag: String,
    pub dataset_size: usize,
    pub strategy: SamplingStrategy,
}

impl ExperimentalSetting {
    /// Directory-safe identifier, e.g. `rus_500_without`.
    pub fn id(&self) -> String {
        format!(
            "{}_{}_{}",
            self.language_tag,
            self.dataset_size,
            self.strategy.short_name()
        )
    }

    pub fn check_feasible(&self, corpus: &Corpus) -> Result<(), SamplingError> {
        if self.dataset_size == 0 {
            return Err(SamplingError::ZeroSize);
        }
        if self.strategy == SamplingStrategy::WithoutReplacement
            && self.dataset_size > corpus.type_count()
        {
            return Err(SamplingError::InfeasibleSize {
                requested: self.dataset_size,
                available: corpus.type_count(),
            });
        }
        Ok(())
    }
}

/// A sampled multiset of words. Id 0 is the first data set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSet {
    pub id: usize,
    pub tokens: Vec<Word>,
}

impl DataSet {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> HashSet<&str> {
        self.tokens.iter().map(Word::surface).collect()
    }
}

/// An exact rational fraction in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub const fn new(num: u64, den: u64) -> Self {
        assert!(den > 0 && num <= den);
        Self { num, den }
    }

    /// `floor(self * n)`.
    pub fn floor_of(self, n: usize) -> usize {
        ((self.num as u128 * n as u128) / self.den as u128) as usize
    }

    pub fn complement(self) -> Self {
        Self::new(self.den - self.num, self.den)
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

pub const DEFAULT_TRAIN_FRACTION: Fraction = Fraction::new(3, 5);

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a master seed with a path of job coordinates.
///
/// `acc_0 = splitmix64(master)`, `acc_{i+1} = splitmix64(acc_i ^ splitmix64(part_i + i + 1))`.
/// The position term keeps `[a, b]` and `[b, a]` apart.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .enumerate()
        .fold(splitmix64(master), |acc, (i, &p)| {
            splitmix64(acc ^ splitmix64(p.wrapping_add(i as u64 + 1)))
        })
}

/// Stable 64-bit id for a string (FNV-1a), for mixing names into seeds.
pub fn name_seed(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws `count` data sets of `size` tokens each, uniformly over word types.
pub fn sample_datasets(
    corpus: &Corpus,
    size: usize,
    strategy: SamplingStrategy,
    count: usize,
    seed: u64,
) -> Result<Vec<DataSet>, SamplingError> {
    if size == 0 {
        return Err(SamplingError::ZeroSize);
    }
    let n = corpus.type_count();
    if n == 0 || (strategy == SamplingStrategy::WithoutReplacement && size > n) {
        return Err(SamplingError::InfeasibleSize {
            requested: size,
            available: n,
        });
    }
    let words = corpus.words();
    Ok((0..count)
        .map(|id| {
            let mut rng = rng_from_seed(derive_seed(seed, &[id as u64]));
            let tokens = match strategy {
                SamplingStrategy::WithReplacement => (0..size)
                    .map(|_| words[rng.random_range(0..n)].clone())
                    .collect(),
                SamplingStrategy::WithoutReplacement => index::sample(&mut rng, n, size)
                    .into_iter()
                    .map(|i| words[i].clone())
                    .collect(),
            };
            DataSet { id, tokens }
        })
        .collect())
}

/// Shuffle-and-cut splits: `floor(train_fraction * N)` tokens train, the rest test.
pub fn make_random_splits(
    dataset: &DataSet,
    train_fraction: Fraction,
    n_splits: usize,
    seed: u64,
) -> Vec<Split> {
    let n_train = train_fraction.floor_of(dataset.len());
    (0..n_splits)
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(seed, &[r as u64]));
            let mut order: Vec<usize> = (0..dataset.len()).collect();
            order.shuffle(&mut rng);
            let (tr, te) = order.split_at(n_train);
            Split {
                train: tr.iter().map(|&i| dataset.tokens[i].clone()).collect(),
                test: te.iter().map(|&i| dataset.tokens[i].clone()).collect(),
                method: SplitMethod::Random,
                replicate: r,
            }
        })
        .collect()
}

/// All corpus words whose surface does not occur among the data set's tokens.
pub fn build_newtest_pool(corpus: &Corpus, dataset: &DataSet) -> Vec<Word> {
    let used = dataset.surfaces();
    corpus
        .words()
        .iter()
        .filter(|w| !used.contains(w.surface()))
        .cloned()
        .collect()
}

/// `count` test sets of `size` distinct pool words each.
pub fn sample_new_testsets(
    pool: &[Word],
    size: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<Word>>, SamplingError> {
    if size > pool.len() {
        return Err(SamplingError::InfeasibleSize {
            requested: size,
            available: pool.len(),
        });
    }
    Ok((0..count)
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, &[i as u64]));
            let mut picked = index::sample(&mut rng, pool.len(), size).into_vec();
            // Keep pool order inside a test set.
            picked.sort_unstable();
            picked.into_iter().map(|j| pool[j].clone()).collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn corpus(n: usize) -> Corpus {
        let words = (0..n).map(|i| Word::from_morphs([format!("w{i}"), "s".to_string()]).unwrap());
        Corpus::from_words("t", words).unwrap()
    }

    fn multiset(words: &[Word]) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for w in words {
            *m.entry(w.surface()).or_default() += 1;
        }
        m
    }

    #[test]
    fn count_and_ids() {
        let c = corpus(100);
        let ds = sample_datasets(&c, 20, SamplingStrategy::WithReplacement, 50, 7).unwrap();
        assert_eq!(ds.len(), 50);
        assert!(ds.iter().enumerate().all(|(i, d)| d.id == i && d.len() == 20));
    }

    #[test]
    fn without_replacement_full_size_is_permutation() {
        let c = corpus(30);
        let ds = sample_datasets(&c, 30, SamplingStrategy::WithoutReplacement, 3, 1).unwrap();
        let full = multiset(c.words());
        for d in &ds {
            assert_eq!(multiset(&d.tokens), full);
        }
    }

    #[test]
    fn without_replacement_has_distinct_surfaces() {
        let c = corpus(50);
        for d in sample_datasets(&c, 25, SamplingStrategy::WithoutReplacement, 10, 3).unwrap() {
            assert_eq!(d.surfaces().len(), 25);
        }
    }

    #[test]
    fn infeasible_without_replacement() {
        let c = corpus(10);
        assert_eq!(
            sample_datasets(&c, 11, SamplingStrategy::WithoutReplacement, 1, 0).unwrap_err(),
            SamplingError::InfeasibleSize { requested: 11, available: 10 }
        );
        // With replacement the size is unconstrained.
        assert!(sample_datasets(&c, 11, SamplingStrategy::WithReplacement, 1, 0).is_ok());
    }

    #[test]
    fn deterministic() {
        let c = corpus(40);
        let a = sample_datasets(&c, 15, SamplingStrategy::WithReplacement, 4, 99).unwrap();
        let b = sample_datasets(&c, 15, SamplingStrategy::WithReplacement, 4, 99).unwrap();
        assert_eq!(a, b);
        let other = sample_datasets(&c, 15, SamplingStrategy::WithReplacement, 4, 100).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn split_sizes() {
        let c = corpus(600);
        let d = &sample_datasets(&c, 500, SamplingStrategy::WithoutReplacement, 1, 0).unwrap()[0];
        let splits = make_random_splits(d, DEFAULT_TRAIN_FRACTION, 5, 4);
        assert_eq!(splits.len(), 5);
        for s in &splits {
            assert_eq!((s.train.len(), s.test.len()), (300, 200));
            assert_eq!(s.method, SplitMethod::Random);
        }
        let small = DataSet { id: 0, tokens: c.words()[..5].to_vec() };
        let s = &make_random_splits(&small, DEFAULT_TRAIN_FRACTION, 1, 0)[0];
        assert_eq!((s.train.len(), s.test.len()), (3, 2));
    }

    #[test]
    fn splits_repartition_tokens() {
        let c = corpus(20);
        let d = &sample_datasets(&c, 40, SamplingStrategy::WithReplacement, 1, 5).unwrap()[0];
        for s in make_random_splits(d, DEFAULT_TRAIN_FRACTION, 5, 11) {
            let mut joined = s.train.clone();
            joined.extend(s.test.iter().cloned());
            assert_eq!(multiset(&joined), multiset(&d.tokens));
        }
    }

    #[test]
    fn with_replacement_overlap_can_occur() {
        let c = corpus(5);
        let d = &sample_datasets(&c, 50, SamplingStrategy::WithReplacement, 1, 2).unwrap()[0];
        let s = &make_random_splits(d, DEFAULT_TRAIN_FRACTION, 1, 0)[0];
        let train: HashSet<&str> = s.train.iter().map(Word::surface).collect();
        assert!(s.test.iter().any(|w| train.contains(w.surface())));
    }

    #[test]
    fn newtest_pool_set_difference() {
        let words: Vec<Word> = ["a", "b", "c", "d"]
            .iter()
            .map(|s| Word::from_morphs([*s]).unwrap())
            .collect();
        let c = Corpus::from_words("t", words.clone()).unwrap();
        let d = DataSet { id: 0, tokens: vec![words[1].clone(), words[3].clone()] };
        let pool = build_newtest_pool(&c, &d);
        assert_eq!(pool, vec![words[0].clone(), words[2].clone()]);

        let empty = DataSet { id: 0, tokens: vec![] };
        assert_eq!(build_newtest_pool(&c, &empty), words);
        let all = DataSet { id: 0, tokens: words.clone() };
        assert!(build_newtest_pool(&c, &all).is_empty());
    }

    #[test]
    fn new_testsets() {
        let pool = corpus(10).words().to_vec();
        let sets = sample_new_testsets(&pool, 3, 100, 8).unwrap();
        assert_eq!(sets.len(), 100);
        for s in &sets {
            let distinct: HashSet<&str> = s.iter().map(Word::surface).collect();
            assert_eq!(distinct.len(), 3);
            assert!(s.iter().all(|w| pool.contains(w)));
        }
        assert!(sets.iter().any(|s| s != &sets[0]));

        let full = sample_new_testsets(&pool, 10, 4, 8).unwrap();
        assert!(full.iter().all(|s| s == &pool));
        assert!(matches!(
            sample_new_testsets(&pool, 11, 1, 0),
            Err(SamplingError::InfeasibleSize { .. })
        ));
    }

    #[test]
    fn seed_derivation_separates_coordinates() {
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_ne!(derive_seed(1, &[0]), derive_seed(2, &[0]));
        assert_eq!(derive_seed(5, &[3, 4]), derive_seed(5, &[3, 4]));
    }

    #[test]
    fn fraction_floor() {
        assert_eq!(Fraction::new(3, 5).floor_of(7), 4);
        assert_eq!(Fraction::new(3, 5).complement(), Fraction::new(2, 5));
    }
}
