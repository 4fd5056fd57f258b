//! Synthetic agglutinative corpora: stems followed by up to `max_slots`
//! suffixes, one from each successive slot inventory.
//!
//! Generated stems are strings of syllables. Each syllable is, with
//! probability `suffix_syllable_rate`, a copy of some suffix, so stems
//! contain substrings that look like suffixes and boundaries cannot be read
//! off local context alone.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Word};
use crate::sampling::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Explicit stems. When empty, `stem_count` random stems are generated.
    #[serde(default)]
    pub stems: Vec<String>,
    #[serde(default)]
    pub stem_count: usize,
    /// Generated stems have `1..=max_stem_syllables` syllables.
    #[serde(default = "default_max_stem_syllables")]
    pub max_stem_syllables: usize,
    #[serde(default)]
    pub suffix_syllable_rate: f64,
    /// Suffix inventory per slot, in order.
    pub slots: Vec<Vec<String>>,
    /// Words use slots `0..j` for every `j <= max_slots`.
    pub max_slots: usize,
    /// Keep at most this many generated words (sampled uniformly). `None`
    /// keeps every derivation.
    #[serde(default)]
    pub max_words: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_stem_syllables() -> usize {
    3
}

impl SyntheticSpec {
    /// Three suffix slots over `stem_count` generated stems, keeping at most
    /// 3,000 words.
    pub fn agglutinative(stem_count: usize, seed: u64) -> Self {
        let slots = [
            vec!["ka", "ti", "mo", "ru", "sen"],
            vec!["la", "ne", "vi", "dor"],
            vec!["s", "ko", "mi", "tan"],
        ];
        Self {
            stems: Vec::new(),
            stem_count,
            max_stem_syllables: 3,
            suffix_syllable_rate: 0.9,
            slots: slots.iter().map(|s| s.iter().map(|x| x.to_string()).collect()).collect(),
            max_slots: 3,
            max_words: Some(3000),
            seed,
        }
    }
}

const ONSETS: [&str; 30] = [
    "p", "t", "k", "b", "d", "g", "m", "n", "s", "l", "r", "v", "h", "j", "c", "f", "w", "x", "z", "q", "y",
    "þ", "ð", "ç", "ñ", "ł", "ř", "š", "ž", "ß",
];
const VOWELS: [&str; 12] = ["a", "e", "i", "o", "u", "ä", "ö", "ü", "é", "è", "å", "ø"];
const CODAS: [&str; 5] = ["", "", "n", "r", "l"];

fn random_stem(rng: &mut impl Rng, spec: &SyntheticSpec, suffixes: &[&String]) -> String {
    let syllables = rng.random_range(1..=spec.max_stem_syllables.max(1));
    let mut s = String::new();
    for _ in 0..syllables {
        if !suffixes.is_empty() && rng.random_bool(spec.suffix_syllable_rate.clamp(0.0, 1.0)) {
            s.push_str(suffixes[rng.random_range(0..suffixes.len())]);
        } else {
            s.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
            s.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
            s.push_str(CODAS[rng.random_range(0..CODAS.len())]);
        }
    }
    s
}

fn expand(prefix: &mut Vec<String>, slots: &[Vec<String>], depth: usize, out: &mut Vec<Vec<String>>) {
    out.push(prefix.clone());
    if depth == slots.len() {
        return;
    }
    for suffix in &slots[depth] {
        prefix.push(suffix.clone());
        expand(prefix, slots, depth + 1, out);
        prefix.pop();
    }
}

/// Generates the corpus. A derivation whose surface collides with an earlier
/// one is dropped.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Corpus {
    let mut rng = rng_from_seed(spec.seed);
    let suffixes: Vec<&String> = spec.slots.iter().flatten().collect();
    let stems: Vec<String> = if spec.stems.is_empty() {
        let mut seen = HashSet::new();
        let mut v = Vec::new();
        let mut attempts = 0;
        while v.len() < spec.stem_count && attempts < spec.stem_count * 100 {
            attempts += 1;
            let s = random_stem(&mut rng, spec, &suffixes);
            if seen.insert(s.clone()) {
                v.push(s);
            }
        }
        v
    } else {
        spec.stems.clone()
    };
    let slots = &spec.slots[..spec.max_slots.min(spec.slots.len())];
    let mut seen = HashSet::new();
    let mut words = Vec::new();
    for stem in &stems {
        let mut derivations = Vec::new();
        expand(&mut vec![stem.clone()], slots, 0, &mut derivations);
        for morphs in derivations {
            let surface = morphs.concat();
            if seen.insert(surface.clone()) {
                words.push(Word::new(surface, morphs).expect("nonempty morphs"));
            }
        }
    }
    if let Some(max) = spec.max_words {
        if max < words.len() {
            words.shuffle(&mut rng);
            words.truncate(max);
        }
    }
    Corpus::from_words("synthetic", words).expect("surfaces are unique")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(stems: &[&str], slots: &[&[&str]], max_slots: usize) -> SyntheticSpec {
        SyntheticSpec {
            stems: stems.iter().map(|s| s.to_string()).collect(),
            stem_count: 0,
            max_stem_syllables: 3,
            suffix_syllable_rate: 0.0,
            slots: slots.iter().map(|s| s.iter().map(|x| x.to_string()).collect()).collect(),
            max_slots,
            max_words: None,
            seed: 0,
        }
    }

    #[test]
    fn single_stem_no_slots() {
        let c = generate_synthetic_corpus(&spec(&["ka"], &[], 0));
        assert_eq!(c.len(), 1);
        assert_eq!(c.words()[0].morphs(), ["ka"]);
    }

    #[test]
    fn cross_product() {
        let c = generate_synthetic_corpus(&spec(&["ka", "lo"], &[&["ta", "mi"]], 1));
        let got: Vec<String> = c.words().iter().map(|w| w.to_string()).collect();
        assert_eq!(
            got,
            ["ka → ka", "kata → ka + ta", "kami → ka + mi", "lo → lo", "lota → lo + ta", "lomi → lo + mi"]
        );
    }

    #[test]
    fn collisions_keep_first() {
        let c = generate_synthetic_corpus(&spec(&["a", "ab"], &[&["b"]], 1));
        let ab: Vec<_> = c.words().iter().filter(|w| w.surface() == "ab").collect();
        assert_eq!(ab.len(), 1);
        assert_eq!(ab[0].morphs(), ["a", "b"]);
    }

    #[test]
    fn agglutinative_is_large_and_valid() {
        let c = generate_synthetic_corpus(&SyntheticSpec::agglutinative(1500, 7));
        assert_eq!(c.len(), 3000);
        assert!(c.words().iter().all(|w| w.morphs().concat() == w.surface()));
        assert_eq!(c, generate_synthetic_corpus(&SyntheticSpec::agglutinative(1500, 7)));
        let max = c.words().iter().map(|w| w.morph_count()).max();
        assert_eq!(max, Some(4));
    }
}
