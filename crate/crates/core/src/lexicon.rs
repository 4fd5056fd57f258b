//! Supervised unigram morph lexicon with character-level backoff.
//!
//! Known morphs cost their negative log relative frequency. Any other
//! substring costs a boundary penalty plus the add-one smoothed character
//! unigram cost of its characters. Decoding is an exact dynamic program over
//! split points.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::corpus::Word;

#[derive(Debug, Error, PartialEq)]
pub enum LexiconError {
    #[error("cannot train a lexicon on an empty training set")]
    EmptyTraining,
    #[error("lexicon model line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphLexicon {
    morph_counts: HashMap<String, u64>,
    total_morph_tokens: u64,
    char_counts: HashMap<char, u64>,
    total_chars: u64,
    max_morph_len: usize,
    boundary_penalty: f64,
}

/// `β = ln(total_morph_tokens + 1)`.
pub fn default_boundary_penalty(total_morph_tokens: u64) -> f64 {
    ((total_morph_tokens + 1) as f64).ln()
}

pub fn train_lexicon(train: &[Word]) -> Result<MorphLexicon, LexiconError> {
    train_lexicon_with(train, None)
}

/// Trains with an explicit boundary penalty (`None` for the default).
pub fn train_lexicon_with(train: &[Word], boundary_penalty: Option<f64>) -> Result<MorphLexicon, LexiconError> {
    if train.is_empty() {
        return Err(LexiconError::EmptyTraining);
    }
    let mut morph_counts: HashMap<String, u64> = HashMap::new();
    let mut char_counts: HashMap<char, u64> = HashMap::new();
    let mut max_morph_len = 0;
    for w in train {
        for m in w.morphs() {
            *morph_counts.entry(m.clone()).or_default() += 1;
            max_morph_len = max_morph_len.max(m.chars().count());
        }
        for c in w.surface().chars() {
            *char_counts.entry(c).or_default() += 1;
        }
    }
    let total_morph_tokens = morph_counts.values().sum();
    let total_chars = char_counts.values().sum();
    Ok(MorphLexicon {
        morph_counts,
        total_morph_tokens,
        char_counts,
        total_chars,
        max_morph_len,
        boundary_penalty: boundary_penalty.unwrap_or_else(|| default_boundary_penalty(total_morph_tokens)),
    })
}

impl MorphLexicon {
    pub fn morph_count(&self, morph: &str) -> u64 {
        self.morph_counts.get(morph).copied().unwrap_or(0)
    }

    pub fn total_morph_tokens(&self) -> u64 {
        self.total_morph_tokens
    }

    pub fn max_morph_len(&self) -> usize {
        self.max_morph_len
    }

    pub fn boundary_penalty(&self) -> f64 {
        self.boundary_penalty
    }

    pub fn morph_counts(&self) -> &HashMap<String, u64> {
        &self.morph_counts
    }

    /// Smoothed `-ln p(c)` over the training alphabet plus one unknown slot.
    pub fn char_cost(&self, c: char) -> f64 {
        let denom = (self.total_chars + self.char_counts.len() as u64 + 1) as f64;
        let count = self.char_counts.get(&c).copied().unwrap_or(0);
        -((count + 1) as f64 / denom).ln()
    }

    /// Cost of one piece of a segmentation.
    pub fn piece_cost(&self, piece: &str) -> f64 {
        match self.morph_counts.get(piece) {
            Some(&n) => -(n as f64 / self.total_morph_tokens as f64).ln(),
            None => self.boundary_penalty + piece.chars().map(|c| self.char_cost(c)).sum::<f64>(),
        }
    }

    /// Total cost of a full segmentation.
    pub fn segmentation_cost<S: AsRef<str>>(&self, morphs: &[S]) -> f64 {
        morphs.iter().map(|m| self.piece_cost(m.as_ref())).sum()
    }

    /// Minimum-cost segmentation. Ties prefer fewer morphs, then a longer
    /// first morph (leftmost-longest).
    pub fn segment(&self, surface: &str) -> Vec<String> {
        let chars: Vec<char> = surface.chars().collect();
        let n = chars.len();
        if n <= 1 {
            return vec![surface.to_string()];
        }
        // best[i]: optimal segmentation of chars[i..] as (cost, pieces, first piece end).
        let mut best: Vec<(f64, usize, usize)> = vec![(0.0, 0, n); n + 1];
        for i in (0..n).rev() {
            let mut cur: Option<(f64, usize, usize)> = None;
            for j in i + 1..=n {
                let piece: String = chars[i..j].iter().collect();
                let cost = self.piece_cost(&piece) + best[j].0;
                let count = 1 + best[j].1;
                let better = match cur {
                    None => true,
                    Some((c, k, _)) => {
                        let tol = 1e-9 * c.abs().max(1.0);
                        cost < c - tol || ((cost - c).abs() <= tol && count <= k)
                    }
                };
                if better {
                    cur = Some((cost, count, j));
                }
            }
            best[i] = cur.expect("at least one candidate");
        }
        let mut out = Vec::new();
        let mut i = 0;
        while i < n {
            let j = best[i].2;
            out.push(chars[i..j].iter().collect());
            i = j;
        }
        out
    }

    /// Line-oriented text dump: a header then `morph<TAB>count` and
    /// `char<TAB>count` sections.
    pub fn to_text(&self) -> String {
        let mut out = String::from("#segeval-lexicon v1\n");
        out.push_str(&format!("total\t{}\n", self.total_morph_tokens));
        out.push_str(&format!("beta\t{}\n", self.boundary_penalty));
        out.push_str(&format!("max_morph_len\t{}\n", self.max_morph_len));
        out.push_str("[morphs]\n");
        let morphs: BTreeMap<_, _> = self.morph_counts.iter().collect();
        for (m, n) in morphs {
            out.push_str(&format!("{m}\t{n}\n"));
        }
        out.push_str("[chars]\n");
        let chars: BTreeMap<_, _> = self.char_counts.iter().collect();
        for (c, n) in chars {
            out.push_str(&format!("{}\t{n}\n", *c as u32));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, LexiconError> {
        let err = |line: usize, reason: &str| LexiconError::Parse { line: line + 1, reason: reason.to_string() };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "#segeval-lexicon v1")) => {}
            _ => return Err(err(0, "missing or unsupported header")),
        }
        let mut header = HashMap::new();
        let mut section = "";
        let mut morph_counts = HashMap::new();
        let mut char_counts = HashMap::new();
        for (i, line) in lines {
            if line == "[morphs]" || line == "[chars]" {
                section = line;
                continue;
            }
            let (k, v) = line.split_once('\t').ok_or_else(|| err(i, "expected key<TAB>value"))?;
            match section {
                "" => {
                    header.insert(k.to_string(), v.to_string());
                }
                "[morphs]" => {
                    let n: u64 = v.parse().map_err(|_| err(i, "bad count"))?;
                    morph_counts.insert(k.to_string(), n);
                }
                _ => {
                    let c = k
                        .parse::<u32>()
                        .ok()
                        .and_then(char::from_u32)
                        .ok_or_else(|| err(i, "bad character code"))?;
                    let n: u64 = v.parse().map_err(|_| err(i, "bad count"))?;
                    char_counts.insert(c, n);
                }
            }
        }
        let get = |k: &str| header.get(k).ok_or_else(|| err(0, &format!("missing `{k}`")));
        let total_morph_tokens: u64 = get("total")?.parse().map_err(|_| err(1, "bad total"))?;
        let boundary_penalty: f64 = get("beta")?.parse().map_err(|_| err(2, "bad beta"))?;
        let max_morph_len: usize = get("max_morph_len")?.parse().map_err(|_| err(3, "bad max_morph_len"))?;
        if morph_counts.values().sum::<u64>() != total_morph_tokens {
            return Err(err(1, "total does not match morph counts"));
        }
        let total_chars = char_counts.values().sum();
        Ok(Self {
            morph_counts,
            total_morph_tokens,
            char_counts,
            total_chars,
            max_morph_len,
            boundary_penalty,
        })
    }
}
