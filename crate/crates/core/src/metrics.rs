//! Segmentation metrics: full-form accuracy, morpheme precision, recall and
//! F1 over offset-tagged morph instances, and average Levenshtein distance
//! between separator-joined serializations.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Precision,
    Recall,
    F1,
    AvgLevenshtein,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Accuracy,
        Metric::Precision,
        Metric::Recall,
        Metric::F1,
        Metric::AvgLevenshtein,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
            Metric::AvgLevenshtein => "avg_levenshtein",
        }
    }

    /// Label used in report headers.
    pub fn display_name(self) -> &'static str {
        match self {
            Metric::Accuracy => "Full form accuracy",
            Metric::Precision => "Precision",
            Metric::Recall => "Recall",
            Metric::F1 => "F1",
            Metric::AvgLevenshtein => "Avg. Levenshtein",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::AvgLevenshtein)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-word comparison counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WordScore {
    pub matched: usize,
    pub n_pred: usize,
    pub n_gold: usize,
    pub exact: bool,
    pub lev: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub full_form_accuracy: f64,
    pub morpheme_precision: f64,
    pub morpheme_recall: f64,
    pub morpheme_f1: f64,
    pub avg_levenshtein: f64,
}

impl Evaluation {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Accuracy => self.full_form_accuracy,
            Metric::Precision => self.morpheme_precision,
            Metric::Recall => self.morpheme_recall,
            Metric::F1 => self.morpheme_f1,
            Metric::AvgLevenshtein => self.avg_levenshtein,
        }
    }

    /// `metric,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for m in Metric::ALL {
            out.push_str(&format!("{},{}\n", m.name(), self.get(m)));
        }
        out
    }
}

/// How morph counts are pooled across words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Sum counts over all words, then divide.
    #[default]
    Micro,
    /// Per-word precision and recall, averaged over words.
    Macro,
}

/// Unit-cost edit distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Characters of the morphs with `None` standing for the reserved separator.
pub fn serialize_with_separator<S: AsRef<str>>(morphs: &[S]) -> Vec<Option<char>> {
    let mut out = Vec::new();
    for (i, m) in morphs.iter().enumerate() {
        if i > 0 {
            out.push(None);
        }
        out.extend(m.as_ref().chars().map(Some));
    }
    out
}

fn instances<S: AsRef<str>>(morphs: &[S]) -> HashSet<(usize, &str)> {
    let mut offset = 0;
    morphs
        .iter()
        .map(|m| {
            let m = m.as_ref();
            let inst = (offset, m);
            offset += m.chars().count();
            inst
        })
        .collect()
}

pub fn eval_word<P: AsRef<str>, G: AsRef<str>>(pred: &[P], gold: &[G]) -> WordScore {
    let p = instances(pred);
    let g = instances(gold);
    let matched = p.intersection(&g).count();
    let exact = pred.len() == gold.len()
        && pred.iter().zip(gold).all(|(a, b)| a.as_ref() == b.as_ref());
    let lev = levenshtein(&serialize_with_separator(pred), &serialize_with_separator(gold));
    WordScore {
        matched,
        n_pred: pred.len(),
        n_gold: gold.len(),
        exact,
        lev,
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn aggregate(scores: &[WordScore], averaging: Averaging) -> Evaluation {
    let n = scores.len().max(1) as f64;
    let (precision, recall) = match averaging {
        Averaging::Micro => {
            let (m, p, g) = scores.iter().fold((0, 0, 0), |(m, p, g), s| {
                (m + s.matched, p + s.n_pred, g + s.n_gold)
            });
            (ratio(m, p), ratio(m, g))
        }
        Averaging::Macro => {
            let p: f64 = scores.iter().map(|s| ratio(s.matched, s.n_pred)).sum();
            let r: f64 = scores.iter().map(|s| ratio(s.matched, s.n_gold)).sum();
            (p / n, r / n)
        }
    };
    Evaluation {
        full_form_accuracy: scores.iter().filter(|s| s.exact).count() as f64 / n,
        morpheme_precision: precision,
        morpheme_recall: recall,
        morpheme_f1: harmonic(precision, recall),
        avg_levenshtein: scores.iter().map(|s| s.lev as f64).sum::<f64>() / n,
    }
}

/// Micro-averaged evaluation over `(pred, gold)` pairs.
pub fn eval_corpus<P: AsRef<str>, G: AsRef<str>>(pairs: &[(Vec<P>, Vec<G>)]) -> Evaluation {
    eval_corpus_with(pairs, Averaging::Micro)
}

pub fn eval_corpus_with<P: AsRef<str>, G: AsRef<str>>(
    pairs: &[(Vec<P>, Vec<G>)],
    averaging: Averaging,
) -> Evaluation {
    let scores: Vec<WordScore> = pairs.iter().map(|(p, g)| eval_word(p, g)).collect();
    aggregate(&scores, averaging)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identity() {
        let s = eval_word(&["paper", "s"], &["paper", "s"]);
        assert_eq!(
            s,
            WordScore { matched: 2, n_pred: 2, n_gold: 2, exact: true, lev: 0 }
        );
    }

    #[test]
    fn offset_tagged_matching() {
        let s = eval_word(&["undo", "ing"], &["un", "do", "ing"]);
        assert_eq!((s.matched, s.n_pred, s.n_gold, s.exact), (1, 2, 3, false));
        let e = aggregate(&[s], Averaging::Micro);
        assert_eq!(e.morpheme_precision, 0.5);
        assert_eq!(e.morpheme_recall, 1.0 / 3.0);
    }

    #[test]
    fn shifted_boundary() {
        let s = eval_word(&["pape", "rs"], &["paper", "s"]);
        assert_eq!(s.matched, 0);
        assert_eq!(s.lev, 2);
    }

    #[test]
    fn repeated_morph_counts_by_offset() {
        // "lala" = la + la; predicting one "la" at offset 0 and "la" at 2 matches both.
        let s = eval_word(&["la", "la"], &["la", "la"]);
        assert_eq!(s.matched, 2);
        let s = eval_word(&["lala"], &["la", "la"]);
        assert_eq!(s.matched, 0);
    }

    #[test]
    fn corpus_micro_average() {
        let pairs = vec![
            (v(&["paper", "s"]), v(&["paper", "s"])),
            (v(&["undoes"]), v(&["undo", "es"])),
        ];
        let e = eval_corpus(&pairs);
        assert!((e.morpheme_precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.morpheme_recall, 0.5);
        assert!((e.morpheme_f1 - 4.0 / 7.0).abs() < 1e-15);
        assert_eq!(e.full_form_accuracy, 0.5);

        let perfect = eval_corpus(&[(v(&["a", "b"]), v(&["a", "b"]))]);
        assert_eq!(
            (perfect.full_form_accuracy, perfect.morpheme_precision, perfect.morpheme_recall, perfect.morpheme_f1, perfect.avg_levenshtein),
            (1.0, 1.0, 1.0, 1.0, 0.0)
        );
    }

    #[test]
    fn macro_average_differs() {
        let pairs = vec![
            (v(&["a", "b"]), v(&["a", "b"])),
            (v(&["cdef"]), v(&["c", "d", "e", "f"])),
        ];
        let micro = eval_corpus_with(&pairs, Averaging::Micro);
        let mac = eval_corpus_with(&pairs, Averaging::Macro);
        assert_eq!(micro.morpheme_recall, 2.0 / 6.0);
        assert_eq!(mac.morpheme_recall, 0.5);
    }

    #[test]
    fn levenshtein_basics() {
        let c = |s: &str| s.chars().collect::<Vec<_>>();
        assert_eq!(levenshtein(&c("abc"), &c("abc")), 0);
        assert_eq!(levenshtein(&c(""), &c("abc")), 3);
        assert_eq!(levenshtein(&c("kitten"), &c("sitting")), 3);
    }

    #[test]
    fn csv_rows() {
        let e = eval_corpus(&[(v(&["a"]), v(&["a"]))]);
        assert!(e.to_csv().starts_with("metric,value\naccuracy,1\n"));
    }

    fn morphs() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec("[ab]{1,3}", 1..4)
    }

    proptest! {
        #[test]
        fn bounds_and_exactness(pairs in prop::collection::vec((morphs(), morphs()), 1..10)) {
            let e = eval_corpus(&pairs);
            for m in [Metric::Accuracy, Metric::Precision, Metric::Recall, Metric::F1] {
                prop_assert!((0.0..=1.0).contains(&e.get(m)));
            }
            for (p, g) in &pairs {
                let s = eval_word(p, g);
                let same_ser = serialize_with_separator(p) == serialize_with_separator(g);
                prop_assert_eq!(s.exact, s.matched == s.n_pred && s.matched == s.n_gold && same_ser);
            }
        }

        #[test]
        fn permutation_invariant(pairs in prop::collection::vec((morphs(), morphs()), 1..10), rot in 0usize..10) {
            let mut rotated = pairs.clone();
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            prop_assert_eq!(eval_corpus(&pairs), eval_corpus(&rotated));
        }

        #[test]
        fn levenshtein_metric_axioms(a in "[abc]{0,8}", b in "[abc]{0,8}", c in "[abc]{0,8}") {
            let (a, b, c): (Vec<char>, Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect(), c.chars().collect());
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        }
    }
}
