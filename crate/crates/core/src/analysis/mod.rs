//! Consistency statistics over resampled data sets, split characteristics,
//! and the regression of scores on those characteristics.

mod regression;
mod wasserstein;

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use regression::{ols_regression, Design, RegressionError, RegressionResult, Term};
pub use wasserstein::{sorted_quantile_distance, wasserstein1};

use crate::corpus::Word;
use crate::metrics::{Evaluation, Metric};
use crate::sampling::SamplingStrategy;
use crate::splits::Split;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("missing score for model {model}, data set {dataset}, split {split}")]
    IncompleteGrid {
        model: String,
        dataset: usize,
        split: usize,
    },
    #[error("the result grid has no models or no data sets")]
    EmptyGrid,
}

/// Scores of every model on every (data set, split) of one setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingResults {
    pub models: Vec<String>,
    pub n_datasets: usize,
    pub n_splits: usize,
    cells: Vec<Option<Evaluation>>,
}

impl SettingResults {
    pub fn new(models: Vec<String>, n_datasets: usize, n_splits: usize) -> Self {
        let len = models.len() * n_datasets * n_splits;
        Self {
            models,
            n_datasets,
            n_splits,
            cells: vec![None; len],
        }
    }

    fn index(&self, model: usize, dataset: usize, split: usize) -> usize {
        assert!(model < self.models.len() && dataset < self.n_datasets && split < self.n_splits);
        (model * self.n_datasets + dataset) * self.n_splits + split
    }

    pub fn set(&mut self, model: usize, dataset: usize, split: usize, eval: Evaluation) {
        let i = self.index(model, dataset, split);
        self.cells[i] = Some(eval);
    }

    pub fn get(&self, model: usize, dataset: usize, split: usize) -> Option<&Evaluation> {
        self.cells[self.index(model, dataset, split)].as_ref()
    }

    pub fn check_complete(&self) -> Result<(), AnalysisError> {
        if self.models.is_empty() || self.n_datasets == 0 || self.n_splits == 0 {
            return Err(AnalysisError::EmptyGrid);
        }
        for m in 0..self.models.len() {
            for d in 0..self.n_datasets {
                for s in 0..self.n_splits {
                    if self.get(m, d, s).is_none() {
                        return Err(AnalysisError::IncompleteGrid {
                            model: self.models[m].clone(),
                            dataset: d,
                            split: s,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-model, per-data-set averages of one metric over the splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageGrid {
    pub metric: Metric,
    pub models: Vec<String>,
    /// `values[model][dataset]`
    pub values: Vec<Vec<f64>>,
}

impl AverageGrid {
    pub fn n_datasets(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    fn better(&self, a: f64, b: f64) -> bool {
        if self.metric.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }

    /// The unique best model on a data set, or `None` on a tie for best.
    pub fn strict_best(&self, dataset: usize) -> Option<usize> {
        let mut best = 0;
        let mut tied = false;
        for m in 1..self.models.len() {
            let (v, b) = (self.values[m][dataset], self.values[best][dataset]);
            if self.better(v, b) {
                best = m;
                tied = false;
            } else if v == b {
                tied = true;
            }
        }
        (!tied).then_some(best)
    }

    /// Models from best to worst, or `None` if any two scores tie.
    pub fn ranking(&self, dataset: usize) -> Option<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.models.len()).collect();
        let col = |m: usize| self.values[m][dataset];
        order.sort_by(|&a, &b| {
            let ord = col(a).total_cmp(&col(b));
            if self.metric.higher_is_better() {
                ord.reverse()
            } else {
                ord
            }
        });
        if order.windows(2).any(|w| col(w[0]) == col(w[1])) {
            None
        } else {
            Some(order)
        }
    }

    /// Display ranking: ties fall back to the canonical model order.
    pub fn display_ranking(&self, dataset: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.models.len()).collect();
        let col = |m: usize| self.values[m][dataset];
        order.sort_by(|&a, &b| {
            let ord = col(a).total_cmp(&col(b));
            let ord = if self.metric.higher_is_better() { ord.reverse() } else { ord };
            ord.then(a.cmp(&b))
        });
        order
    }
}

/// Arithmetic mean over split index for each (model, data set).
pub fn aggregate_setting(results: &SettingResults, metric: Metric) -> Result<AverageGrid, AnalysisError> {
    results.check_complete()?;
    let values = (0..results.models.len())
        .map(|m| {
            (0..results.n_datasets)
                .map(|d| {
                    let sum: f64 = (0..results.n_splits)
                        .map(|s| results.get(m, d, s).expect("complete grid").get(metric))
                        .sum();
                    sum / results.n_splits as f64
                })
                .collect()
        })
        .collect();
    Ok(AverageGrid {
        metric,
        models: results.models.clone(),
        values,
    })
}

/// Proportion of data sets on which the first data set's best model is
/// strictly best. A tie for best counts as not-best.
pub fn best_model_consistency(grid: &AverageGrid) -> f64 {
    let n = grid.n_datasets();
    if n == 0 {
        return 0.0;
    }
    let Some(reference) = grid.strict_best(0) else {
        return 0.0;
    };
    let hits = (0..n).filter(|&d| grid.strict_best(d) == Some(reference)).count();
    hits as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingConsistency {
    pub proportion: f64,
    /// Data sets whose per-model averages contain a tie.
    pub tied_datasets: Vec<usize>,
}

/// Proportion of data sets (the first included) whose full ranking equals
/// the first data set's ranking.
pub fn ranking_consistency(grid: &AverageGrid) -> RankingConsistency {
    let n = grid.n_datasets();
    let rankings: Vec<Option<Vec<usize>>> = (0..n).map(|d| grid.ranking(d)).collect();
    let tied_datasets = (0..n).filter(|&d| rankings[d].is_none()).collect();
    let proportion = match rankings.first() {
        Some(Some(reference)) => {
            let hits = rankings.iter().filter(|r| r.as_ref() == Some(reference)).count();
            hits as f64 / n as f64
        }
        _ => 0.0,
    };
    RankingConsistency { proportion, tied_datasets }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub first_dataset_avg: f64,
    pub all_datasets_avg: f64,
    pub range_min: f64,
    pub range_max: f64,
    pub std: f64,
    /// Percentage of data sets where this model is strictly best.
    pub pct_best: f64,
}

impl ModelSummary {
    pub fn first_vs_all_difference(&self) -> f64 {
        (self.first_dataset_avg - self.all_datasets_avg).abs()
    }

    pub fn range(&self) -> f64 {
        self.range_max - self.range_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingSummary {
    pub metric: Metric,
    pub n_datasets: usize,
    pub models: Vec<ModelSummary>,
    pub best_model_first: Option<String>,
    pub best_model_consistency: f64,
    pub ranking_first: Vec<String>,
    pub ranking_consistency: f64,
    pub tied_datasets: Vec<usize>,
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

pub fn summarize(grid: &AverageGrid) -> SettingSummary {
    let n = grid.n_datasets();
    let mut wins = vec![0usize; grid.models.len()];
    for d in 0..n {
        if let Some(b) = grid.strict_best(d) {
            wins[b] += 1;
        }
    }
    let models = grid
        .models
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let v = &grid.values[m];
            ModelSummary {
                model: name.clone(),
                first_dataset_avg: v[0],
                all_datasets_avg: v.iter().sum::<f64>() / n as f64,
                range_min: v.iter().copied().fold(f64::INFINITY, f64::min),
                range_max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                std: sample_std(v),
                pct_best: 100.0 * wins[m] as f64 / n as f64,
            }
        })
        .collect();
    let rc = ranking_consistency(grid);
    SettingSummary {
        metric: grid.metric,
        n_datasets: n,
        models,
        best_model_first: grid.strict_best(0).map(|m| grid.models[m].clone()),
        best_model_consistency: best_model_consistency(grid),
        ranking_first: grid.display_ranking(0).into_iter().map(|m| grid.models[m].clone()).collect(),
        ranking_consistency: rc.proportion,
        tied_datasets: rc.tied_datasets,
    }
}

/// Distributional characteristics of one train/test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicsVector {
    /// Only defined for data sets sampled with replacement.
    pub word_overlap: Option<f64>,
    pub morpheme_overlap: f64,
    pub ratio_avg_morphs: f64,
    pub wasserstein_morph_dist: f64,
    pub ratio_avg_morph_len: f64,
}

impl CharacteristicsVector {
    pub const NAMES: [&'static str; 5] = [
        "word_overlap",
        "morpheme_overlap",
        "ratio_avg_morphs",
        "wasserstein_morph_dist",
        "ratio_avg_morph_len",
    ];

    pub fn values(&self) -> [Option<f64>; 5] {
        [
            self.word_overlap,
            Some(self.morpheme_overlap),
            Some(self.ratio_avg_morphs),
            Some(self.wasserstein_morph_dist),
            Some(self.ratio_avg_morph_len),
        ]
    }
}

fn mean_morphs(words: &[Word]) -> f64 {
    words.iter().map(|w| w.morph_count() as f64).sum::<f64>() / words.len() as f64
}

fn mean_morph_len(words: &[Word]) -> f64 {
    let (chars, morphs) = words.iter().flat_map(|w| w.morphs()).fold((0usize, 0usize), |(c, n), m| {
        (c + m.chars().count(), n + 1)
    });
    chars as f64 / morphs as f64
}

/// Token-level characteristics; ratios are train over test.
///
/// Both halves must be nonempty.
pub fn compute_characteristics(split: &Split, strategy: SamplingStrategy) -> CharacteristicsVector {
    assert!(!split.train.is_empty() && !split.test.is_empty());
    let train_surfaces: HashSet<&str> = split.train.iter().map(Word::surface).collect();
    let train_morphs: HashSet<&str> = split
        .train
        .iter()
        .flat_map(|w| w.morphs().iter().map(String::as_str))
        .collect();
    let word_overlap = (strategy == SamplingStrategy::WithReplacement).then(|| {
        split.test.iter().filter(|w| train_surfaces.contains(w.surface())).count() as f64
            / split.test.len() as f64
    });
    let (hit, total) = split
        .test
        .iter()
        .flat_map(|w| w.morphs())
        .fold((0usize, 0usize), |(h, t), m| (h + usize::from(train_morphs.contains(m.as_str())), t + 1));
    CharacteristicsVector {
        word_overlap,
        morpheme_overlap: hit as f64 / total as f64,
        ratio_avg_morphs: mean_morphs(&split.train) / mean_morphs(&split.test),
        wasserstein_morph_dist: split.morph_count_distance(),
        ratio_avg_morph_len: mean_morph_len(&split.train) / mean_morph_len(&split.test),
    }
}

/// One observation for the characteristics regression: a metric score of
/// one model on one random split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub response: f64,
    pub model: String,
    pub metric: Metric,
    pub strategy: SamplingStrategy,
    pub dataset_size: usize,
    pub characteristics: CharacteristicsVector,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DesignOptions {
    /// Restrict to a single metric instead of pooling all metrics.
    #[serde(default)]
    pub metric: Option<Metric>,
}

/// Builds the design: intercept, the five characteristics, one-hot controls
/// (model, metric, strategy, size; first level dropped) and strategy × and
/// size × characteristic interactions.
///
/// Word overlap is absent for without-replacement rows; it enters as 0 there,
/// and its strategy interaction is omitted since it would duplicate the main
/// effect. Controls with a single observed level are omitted.
pub fn build_design(rows: &[RegressionRow], options: &DesignOptions) -> Design {
    let rows: Vec<&RegressionRow> = rows
        .iter()
        .filter(|r| options.metric.is_none_or(|m| r.metric == m))
        .collect();
    let models: Vec<String> = {
        let mut seen = Vec::new();
        for r in &rows {
            if !seen.contains(&r.model) {
                seen.push(r.model.clone());
            }
        }
        seen
    };
    let metrics: Vec<Metric> = rows.iter().map(|r| r.metric).collect::<BTreeSet<_>>().into_iter().collect();
    let strategies: Vec<SamplingStrategy> =
        rows.iter().map(|r| r.strategy).collect::<BTreeSet<_>>().into_iter().collect();
    let sizes: Vec<usize> = rows.iter().map(|r| r.dataset_size).collect::<BTreeSet<_>>().into_iter().collect();
    let has_word_overlap = rows.iter().any(|r| r.characteristics.word_overlap.is_some());
    let char_idx: Vec<usize> = (0..5).filter(|&i| i > 0 || has_word_overlap).collect();

    let mut names = vec!["(Intercept)".to_string()];
    names.extend(char_idx.iter().map(|&i| CharacteristicsVector::NAMES[i].to_string()));
    names.extend(models.iter().skip(1).map(|m| format!("model[{m}]")));
    names.extend(metrics.iter().skip(1).map(|m| format!("metric[{m}]")));
    names.extend(strategies.iter().skip(1).map(|s| format!("sampling[{s}]")));
    names.extend(sizes.iter().skip(1).map(|s| format!("size[{s}]")));
    for s in strategies.iter().skip(1) {
        for &i in char_idx.iter().filter(|&&i| i != 0) {
            names.push(format!("sampling[{s}]:{}", CharacteristicsVector::NAMES[i]));
        }
    }
    for z in sizes.iter().skip(1) {
        for &i in &char_idx {
            names.push(format!("size[{z}]:{}", CharacteristicsVector::NAMES[i]));
        }
    }

    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let vals = r.characteristics.values();
            let chars: Vec<f64> = char_idx.iter().map(|&i| vals[i].unwrap_or(0.0)).collect();
            let mut row = vec![1.0];
            row.extend(&chars);
            row.extend(models.iter().skip(1).map(|m| ind(&r.model == m)));
            row.extend(metrics.iter().skip(1).map(|&m| ind(r.metric == m)));
            row.extend(strategies.iter().skip(1).map(|&s| ind(r.strategy == s)));
            row.extend(sizes.iter().skip(1).map(|&z| ind(r.dataset_size == z)));
            for &s in strategies.iter().skip(1) {
                for (k, &i) in char_idx.iter().enumerate() {
                    if i != 0 {
                        row.push(ind(r.strategy == s) * chars[k]);
                    }
                }
            }
            for &z in sizes.iter().skip(1) {
                for c in &chars {
                    row.push(ind(r.dataset_size == z) * c);
                }
            }
            row
        })
        .collect();
    Design {
        names,
        rows: x,
        response: rows.iter().map(|r| r.response).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splits::SplitMethod;

    fn grid(values: Vec<Vec<f64>>) -> AverageGrid {
        AverageGrid {
            metric: Metric::F1,
            models: (0..values.len()).map(|i| format!("m{i}")).collect(),
            values,
        }
    }

    fn eval(v: f64) -> Evaluation {
        Evaluation {
            full_form_accuracy: v,
            morpheme_precision: v,
            morpheme_recall: v,
            morpheme_f1: v,
            avg_levenshtein: v,
        }
    }

    #[test]
    fn averages_over_splits() {
        let mut r = SettingResults::new(vec!["a".into()], 1, 5);
        for (s, v) in [70.0, 72.0, 74.0, 76.0, 78.0].into_iter().enumerate() {
            r.set(0, 0, s, eval(v));
        }
        let g = aggregate_setting(&r, Metric::F1).unwrap();
        assert_eq!(g.values[0][0], 74.0);
    }

    #[test]
    fn incomplete_grid_is_an_error() {
        let mut r = SettingResults::new(vec!["a".into()], 2, 1);
        r.set(0, 0, 0, eval(1.0));
        assert_eq!(
            aggregate_setting(&r, Metric::F1).unwrap_err(),
            AnalysisError::IncompleteGrid { model: "a".into(), dataset: 1, split: 0 }
        );
    }

    #[test]
    fn consistency_single_model() {
        let g = grid(vec![vec![0.3, 0.5, 0.1]]);
        assert_eq!(best_model_consistency(&g), 1.0);
        assert_eq!(ranking_consistency(&g).proportion, 1.0);
    }

    #[test]
    fn consistency_hand_grid() {
        // Argmax per data set: 0, 0, 1, tie(0,2).
        let g = grid(vec![
            vec![0.9, 0.8, 0.5, 0.7],
            vec![0.5, 0.6, 0.9, 0.1],
            vec![0.1, 0.7, 0.2, 0.7],
        ]);
        assert_eq!(best_model_consistency(&g), 0.5);
        let s = summarize(&g);
        assert_eq!(s.models[0].pct_best, 50.0);
        assert_eq!(s.models[1].pct_best, 25.0);
        assert_eq!(s.models[2].pct_best, 0.0);
        assert!(s.models.iter().map(|m| m.pct_best).sum::<f64>() <= 100.0);
        assert_eq!(s.best_model_first.as_deref(), Some("m0"));
    }

    #[test]
    fn ranking_two_of_five() {
        // Rankings: [0,1,2] [0,1,2] [1,0,2] [2,1,0] [0,2,1]
        let g = grid(vec![
            vec![0.9, 0.9, 0.5, 0.1, 0.9],
            vec![0.5, 0.6, 0.9, 0.5, 0.1],
            vec![0.1, 0.2, 0.2, 0.9, 0.5],
        ]);
        let rc = ranking_consistency(&g);
        assert!((rc.proportion - 0.4).abs() < 1e-15);
        assert!(rc.tied_datasets.is_empty());
    }

    #[test]
    fn ranking_tie_is_flagged() {
        let g = grid(vec![vec![0.9, 0.5], vec![0.5, 0.5]]);
        let rc = ranking_consistency(&g);
        assert_eq!(rc.tied_datasets, vec![1]);
        assert_eq!(rc.proportion, 0.5);
    }

    #[test]
    fn lower_is_better_for_levenshtein() {
        let mut g = grid(vec![vec![0.5], vec![0.2]]);
        g.metric = Metric::AvgLevenshtein;
        assert_eq!(g.strict_best(0), Some(1));
    }

    #[test]
    fn reported_proportions_as_fixtures() {
        // Best on data set 0 and strictly best on 6 of 50 in total.
        let mut a = vec![0.0; 50];
        let mut b = vec![1.0; 50];
        for d in 0..6 {
            a[d] = 2.0;
        }
        b[0] = 1.0;
        let g = grid(vec![a, b]);
        assert!((best_model_consistency(&g) - 0.12).abs() < 1e-15);

        // Ranking of data set 0 holds only on data set 0.
        let mut a = vec![0.0; 50];
        a[0] = 2.0;
        let g = grid(vec![a, vec![1.0; 50]]);
        assert!((ranking_consistency(&g).proportion - 0.02).abs() < 1e-15);
    }

    #[test]
    fn summary_schema_fixture() {
        // Per-data-set averages shaped like a reported row: first 34.61, range (34.61, 38.36).
        let mut v = vec![36.5; 48];
        v.insert(0, 34.61);
        v.push(38.36);
        let s = summarize(&grid(vec![v]));
        let m = &s.models[0];
        assert_eq!((m.first_dataset_avg, m.range_min, m.range_max), (34.61, 34.61, 38.36));
        assert!(m.first_vs_all_difference() <= m.range());
        assert!(m.std > 0.0);
    }

    fn w(morphs: &[&str]) -> Word {
        Word::from_morphs(morphs.iter().copied()).unwrap()
    }

    #[test]
    fn characteristics_identical_halves() {
        let words = vec![w(&["ka", "ta"]), w(&["lo"]), w(&["lo", "mi", "ta"])];
        let s = Split { train: words.clone(), test: words, method: SplitMethod::Random, replicate: 0 };
        let c = compute_characteristics(&s, SamplingStrategy::WithReplacement);
        assert_eq!(c.word_overlap, Some(1.0));
        assert_eq!(c.morpheme_overlap, 1.0);
        assert_eq!(c.ratio_avg_morphs, 1.0);
        assert_eq!(c.ratio_avg_morph_len, 1.0);
        assert_eq!(c.wasserstein_morph_dist, 0.0);
        let c = compute_characteristics(&s, SamplingStrategy::WithoutReplacement);
        assert_eq!(c.word_overlap, None);
    }

    #[test]
    fn characteristics_hand_values() {
        let s = Split {
            train: vec![w(&["ab"]), w(&["cd", "ef"])],
            test: vec![w(&["gh", "ij"]), w(&["kl", "mn", "op"])],
            method: SplitMethod::Random,
            replicate: 0,
        };
        let c = compute_characteristics(&s, SamplingStrategy::WithReplacement);
        assert_eq!(c.morpheme_overlap, 0.0);
        assert_eq!(c.word_overlap, Some(0.0));
        assert!((c.ratio_avg_morphs - 0.6).abs() < 1e-15);
        assert_eq!(c.wasserstein_morph_dist, 1.0);
        assert_eq!(c.ratio_avg_morph_len, 1.0);
    }

    #[test]
    fn design_columns() {
        let ch = CharacteristicsVector {
            word_overlap: Some(0.2),
            morpheme_overlap: 0.8,
            ratio_avg_morphs: 1.0,
            wasserstein_morph_dist: 0.1,
            ratio_avg_morph_len: 1.1,
        };
        let rows = vec![
            RegressionRow { response: 0.7, model: "crf1".into(), metric: Metric::F1, strategy: SamplingStrategy::WithReplacement, dataset_size: 500, characteristics: ch },
            RegressionRow { response: 0.6, model: "lexicon".into(), metric: Metric::Accuracy, strategy: SamplingStrategy::WithoutReplacement, dataset_size: 1000, characteristics: CharacteristicsVector { word_overlap: None, ..ch } },
        ];
        let d = build_design(&rows, &DesignOptions::default());
        assert_eq!(d.names[..6], ["(Intercept)", "word_overlap", "morpheme_overlap", "ratio_avg_morphs", "wasserstein_morph_dist", "ratio_avg_morph_len"]);
        assert!(d.names.contains(&"model[lexicon]".to_string()));
        assert!(d.names.contains(&"sampling[without]:morpheme_overlap".to_string()));
        assert!(!d.names.contains(&"sampling[without]:word_overlap".to_string()));
        assert!(d.names.contains(&"size[1000]:word_overlap".to_string()));
        assert!(d.rows.iter().all(|r| r.len() == d.names.len()));
        assert_eq!(d.rows[1][1], 0.0);

        let only_f1 = build_design(&rows, &DesignOptions { metric: Some(Metric::F1) });
        assert_eq!(only_f1.rows.len(), 1);
    }
}
