//! Collects a finished run into result grids, summaries and regressions.

use serde::{Deserialize, Serialize};

use segeval_core::analysis::{
    aggregate_setting, build_design, ols_regression, summarize, AverageGrid, Design, RegressionError, RegressionResult,
    RegressionRow,
    SettingResults, SettingSummary,
};
use segeval_core::{Metric, SamplingStrategy, SplitMethod};

use crate::pipeline::{JobEval, Manifest, SplitRecord};
use crate::store::{read_json, unit_complete, RunDir};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtestSummary {
    pub model: String,
    pub size: usize,
    pub metric: Metric,
    /// Scores pooled over every (data set, split, new test set).
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub dataset: usize,
    #[serde(flatten)]
    pub record: SplitRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingAnalysis {
    pub id: String,
    pub language: String,
    pub dataset_size: usize,
    pub strategy: SamplingStrategy,
    pub results: SettingResults,
    pub grids: Vec<AverageGrid>,
    pub summaries: Vec<SettingSummary>,
    pub newtests: Vec<NewtestSummary>,
    pub splits: Vec<SplitRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageRegression {
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<RegressionResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Aliased columns removed before the fit.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSetting {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub settings: Vec<SettingAnalysis>,
    pub skipped: Vec<SkippedSetting>,
    pub regressions: Vec<LanguageRegression>,
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Fits the design, removing columns reported as linearly dependent until
/// the rest has full rank.
pub fn fit_dropping_aliased(mut design: Design) -> (Result<RegressionResult, RegressionError>, Vec<String>) {
    let mut dropped = Vec::new();
    loop {
        match ols_regression(&design) {
            Err(RegressionError::RankDeficient(cols)) if !cols.is_empty() && cols.len() < design.names.len() => {
                let keep: Vec<usize> = (0..design.names.len()).filter(|&i| !cols.contains(&design.names[i])).collect();
                design.names = keep.iter().map(|&i| design.names[i].clone()).collect();
                for row in &mut design.rows {
                    *row = keep.iter().map(|&i| row[i]).collect();
                }
                dropped.extend(cols);
            }
            other => return (other, dropped),
        }
    }
}

pub fn load_manifest(dir: &RunDir) -> Result<Manifest, CliError> {
    let path = dir.manifest();
    if !path.exists() {
        return Err(CliError::MissingCell(format!("{} has no manifest.json; nothing was run", dir.root().display())));
    }
    read_json(&path)
}

/// Reads every cell of the run. Any missing evaluation is a missing-cell error.
pub fn analyze_run(dir: &RunDir, only: Option<&str>) -> Result<Analysis, CliError> {
    let manifest = load_manifest(dir)?;
    let config = &manifest.config;
    let (n_d, n_r) = (config.dataset_count, config.split_count);
    let mut settings = Vec::new();
    let mut skipped = Vec::new();
    let mut rows_by_language: Vec<(String, Vec<RegressionRow>)> = Vec::new();
    for rec in &manifest.settings {
        if let Some(reason) = &rec.skipped {
            skipped.push(SkippedSetting { id: rec.id.clone(), reason: reason.clone() });
            continue;
        }
        if !only.is_none_or(|f| f.split(',').map(str::trim).filter(|p| !p.is_empty()).any(|p| rec.id.contains(p))) {
            continue;
        }
        let mut results = SettingResults::new(manifest.models.clone(), n_d, n_r);
        let mut newtest_scores: Vec<Vec<(usize, Vec<segeval_core::Evaluation>)>> = vec![Vec::new(); manifest.models.len()];
        let mut regression_rows = Vec::new();
        let mut splits = Vec::new();
        for d in 0..n_d {
            let ds_dir = dir.dataset(&rec.id, d);
            if !unit_complete(&ds_dir, "split") {
                return Err(CliError::MissingCell(format!("{}: data set {d} has no splits", rec.id)));
            }
            let mut random = Vec::new();
            for method in [SplitMethod::Random, SplitMethod::Adversarial, SplitMethod::Heuristic] {
                let count = match method {
                    SplitMethod::Random => n_r,
                    SplitMethod::Adversarial if config.adversarial => n_r,
                    SplitMethod::Heuristic if config.heuristic => 1,
                    _ => 0,
                };
                for r in 0..count {
                    let record: SplitRecord = read_json(&dir.split(&rec.id, d, method, r).join("meta.json"))?;
                    if method == SplitMethod::Random {
                        random.push(record.clone());
                    }
                    splits.push(SplitRow { dataset: d, record });
                }
            }
            for (m, model) in manifest.models.iter().enumerate() {
                for (r, split) in random.iter().enumerate() {
                    let job = dir.job(&rec.id, model, d, r);
                    if !unit_complete(&job, "eval") {
                        return Err(CliError::MissingCell(format!(
                            "{}: no evaluation for model {model}, data set {d}, split {r}",
                            rec.id
                        )));
                    }
                    let eval: JobEval = read_json(&job.join("eval.json"))?;
                    results.set(m, d, r, eval.test);
                    if let Some(ch) = split.characteristics {
                        for metric in Metric::ALL {
                            regression_rows.push(RegressionRow {
                                response: eval.test.get(metric),
                                model: model.clone(),
                                metric,
                                strategy: rec.strategy,
                                dataset_size: rec.dataset_size,
                                characteristics: ch,
                            });
                        }
                    }
                    for nt in eval.newtests {
                        match newtest_scores[m].iter_mut().find(|(s, _)| *s == nt.size) {
                            Some((_, v)) => v.extend(nt.scores),
                            None => newtest_scores[m].push((nt.size, nt.scores)),
                        }
                    }
                }
            }
        }
        results.check_complete().map_err(|e| CliError::MissingCell(format!("{}: {e}", rec.id)))?;
        let grids = Metric::ALL
            .iter()
            .map(|&m| aggregate_setting(&results, m))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::MissingCell(format!("{}: {e}", rec.id)))?;
        let summaries = grids.iter().map(summarize).collect();
        let mut newtests = Vec::new();
        for (m, per_size) in newtest_scores.iter().enumerate() {
            for (size, evals) in per_size {
                for metric in Metric::ALL {
                    let xs: Vec<f64> = evals.iter().map(|e| e.get(metric)).collect();
                    if xs.is_empty() {
                        continue;
                    }
                    newtests.push(NewtestSummary {
                        model: manifest.models[m].clone(),
                        size: *size,
                        metric,
                        n: xs.len(),
                        mean: xs.iter().sum::<f64>() / xs.len() as f64,
                        min: xs.iter().copied().fold(f64::INFINITY, f64::min),
                        max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        std: sample_std(&xs),
                    });
                }
            }
        }
        match rows_by_language.iter_mut().find(|(l, _)| l == &rec.language) {
            Some((_, v)) => v.extend(regression_rows),
            None => rows_by_language.push((rec.language.clone(), regression_rows)),
        }
        settings.push(SettingAnalysis {
            id: rec.id.clone(),
            language: rec.language.clone(),
            dataset_size: rec.dataset_size,
            strategy: rec.strategy,
            results,
            grids,
            summaries,
            newtests,
            splits,
        });
    }
    if settings.is_empty() {
        return Err(CliError::MissingCell("the run has no completed settings".into()));
    }
    let regressions = rows_by_language
        .into_iter()
        .map(|(language, rows)| {
            let (fit, dropped_terms) = fit_dropping_aliased(build_design(&rows, &config.regression));
            match fit {
                Ok(result) => LanguageRegression { language, result: Some(result), error: None, dropped_terms },
                Err(e) => LanguageRegression { language, result: None, error: Some(e.to_string()), dropped_terms },
            }
        })
        .collect();
    Ok(Analysis { settings, skipped, regressions })
}
