//! CSV and JSON rendering of an [`Analysis`].

use std::path::PathBuf;

use serde::Serialize;

use segeval_core::analysis::CharacteristicsVector;
use segeval_core::{Metric, SamplingStrategy};

use crate::analyze::Analysis;
use crate::store::{to_json, write_file, RunDir};
use crate::CliError;

/// Display label for a model name: `Lexicon`, `k-CRF`, `Seq2seq`.
pub fn model_label(name: &str) -> String {
    match name {
        "lexicon" => "Lexicon".into(),
        "seq2seq" => "Seq2seq".into(),
        _ => match name.strip_prefix("crf") {
            Some(k) => format!("{k}-CRF"),
            None => name.into(),
        },
    }
}

pub fn sampling_label(s: SamplingStrategy) -> &'static str {
    match s {
        SamplingStrategy::WithReplacement => "with replacement",
        SamplingStrategy::WithoutReplacement => "without replacement",
    }
}

/// Rates print as percentages with two decimals; distances keep three.
pub fn format_score(metric: Metric, x: f64) -> String {
    if metric.higher_is_better() {
        format!("{:.2}", 100.0 * x)
    } else {
        format!("{x:.3}")
    }
}

fn format_std(metric: Metric, x: f64) -> String {
    format_score(metric, x)
}

fn format_pct(x: f64) -> String {
    if (x - x.round()).abs() < 1e-9 {
        format!("{}", x.round() as i64)
    } else {
        format!("{x:.2}")
    }
}

/// Header row of the per-metric summary table.
pub fn summary_header(metric: Metric, n_datasets: usize) -> Vec<String> {
    let m = metric.display_name();
    vec![
        "Language".into(),
        "Data set size".into(),
        "Sampling".into(),
        "Model".into(),
        format!("Avg. {m} for the first data set"),
        format!("Avg. {m} across the {n_datasets} data sets"),
        format!("{m} range across the {n_datasets} data sets"),
        format!("{m} std. across the {n_datasets} data sets"),
        "% of times as the best model".into(),
    ]
}

pub const REGRESSION_HEADER: [&str; 6] = [
    "Language",
    "Word overlap",
    "Morpheme overlap",
    "Ratio of Avg. N of morphemes",
    "Distance between distributions of N of morphemes",
    "Ratio of Avg. morpheme length",
];

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

#[derive(Serialize)]
struct GridDump<'a> {
    id: &'a str,
    results: &'a segeval_core::analysis::SettingResults,
    grids: &'a [segeval_core::analysis::AverageGrid],
}

/// File name and bytes of every report.
pub fn render(analysis: &Analysis) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    let mut out = Vec::new();
    let n = analysis.settings.first().map_or(0, |s| s.results.n_datasets);

    for metric in Metric::ALL {
        let mut rows = Vec::new();
        for s in &analysis.settings {
            let summary = s.summaries.iter().find(|x| x.metric == metric).expect("all metrics summarized");
            for m in &summary.models {
                rows.push(vec![
                    s.language.clone(),
                    s.dataset_size.to_string(),
                    sampling_label(s.strategy).into(),
                    model_label(&m.model),
                    format_score(metric, m.first_dataset_avg),
                    format_score(metric, m.all_datasets_avg),
                    format!("({}, {})", format_score(metric, m.range_min), format_score(metric, m.range_max)),
                    format_std(metric, m.std),
                    format_pct(m.pct_best),
                ]);
            }
        }
        out.push((format!("summary_{}.csv", metric.name()), csv_bytes(&summary_header(metric, n), &rows)?));
    }

    let header: Vec<String> = [
        "Language",
        "Data set size",
        "Sampling",
        "Metric",
        "Best model on the first data set",
        "% of data sets with the same best model",
        "Ranking on the first data set",
        "% of data sets with the same ranking",
        "Data sets with ties",
    ]
    .map(String::from)
    .to_vec();
    let mut rows = Vec::new();
    for s in &analysis.settings {
        for summary in &s.summaries {
            rows.push(vec![
                s.language.clone(),
                s.dataset_size.to_string(),
                sampling_label(s.strategy).into(),
                summary.metric.display_name().into(),
                summary.best_model_first.as_deref().map(model_label).unwrap_or_else(|| "tie".into()),
                format!("{:.2}", 100.0 * summary.best_model_consistency),
                summary.ranking_first.iter().map(|m| model_label(m)).collect::<Vec<_>>().join(" > "),
                format!("{:.2}", 100.0 * summary.ranking_consistency),
                summary.tied_datasets.iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
            ]);
        }
    }
    out.push(("consistency.csv".into(), csv_bytes(&header, &rows)?));

    let header: Vec<String> = REGRESSION_HEADER.map(String::from).to_vec();
    let mut rows = Vec::new();
    let mut term_rows = Vec::new();
    for reg in &analysis.regressions {
        let mut row = vec![reg.language.clone()];
        for name in CharacteristicsVector::NAMES {
            row.push(match reg.result.as_ref().and_then(|r| r.term(name)) {
                Some(t) => format!("{:.4}{}", t.coefficient, t.stars()),
                None => "---".into(),
            });
        }
        rows.push(row);
        match (&reg.result, &reg.error) {
            (Some(r), _) => {
                for t in &r.terms {
                    term_rows.push(vec![
                        reg.language.clone(),
                        t.name.clone(),
                        format!("{:e}", t.coefficient),
                        format!("{:e}", t.std_error),
                        format!("{:e}", t.t_statistic),
                        format!("{:e}", t.p_value),
                        t.stars().into(),
                    ]);
                }
                term_rows.push(vec![reg.language.clone(), "R-squared".into(), format!("{:e}", r.r_squared)]);
                term_rows.push(vec![reg.language.clone(), "Observations".into(), r.n_rows.to_string()]);
                for d in &reg.dropped_terms {
                    term_rows.push(vec![reg.language.clone(), d.clone(), "aliased".into()]);
                }
            }
            (None, Some(e)) => term_rows.push(vec![reg.language.clone(), "error".into(), e.clone()]),
            (None, None) => {}
        }
    }
    out.push(("regression.csv".into(), csv_bytes(&header, &rows)?));
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["Language", "Term", "Coefficient", "Std. error", "t", "p", "Stars"]).map_err(err)?;
    for r in &term_rows {
        w.write_record(r).map_err(err)?;
    }
    out.push(("regression_terms.csv".into(), w.into_inner().map_err(|e| CliError::Io(e.to_string()))?));

    let header: Vec<String> = [
        "Language", "Data set size", "Sampling", "Model", "New test set size", "Metric", "N", "Mean", "Min", "Max",
        "Std.",
    ]
    .map(String::from)
    .to_vec();
    let mut rows = Vec::new();
    for s in &analysis.settings {
        for t in &s.newtests {
            rows.push(vec![
                s.language.clone(),
                s.dataset_size.to_string(),
                sampling_label(s.strategy).into(),
                model_label(&t.model),
                t.size.to_string(),
                t.metric.display_name().into(),
                t.n.to_string(),
                format_score(t.metric, t.mean),
                format_score(t.metric, t.min),
                format_score(t.metric, t.max),
                format_std(t.metric, t.std),
            ]);
        }
    }
    out.push(("newtests.csv".into(), csv_bytes(&header, &rows)?));

    let header: Vec<String> = [
        "Language",
        "Data set size",
        "Sampling",
        "Data set",
        "Method",
        "Replicate",
        "Applicable",
        "Train",
        "Test",
        "Threshold",
        "Distance between distributions of N of morphemes",
        "Test word overlap with random split",
    ]
    .map(String::from)
    .to_vec();
    let mut rows = Vec::new();
    for s in &analysis.settings {
        for sp in &s.splits {
            let r = &sp.record;
            rows.push(vec![
                s.language.clone(),
                s.dataset_size.to_string(),
                sampling_label(s.strategy).into(),
                sp.dataset.to_string(),
                r.method.to_string(),
                r.replicate.to_string(),
                r.applicable.to_string(),
                r.n_train.to_string(),
                r.n_test.to_string(),
                opt(r.threshold),
                opt(r.wasserstein.map(|x| format!("{x:.4}"))),
                opt(r.random_test_overlap.map(|x| format!("{x:.4}"))),
            ]);
        }
    }
    out.push(("splits.csv".into(), csv_bytes(&header, &rows)?));

    let rows: Vec<Vec<String>> = analysis.skipped.iter().map(|s| vec![s.id.clone(), s.reason.clone()]).collect();
    out.push(("skipped.csv".into(), csv_bytes(&["Setting".into(), "Reason".into()], &rows)?));

    let dump: Vec<GridDump> = analysis
        .settings
        .iter()
        .map(|s| GridDump { id: &s.id, results: &s.results, grids: &s.grids })
        .collect();
    out.push(("grids.json".into(), to_json(&dump)));
    Ok(out)
}

/// Writes every report under `<run>/reports/`.
pub fn write_reports(dir: &RunDir, analysis: &Analysis) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    for (name, bytes) in render(analysis)? {
        let path = dir.reports().join(name);
        write_file(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}
