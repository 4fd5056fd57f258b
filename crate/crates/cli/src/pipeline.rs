//! The experiment stages: sample, split, train and eval.
//!
//! Every stage enumerates its units in canonical (setting, data set, split,
//! model) order, runs them on a thread pool, and skips units whose checksums
//! already validate. Seeds depend only on unit coordinates.

use std::path::PathBuf;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use segeval_core::analysis::{compute_characteristics, CharacteristicsVector};
use segeval_core::corpus::{parse_tokens, write_words};
use segeval_core::metrics::eval_corpus_with;
use segeval_core::sampling::{
    build_newtest_pool, derive_seed, make_random_splits, name_seed, sample_datasets, sample_new_testsets,
    ExperimentalSetting,
};
use segeval_core::segmenter::TrainInfo;
use segeval_core::splits::{adversarial_split, heuristic_split, HeuristicOutcome};
use segeval_core::{Corpus, DataSet, Evaluation, ModelKind, Segmenter, Split, SplitMethod, TrainedModel, Word};

use crate::config::RunConfig;
use crate::store::{read_json, read_string, to_json, unit_complete, write_file, write_unit, RunDir};
use crate::CliError;

/// One (language, size, strategy) setting and whether it can run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingRecord {
    pub id: String,
    pub language: String,
    pub dataset_size: usize,
    pub strategy: segeval_core::SamplingStrategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

/// Written at the run root by the first stage; later stages and reports
/// read the run definition from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub models: Vec<String>,
    pub settings: Vec<SettingRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtestRecord {
    pub size: usize,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

/// Sidecar of one persisted split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub method: SplitMethod,
    pub replicate: usize,
    pub applicable: bool,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wasserstein: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub characteristics: Option<CharacteristicsVector>,
    /// Share of this split's test tokens whose surface also occurs in the
    /// random split's test half of the same replicate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_test_overlap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtestScores {
    pub size: usize,
    pub scores: Vec<Evaluation>,
}

/// Scores of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobEval {
    pub test: Evaluation,
    pub newtests: Vec<NewtestScores>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Job {
    setting: usize,
    dataset: usize,
    split: usize,
    model: usize,
}

/// Counts of units run by a stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageReport {
    pub done: usize,
    pub skipped: usize,
}

pub struct Experiment {
    pub config: RunConfig,
    pub dir: RunDir,
    pub settings: Vec<SettingRecord>,
    kinds: Vec<ModelKind>,
    corpora: Vec<Corpus>,
    active: Vec<usize>,
    pool: rayon::ThreadPool,
}

fn feasibility(config: &RunConfig, setting: &ExperimentalSetting, corpus: &Corpus) -> Option<String> {
    if let Err(e) = setting.check_feasible(corpus) {
        return Some(e.to_string());
    }
    let n_train = config.train_fraction.floor_of(setting.dataset_size);
    if n_train == 0 || n_train == setting.dataset_size {
        return Some(format!("size {} leaves an empty train or test half", setting.dataset_size));
    }
    None
}

fn matches_filter(id: &str, only: Option<&str>) -> bool {
    only.is_none_or(|f| f.split(',').map(str::trim).filter(|p| !p.is_empty()).any(|p| id.contains(p)))
}

impl Experiment {
    /// Loads the corpora and decides which settings are feasible. `only` is a
    /// comma-separated list of substrings of setting ids.
    pub fn prepare(config: RunConfig, only: Option<&str>) -> Result<Self, CliError> {
        config.validate()?;
        let kinds = config.model_kinds()?;
        let corpora = config.languages.iter().map(|l| l.load_corpus()).collect::<Result<Vec<_>, _>>()?;
        let mut settings = Vec::new();
        for (lang, corpus) in config.languages.iter().zip(&corpora) {
            for size in config.sizes_for(lang) {
                for &strategy in &config.strategies {
                    let setting = ExperimentalSetting {
                        language_tag: lang.tag.clone(),
                        dataset_size: size,
                        strategy,
                    };
                    settings.push(SettingRecord {
                        id: setting.id(),
                        language: lang.tag.clone(),
                        dataset_size: size,
                        strategy,
                        skipped: feasibility(&config, &setting, corpus),
                    });
                }
            }
        }
        let active = (0..settings.len())
            .filter(|&i| settings[i].skipped.is_none() && matches_filter(&settings[i].id, only))
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Self {
            dir: RunDir::new(&config.output_dir),
            kinds,
            corpora,
            settings,
            active,
            pool,
            config,
        })
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            config: self.config.clone(),
            models: self.kinds.iter().map(ModelKind::name).collect(),
            settings: self.settings.clone(),
        }
    }

    /// Fails with exit status 3 when nothing can run.
    pub fn check_runnable(&self) -> Result<(), CliError> {
        if self.active.is_empty() {
            let reasons = self
                .settings
                .iter()
                .map(|s| format!("{}: {}", s.id, s.skipped.as_deref().unwrap_or("filtered out")))
                .collect();
            return Err(CliError::Infeasible(reasons));
        }
        Ok(())
    }

    /// Records the manifest, or checks that an existing one matches.
    pub fn write_manifest(&self) -> Result<(), CliError> {
        let path = self.dir.manifest();
        let bytes = to_json(&self.manifest());
        if path.exists() {
            let existing: Manifest = read_json(&path)?;
            // Machine details such as jobs and the output path are not serialized.
            if to_json(&existing) != bytes {
                return Err(CliError::Config(format!(
                    "{} was written by a different configuration",
                    path.display()
                )));
            }
            return Ok(());
        }
        write_file(&path, &bytes)
    }

    fn seed(&self, setting: usize, parts: &[u64]) -> u64 {
        let mut all = vec![name_seed(&self.settings[setting].id)];
        all.extend_from_slice(parts);
        derive_seed(self.config.seed, &all)
    }

    fn corpus_for(&self, setting: usize) -> &Corpus {
        let lang = &self.settings[setting].language;
        let i = self.config.languages.iter().position(|l| &l.tag == lang).expect("known language");
        &self.corpora[i]
    }

    fn read_dataset(&self, setting: usize, d: usize) -> Result<DataSet, CliError> {
        let dir = self.dir.dataset(&self.settings[setting].id, d);
        if !unit_complete(&dir, "sample") {
            return Err(CliError::Missing(format!("{}: run the sample stage first", dir.display())));
        }
        Ok(DataSet { id: d, tokens: read_tokens(&dir.join("dataset.tsv"))? })
    }

    pub fn sample(&self) -> Result<StageReport, CliError> {
        self.check_runnable()?;
        self.write_manifest()?;
        let mut report = StageReport::default();
        for &s in &self.active {
            let rec = &self.settings[s];
            let todo: Vec<usize> = (0..self.config.dataset_count)
                .filter(|&d| !unit_complete(&self.dir.dataset(&rec.id, d), "sample"))
                .collect();
            report.skipped += self.config.dataset_count - todo.len();
            if todo.is_empty() {
                continue;
            }
            info!("sampling {} data sets for {}", todo.len(), rec.id);
            let corpus = self.corpus_for(s);
            let datasets = sample_datasets(
                corpus,
                rec.dataset_size,
                rec.strategy,
                self.config.dataset_count,
                self.seed(s, &[0]),
            )
            .map_err(|e| CliError::Infeasible(vec![format!("{}: {e}", rec.id)]))?;
            self.pool.install(|| {
                todo.par_iter().map(|&d| self.write_dataset(s, &datasets[d], corpus)).collect::<Result<Vec<_>, _>>()
            })?;
            report.done += todo.len();
        }
        Ok(report)
    }

    fn write_dataset(&self, s: usize, dataset: &DataSet, corpus: &Corpus) -> Result<(), CliError> {
        let d = dataset.id;
        let mut files = vec![(PathBuf::from("dataset.tsv"), write_words(&dataset.tokens).into_bytes())];
        let mut records = Vec::new();
        if !self.config.newtest_sizes.is_empty() {
            let pool = build_newtest_pool(corpus, dataset);
            for &size in &self.config.newtest_sizes {
                let seed = self.seed(s, &[3, d as u64, size as u64]);
                match sample_new_testsets(&pool, size, self.config.newtest_count, seed) {
                    Ok(sets) => {
                        for (i, set) in sets.iter().enumerate() {
                            let rel = PathBuf::from("newtests").join(size.to_string()).join(format!("{i}.tsv"));
                            files.push((rel, write_words(set).into_bytes()));
                        }
                        records.push(NewtestRecord { size, count: sets.len(), skipped: None });
                    }
                    Err(e) => records.push(NewtestRecord { size, count: 0, skipped: Some(e.to_string()) }),
                }
            }
        }
        files.push((PathBuf::from("newtests.json"), to_json(&records)));
        write_unit(&self.dir.dataset(&self.settings[s].id, d), "sample", &files)
    }

    pub fn split(&self) -> Result<StageReport, CliError> {
        self.check_runnable()?;
        let units: Vec<(usize, usize)> = self
            .active
            .iter()
            .flat_map(|&s| (0..self.config.dataset_count).map(move |d| (s, d)))
            .collect();
        let todo: Vec<(usize, usize)> = units
            .iter()
            .copied()
            .filter(|&(s, d)| !unit_complete(&self.dir.dataset(&self.settings[s].id, d), "split"))
            .collect();
        self.pool.install(|| todo.par_iter().map(|&(s, d)| self.split_dataset(s, d)).collect::<Result<Vec<_>, _>>())?;
        Ok(StageReport { done: todo.len(), skipped: units.len() - todo.len() })
    }

    fn split_dataset(&self, s: usize, d: usize) -> Result<(), CliError> {
        let rec = &self.settings[s];
        let dataset = self.read_dataset(s, d)?;
        let c = &self.config;
        let mut files = Vec::new();
        let mut push = |split: &Split, record: SplitRecord| {
            let rel = RunDir::split_rel(split.method, split.replicate);
            files.push((rel.join("train.tsv"), write_words(&split.train).into_bytes()));
            files.push((rel.join("test.tsv"), write_words(&split.test).into_bytes()));
            files.push((rel.join("meta.json"), to_json(&record)));
        };
        let random = make_random_splits(&dataset, c.train_fraction, c.split_count, self.seed(s, &[1, d as u64]));
        for split in &random {
            push(split, split_record(split, rec.strategy, None));
        }
        if c.adversarial {
            for (r, rand) in random.iter().enumerate() {
                let split = adversarial_split(&dataset, c.test_fraction(), r, self.seed(s, &[2, d as u64, r as u64]));
                push(&split, split_record(&split, rec.strategy, Some(&rand.test)));
            }
        }
        if c.heuristic {
            match heuristic_split(&dataset, c.test_fraction(), c.heuristic_tolerance) {
                HeuristicOutcome::Applicable { split, threshold } => {
                    let mut record = split_record(&split, rec.strategy, Some(&random[0].test));
                    record.threshold = Some(threshold);
                    push(&split, record);
                }
                HeuristicOutcome::NotApplicable => {
                    let record = SplitRecord {
                        method: SplitMethod::Heuristic,
                        replicate: 0,
                        applicable: false,
                        n_train: 0,
                        n_test: 0,
                        threshold: None,
                        wasserstein: None,
                        characteristics: None,
                        random_test_overlap: None,
                    };
                    files.push((RunDir::split_rel(SplitMethod::Heuristic, 0).join("meta.json"), to_json(&record)));
                }
            }
        }
        write_unit(&self.dir.dataset(&rec.id, d), "split", &files)
    }

    fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for &setting in &self.active {
            for dataset in 0..self.config.dataset_count {
                for split in 0..self.config.split_count {
                    for model in 0..self.kinds.len() {
                        jobs.push(Job { setting, dataset, split, model });
                    }
                }
            }
        }
        jobs
    }

    fn job_dir(&self, job: Job) -> PathBuf {
        self.dir.job(&self.settings[job.setting].id, &self.kinds[job.model].name(), job.dataset, job.split)
    }

    fn job_label(&self, job: Job) -> String {
        format!(
            "{}/{}/d{}/r{}",
            self.settings[job.setting].id,
            self.kinds[job.model].name(),
            job.dataset,
            job.split
        )
    }

    fn run_jobs(&self, stage: &str, work: impl Fn(Job) -> Result<(), CliError> + Sync) -> Result<StageReport, CliError> {
        self.check_runnable()?;
        let jobs = self.jobs();
        let todo: Vec<Job> = jobs.iter().copied().filter(|&j| !unit_complete(&self.job_dir(j), stage)).collect();
        info!("{stage}: {} jobs to run, {} already complete", todo.len(), jobs.len() - todo.len());
        let outcomes: Vec<Result<(), CliError>> = self.pool.install(|| todo.par_iter().map(|&j| work(j)).collect());
        let failures: Vec<String> = todo
            .iter()
            .zip(&outcomes)
            .filter_map(|(&j, o)| o.as_ref().err().map(|e| format!("{}: {e}", self.job_label(j))))
            .collect();
        for f in &failures {
            warn!("{stage} failed: {f}");
        }
        if !failures.is_empty() {
            return Err(CliError::JobFailures(failures));
        }
        Ok(StageReport { done: todo.len(), skipped: jobs.len() - todo.len() })
    }

    fn split_half(&self, job: Job, half: &str) -> Result<Vec<Word>, CliError> {
        let rec = &self.settings[job.setting];
        if !unit_complete(&self.dir.dataset(&rec.id, job.dataset), "split") {
            return Err(CliError::Missing("run the split stage first".into()));
        }
        let dir = self.dir.split(&rec.id, job.dataset, SplitMethod::Random, job.split);
        read_tokens(&dir.join(half))
    }

    pub fn train(&self) -> Result<StageReport, CliError> {
        self.run_jobs("train", |job| {
            let train = self.split_half(job, "train.tsv")?;
            let kind = &self.kinds[job.model];
            let seed = self.seed(job.setting, &[4, job.dataset as u64, job.split as u64, name_seed(&kind.name())]);
            let (model, info) = TrainedModel::train(kind, &train, seed).map_err(|e| CliError::Job(e.to_string()))?;
            if !info.converged {
                warn!("{}: stopped before convergence after {} iterations", self.job_label(job), info.iterations);
            }
            write_unit(
                &self.job_dir(job),
                "train",
                &[
                    (PathBuf::from("model.txt"), model.to_text().into_bytes()),
                    (PathBuf::from("train.json"), to_json(&info)),
                ],
            )
        })
    }

    pub fn eval(&self) -> Result<StageReport, CliError> {
        self.run_jobs("eval", |job| {
            let dir = self.job_dir(job);
            if !unit_complete(&dir, "train") {
                return Err(CliError::Missing("run the train stage first".into()));
            }
            let model = TrainedModel::from_text(&read_string(&dir.join("model.txt"))?)
                .map_err(|e| CliError::Job(e.to_string()))?;
            let test = self.split_half(job, "test.tsv")?;
            let predictions: Vec<Vec<String>> = test.iter().map(|w| model.segment(w.surface())).collect();
            let mut tsv = String::new();
            for (w, p) in test.iter().zip(&predictions) {
                tsv.push_str(&format!("{}\t{}\t{}\n", w.surface(), w.morphs().join(" "), p.join(" ")));
            }
            let eval = |words: &[Word], preds: Vec<Vec<String>>| {
                let pairs: Vec<(Vec<String>, Vec<String>)> =
                    preds.into_iter().zip(words).map(|(p, w)| (p, w.morphs().to_vec())).collect();
                eval_corpus_with(&pairs, self.config.averaging)
            };
            let test_eval = eval(&test, predictions);
            let ds_dir = self.dir.dataset(&self.settings[job.setting].id, job.dataset);
            let records: Vec<NewtestRecord> = read_json(&ds_dir.join("newtests.json"))?;
            let mut newtests = Vec::new();
            for rec in records.iter().filter(|r| r.skipped.is_none()) {
                let scores = (0..rec.count)
                    .map(|i| {
                        let words = read_tokens(&ds_dir.join("newtests").join(rec.size.to_string()).join(format!("{i}.tsv")))?;
                        let preds = words.iter().map(|w| model.segment(w.surface())).collect();
                        Ok(eval(&words, preds))
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                newtests.push(NewtestScores { size: rec.size, scores });
            }
            write_unit(
                &dir,
                "eval",
                &[
                    (PathBuf::from("predictions.tsv"), tsv.into_bytes()),
                    (PathBuf::from("eval.json"), to_json(&JobEval { test: test_eval, newtests })),
                ],
            )
        })
    }
}

fn read_tokens(path: &std::path::Path) -> Result<Vec<Word>, CliError> {
    parse_tokens(&read_string(path)?).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn split_record(split: &Split, strategy: segeval_core::SamplingStrategy, random_test: Option<&[Word]>) -> SplitRecord {
    let both = !split.train.is_empty() && !split.test.is_empty();
    let random_test_overlap = random_test.filter(|_| !split.test.is_empty()).map(|rt| {
        let surfaces: std::collections::HashSet<&str> = rt.iter().map(Word::surface).collect();
        split.test.iter().filter(|w| surfaces.contains(w.surface())).count() as f64 / split.test.len() as f64
    });
    SplitRecord {
        method: split.method,
        replicate: split.replicate,
        applicable: true,
        n_train: split.train.len(),
        n_test: split.test.len(),
        threshold: None,
        wasserstein: both.then(|| split.morph_count_distance()),
        characteristics: both.then(|| compute_characteristics(split, strategy)),
        random_test_overlap,
    }
}

/// Reads the train diagnostics of a finished job.
pub fn read_train_info(dir: &std::path::Path) -> Result<TrainInfo, CliError> {
    read_json(&dir.join("train.json"))
}
