//! Run configuration: one JSON document with a versioned schema.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use segeval_core::analysis::DesignOptions;
use segeval_core::metrics::Averaging;
use segeval_core::sampling::{Fraction, SamplingStrategy, DEFAULT_TRAIN_FRACTION};
use segeval_core::synth::{generate_synthetic_corpus, SyntheticSpec};
use segeval_core::{Corpus, ModelKind};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// One language: a corpus file or a synthetic generator spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageConfig {
    pub tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    /// Overrides the run-wide `dataset_sizes` for this language.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_sizes: Option<Vec<usize>>,
}

/// A roster entry: a short name (`crf2`) or a full hyperparameter object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelEntry {
    Name(String),
    Kind(ModelKind),
}

impl ModelEntry {
    pub fn resolve(&self) -> Result<ModelKind, CliError> {
        match self {
            ModelEntry::Name(n) => ModelKind::parse(n).map_err(|e| CliError::Config(e.to_string())),
            ModelEntry::Kind(k) => Ok(k.clone()),
        }
    }
}

fn default_strategies() -> Vec<SamplingStrategy> {
    vec![SamplingStrategy::WithReplacement, SamplingStrategy::WithoutReplacement]
}
fn default_dataset_count() -> usize {
    50
}
fn default_split_count() -> usize {
    5
}
fn default_newtest_count() -> usize {
    100
}
fn default_train_fraction() -> Fraction {
    DEFAULT_TRAIN_FRACTION
}
fn default_models() -> Vec<ModelEntry> {
    ModelKind::default_roster().into_iter().map(ModelEntry::Kind).collect()
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("run")
}
fn default_jobs() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_tolerance() -> f64 {
    segeval_core::splits::DEFAULT_HEURISTIC_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub languages: Vec<LanguageConfig>,
    #[serde(default)]
    pub dataset_sizes: Vec<usize>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<SamplingStrategy>,
    #[serde(default = "default_dataset_count")]
    pub dataset_count: usize,
    #[serde(default = "default_split_count")]
    pub split_count: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: Fraction,
    #[serde(default)]
    pub newtest_sizes: Vec<usize>,
    #[serde(default = "default_newtest_count")]
    pub newtest_count: usize,
    #[serde(default = "default_models")]
    pub models: Vec<ModelEntry>,
    #[serde(default)]
    pub seed: u64,
    /// Not part of the recorded manifest: moving a run must not change it.
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
    /// Worker threads. Results do not depend on it.
    #[serde(default = "default_jobs", skip_serializing)]
    pub jobs: usize,
    #[serde(default = "default_true")]
    pub adversarial: bool,
    #[serde(default = "default_true")]
    pub heuristic: bool,
    #[serde(default = "default_tolerance")]
    pub heuristic_tolerance: f64,
    #[serde(default)]
    pub averaging: Averaging,
    #[serde(default)]
    pub regression: DesignOptions,
}

impl RunConfig {
    /// Reads and validates a config. Relative corpus paths are taken
    /// relative to the config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for lang in &mut config.languages {
            if let Some(p) = &mut lang.path {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.languages.is_empty() {
            return fail("no languages configured".into());
        }
        let mut tags = HashSet::new();
        for lang in &self.languages {
            if lang.tag.is_empty() || !lang.tag.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
                return fail(format!("language tag {:?} must be nonempty ASCII alphanumerics", lang.tag));
            }
            if !tags.insert(&lang.tag) {
                return fail(format!("duplicate language tag {:?}", lang.tag));
            }
            if lang.path.is_some() == lang.synthetic.is_some() {
                return fail(format!("language {:?} needs exactly one of `path` and `synthetic`", lang.tag));
            }
            let sizes = self.sizes_for(lang);
            if sizes.is_empty() || sizes.contains(&0) {
                return fail(format!("language {:?} needs nonzero data set sizes", lang.tag));
            }
        }
        if self.strategies.is_empty() {
            return fail("no sampling strategies configured".into());
        }
        for (name, n) in [
            ("dataset_count", self.dataset_count),
            ("split_count", self.split_count),
            ("newtest_count", self.newtest_count),
            ("jobs", self.jobs),
        ] {
            if n == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if self.newtest_sizes.contains(&0) {
            return fail("new test set sizes must be nonzero".into());
        }
        let f = self.train_fraction;
        if f.den == 0 || f.num == 0 || f.num >= f.den {
            return fail("train_fraction must lie strictly between 0 and 1".into());
        }
        if !(0.0..=1.0).contains(&self.heuristic_tolerance) {
            return fail("heuristic_tolerance must lie in [0, 1]".into());
        }
        let kinds = self.model_kinds()?;
        if kinds.is_empty() {
            return fail("empty model roster".into());
        }
        let mut names = HashSet::new();
        for k in &kinds {
            if !names.insert(k.name()) {
                return fail(format!("duplicate model {}", k.name()));
            }
            if let ModelKind::Seq2seq(c) = k {
                c.validate().map_err(|e| CliError::Config(e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn sizes_for(&self, lang: &LanguageConfig) -> Vec<usize> {
        lang.dataset_sizes.clone().unwrap_or_else(|| self.dataset_sizes.clone())
    }

    pub fn model_kinds(&self) -> Result<Vec<ModelKind>, CliError> {
        self.models.iter().map(ModelEntry::resolve).collect()
    }

    pub fn test_fraction(&self) -> Fraction {
        self.train_fraction.complement()
    }
}

impl LanguageConfig {
    pub fn load_corpus(&self) -> Result<Corpus, CliError> {
        if let Some(spec) = &self.synthetic {
            let c = generate_synthetic_corpus(spec);
            return Ok(Corpus::from_words(self.tag.clone(), c.words().iter().cloned())
                .expect("generated surfaces are unique"));
        }
        let path = self.path.as_ref().expect("validated");
        Corpus::load(path, &self.tag).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"schema_version":1,"languages":[{"tag":"syn","synthetic":{"stems":["ka"],"slots":[],"max_slots":0}}],"dataset_sizes":[1]}"#;

    #[test]
    fn defaults() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.dataset_count, 50);
        assert_eq!(c.split_count, 5);
        assert_eq!(c.newtest_count, 100);
        assert_eq!(c.model_kinds().unwrap(), ModelKind::default_roster());
        assert_eq!(c.strategies.len(), 2);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            MINIMAL.replace("\"schema_version\":1", "\"schema_version\":2"),
            MINIMAL.replace("[1]", "[0]"),
            MINIMAL.replace("[1]}", "[1],\"dataset_count\":0}"),
            MINIMAL.replace("[1]}", "[1],\"models\":[\"crf9\"]}"),
            MINIMAL.replace("[1]}", "[1],\"models\":[\"crf1\",\"crf1\"]}"),
            MINIMAL.replace("[1]}", "[1],\"bogus\":true}"),
            MINIMAL.replace("\"synthetic\"", "\"path\":\"x\",\"synthetic\""),
        ];
        for text in bad {
            assert!(matches!(RunConfig::from_json(&text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn manifest_form_omits_machine_details() {
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.jobs = 8;
        c.output_dir = PathBuf::from("/tmp/x");
        let json = serde_json::to_string(&c).unwrap();
        assert!(!json.contains("jobs") && !json.contains("output_dir"));
        let back = RunConfig::from_json(&json).unwrap();
        assert_eq!(back.seed, c.seed);
    }
}
