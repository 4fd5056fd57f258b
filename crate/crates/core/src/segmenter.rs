//! Common interface over the three segmenter families.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Word;
use crate::crf::{train_crf, CrfConfig, CrfError, CrfModel, MAX_ORDER};
use crate::lexicon::{train_lexicon_with, LexiconError, MorphLexicon};
use crate::seq2seq::{train_seq2seq, Seq2seqConfig, Seq2seqError, Seq2seqModel};

pub trait Segmenter {
    /// Splits a nonempty surface into nonempty morphs.
    fn segment(&self, surface: &str) -> Vec<String>;
}

#[derive(Debug, Error, PartialEq)]
pub enum SegmenterError {
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Crf(#[from] CrfError),
    #[error(transparent)]
    Seq2seq(#[from] Seq2seqError),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unrecognized model file header")]
    UnknownFormat,
}

/// A model alternative with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelKind {
    Lexicon {
        #[serde(default)]
        boundary_penalty: Option<f64>,
    },
    Crf(CrfConfig),
    Seq2seq(Seq2seqConfig),
}

impl ModelKind {
    /// `lexicon`, `crf0`..`crf4` or `seq2seq` with default hyperparameters
    /// (`seq2seq` uses the desk preset).
    pub fn parse(name: &str) -> Result<Self, SegmenterError> {
        match name {
            "lexicon" => Ok(Self::Lexicon { boundary_penalty: None }),
            "seq2seq" => Ok(Self::Seq2seq(Seq2seqConfig::desk())),
            _ => name
                .strip_prefix("crf")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k <= MAX_ORDER)
                .map(|k| Self::Crf(CrfConfig::with_order(k)))
                .ok_or_else(|| SegmenterError::UnknownModel(name.to_string())),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Lexicon { .. } => "lexicon".into(),
            Self::Crf(c) => format!("crf{}", c.order),
            Self::Seq2seq(_) => "seq2seq".into(),
        }
    }

    /// The seven alternatives of the full protocol.
    pub fn default_roster() -> Vec<Self> {
        let mut v = vec![Self::Lexicon { boundary_penalty: None }];
        v.extend((0..=MAX_ORDER).map(|k| Self::Crf(CrfConfig::with_order(k))));
        v.push(Self::Seq2seq(Seq2seqConfig::desk()));
        v
    }
}

/// Training diagnostics common to all families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainInfo {
    pub converged: bool,
    /// Optimizer iterations (CRF) or epochs (seq2seq); 0 for the lexicon.
    pub iterations: usize,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Lexicon(MorphLexicon),
    Crf(CrfModel),
    Seq2seq(Seq2seqModel),
}

impl TrainedModel {
    /// Trains `kind` on `train`. The seed only matters for seq2seq.
    pub fn train(kind: &ModelKind, train: &[Word], seed: u64) -> Result<(Self, TrainInfo), SegmenterError> {
        Ok(match kind {
            ModelKind::Lexicon { boundary_penalty } => (
                Self::Lexicon(train_lexicon_with(train, *boundary_penalty)?),
                TrainInfo { converged: true, iterations: 0, final_loss: None },
            ),
            ModelKind::Crf(config) => {
                let (model, report) = train_crf(train, config)?;
                let info = TrainInfo {
                    converged: report.converged,
                    iterations: report.optimizer.iterations,
                    final_loss: Some(report.optimizer.final_loss),
                };
                (Self::Crf(model), info)
            }
            ModelKind::Seq2seq(config) => {
                let config = Seq2seqConfig { seed, ..*config };
                let (model, report) = train_seq2seq(train, &config)?;
                let info = TrainInfo {
                    converged: report.plateaued,
                    iterations: report.epochs,
                    final_loss: report.epoch_losses.last().copied(),
                };
                (Self::Seq2seq(model), info)
            }
        })
    }

    pub fn to_text(&self) -> String {
        match self {
            Self::Lexicon(m) => m.to_text(),
            Self::Crf(m) => m.to_text(),
            Self::Seq2seq(m) => m.to_text(),
        }
    }

    /// Parses any model dump, dispatching on its header line.
    pub fn from_text(text: &str) -> Result<Self, SegmenterError> {
        let header = text.lines().next().unwrap_or("");
        if header.starts_with("#segeval-lexicon") {
            Ok(Self::Lexicon(MorphLexicon::from_text(text)?))
        } else if header.starts_with("#segeval-crf") {
            Ok(Self::Crf(CrfModel::from_text(text)?))
        } else if header.starts_with("#segeval-seq2seq") {
            Ok(Self::Seq2seq(Seq2seqModel::from_text(text)?))
        } else {
            Err(SegmenterError::UnknownFormat)
        }
    }
}

impl Segmenter for MorphLexicon {
    fn segment(&self, surface: &str) -> Vec<String> {
        MorphLexicon::segment(self, surface)
    }
}

impl Segmenter for CrfModel {
    fn segment(&self, surface: &str) -> Vec<String> {
        CrfModel::segment(self, surface)
    }
}

impl Segmenter for Seq2seqModel {
    fn segment(&self, surface: &str) -> Vec<String> {
        Seq2seqModel::segment(self, surface)
    }
}

impl Segmenter for TrainedModel {
    fn segment(&self, surface: &str) -> Vec<String> {
        match self {
            Self::Lexicon(m) => m.segment(surface),
            Self::Crf(m) => m.segment(surface),
            Self::Seq2seq(m) => m.segment(surface),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(m: &[&str]) -> Word {
        Word::from_morphs(m.iter().copied()).unwrap()
    }

    #[test]
    fn names_round_trip() {
        let roster = ModelKind::default_roster();
        assert_eq!(roster.len(), 7);
        for kind in &roster {
            assert_eq!(&ModelKind::parse(&kind.name()).unwrap(), kind);
        }
        assert!(ModelKind::parse("crf5").is_err());
        assert!(ModelKind::parse("morfessor").is_err());
    }

    #[test]
    fn kind_serde() {
        let k = ModelKind::Crf(CrfConfig::with_order(2));
        let json = serde_json::to_string(&k).unwrap();
        assert!(json.contains("\"family\":\"crf\""));
        assert_eq!(serde_json::from_str::<ModelKind>(&json).unwrap(), k);
        let lex: ModelKind = serde_json::from_str(r#"{"family":"lexicon"}"#).unwrap();
        assert_eq!(lex.name(), "lexicon");
        let crf: ModelKind = serde_json::from_str(r#"{"family":"crf","order":1}"#).unwrap();
        assert_eq!(crf, ModelKind::Crf(CrfConfig::with_order(1)));
    }

    #[test]
    fn lexicon_and_crf_rebuild_surface() {
        let train = vec![w(&["paper", "s"]), w(&["paper"]), w(&["un", "do"]), w(&["do", "s"])];
        for name in ["lexicon", "crf0", "crf1", "crf2"] {
            let (model, _) = TrainedModel::train(&ModelKind::parse(name).unwrap(), &train, 0).unwrap();
            for s in ["papers", "undos", "xq", "a"] {
                let out = model.segment(s);
                assert_eq!(out.concat(), s, "{name}");
                assert!(out.iter().all(|m| !m.is_empty()));
            }
            let back = TrainedModel::from_text(&model.to_text()).unwrap();
            assert_eq!(back, model);
        }
        assert_eq!(TrainedModel::from_text("junk").unwrap_err(), SegmenterError::UnknownFormat);
    }
}
