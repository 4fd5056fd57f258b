//! Morphological surface segmentation workbench.
//!
//! Three families of segmenters (a unigram morph lexicon, order-k CRFs and a
//! character-level attention encoder-decoder) together with the machinery to
//! evaluate them by resampling: data set sampling, random, heuristic and
//! adversarial splits, segmentation metrics, consistency statistics and
//! regression of scores on data set characteristics.

pub mod analysis;
pub mod corpus;
pub mod crf;
pub mod lexicon;
pub mod metrics;
pub mod optim;
pub mod sampling;
pub mod segmenter;
pub mod seq2seq;
pub mod splits;
pub mod synth;

pub use corpus::{Corpus, CorpusError, Word};
pub use metrics::{Evaluation, Metric};
pub use sampling::{DataSet, SamplingStrategy};
pub use segmenter::{ModelKind, Segmenter, TrainedModel};
pub use splits::{Split, SplitMethod};
