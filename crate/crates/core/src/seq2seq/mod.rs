//! Character-level attention encoder-decoder segmenter.
//!
//! The encoder is a two-layer bidirectional GRU over input characters; the
//! decoder is a two-layer GRU started from a zero state that attends over the
//! encoder annotations. The target string is the surface with a separator
//! symbol between morphs, closed by EOS. Training is teacher-forced per-symbol
//! cross-entropy with AdaDelta.

mod net;

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Word;
use crate::sampling::rng_from_seed;
use net::{Layout, GROUPS};

#[derive(Debug, Error, PartialEq)]
pub enum Seq2seqError {
    #[error("cannot train a seq2seq model on an empty training set")]
    EmptyTraining,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch} (loss {loss}; last finite loss {last_finite:?})")]
    Diverged { epoch: usize, loss: f64, last_finite: Option<f64> },
    #[error("seq2seq model line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seq2seqConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    /// When set, dimensions are fixed to 16/16 regardless of the fields above.
    pub desk_preset: bool,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// AdaDelta decay.
    pub rho: f64,
    /// AdaDelta stabilizer.
    pub epsilon: f64,
    /// Multiplier on the AdaDelta step.
    pub learning_rate: f64,
    /// Parameters start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Global gradient-norm clip per batch; 0 disables.
    pub clip_norm: f64,
    /// Stop when the epoch loss improved by less than `plateau_tolerance`
    /// (relative) over the last `plateau_window` epochs.
    pub plateau_window: usize,
    pub plateau_tolerance: f64,
    pub seed: u64,
}

impl Default for Seq2seqConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 300,
            hidden_dim: 100,
            desk_preset: false,
            batch_size: 16,
            max_epochs: 100,
            rho: 0.95,
            epsilon: 1e-6,
            learning_rate: 1.0,
            init_scale: 0.08,
            clip_norm: 5.0,
            plateau_window: 5,
            plateau_tolerance: 1e-4,
            seed: 0,
        }
    }
}

impl Seq2seqConfig {
    /// Small network for laptop-scale runs: 16/16 dimensions, per-word
    /// updates and a tripled AdaDelta step.
    pub fn desk() -> Self {
        Self {
            desk_preset: true,
            batch_size: 1,
            learning_rate: 3.0,
            ..Self::default()
        }
    }

    /// `(embedding_dim, hidden_dim)` after applying the preset.
    pub fn dims(&self) -> (usize, usize) {
        if self.desk_preset {
            (16, 16)
        } else {
            (self.embedding_dim, self.hidden_dim)
        }
    }

    pub fn validate(&self) -> Result<(), Seq2seqError> {
        let (e, h) = self.dims();
        let bad = |m: &str| Err(Seq2seqError::Config(m.to_string()));
        if e == 0 || h == 0 {
            return bad("dimensions must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.rho) || self.epsilon <= 0.0 {
            return bad("rho must lie in [0, 1) and epsilon must be positive");
        }
        Ok(())
    }
}

/// Output-side symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    Sep,
    Bos,
    Eos,
    Unk,
    Char(char),
}

/// Characters followed by SEP between morphs and a closing EOS.
pub fn serialize_target(word: &Word) -> Vec<Symbol> {
    let mut out = Vec::with_capacity(word.char_len() + word.morph_count());
    for (i, m) in word.morphs().iter().enumerate() {
        if i > 0 {
            out.push(Symbol::Sep);
        }
        out.extend(m.chars().map(Symbol::Char));
    }
    out.push(Symbol::Eos);
    out
}

/// Splits a symbol sequence at SEP, stopping at EOS. Empty pieces are dropped
/// and non-character symbols are ignored.
pub fn deserialize_target(symbols: &[Symbol]) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for s in symbols {
        match s {
            Symbol::Char(c) => cur.push(*c),
            Symbol::Sep => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            Symbol::Eos => break,
            Symbol::Bos | Symbol::Unk => {}
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Input ids: 0 is UNK, then the training characters in sorted order.
/// Output ids: SEP, BOS, EOS, UNK, then the same characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeqVocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

const OUT_SPECIAL: usize = 4;

impl SeqVocab {
    pub fn from_words(words: &[Word]) -> Self {
        let mut chars: Vec<char> = words.iter().flat_map(|w| w.surface().chars()).collect();
        chars.sort_unstable();
        chars.dedup();
        Self::from_chars(chars)
    }

    fn from_chars(chars: Vec<char>) -> Self {
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Self { chars, index }
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn input_size(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn output_size(&self) -> usize {
        self.chars.len() + OUT_SPECIAL
    }

    pub fn input_id(&self, c: char) -> usize {
        self.index.get(&c).map_or(0, |i| i + 1)
    }

    pub fn output_id(&self, s: Symbol) -> usize {
        match s {
            Symbol::Sep => 0,
            Symbol::Bos => 1,
            Symbol::Eos => 2,
            Symbol::Unk => 3,
            Symbol::Char(c) => self.index.get(&c).map_or(3, |i| i + OUT_SPECIAL),
        }
    }

    pub fn output_symbol(&self, id: usize) -> Symbol {
        match id {
            0 => Symbol::Sep,
            1 => Symbol::Bos,
            2 => Symbol::Eos,
            3 => Symbol::Unk,
            i => Symbol::Char(self.chars[i - OUT_SPECIAL]),
        }
    }

    fn encode_input(&self, surface: &str) -> Vec<usize> {
        surface.chars().map(|c| self.input_id(c)).collect()
    }

    fn encode_target(&self, word: &Word) -> Vec<usize> {
        serialize_target(word).into_iter().map(|s| self.output_id(s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2seqModel {
    config: Seq2seqConfig,
    vocab: SeqVocab,
    layout: Layout,
    params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2seqTrainReport {
    pub epochs: usize,
    /// Mean per-symbol training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub plateaued: bool,
}

impl Seq2seqModel {
    /// A freshly initialized model for the vocabulary of `words`.
    pub fn init(config: &Seq2seqConfig, words: &[Word]) -> Result<Self, Seq2seqError> {
        config.validate()?;
        let vocab = SeqVocab::from_words(words);
        let (e, h) = config.dims();
        let layout = Layout::new(vocab.input_size(), vocab.output_size(), e, h);
        let mut rng = rng_from_seed(config.seed);
        let s = config.init_scale;
        let params = (0..layout.total)
            .map(|_| if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 })
            .collect();
        Ok(Self { config: *config, vocab, layout, params })
    }

    pub fn config(&self) -> &Seq2seqConfig {
        &self.config
    }

    pub fn vocab(&self) -> &SeqVocab {
        &self.vocab
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) {
        self.params.copy_from_slice(params);
    }

    fn bos(&self) -> usize {
        self.vocab.output_id(Symbol::Bos)
    }

    /// Summed teacher-forced cross-entropy of one word.
    pub fn word_loss(&self, word: &Word) -> f64 {
        let input = self.vocab.encode_input(word.surface());
        let target = self.vocab.encode_target(word);
        net::word_loss(&self.params, &self.layout, &input, &target, self.bos(), None, |_| {})
    }

    /// Mean per-symbol loss over `batch` and its gradient.
    pub fn batch_loss_and_gradient(&self, batch: &[Word]) -> (f64, Vec<f64>) {
        let encoded: Vec<_> = batch
            .iter()
            .map(|w| (self.vocab.encode_input(w.surface()), self.vocab.encode_target(w)))
            .collect();
        let symbols: usize = encoded.iter().map(|(_, t)| t.len()).sum();
        let scale = 1.0 / symbols as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (input, target) in &encoded {
            loss += net::word_loss(
                &self.params,
                &self.layout,
                input,
                target,
                self.bos(),
                Some((&mut grad, scale)),
                |_| {},
            );
        }
        (loss * scale, grad)
    }

    /// Greedy output symbols, capped at `2 * |surface| + 5`.
    pub fn decode_symbols(&self, surface: &str) -> Vec<Symbol> {
        let input = self.vocab.encode_input(surface);
        let cap = 2 * input.len() + 5;
        let eos = self.vocab.output_id(Symbol::Eos);
        net::greedy(&self.params, &self.layout, &input, self.bos(), eos, cap)
            .into_iter()
            .map(|id| self.vocab.output_symbol(id))
            .collect()
    }

    /// Greedy segmentation. Falls back to the whole surface when nothing
    /// usable is produced; the output need not rebuild the surface.
    pub fn segment(&self, surface: &str) -> Vec<String> {
        let morphs = deserialize_target(&self.decode_symbols(surface));
        if morphs.is_empty() {
            vec![surface.to_string()]
        } else {
            morphs
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("#segeval-seq2seq v1\n");
        let _ = writeln!(out, "config\t{}", serde_json::to_string(&self.config).expect("config serializes"));
        let codes: Vec<String> = self.vocab.chars.iter().map(|&c| (c as u32).to_string()).collect();
        let _ = writeln!(out, "chars\t{}", codes.join(" "));
        let _ = writeln!(out, "params\t{}", self.params.len());
        for p in &self.params {
            let _ = writeln!(out, "{p:?}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, Seq2seqError> {
        let err = |line: usize, reason: &str| Seq2seqError::Parse { line: line + 1, reason: reason.into() };
        let lines: Vec<&str> = text.lines().collect();
        if lines.first() != Some(&"#segeval-seq2seq v1") {
            return Err(err(0, "missing or unsupported header"));
        }
        let field = |i: usize, key: &str| -> Result<&str, Seq2seqError> {
            lines
                .get(i)
                .and_then(|l| l.strip_prefix(key))
                .and_then(|l| l.strip_prefix('\t'))
                .ok_or_else(|| err(i, &format!("expected `{key}`")))
        };
        let config: Seq2seqConfig =
            serde_json::from_str(field(1, "config")?).map_err(|e| err(1, &e.to_string()))?;
        let chars_field = field(2, "chars")?;
        let chars: Vec<char> = if chars_field.is_empty() {
            Vec::new()
        } else {
            chars_field
                .split(' ')
                .map(|c| c.parse::<u32>().ok().and_then(char::from_u32))
                .collect::<Option<_>>()
                .ok_or_else(|| err(2, "bad character code"))?
        };
        let n: usize = field(3, "params")?.parse().map_err(|_| err(3, "bad count"))?;
        let vocab = SeqVocab::from_chars(chars);
        let (e, h) = config.dims();
        let layout = Layout::new(vocab.input_size(), vocab.output_size(), e, h);
        if layout.total != n {
            return Err(err(3, "parameter count does not match configuration"));
        }
        let params = (0..n)
            .map(|i| {
                lines
                    .get(4 + i)
                    .and_then(|l| l.parse::<f64>().ok())
                    .ok_or_else(|| err(4 + i, "bad parameter"))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        Ok(Self { config, vocab, layout, params })
    }
}

struct AdaDelta {
    rho: f64,
    eps: f64,
    lr: f64,
    sq_grad: Vec<f64>,
    sq_step: Vec<f64>,
}

impl AdaDelta {
    fn new(n: usize, config: &Seq2seqConfig) -> Self {
        Self {
            rho: config.rho,
            eps: config.epsilon,
            lr: config.learning_rate,
            sq_grad: vec![0.0; n],
            sq_step: vec![0.0; n],
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        for i in 0..params.len() {
            let g = grad[i];
            self.sq_grad[i] = self.rho * self.sq_grad[i] + (1.0 - self.rho) * g * g;
            let d = -((self.sq_step[i] + self.eps).sqrt() / (self.sq_grad[i] + self.eps).sqrt()) * g;
            self.sq_step[i] = self.rho * self.sq_step[i] + (1.0 - self.rho) * d * d;
            params[i] += self.lr * d;
        }
    }
}

fn clip(grad: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

/// Trains from a seeded initialization. Deterministic given the config.
pub fn train_seq2seq(train: &[Word], config: &Seq2seqConfig) -> Result<(Seq2seqModel, Seq2seqTrainReport), Seq2seqError> {
    train_seq2seq_with(train, config, |_, _| false)
}

/// As [`train_seq2seq`], calling `stop(epoch, &model)` after each epoch;
/// returning true ends training early.
pub fn train_seq2seq_with(
    train: &[Word],
    config: &Seq2seqConfig,
    mut stop: impl FnMut(usize, &Seq2seqModel) -> bool,
) -> Result<(Seq2seqModel, Seq2seqTrainReport), Seq2seqError> {
    if train.is_empty() {
        return Err(Seq2seqError::EmptyTraining);
    }
    let mut model = Seq2seqModel::init(config, train)?;
    let mut opt = AdaDelta::new(model.params.len(), config);
    let mut rng = rng_from_seed(crate::sampling::derive_seed(config.seed, &[1]));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut losses: Vec<f64> = Vec::new();
    let mut plateaued = false;
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let (mut total, mut symbols) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Word> = chunk.iter().map(|&i| train[i].clone()).collect();
            let n_sym: usize = batch.iter().map(|w| w.char_len() + w.morph_count()).sum();
            let (loss, mut grad) = model.batch_loss_and_gradient(&batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Seq2seqError::Diverged { epoch, loss, last_finite: losses.last().copied() });
            }
            clip(&mut grad, config.clip_norm);
            opt.step(&mut model.params, &grad);
            total += loss * n_sym as f64;
            symbols += n_sym;
        }
        losses.push(total / symbols as f64);
        if stop(epoch, &model) {
            break;
        }
        let w = config.plateau_window;
        if w > 0 && losses.len() > w {
            let (old, new) = (losses[losses.len() - 1 - w], losses[losses.len() - 1]);
            if (old - new) / old.abs().max(f64::MIN_POSITIVE) < config.plateau_tolerance {
                plateaued = true;
                break;
            }
        }
    }
    let report = Seq2seqTrainReport { epochs: losses.len(), epoch_losses: losses, plateaued };
    Ok((model, report))
}

pub fn decode_greedy(model: &Seq2seqModel, surface: &str) -> Vec<String> {
    model.segment(surface)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    /// Worst relative error per parameter group.
    pub per_group: Vec<(String, f64)>,
    /// Largest deviation from 1 of any attention row seen during the check.
    pub max_attention_row_error: f64,
}

/// Compares analytic gradients of a word's summed loss with central finite
/// differences (step `1e-5`) for every parameter.
pub fn gradient_check(config: &Seq2seqConfig, word: &Word) -> Result<GradientCheck, Seq2seqError> {
    let model = Seq2seqModel::init(config, std::slice::from_ref(word))?;
    let input = model.vocab.encode_input(word.surface());
    let target = model.vocab.encode_target(word);
    let bos = model.bos();
    let mut att_err: f64 = 0.0;
    let mut grad = vec![0.0; model.params.len()];
    net::word_loss(&model.params, &model.layout, &input, &target, bos, Some((&mut grad, 1.0)), |a| {
        att_err = att_err.max((a.iter().sum::<f64>() - 1.0).abs());
    });
    let h = 1e-5;
    let mut p = model.params.clone();
    let mut per_group = vec![0.0f64; GROUPS.len()];
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = net::word_loss(&p, &model.layout, &input, &target, bos, None, |_| {});
        p[i] = orig - h;
        let down = net::word_loss(&p, &model.layout, &input, &target, bos, None, |_| {});
        p[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-6);
        let g = model.layout.group_of(i);
        per_group[g] = per_group[g].max(rel);
    }
    Ok(GradientCheck {
        max_relative_error: per_group.iter().copied().fold(0.0, f64::max),
        per_group: GROUPS.iter().map(|s| s.to_string()).zip(per_group).collect(),
        max_attention_row_error: att_err,
    })
}

#[cfg(test)]
mod tests;
