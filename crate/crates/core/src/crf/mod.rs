//! Order-k linear-chain CRF segmenter.
//!
//! Each character gets one of the interior labels `B`, `M`, `E`, `S` under the
//! START/END-framed label grammar. Emission features are left/right substrings
//! of length up to `delta`, conjoined with the current label. For `k >= 1`,
//! transition indicators over (previous `k` labels, label) pairs carry the
//! label history; for `k = 0` the grammar is the only coupling between labels.
//! Training minimizes the L2-regularized negative conditional log-likelihood
//! with L-BFGS.

mod features;
mod labels;
mod lattice;

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{extract_features, word_features, WORD_END, WORD_START};
pub use labels::{allowed, interior_labels, is_valid_path, label_word, labels_to_morphs, Label};
pub use lattice::{logsumexp, StateSpace};

use lattice::{forward_backward, log_partition, viterbi, Potentials};

use crate::corpus::Word;
use crate::optim::{self, LbfgsParams, LbfgsReport};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum CrfError {
    #[error("cannot train a CRF on an empty training set")]
    EmptyTraining,
    #[error("order {0} is outside 0..={MAX_ORDER}")]
    UnsupportedOrder(usize),
    #[error("delta must be at least 1")]
    ZeroDelta,
    #[error("CRF model line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrfConfig {
    pub order: usize,
    #[serde(default = "default_delta")]
    pub delta: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub lbfgs: LbfgsParams,
}

fn default_delta() -> usize {
    4
}

fn default_lambda() -> f64 {
    1.0
}

impl CrfConfig {
    pub fn with_order(order: usize) -> Self {
        Self {
            order,
            delta: default_delta(),
            lambda: default_lambda(),
            lbfgs: LbfgsParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    order: usize,
    delta: usize,
    lambda: f64,
    space: StateSpace,
    features: Vec<String>,
    feature_index: HashMap<String, usize>,
    /// `emission[feature * 4 + label]`
    emission: Vec<f64>,
    trans: Vec<f64>,
    end: Vec<f64>,
}

/// A word with features resolved against a model's vocabulary.
struct Prepared {
    /// Feature ids per position (unknown features dropped).
    feats: Vec<Vec<usize>>,
    gold: Option<(Vec<usize>, Vec<Label>, usize)>,
}

impl CrfModel {
    /// A zero-weight model whose feature vocabulary is every feature observed
    /// in `words`.
    pub fn new(order: usize, delta: usize, lambda: f64, words: &[Word]) -> Result<Self, CrfError> {
        if order > MAX_ORDER {
            return Err(CrfError::UnsupportedOrder(order));
        }
        if delta == 0 {
            return Err(CrfError::ZeroDelta);
        }
        let mut features = Vec::new();
        let mut feature_index = HashMap::new();
        for w in words {
            for pos in word_features(w.surface(), delta) {
                for f in pos {
                    if !feature_index.contains_key(&f) {
                        feature_index.insert(f.clone(), features.len());
                        features.push(f);
                    }
                }
            }
        }
        let space = StateSpace::new(order);
        let (nt, ne) = if order == 0 {
            (0, 0)
        } else {
            (space.transitions.len(), space.end_transitions.len())
        };
        Ok(Self {
            order,
            delta,
            lambda,
            emission: vec![0.0; features.len() * 4],
            trans: vec![0.0; nt],
            end: vec![0.0; ne],
            space,
            features,
            feature_index,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn param_count(&self) -> usize {
        self.emission.len() + self.trans.len() + self.end.len()
    }

    pub fn state_space(&self) -> &StateSpace {
        &self.space
    }

    /// Flat parameter vector: emissions, then transitions, then end transitions.
    pub fn params(&self) -> Vec<f64> {
        let mut v = self.emission.clone();
        v.extend(&self.trans);
        v.extend(&self.end);
        v
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let (e, rest) = params.split_at(self.emission.len());
        let (t, n) = rest.split_at(self.trans.len());
        self.emission.copy_from_slice(e);
        self.trans.copy_from_slice(t);
        self.end.copy_from_slice(n);
    }

    pub fn emission_weight(&self, feature: &str, label: Label) -> f64 {
        self.feature_index
            .get(feature)
            .map_or(0.0, |&f| self.emission[f * 4 + label.interior_index()])
    }

    /// Every (history, label) transition with its weight, `END` included.
    /// Empty for order 0.
    pub fn transition_table(&self) -> Vec<(Vec<Label>, Label, f64)> {
        if self.order == 0 {
            return Vec::new();
        }
        let mut out: Vec<_> = self
            .space
            .transitions
            .iter()
            .zip(&self.trans)
            .map(|(tr, &w)| (self.space.states[tr.from].clone(), tr.label, w))
            .collect();
        out.extend(
            self.space
                .end_transitions
                .iter()
                .zip(&self.end)
                .map(|(&s, &w)| (self.space.states[s].clone(), Label::End, w)),
        );
        out
    }

    /// Sets the weight of a (history, label) transition. Returns false if the
    /// pair is not part of this model.
    pub fn set_transition_weight(&mut self, history: &[Label], label: Label, weight: f64) -> bool {
        if self.order == 0 {
            return false;
        }
        let Some(s) = self.space.state_index(history) else {
            return false;
        };
        if label == Label::End {
            match self.space.end_transitions.iter().position(|&x| x == s) {
                Some(e) => self.end[e] = weight,
                None => return false,
            }
        } else {
            match self.space.next[s][label.interior_index()] {
                Some(i) => self.trans[i] = weight,
                None => return false,
            }
        }
        true
    }

    fn prepare(&self, surface: &str, gold: Option<&[String]>) -> Prepared {
        let feats = word_features(surface, self.delta)
            .into_iter()
            .map(|pos| pos.iter().filter_map(|f| self.feature_index.get(f).copied()).collect())
            .collect();
        let gold = gold.map(|morphs| {
            let labels = interior_labels(morphs);
            let (path, end) = self.space.path(&labels).expect("gold labels follow the grammar");
            (path, labels, end)
        });
        Prepared { feats, gold }
    }

    fn emissions(&self, feats: &[Vec<usize>]) -> Vec<[f64; 4]> {
        feats
            .iter()
            .map(|fs| {
                let mut e = [0.0; 4];
                for &f in fs {
                    for (y, v) in e.iter_mut().enumerate() {
                        *v += self.emission[f * 4 + y];
                    }
                }
                e
            })
            .collect()
    }

    fn zero_trans(&self) -> (Vec<f64>, Vec<f64>) {
        (
            vec![0.0; self.space.transitions.len()],
            vec![0.0; self.space.end_transitions.len()],
        )
    }

    fn with_potentials<R>(&self, feats: &[Vec<usize>], f: impl FnOnce(&Potentials) -> R) -> R {
        let emit = self.emissions(feats);
        if self.order == 0 {
            let (trans, end) = self.zero_trans();
            f(&Potentials { emit: &emit, trans: &trans, end: &end })
        } else {
            f(&Potentials { emit: &emit, trans: &self.trans, end: &self.end })
        }
    }

    /// Log-partition function of a surface.
    pub fn log_partition(&self, surface: &str) -> f64 {
        let p = self.prepare(surface, None);
        self.with_potentials(&p.feats, |pot| log_partition(&self.space, pot))
    }

    /// Posterior label marginals per position and the log-partition.
    pub fn marginals(&self, surface: &str) -> (Vec<[f64; 4]>, f64) {
        let p = self.prepare(surface, None);
        self.with_potentials(&p.feats, |pot| {
            let m = forward_backward(&self.space, pot);
            let per_pos = (0..p.feats.len()).map(|t| m.label_marginals(&self.space, t)).collect();
            (per_pos, m.log_z)
        })
    }

    /// Unnormalized score of an interior label path, or `None` if the path
    /// breaks the grammar.
    pub fn path_score(&self, surface: &str, labels: &[Label]) -> Option<f64> {
        let p = self.prepare(surface, None);
        let (path, end) = self.space.path(labels)?;
        let emit = self.emissions(&p.feats);
        let mut s: f64 = labels.iter().enumerate().map(|(t, y)| emit[t][y.interior_index()]).sum();
        if self.order > 0 {
            s += path.iter().map(|&i| self.trans[i]).sum::<f64>() + self.end[end];
        }
        Some(s)
    }

    /// Best label path and its score.
    pub fn viterbi_labels(&self, surface: &str) -> (Vec<Label>, f64) {
        let p = self.prepare(surface, None);
        self.with_potentials(&p.feats, |pot| viterbi(&self.space, pot))
    }

    pub fn segment(&self, surface: &str) -> Vec<String> {
        if surface.is_empty() {
            return vec![String::new()];
        }
        let (labels, _) = self.viterbi_labels(surface);
        labels_to_morphs(surface, &labels)
    }

    fn word_nll(&self, p: &Prepared, grad: &mut [f64]) -> f64 {
        let (path, labels, end_idx) = p.gold.as_ref().expect("training word");
        let n_emit = self.emission.len();
        let n_trans = self.trans.len();
        self.with_potentials(&p.feats, |pot| {
            let m = forward_backward(&self.space, pot);
            let mut gold = 0.0;
            for (t, fs) in p.feats.iter().enumerate() {
                let mu = m.label_marginals(&self.space, t);
                let y = labels[t].interior_index();
                gold += pot.emit[t][y];
                for &f in fs {
                    for (l, &q) in mu.iter().enumerate() {
                        grad[f * 4 + l] += q;
                    }
                    grad[f * 4 + y] -= 1.0;
                }
            }
            if self.order > 0 {
                for t in 0..p.feats.len() {
                    for (i, &q) in m.edge[t].iter().enumerate() {
                        grad[n_emit + i] += q;
                    }
                }
                for (e, &q) in m.end.iter().enumerate() {
                    grad[n_emit + n_trans + e] += q;
                }
                for &i in path {
                    gold += pot.trans[i];
                    grad[n_emit + i] -= 1.0;
                }
                gold += pot.end[*end_idx];
                grad[n_emit + n_trans + end_idx] -= 1.0;
            }
            m.log_z - gold
        })
    }

    fn objective(&self, batch: &[Prepared], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        // Fixed summation order keeps training bit-reproducible.
        let mut loss: f64 = batch.iter().map(|p| self.word_nll(p, grad)).sum();
        let params = self.params();
        for (g, w) in grad.iter_mut().zip(&params) {
            *g += 2.0 * self.lambda * w;
            loss += self.lambda * w * w;
        }
        loss
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("#segeval-crf v1\n");
        let _ = writeln!(out, "order\t{}", self.order);
        let _ = writeln!(out, "delta\t{}", self.delta);
        let _ = writeln!(out, "lambda\t{:?}", self.lambda);
        let _ = writeln!(out, "[features]\t{}", self.features.len());
        for (i, f) in self.features.iter().enumerate() {
            let w = &self.emission[i * 4..i * 4 + 4];
            let _ = writeln!(out, "{}\t{:?}\t{:?}\t{:?}\t{:?}", escape(f), w[0], w[1], w[2], w[3]);
        }
        let table = self.transition_table();
        let _ = writeln!(out, "[transitions]\t{}", table.len());
        for (h, y, w) in table {
            let hist: Vec<&str> = h.iter().map(|l| l.name()).collect();
            let _ = writeln!(out, "{}\t{}\t{:?}", hist.join(" "), y, w);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CrfError> {
        let err = |line: usize, reason: &str| CrfError::Parse { line: line + 1, reason: reason.into() };
        let lines: Vec<&str> = text.lines().collect();
        if lines.first() != Some(&"#segeval-crf v1") {
            return Err(err(0, "missing or unsupported header"));
        }
        let field = |i: usize, key: &str| -> Result<&str, CrfError> {
            lines
                .get(i)
                .and_then(|l| l.strip_prefix(key))
                .and_then(|l| l.strip_prefix('\t'))
                .ok_or_else(|| err(i, &format!("expected `{key}`")))
        };
        let order: usize = field(1, "order")?.parse().map_err(|_| err(1, "bad order"))?;
        let delta: usize = field(2, "delta")?.parse().map_err(|_| err(2, "bad delta"))?;
        let lambda: f64 = field(3, "lambda")?.parse().map_err(|_| err(3, "bad lambda"))?;
        let n_feat: usize = field(4, "[features]")?.parse().map_err(|_| err(4, "bad count"))?;
        let mut model = CrfModel::new(order, delta, lambda, &[])?;
        for i in 5..5 + n_feat {
            let line = lines.get(i).ok_or_else(|| err(i, "truncated features"))?;
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 5 {
                return Err(err(i, "expected feature and four weights"));
            }
            let f = unescape(parts[0]);
            model.feature_index.insert(f.clone(), model.features.len());
            model.features.push(f);
            for p in &parts[1..] {
                model.emission.push(p.parse().map_err(|_| err(i, "bad weight"))?);
            }
        }
        let t0 = 5 + n_feat;
        let n_trans: usize = field(t0, "[transitions]")?.parse().map_err(|_| err(t0, "bad count"))?;
        for i in t0 + 1..t0 + 1 + n_trans {
            let line = lines.get(i).ok_or_else(|| err(i, "truncated transitions"))?;
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(err(i, "expected history, label, weight"));
            }
            let hist: Option<Vec<Label>> = parts[0].split(' ').map(Label::parse).collect();
            let label = Label::parse(parts[1]);
            let w: f64 = parts[2].parse().map_err(|_| err(i, "bad weight"))?;
            match (hist, label) {
                (Some(h), Some(y)) if model.set_transition_weight(&h, y, w) => {}
                _ => return Err(err(i, "unknown transition")),
            }
        }
        Ok(model)
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n")
}

fn unescape(s: &str) -> String {
    let mut out = String::new();
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                Some(o) => out.push(o),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Objective and gradient over a batch: summed negative conditional
/// log-likelihood plus `lambda * ||w||^2`.
pub fn nll_and_gradient(model: &CrfModel, batch: &[Word]) -> (f64, Vec<f64>) {
    let prepared: Vec<Prepared> = batch.iter().map(|w| model.prepare(w.surface(), Some(w.morphs()))).collect();
    let mut grad = vec![0.0; model.param_count()];
    let loss = model.objective(&prepared, &mut grad);
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfTrainReport {
    pub converged: bool,
    pub optimizer: LbfgsReport,
}

/// Trains a CRF from zero weights. Non-convergence is reported in the
/// returned report; the model is returned either way.
pub fn train_crf(train: &[Word], config: &CrfConfig) -> Result<(CrfModel, CrfTrainReport), CrfError> {
    if train.is_empty() {
        return Err(CrfError::EmptyTraining);
    }
    let mut model = CrfModel::new(config.order, config.delta, config.lambda, train)?;
    let prepared: Vec<Prepared> = train.iter().map(|w| model.prepare(w.surface(), Some(w.morphs()))).collect();
    let mut scratch = model.clone();
    let (params, report) = optim::minimize(
        |x, g| {
            scratch.set_params(x);
            scratch.objective(&prepared, g)
        },
        model.params(),
        &config.lbfgs,
    );
    model.set_params(&params);
    Ok((
        model,
        CrfTrainReport {
            converged: report.converged(),
            optimizer: report,
        },
    ))
}

pub fn viterbi_segment(model: &CrfModel, surface: &str) -> Vec<String> {
    model.segment(surface)
}

#[cfg(test)]
mod tests;
