//! Expanded state space for order-k inference and the log-space
//! forward-backward and Viterbi recursions over it.
//!
//! A state is the most recent `max(k, 1)` labels (fewer near the start of a
//! word, where the history begins with `START`). Only grammar-valid histories
//! are materialized.

use std::collections::{BTreeSet, HashMap};

use super::labels::{allowed, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub from: usize,
    pub label: Label,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub order: usize,
    /// Histories in canonical (lexicographic) order.
    pub states: Vec<Vec<Label>>,
    pub start: usize,
    /// Interior transitions ordered by (from, label).
    pub transitions: Vec<Transition>,
    /// `next[state][interior label]` -> transition index.
    pub next: Vec<[Option<usize>; 4]>,
    /// Transitions into END, as (state, index into `end_transitions`).
    pub end_transitions: Vec<usize>,
    /// Transitions grouped by destination state.
    pub incoming: Vec<Vec<usize>>,
    index: HashMap<Vec<Label>, usize>,
}

impl StateSpace {
    pub fn new(order: usize) -> Self {
        let keep = order.max(1);
        let mut seen: BTreeSet<Vec<Label>> = BTreeSet::new();
        let mut frontier = vec![vec![Label::Start]];
        seen.insert(vec![Label::Start]);
        while let Some(s) = frontier.pop() {
            let last = *s.last().expect("nonempty history");
            for y in Label::INTERIOR {
                if allowed(last, y) {
                    let next = successor(&s, y, keep);
                    if seen.insert(next.clone()) {
                        frontier.push(next);
                    }
                }
            }
        }
        let states: Vec<Vec<Label>> = seen.into_iter().collect();
        let index: HashMap<Vec<Label>, usize> =
            states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let mut transitions = Vec::new();
        let mut next = vec![[None; 4]; states.len()];
        let mut end_transitions = Vec::new();
        for (from, s) in states.iter().enumerate() {
            let last = *s.last().expect("nonempty history");
            for y in Label::INTERIOR {
                if allowed(last, y) {
                    let to = index[&successor(s, y, keep)];
                    next[from][y.interior_index()] = Some(transitions.len());
                    transitions.push(Transition { from, label: y, to });
                }
            }
            if allowed(last, Label::End) {
                end_transitions.push(from);
            }
        }
        let mut incoming = vec![Vec::new(); states.len()];
        for (i, tr) in transitions.iter().enumerate() {
            incoming[tr.to].push(i);
        }
        Self {
            order,
            start: index[&vec![Label::Start]],
            states,
            transitions,
            next,
            end_transitions,
            incoming,
            index,
        }
    }

    pub fn state_index(&self, history: &[Label]) -> Option<usize> {
        self.index.get(history).copied()
    }

    /// Transition indices along an interior label path, plus the index into
    /// `end_transitions` of the closing transition.
    pub fn path(&self, labels: &[Label]) -> Option<(Vec<usize>, usize)> {
        let mut state = self.start;
        let mut out = Vec::with_capacity(labels.len());
        for &y in labels {
            let tr = self.next[state][y.interior_index()]?;
            out.push(tr);
            state = self.transitions[tr].to;
        }
        let end = self.end_transitions.iter().position(|&s| s == state)?;
        Some((out, end))
    }
}

fn successor(history: &[Label], y: Label, keep: usize) -> Vec<Label> {
    let mut v = history.to_vec();
    v.push(y);
    if v.len() > keep {
        v.drain(..v.len() - keep);
    }
    v
}

pub fn logsumexp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Scores for one word: `emit[t][label]`, per-transition weights and
/// per-end-transition weights.
pub struct Potentials<'a> {
    pub emit: &'a [[f64; 4]],
    pub trans: &'a [f64],
    pub end: &'a [f64],
}

pub struct Marginals {
    pub log_z: f64,
    /// `edge[t][transition]` posterior probability of taking the transition at `t`.
    pub edge: Vec<Vec<f64>>,
    /// Posterior probability of each end transition.
    pub end: Vec<f64>,
}

impl Marginals {
    /// Posterior label marginals at position `t`.
    pub fn label_marginals(&self, space: &StateSpace, t: usize) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, tr) in space.transitions.iter().enumerate() {
            out[tr.label.interior_index()] += self.edge[t][i];
        }
        out
    }
}

pub fn forward(space: &StateSpace, p: &Potentials) -> Vec<Vec<f64>> {
    let n = p.emit.len();
    let ns = space.states.len();
    let mut alpha = vec![vec![f64::NEG_INFINITY; ns]; n];
    let mut buf = Vec::new();
    for t in 0..n {
        for to in 0..ns {
            buf.clear();
            for &i in &space.incoming[to] {
                let tr = space.transitions[i];
                let prev = if t == 0 {
                    if tr.from == space.start { 0.0 } else { f64::NEG_INFINITY }
                } else {
                    alpha[t - 1][tr.from]
                };
                if prev > f64::NEG_INFINITY {
                    buf.push(prev + p.trans[i] + p.emit[t][tr.label.interior_index()]);
                }
            }
            alpha[t][to] = logsumexp(buf.iter().copied());
        }
    }
    alpha
}

pub fn log_partition(space: &StateSpace, p: &Potentials) -> f64 {
    let alpha = forward(space, p);
    let last = alpha.last().expect("nonempty word");
    logsumexp(space.end_transitions.iter().enumerate().map(|(e, &s)| last[s] + p.end[e]))
}

pub fn forward_backward(space: &StateSpace, p: &Potentials) -> Marginals {
    let n = p.emit.len();
    let ns = space.states.len();
    let alpha = forward(space, p);
    let log_z = logsumexp(
        space
            .end_transitions
            .iter()
            .enumerate()
            .map(|(e, &s)| alpha[n - 1][s] + p.end[e]),
    );
    let mut beta = vec![vec![f64::NEG_INFINITY; ns]; n];
    for (e, &s) in space.end_transitions.iter().enumerate() {
        beta[n - 1][s] = p.end[e];
    }
    let mut acc: Vec<Vec<f64>> = vec![Vec::new(); ns];
    for t in (1..n).rev() {
        acc.iter_mut().for_each(Vec::clear);
        for (i, tr) in space.transitions.iter().enumerate() {
            let b = beta[t][tr.to];
            if b > f64::NEG_INFINITY {
                acc[tr.from].push(p.trans[i] + p.emit[t][tr.label.interior_index()] + b);
            }
        }
        for s in 0..ns {
            beta[t - 1][s] = logsumexp(acc[s].iter().copied());
        }
    }
    let mut edge = vec![vec![0.0; space.transitions.len()]; n];
    for t in 0..n {
        for (i, tr) in space.transitions.iter().enumerate() {
            let prev = if t == 0 {
                if tr.from == space.start { 0.0 } else { f64::NEG_INFINITY }
            } else {
                alpha[t - 1][tr.from]
            };
            let v = prev + p.trans[i] + p.emit[t][tr.label.interior_index()] + beta[t][tr.to] - log_z;
            edge[t][i] = if v > f64::NEG_INFINITY { v.exp() } else { 0.0 };
        }
    }
    let end = space
        .end_transitions
        .iter()
        .enumerate()
        .map(|(e, &s)| (alpha[n - 1][s] + p.end[e] - log_z).exp())
        .collect();
    Marginals { log_z, edge, end }
}

/// Highest-scoring interior label path and its score. Among equal scores the
/// first candidate in canonical order wins.
pub fn viterbi(space: &StateSpace, p: &Potentials) -> (Vec<Label>, f64) {
    let n = p.emit.len();
    let ns = space.states.len();
    let mut delta = vec![vec![f64::NEG_INFINITY; ns]; n];
    let mut back = vec![vec![usize::MAX; ns]; n];
    for t in 0..n {
        for to in 0..ns {
            for &i in &space.incoming[to] {
                let tr = space.transitions[i];
                let prev = if t == 0 {
                    if tr.from == space.start { 0.0 } else { f64::NEG_INFINITY }
                } else {
                    delta[t - 1][tr.from]
                };
                if prev == f64::NEG_INFINITY {
                    continue;
                }
                let v = prev + p.trans[i] + p.emit[t][tr.label.interior_index()];
                if v > delta[t][to] {
                    delta[t][to] = v;
                    back[t][to] = i;
                }
            }
        }
    }
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for (e, &s) in space.end_transitions.iter().enumerate() {
        let v = delta[n - 1][s] + p.end[e];
        if v > best.0 {
            best = (v, s);
        }
    }
    let mut labels = vec![Label::B; n];
    let mut state = best.1;
    for t in (0..n).rev() {
        let tr = space.transitions[back[t][state]];
        labels[t] = tr.label;
        state = tr.from;
    }
    (labels, best.0)
}
