use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::Word;

/// Character labels. `B`, `M`, `E`, `S` are the interior labels; `Start`
/// and `End` frame every word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Start,
    B,
    M,
    E,
    S,
    End,
}

impl Label {
    /// Interior labels in tie-break order.
    pub const INTERIOR: [Label; 4] = [Label::B, Label::M, Label::E, Label::S];

    /// Index among the interior labels.
    pub fn interior_index(self) -> usize {
        match self {
            Label::B => 0,
            Label::M => 1,
            Label::E => 2,
            Label::S => 3,
            _ => panic!("{self} is not an interior label"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Start => "START",
            Label::B => "B",
            Label::M => "M",
            Label::E => "E",
            Label::S => "S",
            Label::End => "END",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        [Label::Start, Label::B, Label::M, Label::E, Label::S, Label::End]
            .into_iter()
            .find(|l| l.name() == s)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The label grammar: START→{B,S}, B→{M,E}, M→{M,E}, E→{B,S,END}, S→{B,S,END}.
pub fn allowed(prev: Label, next: Label) -> bool {
    use Label::*;
    matches!(
        (prev, next),
        (Start, B | S) | (B, M | E) | (M, M | E) | (E | S, B | S | End)
    )
}

/// Whether an interior label sequence forms a valid framed path.
pub fn is_valid_path(labels: &[Label]) -> bool {
    if labels.is_empty() {
        return false;
    }
    let mut prev = Label::Start;
    for &l in labels {
        if !allowed(prev, l) {
            return false;
        }
        prev = l;
    }
    allowed(prev, Label::End)
}

/// Framed label sequence for a gold word, e.g. `START B M M M E S END`.
pub fn label_word(word: &Word) -> Vec<Label> {
    let mut out = vec![Label::Start];
    out.extend(interior_labels(word.morphs()));
    out.push(Label::End);
    out
}

/// Interior labels for a morph sequence.
pub fn interior_labels<S: AsRef<str>>(morphs: &[S]) -> Vec<Label> {
    let mut out = Vec::new();
    for m in morphs {
        let n = m.as_ref().chars().count();
        if n == 1 {
            out.push(Label::S);
        } else {
            out.push(Label::B);
            out.extend(std::iter::repeat_n(Label::M, n - 2));
            out.push(Label::E);
        }
    }
    out
}

/// Cuts a surface into morphs, closing a morph after every `E` or `S`.
pub fn labels_to_morphs(surface: &str, labels: &[Label]) -> Vec<String> {
    let chars: Vec<char> = surface.chars().collect();
    assert_eq!(chars.len(), labels.len());
    let mut out = Vec::new();
    let mut cur = String::new();
    for (c, l) in chars.iter().zip(labels) {
        cur.push(*c);
        if matches!(l, Label::E | Label::S) {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}
