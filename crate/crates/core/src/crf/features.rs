/// Sentinels framing a word in feature strings.
pub const WORD_START: char = '\u{2}';
pub const WORD_END: char = '\u{3}';

/// Substring features for position `t`: left substrings of length `1..=delta`
/// ending just before `t` and right substrings starting at `t`, both over the
/// sentinel-framed word and truncated to the available context.
///
/// Left features render as `L{len}:{text}`, right as `R{len}:{text}`.
pub fn extract_features(chars: &[char], t: usize, delta: usize) -> Vec<String> {
    assert!(t < chars.len(), "position {t} out of range");
    let mut framed = Vec::with_capacity(chars.len() + 2);
    framed.push(WORD_START);
    framed.extend_from_slice(chars);
    framed.push(WORD_END);
    features_framed(&framed, t, delta)
}

pub(crate) fn features_framed(framed: &[char], t: usize, delta: usize) -> Vec<String> {
    let pos = t + 1;
    let mut out = Vec::with_capacity(2 * delta);
    for len in 1..=delta.min(pos) {
        let s: String = framed[pos - len..pos].iter().collect();
        out.push(format!("L{len}:{s}"));
    }
    for len in 1..=delta.min(framed.len() - pos) {
        let s: String = framed[pos..pos + len].iter().collect();
        out.push(format!("R{len}:{s}"));
    }
    out
}

/// Features for every position of a surface.
pub fn word_features(surface: &str, delta: usize) -> Vec<Vec<String>> {
    let mut framed = vec![WORD_START];
    framed.extend(surface.chars());
    framed.push(WORD_END);
    (0..framed.len() - 2).map(|t| features_framed(&framed, t, delta)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    fn set(v: Vec<String>) -> std::collections::BTreeSet<String> {
        v.into_iter().collect()
    }

    #[test]
    fn third_char_of_papers() {
        let f = extract_features(&chars("papers"), 2, 3);
        let expected = ["L1:a", "L2:pa", &format!("L3:{WORD_START}pa"), "R1:p", "R2:pe", "R3:per"];
        assert_eq!(set(f), set(expected.iter().map(|s| s.to_string()).collect()));
    }

    #[test]
    fn first_position() {
        let f = extract_features(&chars("papers"), 0, 2);
        let expected = vec![format!("L1:{WORD_START}"), "R1:p".into(), "R2:pa".into()];
        assert_eq!(set(f), set(expected));
    }

    #[test]
    fn right_edge_includes_end_sentinel() {
        let f = extract_features(&chars("ab"), 1, 4);
        let expected = vec![
            "L1:a".to_string(),
            format!("L2:{WORD_START}a"),
            "R1:b".into(),
            format!("R2:b{WORD_END}"),
        ];
        assert_eq!(set(f), set(expected));
    }

    #[test]
    fn whole_word_helper_matches_pointwise() {
        let w = word_features("papers", 4);
        for (t, f) in w.iter().enumerate() {
            assert_eq!(f, &extract_features(&chars("papers"), t, 4));
        }
    }
}
