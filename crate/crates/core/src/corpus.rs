//! Surface-segmented word types and the corpus file format.
//!
//! A corpus file is UTF-8 with one word type per line:
//!
//! ```text
//! # comment
//! papers	paper s
//! free	free
//! ```
//!
//! The surface and its morphs are separated by a single TAB, morphs by single
//! spaces. Blank lines and lines starting with `#` are ignored.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("line {line}: morphs {morphs:?} do not rebuild surface {surface:?}")]
    ConcatMismatch {
        line: usize,
        surface: String,
        morphs: String,
    },
    #[error("line {line}: empty morph")]
    EmptyMorph { line: usize },
    #[error("line {line}: empty surface")]
    EmptySurface { line: usize },
    #[error("line {line}: expected `surface<TAB>morphs`")]
    MissingTab { line: usize },
    #[error("line {line}: {surface:?} conflicts with the segmentation on line {first_line}")]
    ConflictingDuplicate {
        line: usize,
        first_line: usize,
        surface: String,
    },
    #[error("{0}")]
    Io(String),
}

/// A word type with its gold surface segmentation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    surface: String,
    morphs: Vec<String>,
}

impl Word {
    /// Builds a word, checking that the morphs are nonempty and rebuild the surface.
    pub fn new<S: Into<String>>(surface: S, morphs: Vec<String>) -> Result<Self, CorpusError> {
        let surface = surface.into();
        Self::validate(&surface, &morphs, 0)?;
        Ok(Self { surface, morphs })
    }

    /// Builds a word from its morphs alone; the surface is their concatenation.
    pub fn from_morphs<I, S>(morphs: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let morphs: Vec<String> = morphs.into_iter().map(Into::into).collect();
        let surface = morphs.concat();
        Self::new(surface, morphs)
    }

    fn validate(surface: &str, morphs: &[String], line: usize) -> Result<(), CorpusError> {
        if surface.is_empty() {
            return Err(CorpusError::EmptySurface { line });
        }
        if morphs.is_empty() || morphs.iter().any(String::is_empty) {
            return Err(CorpusError::EmptyMorph { line });
        }
        // Byte concatenation of UTF-8 strings matches iff the scalar sequences do.
        let mut rest = surface;
        for m in morphs {
            match rest.strip_prefix(m.as_str()) {
                Some(r) => rest = r,
                None => {
                    return Err(CorpusError::ConcatMismatch {
                        line,
                        surface: surface.to_string(),
                        morphs: morphs.join(" "),
                    })
                }
            }
        }
        if !rest.is_empty() {
            return Err(CorpusError::ConcatMismatch {
                line,
                surface: surface.to_string(),
                morphs: morphs.join(" "),
            });
        }
        Ok(())
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn morphs(&self) -> &[String] {
        &self.morphs
    }

    pub fn morph_count(&self) -> usize {
        self.morphs.len()
    }

    pub fn char_len(&self) -> usize {
        self.surface.chars().count()
    }
}

/// Human-readable `paper + s` rendering.
impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} → {}", self.surface, self.morphs.join(" + "))
    }
}

/// A deduplicated inventory of word types.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub language_tag: String,
    words: Vec<Word>,
}

impl Corpus {
    pub fn new(language_tag: impl Into<String>) -> Self {
        Self {
            language_tag: language_tag.into(),
            words: Vec::new(),
        }
    }

    /// Builds a corpus from words, keeping the first of any identical
    /// duplicates and rejecting conflicting segmentations.
    pub fn from_words(
        language_tag: impl Into<String>,
        words: impl IntoIterator<Item = Word>,
    ) -> Result<Self, CorpusError> {
        let mut corpus = Self::new(language_tag);
        let mut seen = HashMap::new();
        for (i, w) in words.into_iter().enumerate() {
            corpus.insert(w, i + 1, &mut seen)?;
        }
        Ok(corpus)
    }

    fn insert(
        &mut self,
        word: Word,
        line: usize,
        seen: &mut HashMap<String, (usize, usize)>,
    ) -> Result<(), CorpusError> {
        if let Some(&(first_line, idx)) = seen.get(word.surface()) {
            if self.words[idx].morphs != word.morphs {
                return Err(CorpusError::ConflictingDuplicate {
                    line,
                    first_line,
                    surface: word.surface,
                });
            }
            return Ok(());
        }
        seen.insert(word.surface.clone(), (line, self.words.len()));
        self.words.push(word);
        Ok(())
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Number of unique surfaces.
    pub fn type_count(&self) -> usize {
        self.words.len()
    }

    pub fn load(path: &Path, language_tag: &str) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))?;
        parse_corpus(&text, language_tag)
    }
}

/// Parses a corpus document.
pub fn parse_corpus(text: &str, language_tag: &str) -> Result<Corpus, CorpusError> {
    let mut corpus = Corpus::new(language_tag);
    let mut seen = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let (surface, morphs) = raw
            .split_once('\t')
            .ok_or(CorpusError::MissingTab { line })?;
        let morphs: Vec<String> = morphs.split(' ').map(str::to_string).collect();
        Word::validate(surface, &morphs, line)?;
        let word = Word {
            surface: surface.to_string(),
            morphs,
        };
        corpus.insert(word, line, &mut seen)?;
    }
    Ok(corpus)
}

/// Serializes words in the corpus file format, one line per entry.
pub fn write_words<'a>(words: impl IntoIterator<Item = &'a Word>) -> String {
    let mut out = String::new();
    for w in words {
        out.push_str(&w.surface);
        out.push('\t');
        out.push_str(&w.morphs.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_corpus(corpus: &Corpus) -> String {
    write_words(corpus.words())
}

/// Parses a token file (a data set or split half) where duplicate lines are
/// meaningful and must be kept.
pub fn parse_tokens(text: &str) -> Result<Vec<Word>, CorpusError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let (surface, morphs) = raw
            .split_once('\t')
            .ok_or(CorpusError::MissingTab { line })?;
        let morphs: Vec<String> = morphs.split(' ').map(str::to_string).collect();
        Word::validate(surface, &morphs, line)?;
        out.push(Word {
            surface: surface.to_string(),
            morphs,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_two_morph_word() {
        let c = parse_corpus("papers\tpaper s\n", "en").unwrap();
        assert_eq!(c.words()[0].surface(), "papers");
        assert_eq!(c.words()[0].morphs(), ["paper", "s"]);
    }

    #[test]
    fn free_morpheme() {
        let c = parse_corpus("free\tfree", "en").unwrap();
        assert_eq!(c.words()[0], Word::from_morphs(["free"]).unwrap());
    }

    #[test]
    fn concat_mismatch_reports_line() {
        let err = parse_corpus("# header\npapers\tpapr s\n", "en").unwrap_err();
        assert!(matches!(err, CorpusError::ConcatMismatch { line: 2, .. }));
    }

    #[test]
    fn empty_morph_is_rejected() {
        let err = parse_corpus("papers\tpaper  s\n", "en").unwrap_err();
        assert_eq!(err, CorpusError::EmptyMorph { line: 1 });
        assert!(Word::new("ab", vec!["ab".into(), String::new()]).is_err());
    }

    #[test]
    fn conflicting_duplicate() {
        let err = parse_corpus("papers\tpaper s\npapers\tpape rs\n", "en").unwrap_err();
        assert!(matches!(
            err,
            CorpusError::ConflictingDuplicate { line: 2, first_line: 1, .. }
        ));
    }

    #[test]
    fn identical_duplicates_dedupe() {
        let c = parse_corpus("a\ta\n\n# x\na\ta\n", "x").unwrap();
        assert_eq!(c.type_count(), 1);
    }

    #[test]
    fn empty_corpus() {
        let c = parse_corpus("", "x").unwrap();
        assert_eq!(c.type_count(), 0);
        assert_eq!(write_corpus(&c), "");
    }

    #[test]
    fn missing_tab() {
        assert_eq!(
            parse_corpus("papers paper s", "x").unwrap_err(),
            CorpusError::MissingTab { line: 1 }
        );
    }

    #[test]
    fn three_word_round_trip_is_byte_identical() {
        let words = vec![
            Word::from_morphs(["un", "do", "ing"]).unwrap(),
            Word::from_morphs(["paper", "s"]).unwrap(),
            Word::from_morphs(["a+b", "c"]).unwrap(),
        ];
        let c = Corpus::from_words("en", words).unwrap();
        let text = write_corpus(&c);
        assert_eq!(text, "undoing\tun do ing\npapers\tpaper s\na+bc\ta+b c\n");
        let back = parse_corpus(&text, "en").unwrap();
        assert_eq!(back, c);
        assert_eq!(write_corpus(&back), text);
    }

    #[test]
    fn multibyte_surfaces() {
        let c = parse_corpus("ўкраїнська\tўкраїн ськ а\n", "uk").unwrap();
        assert_eq!(c.words()[0].char_len(), 10);
    }

    #[test]
    fn display_uses_plus_joiner() {
        let w = Word::from_morphs(["paper", "s"]).unwrap();
        assert_eq!(w.to_string(), "papers → paper + s");
    }

    fn morph_strategy() -> impl Strategy<Value = String> {
        "[a-zäöü+]{1,4}"
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(words in prop::collection::vec(prop::collection::vec(morph_strategy(), 1..4), 0..20)) {
            let words: Vec<Word> = words.into_iter().map(|m| Word::from_morphs(m).unwrap()).collect();
            // Keep first segmentation per surface so the corpus is valid.
            let mut seen = std::collections::HashSet::new();
            let words: Vec<Word> = words.into_iter().filter(|w| seen.insert(w.surface().to_string())).collect();
            let c = Corpus::from_words("t", words).unwrap();
            let back = parse_corpus(&write_corpus(&c), "t").unwrap();
            prop_assert_eq!(back.type_count(), seen.len());
            for w in back.words() {
                prop_assert_eq!(w.morphs().concat(), w.surface());
            }
            prop_assert_eq!(back, c);
        }
    }
}
