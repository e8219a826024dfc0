//! Character → radical dictionary and decomposition sequences.
//!
//! The lexicon file is UTF-8 TSV, one line per character:
//!
//! ```text
//! <char>\t<radical> [<radical> …]\t<semantic_index>
//! ```
//!
//! Radicals are space-separated single code points, the semantic index is a
//! 0-based position into the radical list, and lines starting with `#` are
//! comments. Full decomposition of a character with entry `{[日,月], sem=0}`
//! is `[明, 日, 月, 日]`: the raw form first, the semantic component
//! duplicated at the end.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::alphabet::Alphabet;

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("failed to read lexicon: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected 3 tab-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: character cell {cell:?} is not a single code point")]
    BadCharacter { line: usize, cell: String },
    #[error("line {line}: radical {cell:?} is not a single code point")]
    BadRadical { line: usize, cell: String },
    #[error("line {line}: entry has no radicals")]
    EmptyRadicals { line: usize },
    #[error("line {line}: semantic index {cell:?} is not a decimal integer")]
    BadIndex { line: usize, cell: String },
    #[error("line {line}: semantic index {index} out of range for {count} radicals")]
    IndexOutOfRange { line: usize, index: usize, count: usize },
    #[error("lexicon contains no entries")]
    Empty,
}

/// Radical list of one character plus the position of its semantic component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexEntry {
    pub radicals: Vec<char>,
    pub semantic_index: usize,
}

impl LexEntry {
    pub fn semantic(&self) -> char {
        self.radicals[self.semantic_index]
    }
}

/// How a character is expanded into a token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DecomposeMode {
    /// `[c, r_1 … r_n, r_s]` — raw form first, semantic component repeated.
    #[default]
    Full,
    /// `[c]` — the conventional single-token setting.
    CharOnly,
    /// `[r_1 … r_n, r_s]` — radicals without the raw character.
    RadicalsOnly,
}

impl DecomposeMode {
    pub fn name(self) -> &'static str {
        match self {
            DecomposeMode::Full => "full",
            DecomposeMode::CharOnly => "char_only",
            DecomposeMode::RadicalsOnly => "radicals_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(DecomposeMode::Full),
            "char_only" => Some(DecomposeMode::CharOnly),
            "radicals_only" => Some(DecomposeMode::RadicalsOnly),
            _ => None,
        }
    }
}

/// Token sequence produced by [`RadicalLexicon::decompose`].
///
/// Characters and radicals share one token namespace; a sequence is never
/// empty, and in full mode it starts with the raw character and ends with
/// the semantic component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadicalSequence {
    pub tokens: Vec<char>,
}

impl RadicalSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Immutable per-character radical dictionary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RadicalLexicon {
    entries: HashMap<char, LexEntry>,
    /// Characters in first-seen file order; keeps every derived ordering stable.
    order: Vec<char>,
    /// Union of all entries' radicals, deduplicated, insertion-ordered.
    radical_alphabet: Vec<char>,
    /// Lines overridden by a later entry for the same character.
    pub duplicate_lines: usize,
}

impl RadicalLexicon {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        Self::from_reader(File::open(path)?)
    }

    pub fn from_reader(reader: impl Read) -> Result<Self, LexiconError> {
        let mut lex = RadicalLexicon::default();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (c, entry) = parse_line(trimmed, line_no)?;
            if lex.entries.insert(c, entry).is_some() {
                lex.duplicate_lines += 1;
            } else {
                lex.order.push(c);
            }
        }
        if lex.entries.is_empty() {
            return Err(LexiconError::Empty);
        }
        lex.rebuild_radical_alphabet();
        Ok(lex)
    }

    /// Builds a lexicon directly from `(char, radicals, semantic_index)` rows.
    pub fn from_entries<I>(rows: I) -> Self
    where
        I: IntoIterator<Item = (char, Vec<char>, usize)>,
    {
        let mut lex = RadicalLexicon::default();
        for (c, radicals, semantic_index) in rows {
            assert!(!radicals.is_empty(), "entry for {c:?} has no radicals");
            assert!(
                semantic_index < radicals.len(),
                "semantic index {semantic_index} out of range for {c:?}"
            );
            let entry = LexEntry { radicals, semantic_index };
            if lex.entries.insert(c, entry).is_some() {
                lex.duplicate_lines += 1;
            } else {
                lex.order.push(c);
            }
        }
        lex.rebuild_radical_alphabet();
        lex
    }

    fn rebuild_radical_alphabet(&mut self) {
        let mut seen = HashSet::new();
        self.radical_alphabet.clear();
        for c in &self.order {
            for &r in &self.entries[c].radicals {
                if seen.insert(r) {
                    self.radical_alphabet.push(r);
                }
            }
        }
    }

    pub fn entry(&self, c: char) -> Option<&LexEntry> {
        self.entries.get(&c)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Characters with entries, in first-seen file order.
    pub fn characters(&self) -> impl Iterator<Item = char> + '_ {
        self.order.iter().copied()
    }

    pub fn radical_alphabet(&self) -> &[char] {
        &self.radical_alphabet
    }

    /// Expands `c` into its token sequence for the given mode.
    ///
    /// A character without an entry collapses to `[c]` in every mode, so
    /// unlisted symbols (Latin letters, digits, punctuation) still flow
    /// through as ordinary single-token characters.
    pub fn decompose(&self, c: char, mode: DecomposeMode) -> RadicalSequence {
        let entry = match self.entries.get(&c) {
            Some(e) if mode != DecomposeMode::CharOnly => e,
            _ => return RadicalSequence { tokens: vec![c] },
        };
        let mut tokens = Vec::with_capacity(entry.radicals.len() + 2);
        if mode == DecomposeMode::Full {
            tokens.push(c);
        }
        tokens.extend_from_slice(&entry.radicals);
        tokens.push(entry.semantic());
        RadicalSequence { tokens }
    }

    /// Builds the token id space(s) for a corpus over this lexicon.
    ///
    /// Tied: one space holding the union of corpus characters and all
    /// radicals. Untied: two spaces with unrelated ids.
    pub fn build_alphabet<I>(&self, corpus_chars: I, tied: bool) -> Alphabet
    where
        I: IntoIterator<Item = char>,
    {
        let radicals = self.radical_alphabet.iter().copied();
        if tied {
            Alphabet::tied(corpus_chars, radicals)
        } else {
            Alphabet::untied(corpus_chars, radicals)
        }
    }
}

fn parse_line(line: &str, line_no: usize) -> Result<(char, LexEntry), LexiconError> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        return Err(LexiconError::FieldCount { line: line_no, found: fields.len() });
    }
    let mut chars = fields[0].chars();
    let c = match (chars.next(), chars.next()) {
        (Some(c), None) => c,
        _ => {
            return Err(LexiconError::BadCharacter {
                line: line_no,
                cell: fields[0].to_string(),
            })
        }
    };
    let mut radicals = Vec::new();
    for cell in fields[1].split_whitespace() {
        let mut it = cell.chars();
        match (it.next(), it.next()) {
            (Some(r), None) => radicals.push(r),
            _ => {
                return Err(LexiconError::BadRadical {
                    line: line_no,
                    cell: cell.to_string(),
                })
            }
        }
    }
    if radicals.is_empty() {
        return Err(LexiconError::EmptyRadicals { line: line_no });
    }
    let semantic_index: usize = fields[2].trim().parse().map_err(|_| LexiconError::BadIndex {
        line: line_no,
        cell: fields[2].to_string(),
    })?;
    if semantic_index >= radicals.len() {
        return Err(LexiconError::IndexOutOfRange {
            line: line_no,
            index: semantic_index,
            count: radicals.len(),
        });
    }
    Ok((c, LexEntry { radicals, semantic_index }))
}
