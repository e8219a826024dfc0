//! Segmented-corpus parsing, BMES tag conversion, splits and bigram features.
//!
//! Corpus files are UTF-8, one sentence per line, words separated by
//! whitespace runs (the SIGHAN convention). Tagging casts segmentation to
//! per-character labels over `{B, M, E, S}`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed to read corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("sentence contains an empty word")]
    EmptyWord,
    #[error("chars/tags length mismatch: {chars} chars vs {tags} tags")]
    LengthMismatch { chars: usize, tags: usize },
    #[error("need at least 10 sentences to split, found {0}")]
    TooFewSentences(usize),
}

/// One segmented sentence: an ordered list of non-empty words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub words: Vec<String>,
}

impl Sentence {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Sentence { words: words.into_iter().map(Into::into).collect() }
    }

    /// Concatenation of the words as a character sequence.
    pub fn chars(&self) -> Vec<char> {
        self.words.iter().flat_map(|w| w.chars()).collect()
    }
}

/// Per-character segmentation tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    /// Begin of a multi-character word.
    B,
    /// Middle of a multi-character word.
    M,
    /// End of a multi-character word.
    E,
    /// Single-character word.
    S,
}

impl Tag {
    pub const COUNT: usize = 4;
    pub const ALL: [Tag; 4] = [Tag::B, Tag::M, Tag::E, Tag::S];

    pub fn id(self) -> usize {
        match self {
            Tag::B => 0,
            Tag::M => 1,
            Tag::E => 2,
            Tag::S => 3,
        }
    }

    pub fn from_id(id: usize) -> Tag {
        Self::ALL[id]
    }
}

/// Character sequence with aligned BMES tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub chars: Vec<char>,
    pub tags: Vec<Tag>,
}

/// Reads a segmented corpus, one sentence per line, skipping blank lines.
pub fn read_segmented(path: impl AsRef<Path>) -> Result<Vec<Sentence>, CorpusError> {
    read_segmented_from(File::open(path)?)
}

pub fn read_segmented_from(reader: impl Read) -> Result<Vec<Sentence>, CorpusError> {
    let mut sentences = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        let words: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if !words.is_empty() {
            sentences.push(Sentence { words });
        }
    }
    Ok(sentences)
}

/// Converts a word sequence to its character/tag form.
///
/// A single-character word becomes `S`; a word of length L ≥ 2 becomes
/// `B M^{L-2} E`.
pub fn to_bmes(sentence: &Sentence) -> Result<TaggedSentence, CorpusError> {
    let mut chars = Vec::new();
    let mut tags = Vec::new();
    for word in &sentence.words {
        let word_chars: Vec<char> = word.chars().collect();
        match word_chars.len() {
            0 => return Err(CorpusError::EmptyWord),
            1 => {
                chars.push(word_chars[0]);
                tags.push(Tag::S);
            }
            n => {
                chars.extend_from_slice(&word_chars);
                tags.push(Tag::B);
                tags.extend(std::iter::repeat_n(Tag::M, n - 2));
                tags.push(Tag::E);
            }
        }
    }
    Ok(TaggedSentence { chars, tags })
}

/// Inverts [`to_bmes`], repairing ill-formed tag sequences deterministically.
///
/// A word boundary closes after any `E` or `S` and before any `B` or `S`;
/// a stray `M` at sentence start or after `E`/`S` behaves as `B`; the
/// trailing open word closes at sentence end. The output words always
/// concatenate back to `chars`.
pub fn from_bmes(chars: &[char], tags: &[Tag]) -> Result<Vec<String>, CorpusError> {
    if chars.len() != tags.len() {
        return Err(CorpusError::LengthMismatch { chars: chars.len(), tags: tags.len() });
    }
    let mut words = Vec::new();
    let mut current = String::new();
    for (&c, &t) in chars.iter().zip(tags) {
        if matches!(t, Tag::B | Tag::S) && !current.is_empty() {
            words.push(std::mem::take(&mut current));
        }
        current.push(c);
        if matches!(t, Tag::E | Tag::S) {
            words.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    Ok(words)
}

/// Splits off the last ⌈10%⌉ of sentences as the development set.
pub fn split_train_dev(sentences: &[Sentence]) -> Result<(Vec<Sentence>, Vec<Sentence>), CorpusError> {
    let n = sentences.len();
    if n < 10 {
        return Err(CorpusError::TooFewSentences(n));
    }
    let dev_len = n.div_ceil(10);
    let cut = n - dev_len;
    Ok((sentences[..cut].to_vec(), sentences[cut..].to_vec()))
}

/// Sentinel pairing the final character of a sentence.
pub const BIGRAM_END: &str = "</s>";

/// Closed bigram vocabulary built from training data.
///
/// Position `t` maps the string `c_t · c_{t+1}` (with [`BIGRAM_END`] past the
/// last character) to a dense id; ids 0/1 are reserved for PAD/UNK and
/// unseen bigrams at inference map to UNK.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BigramVocab {
    ids: HashMap<String, u32>,
    tokens: Vec<String>,
}

impl BigramVocab {
    pub fn build<'a, I>(sentences: I) -> Self
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        let mut vocab = BigramVocab {
            ids: HashMap::new(),
            tokens: vec![crate::alphabet::PAD_TOKEN.to_string(), crate::alphabet::UNK_TOKEN.to_string()],
        };
        for sentence in sentences {
            for key in bigram_strings(&sentence.chars()) {
                vocab.intern(key);
            }
        }
        vocab
    }

    pub(crate) fn from_tokens(tokens: Vec<String>) -> Self {
        let ids = tokens
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        BigramVocab { ids, tokens }
    }

    fn intern(&mut self, key: String) -> u32 {
        if let Some(&id) = self.ids.get(&key) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(key.clone());
        self.ids.insert(key, id);
        id
    }

    pub fn id_or_unk(&self, key: &str) -> u32 {
        self.ids.get(key).copied().unwrap_or(crate::alphabet::UNK_ID)
    }

    /// Row count including the two reserved ids.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == 2
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Per-position bigram ids for one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BigramFeature {
    pub ids: Vec<u32>,
}

fn bigram_strings(chars: &[char]) -> Vec<String> {
    let mut out = Vec::with_capacity(chars.len());
    for (i, &c) in chars.iter().enumerate() {
        let mut key = String::new();
        key.push(c);
        match chars.get(i + 1) {
            Some(&next) => key.push(next),
            None => key.push_str(BIGRAM_END),
        }
        out.push(key);
    }
    out
}

/// Looks up the bigram id at every position; one id per character.
pub fn extract_bigrams(chars: &[char], vocab: &BigramVocab) -> BigramFeature {
    BigramFeature { ids: bigram_strings(chars).iter().map(|k| vocab.id_or_unk(k)).collect() }
}
