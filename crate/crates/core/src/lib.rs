//! Radical-aware Chinese word segmentation toolkit.
//!
//! The pipeline: decompose characters into radical sequences
//! ([`lexicon`]), pretrain character and radical vectors jointly with
//! skip-gram negative sampling ([`embedding`]), compose characters from
//! radicals with a Bi-LSTM and tag sentences with a character-level
//! Bi-LSTM-CRF ([`segmenter`], [`nn`]), and evaluate with the word-level
//! F1 protocol ([`scorer`]).

pub mod alphabet;
pub mod corpus;
pub mod embedding;
pub mod lexicon;
pub mod nn;
pub mod scorer;
pub mod segmenter;

pub use alphabet::Alphabet;
pub use corpus::{Sentence, Tag, TaggedSentence};
pub use lexicon::{DecomposeMode, RadicalLexicon, RadicalSequence};
