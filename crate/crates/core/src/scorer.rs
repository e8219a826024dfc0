//! Word-level precision/recall/F1 under the Bakeoff convention.
//!
//! A predicted word counts as correct iff its half-open character span
//! `(start, end)` exactly matches a gold word. Counts micro-average across
//! sentences; displayed percentages round half-up to one decimal digit,
//! while the raw ratios stay available for tests.

use std::collections::HashSet;
use std::path::Path;

use crate::corpus::{read_segmented, Sentence};

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("failed to read corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus error: {0}")]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("line {line}: gold and prediction have different character sequences")]
    CharMismatch { line: usize },
    #[error("line counts differ: {gold} gold lines vs {pred} predicted lines")]
    LineCount { gold: usize, pred: usize },
}

/// Micro-averaged counts with derived scores.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub true_words: usize,
    pub pred_words: usize,
    pub correct: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvalReport {
    pub fn from_counts(true_words: usize, pred_words: usize, correct: usize) -> Self {
        assert!(correct <= true_words.min(pred_words), "correct exceeds a side");
        let precision = ratio(correct, pred_words);
        let recall = ratio(correct, true_words);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EvalReport { true_words, pred_words, correct, precision, recall, f1 }
    }

    /// Percentage rounded half-up to one decimal, e.g. `0.5714…` → `"57.1"`.
    pub fn display_precision(&self) -> String {
        round_percent(self.precision)
    }

    pub fn display_recall(&self) -> String {
        round_percent(self.recall)
    }

    pub fn display_f1(&self) -> String {
        round_percent(self.f1)
    }

    /// Human block followed by machine-readable key:value lines.
    pub fn render(&self) -> String {
        format!(
            "gold words:  {}\npred words:  {}\ncorrect:     {}\nP: {}\nR: {}\nF1: {}\nP_raw: {:.6}\nR_raw: {:.6}\nF1_raw: {:.6}\n",
            self.true_words,
            self.pred_words,
            self.correct,
            self.display_precision(),
            self.display_recall(),
            self.display_f1(),
            self.precision,
            self.recall,
            self.f1,
        )
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Half-up rounding of `value` as a percentage with one decimal digit.
fn round_percent(value: f64) -> String {
    // f64::round is round-half-away-from-zero, which is half-up for the
    // non-negative ratios scored here.
    let rounded = (value * 1000.0).round() / 10.0;
    format!("{rounded:.1}")
}

fn spans(sentence: &Sentence) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(sentence.words.len());
    let mut offset = 0;
    for word in &sentence.words {
        let len = word.chars().count();
        out.push((offset, offset + len));
        offset += len;
    }
    out
}

/// Counts `(true, pred, correct)` for one aligned sentence pair.
pub fn score_pair(gold: &Sentence, pred: &Sentence) -> Result<(usize, usize, usize), ScoreError> {
    if gold.chars() != pred.chars() {
        return Err(ScoreError::CharMismatch { line: 0 });
    }
    let gold_spans: HashSet<(usize, usize)> = spans(gold).into_iter().collect();
    let pred_spans = spans(pred);
    let correct = pred_spans.iter().filter(|s| gold_spans.contains(s)).count();
    Ok((gold_spans.len(), pred_spans.len(), correct))
}

/// Micro-averaged report over aligned sentence lists.
pub fn score_sentences(gold: &[Sentence], pred: &[Sentence]) -> Result<EvalReport, ScoreError> {
    if gold.len() != pred.len() {
        return Err(ScoreError::LineCount { gold: gold.len(), pred: pred.len() });
    }
    let mut totals = (0, 0, 0);
    for (line, (g, p)) in gold.iter().zip(pred).enumerate() {
        let (t, pr, c) =
            score_pair(g, p).map_err(|_| ScoreError::CharMismatch { line: line + 1 })?;
        totals.0 += t;
        totals.1 += pr;
        totals.2 += c;
    }
    Ok(EvalReport::from_counts(totals.0, totals.1, totals.2))
}

/// Scores a prediction file against a gold file.
pub fn score_corpus(
    gold_path: impl AsRef<Path>,
    pred_path: impl AsRef<Path>,
) -> Result<EvalReport, ScoreError> {
    let gold = read_segmented(gold_path)?;
    let pred = read_segmented(pred_path)?;
    score_sentences(&gold, &pred)
}
