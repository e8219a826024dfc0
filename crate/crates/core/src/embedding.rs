//! Joint character/radical pretraining with skip-gram negative sampling.
//!
//! A character is represented on the input side by the sum of the vectors
//! of its decomposition tokens, so the scoring function for a context
//! character `cy` is `s(cx, cy) = Σ_{r ∈ R_cx} z_r · v_cy`. Context vectors
//! are per-character and never decomposed. Characters and radicals live in
//! one tied token space during pretraining, which is what lets both levels
//! share a single vector space.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alphabet::{Alphabet, TokenSpace, PAD_TOKEN, UNK_TOKEN};
use crate::lexicon::{DecomposeMode, RadicalLexicon, RadicalSequence};

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("embedding I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary of {vocab} characters is smaller than negatives+1 = {needed}")]
    VocabTooSmall { vocab: usize, needed: usize },
    #[error("non-finite loss at epoch {epoch}, sentence {sentence}")]
    NonFinite { epoch: usize, sentence: usize },
    #[error("{path}: missing or malformed header (expected `<count> <dim>`)")]
    BadHeader { path: String },
    #[error("{path}:{line}: expected {expected} dimensions, found {found}")]
    DimMismatch { path: String, line: usize, expected: usize, found: usize },
    #[error("{path}:{line}: duplicate token {token:?}")]
    DuplicateToken { path: String, line: usize, token: String },
    #[error("{path}:{line}: token {token:?} is not a single code point")]
    BadToken { path: String, line: usize, token: String },
    #[error("{path}:{line}: malformed vector entry")]
    BadNumber { path: String, line: usize },
    #[error("embedding file not found at {path} (nor {path}.char/.rad)")]
    NotFound { path: String },
}

/// Pretraining hyper-parameters.
#[derive(Debug, Clone)]
pub struct PretrainConfig {
    /// Vector dimension k.
    pub dim: usize,
    /// Maximum context window; the effective window is drawn per position.
    pub window: usize,
    /// Negative samples per observed pair.
    pub negatives: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly to zero.
    pub learning_rate: f64,
    /// Characters rarer than this are dropped from the stream.
    pub min_count: usize,
    pub seed: u64,
    pub mode: DecomposeMode,
    /// Training threads. More than one trades determinism for speed.
    pub workers: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_count: 1,
            seed: 1,
            mode: DecomposeMode::Full,
            workers: 1,
        }
    }
}

/// Input (token) and output (context) vector tables over an [`Alphabet`].
///
/// The input table is packed: one row per token of the tied space, or the
/// character rows followed by the radical rows when untied. The output
/// table always indexes the character space. Context vectors are training
/// state; only the input table is persisted.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    alphabet: Alphabet,
    dim: usize,
    input: Vec<f64>,
    output: Vec<f64>,
}

impl EmbeddingSet {
    /// Word2vec-style init: input rows uniform in ±0.5/k, context rows zero.
    pub fn init(alphabet: Alphabet, dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "dimension must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input_len = alphabet.input_rows() * dim;
        let half = 0.5 / dim as f64;
        let input = (0..input_len).map(|_| rng.random_range(-half..half)).collect();
        let output = vec![0.0; alphabet.char_space().len() * dim];
        EmbeddingSet { alphabet, dim, input, output }
    }

    pub fn zeroed(alphabet: Alphabet, dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        let input = vec![0.0; alphabet.input_rows() * dim];
        let output = vec![0.0; alphabet.char_space().len() * dim];
        EmbeddingSet { alphabet, dim, input, output }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input_row(&self, row: usize) -> &[f64] {
        &self.input[row * self.dim..(row + 1) * self.dim]
    }

    pub fn input_row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.input[row * self.dim..(row + 1) * self.dim]
    }

    pub fn output_row(&self, id: usize) -> &[f64] {
        &self.output[id * self.dim..(id + 1) * self.dim]
    }

    pub fn output_row_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.output[id * self.dim..(id + 1) * self.dim]
    }

    /// Input vector of a token in its character role.
    pub fn lookup_char(&self, c: char) -> Option<&[f64]> {
        self.alphabet.char_space().id(c).map(|_| self.input_row(self.alphabet.char_row(c)))
    }

    /// Input vector of a token in its radical role.
    pub fn lookup_radical(&self, c: char) -> Option<&[f64]> {
        self.alphabet.radical_space().id(c).map(|_| self.input_row(self.alphabet.radical_row(c)))
    }

    fn sequence_rows(&self, seq: &RadicalSequence) -> Vec<usize> {
        // Tied spaces resolve both roles identically; in the untied case
        // every sequence token is treated in its radical role, matching the
        // decomposition's reading of the raw form as one more radical.
        seq.tokens.iter().map(|&t| self.alphabet.radical_row(t)).collect()
    }

    /// Sum of the input vectors over a decomposition sequence.
    pub fn char_input_vector(&self, seq: &RadicalSequence) -> Vec<f64> {
        let mut sum = vec![0.0; self.dim];
        for &t in &seq.tokens {
            let row = self.input_row(self.alphabet.radical_row(t));
            for (s, x) in sum.iter_mut().zip(row) {
                *s += x;
            }
        }
        sum
    }

    /// Radical-sum score `s(cx, cy) = Σ_{r ∈ R_cx} z_r · v_cy`.
    ///
    /// Accumulated per radical, so it is exactly the sum of the per-token
    /// scores; the factored form `char_input_vector(R_cx) · v_cy` agrees up
    /// to floating-point association.
    pub fn score(&self, lex: &RadicalLexicon, mode: DecomposeMode, cx: char, cy: char) -> f64 {
        let v = self.output_row(self.alphabet.char_space().id_or_unk(cy) as usize);
        lex.decompose(cx, mode)
            .tokens
            .iter()
            .map(|&t| dot(self.input_row(self.alphabet.radical_row(t)), v))
            .sum()
    }

    /// Objective ℓ of one (center, context, negatives) instance at current tables.
    pub fn sgns_objective(&self, input_rows: &[usize], ctx: usize, negatives: &[usize]) -> f64 {
        let u = self.sum_rows(input_rows);
        let mut loss = ln_sigmoid(dot(&u, self.output_row(ctx)));
        for &n in negatives {
            loss += ln_sigmoid(-dot(&u, self.output_row(n)));
        }
        loss
    }

    fn sum_rows(&self, rows: &[usize]) -> Vec<f64> {
        let mut sum = vec![0.0; self.dim];
        for &row in rows {
            for (s, x) in sum.iter_mut().zip(self.input_row(row)) {
                *s += x;
            }
        }
        sum
    }

    /// One gradient-ascent step on `log σ(s(cx,cy)) + Σ log σ(−s(cx,c_n))`.
    ///
    /// The gradient with respect to the summed input vector is applied to
    /// every row of the decomposition, so a duplicated semantic radical
    /// receives it twice. Returns the loss at the pre-step tables.
    pub fn sgns_step(
        &mut self,
        lex: &RadicalLexicon,
        mode: DecomposeMode,
        cx: char,
        cy: char,
        negatives: &[char],
        lr: f64,
    ) -> Result<f64, EmbeddingError> {
        let rows = self.sequence_rows(&lex.decompose(cx, mode));
        let ctx = self.alphabet.char_space().id_or_unk(cy) as usize;
        let negs: Vec<usize> =
            negatives.iter().map(|&n| self.alphabet.char_space().id_or_unk(n) as usize).collect();
        let loss = self.step_rows(&rows, ctx, &negs, lr);
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(EmbeddingError::NonFinite { epoch: 0, sentence: 0 })
        }
    }

    /// Core update on resolved rows. All deltas are computed from the
    /// pre-step tables before any write.
    fn step_rows(&mut self, input_rows: &[usize], ctx: usize, negatives: &[usize], lr: f64) -> f64 {
        let dim = self.dim;
        let u = self.sum_rows(input_rows);
        let mut grad_u = vec![0.0; dim];
        let mut loss;
        {
            let s = dot(&u, self.output_row(ctx));
            loss = ln_sigmoid(s);
            let g = 1.0 - sigmoid(s);
            let v = self.output_row_mut(ctx);
            for i in 0..dim {
                grad_u[i] += g * v[i];
                v[i] += lr * g * u[i];
            }
        }
        for &n in negatives {
            let s = dot(&u, self.output_row(n));
            loss += ln_sigmoid(-s);
            let g = -sigmoid(s);
            let v = self.output_row_mut(n);
            for i in 0..dim {
                grad_u[i] += g * v[i];
                v[i] += lr * g * u[i];
            }
        }
        for &row in input_rows {
            let z = self.input_row_mut(row);
            for i in 0..dim {
                z[i] += lr * grad_u[i];
            }
        }
        loss
    }

    pub fn has_nonfinite(&self) -> bool {
        self.input.iter().chain(&self.output).any(|x| !x.is_finite())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// log σ(x), stable for large |x|.
fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Cumulative unigram^0.75 noise distribution over character ids.
struct NoiseTable {
    ids: Vec<u32>,
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(vocab: &[(u32, u64)]) -> Self {
        let mut cumulative = Vec::with_capacity(vocab.len());
        let mut ids = Vec::with_capacity(vocab.len());
        let mut acc = 0.0;
        for &(id, count) in vocab {
            acc += (count as f64).powf(0.75);
            ids.push(id);
            cumulative.push(acc);
        }
        for c in &mut cumulative {
            *c /= acc;
        }
        NoiseTable { ids, cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> u32 {
        let x: f64 = rng.random();
        let idx = self.cumulative.partition_point(|&c| c < x);
        self.ids[idx.min(self.ids.len() - 1)]
    }

    /// Sample a negative id distinct from `ctx`, resampling on collision.
    fn sample_negative(&self, rng: &mut impl Rng, ctx: u32) -> u32 {
        for _ in 0..100 {
            let id = self.sample(rng);
            if id != ctx {
                return id;
            }
        }
        // Deterministic fallback for extremely skewed distributions.
        *self.ids.iter().find(|&&id| id != ctx).expect("vocabulary has at least two characters")
    }
}

struct PretrainPlan {
    alphabet: Alphabet,
    /// Input-table rows of each vocabulary character's decomposition.
    rows_by_char: Vec<Vec<usize>>,
    /// Sentence stream with out-of-vocabulary characters dropped.
    stream: Vec<Vec<u32>>,
    noise: NoiseTable,
    total_tokens: usize,
}

fn build_plan(
    sentences: &[Vec<char>],
    lex: &RadicalLexicon,
    cfg: &PretrainConfig,
) -> Result<PretrainPlan, EmbeddingError> {
    let mut counts: Vec<(char, u64)> = Vec::new();
    let mut index: std::collections::HashMap<char, usize> = std::collections::HashMap::new();
    for sentence in sentences {
        for &c in sentence {
            match index.get(&c) {
                Some(&i) => counts[i].1 += 1,
                None => {
                    index.insert(c, counts.len());
                    counts.push((c, 1));
                }
            }
        }
    }
    if counts.is_empty() {
        return Err(EmbeddingError::EmptyCorpus);
    }
    let vocab: Vec<(char, u64)> =
        counts.into_iter().filter(|&(_, n)| n as usize >= cfg.min_count).collect();
    if vocab.len() < cfg.negatives + 1 {
        return Err(EmbeddingError::VocabTooSmall {
            vocab: vocab.len(),
            needed: cfg.negatives + 1,
        });
    }

    let radicals: Vec<char> = if cfg.mode == DecomposeMode::CharOnly {
        Vec::new()
    } else {
        lex.radical_alphabet().to_vec()
    };
    let alphabet = Alphabet::tied(vocab.iter().map(|&(c, _)| c), radicals);

    let rows_by_char: Vec<Vec<usize>> = vocab
        .iter()
        .map(|&(c, _)| {
            lex.decompose(c, cfg.mode)
                .tokens
                .iter()
                .map(|&t| alphabet.char_row(t))
                .collect()
        })
        .collect();

    // vocab index i ↔ char id in the alphabet: chars were inserted first in
    // vocab order, so id = i + 2.
    let id_of_vocab = |i: usize| (i + 2) as u32;
    let noise = NoiseTable::new(
        &vocab.iter().enumerate().map(|(i, &(_, n))| (id_of_vocab(i), n)).collect::<Vec<_>>(),
    );

    let vocab_ids: std::collections::HashMap<char, u32> =
        vocab.iter().enumerate().map(|(i, &(c, _))| (c, id_of_vocab(i))).collect();
    let stream: Vec<Vec<u32>> = sentences
        .iter()
        .map(|s| s.iter().filter_map(|c| vocab_ids.get(c).copied()).collect())
        .filter(|ids: &Vec<u32>| !ids.is_empty())
        .collect();
    let total_tokens = stream.iter().map(Vec::len).sum();

    Ok(PretrainPlan { alphabet, rows_by_char, stream, noise, total_tokens })
}

/// Pretrains embeddings over the character stream of a corpus file.
///
/// Whitespace is a separator, never a token, so raw and pre-segmented
/// corpora both work. Deterministic for a fixed seed with one worker.
pub fn pretrain(
    corpus_path: impl AsRef<Path>,
    lex: &RadicalLexicon,
    cfg: &PretrainConfig,
) -> Result<EmbeddingSet, EmbeddingError> {
    let file = File::open(corpus_path)?;
    let sentences = read_char_stream(file)?;
    pretrain_sentences(&sentences, lex, cfg)
}

pub fn read_char_stream(reader: impl Read) -> Result<Vec<Vec<char>>, EmbeddingError> {
    let mut sentences = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        let chars: Vec<char> = line.chars().filter(|c| !c.is_whitespace()).collect();
        if !chars.is_empty() {
            sentences.push(chars);
        }
    }
    Ok(sentences)
}

pub fn pretrain_sentences(
    sentences: &[Vec<char>],
    lex: &RadicalLexicon,
    cfg: &PretrainConfig,
) -> Result<EmbeddingSet, EmbeddingError> {
    assert!(cfg.window >= 1, "window must be at least 1");
    let plan = build_plan(sentences, lex, cfg)?;
    if cfg.workers > 1 {
        return pretrain_parallel(plan, cfg);
    }

    let mut set = EmbeddingSet::init(plan.alphabet.clone(), cfg.dim, cfg.seed);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = (plan.total_tokens * cfg.epochs) as f64;
    let mut processed = 0usize;
    for epoch in 0..cfg.epochs {
        for (sent_idx, ids) in plan.stream.iter().enumerate() {
            for (pos, &center) in ids.iter().enumerate() {
                let alpha = cfg.learning_rate * (1.0 - processed as f64 / total);
                processed += 1;
                let rows = &plan.rows_by_char[center as usize - 2];
                let window = rng.random_range(1..=cfg.window) as isize;
                for offset in -window..=window {
                    if offset == 0 {
                        continue;
                    }
                    let Some(j) = pos.checked_add_signed(offset) else { continue };
                    let Some(&ctx) = ids.get(j) else { continue };
                    let negs: Vec<usize> = (0..cfg.negatives)
                        .map(|_| plan.noise.sample_negative(&mut rng, ctx) as usize)
                        .collect();
                    let loss = set.step_rows(rows, ctx as usize, &negs, alpha);
                    if !loss.is_finite() {
                        return Err(EmbeddingError::NonFinite { epoch, sentence: sent_idx });
                    }
                }
            }
        }
    }
    if set.has_nonfinite() {
        return Err(EmbeddingError::NonFinite { epoch: cfg.epochs, sentence: 0 });
    }
    Ok(set)
}

/// Hogwild-style sharded training: workers update shared tables through
/// relaxed atomics without locking. Races are tolerated; the result is
/// statistical, not bitwise.
fn pretrain_parallel(
    plan: PretrainPlan,
    cfg: &PretrainConfig,
) -> Result<EmbeddingSet, EmbeddingError> {
    let seeded = EmbeddingSet::init(plan.alphabet.clone(), cfg.dim, cfg.seed);
    let input: Vec<AtomicU64> = seeded.input.iter().map(|x| AtomicU64::new(x.to_bits())).collect();
    let output: Vec<AtomicU64> =
        seeded.output.iter().map(|x| AtomicU64::new(x.to_bits())).collect();
    let processed = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let total = (plan.total_tokens * cfg.epochs) as f64;
    let dim = cfg.dim;

    std::thread::scope(|scope| {
        for worker in 0..cfg.workers {
            let plan = &plan;
            let input = &input;
            let output = &output;
            let processed = &processed;
            let failed = &failed;
            scope.spawn(move || {
                let mut rng =
                    rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(worker as u64));
                let load = |cell: &AtomicU64| f64::from_bits(cell.load(Ordering::Relaxed));
                for _epoch in 0..cfg.epochs {
                    for ids in plan.stream.iter().skip(worker).step_by(cfg.workers) {
                        if failed.load(Ordering::Relaxed) {
                            return;
                        }
                        for (pos, &center) in ids.iter().enumerate() {
                            let done = processed.fetch_add(1, Ordering::Relaxed);
                            let alpha = cfg.learning_rate * (1.0 - done as f64 / total).max(0.0);
                            let rows = &plan.rows_by_char[center as usize - 2];
                            let window = rng.random_range(1..=cfg.window) as isize;
                            for offset in -window..=window {
                                if offset == 0 {
                                    continue;
                                }
                                let Some(j) = pos.checked_add_signed(offset) else { continue };
                                let Some(&ctx) = ids.get(j) else { continue };
                                let ctx = ctx as usize;

                                let mut u = vec![0.0; dim];
                                for &row in rows {
                                    for (i, s) in u.iter_mut().enumerate() {
                                        *s += load(&input[row * dim + i]);
                                    }
                                }
                                let mut grad_u = vec![0.0; dim];
                                let mut targets: Vec<(usize, f64)> =
                                    Vec::with_capacity(cfg.negatives + 1);
                                targets.push((ctx, 1.0));
                                for _ in 0..cfg.negatives {
                                    let n =
                                        plan.noise.sample_negative(&mut rng, ctx as u32) as usize;
                                    targets.push((n, 0.0));
                                }
                                for (t, label) in targets {
                                    let mut s = 0.0;
                                    for i in 0..dim {
                                        s += u[i] * load(&output[t * dim + i]);
                                    }
                                    if !s.is_finite() {
                                        failed.store(true, Ordering::Relaxed);
                                        return;
                                    }
                                    let g = label - sigmoid(s);
                                    for i in 0..dim {
                                        let cell = &output[t * dim + i];
                                        let v = load(cell);
                                        grad_u[i] += g * v;
                                        cell.store(
                                            (v + alpha * g * u[i]).to_bits(),
                                            Ordering::Relaxed,
                                        );
                                    }
                                }
                                for &row in rows {
                                    for i in 0..dim {
                                        let cell = &input[row * dim + i];
                                        let z = load(cell);
                                        cell.store(
                                            (z + alpha * grad_u[i]).to_bits(),
                                            Ordering::Relaxed,
                                        );
                                    }
                                }
                            }
                        }
                    }
                }
            });
        }
    });

    if failed.load(Ordering::Relaxed) {
        return Err(EmbeddingError::NonFinite { epoch: 0, sentence: 0 });
    }
    let set = EmbeddingSet {
        alphabet: plan.alphabet,
        dim: cfg.dim,
        input: input.iter().map(|c| f64::from_bits(c.load(Ordering::Relaxed))).collect(),
        output: output.iter().map(|c| f64::from_bits(c.load(Ordering::Relaxed))).collect(),
    };
    if set.has_nonfinite() {
        return Err(EmbeddingError::NonFinite { epoch: 0, sentence: 0 });
    }
    Ok(set)
}

// ---------------------------------------------------------------------------
// Text format: header `<count> <dim>`, one token per line, input table only.
// Context vectors are training state and are not persisted.

fn write_space(
    path: &Path,
    space: &TokenSpace,
    set: &EmbeddingSet,
    row_offset: usize,
) -> Result<(), EmbeddingError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{} {}", space.len(), set.dim)?;
    for id in 0..space.len() {
        write!(out, "{}", space.token(id as u32))?;
        for x in set.input_row(row_offset + id) {
            write!(out, " {:.6}", x)?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Saves the input table: one file for a tied set, `.char` and `.rad`
/// files for an untied one.
pub fn save_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
    let path = path.as_ref();
    if set.alphabet.is_tied() {
        write_space(path, set.alphabet.char_space(), set, 0)
    } else {
        let chars = set.alphabet.char_space();
        write_space(&suffixed(path, "char"), chars, set, 0)?;
        write_space(&suffixed(path, "rad"), set.alphabet.radical_space(), set, chars.len())
    }
}

fn suffixed(path: &Path, suffix: &str) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".");
    name.push(suffix);
    std::path::PathBuf::from(name)
}

struct LoadedSpace {
    space: TokenSpace,
    rows: Vec<Vec<f64>>,
    dim: usize,
}

fn read_space(path: &Path) -> Result<LoadedSpace, EmbeddingError> {
    let display = path.display().to_string();
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| EmbeddingError::BadHeader { path: display.clone() })?;
    let mut parts = header.split_whitespace();
    let (_count, dim) = match (parts.next(), parts.next(), parts.next()) {
        (Some(c), Some(d), None) => (
            c.parse::<usize>().map_err(|_| EmbeddingError::BadHeader { path: display.clone() })?,
            d.parse::<usize>().map_err(|_| EmbeddingError::BadHeader { path: display.clone() })?,
        ),
        _ => return Err(EmbeddingError::BadHeader { path: display }),
    };

    let mut tokens: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts
            .next()
            .ok_or_else(|| EmbeddingError::BadHeader { path: display.clone() })?
            .to_string();
        let vector: Vec<f64> = parts
            .map(|p| p.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| EmbeddingError::BadNumber { path: display.clone(), line: line_no })?;
        if vector.len() != dim {
            return Err(EmbeddingError::DimMismatch {
                path: display,
                line: line_no,
                expected: dim,
                found: vector.len(),
            });
        }
        if !seen.insert(token.clone()) {
            return Err(EmbeddingError::DuplicateToken { path: display, line: line_no, token });
        }
        if token != PAD_TOKEN && token != UNK_TOKEN && token.chars().count() != 1 {
            return Err(EmbeddingError::BadToken { path: display, line: line_no, token });
        }
        tokens.push(token);
        rows.push(vector);
    }

    // Files produced here always start with the reserved rows; plain
    // word2vec-style files without them get zero rows synthesized.
    let has_reserved = tokens.first().map(String::as_str) == Some(PAD_TOKEN)
        && tokens.get(1).map(String::as_str) == Some(UNK_TOKEN);
    let (tokens, rows) = if has_reserved {
        (tokens, rows)
    } else {
        let mut t = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        t.extend(tokens);
        let mut r = vec![vec![0.0; dim], vec![0.0; dim]];
        r.extend(rows);
        (t, r)
    };
    let space = TokenSpace::from_tokens(tokens[2..].iter().map(|t| t.chars().next().unwrap()));
    Ok(LoadedSpace { space, rows, dim })
}

/// Loads a saved input table; the context table comes back zeroed.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet, EmbeddingError> {
    let path = path.as_ref();
    if path.exists() {
        let loaded = read_space(path)?;
        let alphabet = Alphabet::from_spaces(loaded.space, None);
        let mut set = EmbeddingSet::zeroed(alphabet, loaded.dim);
        for (row, vector) in loaded.rows.iter().enumerate() {
            set.input_row_mut(row).copy_from_slice(vector);
        }
        return Ok(set);
    }
    let char_path = suffixed(path, "char");
    let rad_path = suffixed(path, "rad");
    if !char_path.exists() || !rad_path.exists() {
        return Err(EmbeddingError::NotFound { path: path.display().to_string() });
    }
    let chars = read_space(&char_path)?;
    let rads = read_space(&rad_path)?;
    if chars.dim != rads.dim {
        return Err(EmbeddingError::DimMismatch {
            path: rad_path.display().to_string(),
            line: 1,
            expected: chars.dim,
            found: rads.dim,
        });
    }
    let char_rows = chars.rows.len();
    let alphabet = Alphabet::from_spaces(chars.space, Some(rads.space));
    let mut set = EmbeddingSet::zeroed(alphabet, chars.dim);
    for (row, vector) in chars.rows.iter().enumerate() {
        set.input_row_mut(row).copy_from_slice(vector);
    }
    for (row, vector) in rads.rows.iter().enumerate() {
        set.input_row_mut(char_rows + row).copy_from_slice(vector);
    }
    Ok(set)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}
