//! Dual-LSTM-CRF segmenter and its six ablation configurations.
//!
//! A radical-level Bi-LSTM composes each character from its decomposition
//! sequence — the raw form sits next to the backward direction's recency,
//! the duplicated semantic component next to the forward direction's — and
//! a character-level Bi-LSTM captures sentence context before a CRF scores
//! the BMES tag sequence. Which tables and layers exist is decided by the
//! ablation:
//!
//! | ablation            | char table | radical LSTM | tied | bigram |
//! |---------------------|------------|--------------|------|--------|
//! | baseline            | yes        | no           | –    | no     |
//! | subchar             | yes¹       | no           | –    | no     |
//! | radical             | yes        | yes          | no   | no     |
//! | radical_no_char     | no         | yes          | no   | no     |
//! | radical_tie         | yes        | yes          | yes  | no     |
//! | radical_tie_bigram  | yes        | yes          | yes  | yes    |
//!
//! ¹ identical architecture to `baseline`; only the initialization changes
//! to the radical-aware per-character snapshot.

mod io;

pub use io::{load_model, save_model};

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alphabet::Alphabet;
use crate::corpus::{extract_bigrams, from_bmes, to_bmes, BigramVocab, Sentence, Tag, TaggedSentence};
use crate::embedding::EmbeddingSet;
use crate::lexicon::{DecomposeMode, RadicalLexicon, RadicalSequence};
use crate::nn::crf;
use crate::nn::lstm::{bilstm_states_t, bilstm_t, LstmIds, LstmLeaves};
use crate::nn::tape::{NodeId, Session};
use crate::nn::{Adam, GradSet, ParamId, ParamSet, Tensor};
use crate::scorer::EvalReport;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus error: {0}")]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("pretrained dimension {found} does not match configured k = {expected}")]
    PretrainedDim { expected: usize, found: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("non-finite loss in epoch {epoch}; best checkpoint retained")]
    NonFinite { epoch: usize },
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model version {0}")]
    Version(u32),
    #[error("model file failed its checksum")]
    Checksum,
    #[error("model file is truncated")]
    Truncated,
    #[error("model file field out of range: {0}")]
    Corrupt(&'static str),
    #[error("model file is missing tensor {0:?}")]
    MissingTensor(String),
    #[error("tensor {name:?} has shape {found_rows}×{found_cols}, expected {rows}×{cols}")]
    TensorShape { name: String, rows: usize, cols: usize, found_rows: usize, found_cols: usize },
}

/// The six training configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ablation {
    Baseline,
    Subchar,
    Radical,
    RadicalNoChar,
    RadicalTie,
    RadicalTieBigram,
}

impl Ablation {
    pub const ALL: [Ablation; 6] = [
        Ablation::Baseline,
        Ablation::Subchar,
        Ablation::Radical,
        Ablation::RadicalNoChar,
        Ablation::RadicalTie,
        Ablation::RadicalTieBigram,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Baseline => "baseline",
            Ablation::Subchar => "subchar",
            Ablation::Radical => "radical",
            Ablation::RadicalNoChar => "radical_no_char",
            Ablation::RadicalTie => "radical_tie",
            Ablation::RadicalTieBigram => "radical_tie_bigram",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Ablation::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn uses_radicals(self) -> bool {
        !matches!(self, Ablation::Baseline | Ablation::Subchar)
    }

    pub fn uses_char_embedding(self) -> bool {
        self != Ablation::RadicalNoChar
    }

    pub fn tied(self) -> bool {
        matches!(self, Ablation::RadicalTie | Ablation::RadicalTieBigram)
    }

    pub fn uses_bigrams(self) -> bool {
        self == Ablation::RadicalTieBigram
    }

    /// Decomposition demanded from the radical layer.
    pub fn decompose_mode(self) -> DecomposeMode {
        match self {
            Ablation::Baseline | Ablation::Subchar => DecomposeMode::CharOnly,
            Ablation::RadicalNoChar => DecomposeMode::RadicalsOnly,
            _ => DecomposeMode::Full,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub ablation: Ablation,
    /// Radical/character embedding dimension; the radical LSTM hidden size
    /// equals it so the composition lands in R^{2k}.
    pub k: usize,
    /// Character-context LSTM hidden size; the encoder output is R^{2d}.
    pub d: usize,
    /// Bigram embedding dimension, defaulting to `k`.
    pub bigram_dim: usize,
    /// Dropout rate on each Bi-LSTM layer's inputs, disabled at decode.
    pub dropout: f64,
    /// Feed the composition instead of concatenating it to the char vector.
    pub replace_char_with_composition: bool,
    pub freeze_embeddings: bool,
    /// Initialization seed.
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(ablation: Ablation) -> Self {
        ModelConfig {
            ablation,
            k: 100,
            d: 100,
            bigram_dim: 100,
            dropout: 0.5,
            replace_char_with_composition: false,
            freeze_embeddings: false,
            seed: 1,
        }
    }

    /// Whether the context LSTM input carries the char embedding.
    fn char_input_active(&self) -> bool {
        self.ablation.uses_char_embedding()
            && !(self.replace_char_with_composition && self.ablation.uses_radicals())
    }

    /// Width of the per-position context LSTM input.
    pub fn input_width(&self) -> usize {
        let mut width = 0;
        if self.char_input_active() {
            width += self.k;
        }
        if self.ablation.uses_radicals() {
            width += 2 * self.k;
        }
        if self.ablation.uses_bigrams() {
            width += self.bigram_dim;
        }
        width
    }
}

#[derive(Debug, Clone)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev-F1 improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            clip_norm: 5.0,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            seed: 1,
        }
    }
}

/// Per-epoch dev scores and the retained best checkpoint's position.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Dev F1 (percent) after each completed epoch.
    pub dev_f1: Vec<f64>,
    pub best_epoch: usize,
    pub best_f1: f64,
}

/// Assembled segmentation model: tables, both Bi-LSTMs, CRF, vocabularies.
#[derive(Debug, Clone)]
pub struct SegModel {
    pub config: ModelConfig,
    alphabet: Alphabet,
    bigrams: Option<BigramVocab>,
    lexicon: RadicalLexicon,
    params: ParamSet,
    char_table: Option<ParamId>,
    radical_table: Option<ParamId>,
    bigram_table: Option<ParamId>,
    radical_fwd: Option<LstmIds>,
    radical_bwd: Option<LstmIds>,
    ctx_fwd: LstmIds,
    ctx_bwd: LstmIds,
    emit_w: ParamId,
    emit_b: ParamId,
    trans: ParamId,
}

fn embedding_table(rows: usize, dim: usize, rng: &mut impl Rng) -> Tensor {
    let half = 0.5 / dim as f64;
    Tensor::from_vec(rows, dim, (0..rows * dim).map(|_| rng.random_range(-half..half)).collect())
}

impl SegModel {
    /// Builds a model over the training corpus' character vocabulary,
    /// optionally initializing tables from pretrained vectors.
    pub fn build(
        config: ModelConfig,
        lexicon: RadicalLexicon,
        train: &[Sentence],
        pretrained: Option<&EmbeddingSet>,
    ) -> Result<SegModel, ModelError> {
        if train.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        let mut seen = std::collections::HashSet::new();
        let mut chars = Vec::new();
        for sentence in train {
            for c in sentence.chars() {
                if seen.insert(c) {
                    chars.push(c);
                }
            }
        }
        let alphabet = match (config.ablation.uses_radicals(), config.ablation.tied()) {
            (false, _) => Alphabet::tied(chars, []),
            (true, true) => lexicon.build_alphabet(chars, true),
            (true, false) => lexicon.build_alphabet(chars, false),
        };
        let bigrams = config.ablation.uses_bigrams().then(|| BigramVocab::build(train));
        let mut model = Self::assemble(config, lexicon, alphabet, bigrams);
        if let Some(pre) = pretrained {
            model.load_pretrained(pre)?;
        }
        Ok(model)
    }

    /// Registers all parameters for the configuration at random init.
    fn assemble(
        config: ModelConfig,
        lexicon: RadicalLexicon,
        alphabet: Alphabet,
        bigrams: Option<BigramVocab>,
    ) -> SegModel {
        assert!(config.k > 0 && config.d > 0, "dimensions must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let k = config.k;

        let (char_table, radical_table) = match (
            config.ablation.uses_radicals(),
            config.ablation.tied(),
            config.ablation.uses_char_embedding(),
        ) {
            (false, _, _) => {
                let rows = alphabet.char_space().len();
                (Some(params.add("embed.char", embedding_table(rows, k, &mut rng))), None)
            }
            (true, true, _) => {
                let rows = alphabet.char_space().len();
                let shared = params.add("embed.shared", embedding_table(rows, k, &mut rng));
                (Some(shared), Some(shared))
            }
            (true, false, true) => {
                let char_rows = alphabet.char_space().len();
                let rad_rows = alphabet.radical_space().len();
                (
                    Some(params.add("embed.char", embedding_table(char_rows, k, &mut rng))),
                    Some(params.add("embed.radical", embedding_table(rad_rows, k, &mut rng))),
                )
            }
            (true, false, false) => {
                let rad_rows = alphabet.radical_space().len();
                (None, Some(params.add("embed.radical", embedding_table(rad_rows, k, &mut rng))))
            }
        };

        let bigram_table = bigrams.as_ref().map(|vocab| {
            params.add("embed.bigram", embedding_table(vocab.len(), config.bigram_dim, &mut rng))
        });

        let (radical_fwd, radical_bwd) = if config.ablation.uses_radicals() {
            (
                Some(LstmIds::register(&mut params, "rad_fwd", k, k, &mut rng)),
                Some(LstmIds::register(&mut params, "rad_bwd", k, k, &mut rng)),
            )
        } else {
            (None, None)
        };

        let width = config.input_width();
        let ctx_fwd = LstmIds::register(&mut params, "ctx_fwd", width, config.d, &mut rng);
        let ctx_bwd = LstmIds::register(&mut params, "ctx_bwd", width, config.d, &mut rng);

        let emit_w = params.add("emit.w", Tensor::glorot(Tag::COUNT, 2 * config.d, &mut rng));
        let emit_b = params.add("emit.b", Tensor::zeros(Tag::COUNT, 1));
        let size = crf::trans_size(Tag::COUNT);
        let trans = params.add("crf.trans", Tensor::zeros(size, size));

        SegModel {
            config,
            alphabet,
            bigrams,
            lexicon,
            params,
            char_table,
            radical_table,
            bigram_table,
            radical_fwd,
            radical_bwd,
            ctx_fwd,
            ctx_bwd,
            emit_w,
            emit_b,
            trans,
        }
    }

    /// Copies pretrained vectors into whichever tables exist.
    ///
    /// `subchar` snapshots each character as the sum of its decomposition
    /// tokens' vectors; every other configuration copies rows verbatim for
    /// tokens present in the pretrained space.
    fn load_pretrained(&mut self, pre: &EmbeddingSet) -> Result<(), ModelError> {
        if pre.dim() != self.config.k {
            return Err(ModelError::PretrainedDim { expected: self.config.k, found: pre.dim() });
        }
        let chars: Vec<char> = self.alphabet.char_space().chars().collect();
        if self.config.ablation == Ablation::Subchar {
            let table = self.char_table.expect("subchar keeps a char table");
            for c in chars {
                let seq = self.lexicon.decompose(c, DecomposeMode::Full);
                let mut sum = vec![0.0; self.config.k];
                let mut any = false;
                for &t in &seq.tokens {
                    if let Some(v) = pre.lookup_radical(t) {
                        for (s, x) in sum.iter_mut().zip(v) {
                            *s += x;
                        }
                        any = true;
                    }
                }
                if any {
                    let id = self.alphabet.char_space().id_or_unk(c) as usize;
                    self.params.get_mut(table).row_mut(id).copy_from_slice(&sum);
                }
            }
            return Ok(());
        }
        if let Some(table) = self.char_table {
            for &c in &chars {
                if let Some(v) = pre.lookup_char(c) {
                    let id = self.alphabet.char_space().id_or_unk(c) as usize;
                    self.params.get_mut(table).row_mut(id).copy_from_slice(v);
                }
            }
        }
        if let Some(table) = self.radical_table {
            let radicals: Vec<char> = self.alphabet.radical_space().chars().collect();
            for r in radicals {
                if let Some(v) = pre.lookup_radical(r) {
                    let id = self.alphabet.radical_space().id_or_unk(r) as usize;
                    self.params.get_mut(table).row_mut(id).copy_from_slice(v);
                }
            }
        }
        Ok(())
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn lexicon(&self) -> &RadicalLexicon {
        &self.lexicon
    }

    pub fn bigrams(&self) -> Option<&BigramVocab> {
        self.bigrams.as_ref()
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Same architecture and vocabularies over a replaced parameter set;
    /// shapes must match. Used by finite-difference audits.
    pub fn with_params(&self, params: ParamSet) -> SegModel {
        for (a, b) in self.params.ids().zip(params.ids()) {
            let (ours, theirs) = (self.params.get(a), params.get(b));
            assert!(
                ours.rows == theirs.rows && ours.cols == theirs.cols,
                "parameter shape mismatch at {}",
                self.params.name(a)
            );
        }
        SegModel { params, ..self.clone() }
    }

    /// Total rows across embedding tables (tied tables counted once).
    pub fn embedding_rows(&self) -> usize {
        let mut ids: Vec<ParamId> = Vec::new();
        for id in [self.char_table, self.radical_table, self.bigram_table].into_iter().flatten() {
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        ids.into_iter().map(|id| self.params.get(id).rows).sum()
    }

    /// Table and row backing a token's character-role lookup.
    pub fn char_embedding_slot(&self, c: char) -> Option<(ParamId, usize)> {
        self.char_table.map(|t| (t, self.alphabet.char_space().id_or_unk(c) as usize))
    }

    /// Table and row backing a token's radical-role lookup.
    pub fn radical_embedding_slot(&self, c: char) -> Option<(ParamId, usize)> {
        self.radical_table.map(|t| (t, self.alphabet.radical_space().id_or_unk(c) as usize))
    }

    fn frozen_ids(&self) -> Vec<ParamId> {
        if !self.config.freeze_embeddings {
            return Vec::new();
        }
        let mut ids: Vec<ParamId> = Vec::new();
        for id in [self.char_table, self.radical_table, self.bigram_table].into_iter().flatten() {
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        ids
    }

    /// Inverted-dropout mask: 0 with probability `rate`, else 1/(1−rate).
    fn draw_mask(width: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let keep = 1.0 - rate;
        (0..width).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect()
    }

    /// Composition `h^r = [→h_n ; ←h_1]` of one decomposition sequence.
    fn compose_on_tape(
        &self,
        sess: &mut Session,
        seq: &RadicalSequence,
        mask: Option<&[f64]>,
    ) -> NodeId {
        let table = self.radical_table.expect("composition requires a radical table");
        let fwd = self.radical_fwd.as_ref().expect("composition requires the radical LSTM");
        let bwd = self.radical_bwd.as_ref().expect("composition requires the radical LSTM");
        let fwd_leaves = LstmLeaves::new(sess, fwd);
        let bwd_leaves = LstmLeaves::new(sess, bwd);
        let tokens: Vec<NodeId> = seq
            .tokens
            .iter()
            .map(|&t| {
                let row = self.alphabet.radical_space().id_or_unk(t) as usize;
                let node = sess.param_row(table, row);
                match mask {
                    Some(m) => sess.tape.dropout(node, m.to_vec()),
                    None => node,
                }
            })
            .collect();
        let (forward, backward) = bilstm_states_t(&mut sess.tape, &fwd_leaves, &bwd_leaves, &tokens);
        sess.tape.concat(&[*forward.last().unwrap(), backward[0]])
    }

    /// Character composition from radicals, evaluated without dropout.
    pub fn compose_character(&self, seq: &RadicalSequence) -> Vec<f64> {
        let mut sess = Session::new(&self.params);
        let node = self.compose_on_tape(&mut sess, seq, None);
        sess.tape.value(node).to_vec()
    }

    /// Builds the per-position input, context encoding and emission rows.
    fn forward_on_tape(
        &self,
        sess: &mut Session,
        chars: &[char],
        mut dropout_rng: Option<&mut ChaCha8Rng>,
        cache_compositions: bool,
    ) -> ForwardNodes {
        assert!(!chars.is_empty(), "empty sentence");
        let rate = self.config.dropout;
        let dropout_active = rate > 0.0 && dropout_rng.is_some();
        // Masks are drawn per batch element and shared across positions, so
        // a cached composition and a recomputed one see the same mask.
        let rad_mask = (dropout_active && self.config.ablation.uses_radicals())
            .then(|| Self::draw_mask(self.config.k, rate, dropout_rng.as_deref_mut().unwrap()));
        let ctx_mask = dropout_active.then(|| {
            Self::draw_mask(self.config.input_width(), rate, dropout_rng.unwrap())
        });

        let mut compositions: HashMap<char, NodeId> = HashMap::new();
        let bigram_ids = self
            .bigrams
            .as_ref()
            .map(|vocab| extract_bigrams(chars, vocab).ids)
            .unwrap_or_default();

        let mut inputs = Vec::with_capacity(chars.len());
        for (t, &c) in chars.iter().enumerate() {
            let mut parts: Vec<NodeId> = Vec::with_capacity(3);
            if self.config.char_input_active() {
                let table = self.char_table.expect("char input requires a char table");
                let row = self.alphabet.char_space().id_or_unk(c) as usize;
                parts.push(sess.param_row(table, row));
            }
            if self.config.ablation.uses_radicals() {
                let node = if cache_compositions {
                    match compositions.get(&c) {
                        Some(&node) => node,
                        None => {
                            let seq =
                                self.lexicon.decompose(c, self.config.ablation.decompose_mode());
                            let node = self.compose_on_tape(sess, &seq, rad_mask.as_deref());
                            compositions.insert(c, node);
                            node
                        }
                    }
                } else {
                    let seq = self.lexicon.decompose(c, self.config.ablation.decompose_mode());
                    self.compose_on_tape(sess, &seq, rad_mask.as_deref())
                };
                parts.push(node);
            }
            if let Some(table) = self.bigram_table {
                parts.push(sess.param_row(table, bigram_ids[t] as usize));
            }
            let joined = if parts.len() == 1 { parts[0] } else { sess.tape.concat(&parts) };
            let dropped = match &ctx_mask {
                Some(m) => sess.tape.dropout(joined, m.clone()),
                None => joined,
            };
            inputs.push(dropped);
        }

        let fwd_leaves = LstmLeaves::new(sess, &self.ctx_fwd);
        let bwd_leaves = LstmLeaves::new(sess, &self.ctx_bwd);
        let hidden = bilstm_t(&mut sess.tape, &fwd_leaves, &bwd_leaves, &inputs);

        let w = sess.param(self.emit_w);
        let b = sess.param(self.emit_b);
        let emissions = hidden
            .iter()
            .map(|&h| {
                let wh = sess.tape.matvec(w, h);
                sess.tape.add(wh, b)
            })
            .collect();
        ForwardNodes { hidden, emissions }
    }

    /// Contextual representation `h_t^c ∈ R^{2d}` per position.
    pub fn encode_sentence(&self, chars: &[char]) -> Vec<Vec<f64>> {
        let mut sess = Session::new(&self.params);
        let nodes = self.forward_on_tape(&mut sess, chars, None, true);
        nodes.hidden.iter().map(|&h| sess.tape.value(h).to_vec()).collect()
    }

    /// CRF emission scores per position, dropout disabled.
    pub fn emissions(&self, chars: &[char]) -> Vec<Vec<f64>> {
        let mut sess = Session::new(&self.params);
        let nodes = self.forward_on_tape(&mut sess, chars, None, true);
        nodes.emissions.iter().map(|&e| sess.tape.value(e).to_vec()).collect()
    }

    /// Viterbi tag ids for a character sequence.
    pub fn decode_tags(&self, chars: &[char]) -> Vec<Tag> {
        let emissions = self.emissions(chars);
        let rows: Vec<&[f64]> = emissions.iter().map(Vec::as_slice).collect();
        let (path, _) = crf::viterbi(&rows, &self.params.get(self.trans).data, Tag::COUNT);
        path.into_iter().map(Tag::from_id).collect()
    }

    /// Segments one raw line; the output words always concatenate back to
    /// the input characters. An empty line yields no words.
    pub fn segment(&self, line: &str) -> Vec<String> {
        let chars: Vec<char> = line.trim().chars().collect();
        if chars.is_empty() {
            return Vec::new();
        }
        let tags = self.decode_tags(&chars);
        from_bmes(&chars, &tags).expect("decode produces one tag per character")
    }

    /// Word-level F1 (percent) of this model against gold segmentations.
    pub fn evaluate(&self, gold: &[Sentence]) -> f64 {
        let mut totals = (0usize, 0usize, 0usize);
        for sentence in gold {
            let raw: String = sentence.words.concat();
            let predicted = Sentence { words: self.segment(&raw) };
            let (t, p, c) = crate::scorer::score_pair(sentence, &predicted)
                .expect("segment conserves the character sequence");
            totals.0 += t;
            totals.1 += p;
            totals.2 += c;
        }
        EvalReport::from_counts(totals.0, totals.1, totals.2).f1 * 100.0
    }

    /// Mean negative log-likelihood node over a batch of tagged examples.
    fn batch_loss(
        &self,
        sess: &mut Session,
        batch: &[(Vec<char>, Vec<usize>)],
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> NodeId {
        let trans = sess.param(self.trans);
        let nlls: Vec<NodeId> = batch
            .iter()
            .map(|(chars, tags)| {
                let nodes =
                    self.forward_on_tape(sess, chars, dropout_rng.as_deref_mut(), true);
                let ll = sess.tape.crf_log_likelihood(&nodes.emissions, trans, Tag::COUNT, tags);
                sess.tape.scale(ll, -1.0)
            })
            .collect();
        let total = sess.tape.add_n(&nlls);
        sess.tape.scale(total, 1.0 / batch.len() as f64)
    }

    fn examples_of(batch: &[TaggedSentence]) -> Vec<(Vec<char>, Vec<usize>)> {
        batch
            .iter()
            .map(|t| (t.chars.clone(), t.tags.iter().map(|x| x.id()).collect()))
            .collect()
    }

    /// Mean negative log-likelihood of a tagged batch, dropout disabled.
    pub fn batch_nll(&self, batch: &[TaggedSentence]) -> f64 {
        self.loss_value(&Self::examples_of(batch))
    }

    /// Mean batch NLL plus its gradients for every parameter, dropout
    /// disabled. Gradients accumulate into `grads`.
    pub fn batch_nll_gradients(&self, batch: &[TaggedSentence], grads: &mut GradSet) -> f64 {
        self.loss_and_gradients(&Self::examples_of(batch), grads)
    }

    /// One gradient accumulation over a batch; returns the loss value.
    fn loss_and_gradients(&self, batch: &[(Vec<char>, Vec<usize>)], grads: &mut GradSet) -> f64 {
        let mut sess = Session::new(&self.params);
        let loss = self.batch_loss(&mut sess, batch, None);
        sess.backward(loss, grads);
        sess.tape.scalar(loss)
    }

    /// Loss value only, for finite-difference audits.
    fn loss_value(&self, batch: &[(Vec<char>, Vec<usize>)]) -> f64 {
        let mut sess = Session::new(&self.params);
        let loss = self.batch_loss(&mut sess, batch, None);
        sess.tape.scalar(loss)
    }

    /// Minimizes mean batch NLL with clipped Adam, evaluating dev F1 after
    /// every epoch. Keeps the best-dev checkpoint; stops after `patience`
    /// epochs without improvement. Deterministic under a fixed seed.
    pub fn train(
        &mut self,
        train: &[Sentence],
        dev: &[Sentence],
        hyper: &TrainHyper,
    ) -> Result<TrainReport, ModelError> {
        if train.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        let mut examples: Vec<(Vec<char>, Vec<usize>)> = Vec::with_capacity(train.len());
        for sentence in train {
            let tagged = to_bmes(sentence)?;
            examples.push((tagged.chars, tagged.tags.iter().map(|t| t.id()).collect()));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let mut adam = Adam::new(&self.params, hyper.learning_rate, hyper.beta1, hyper.beta2);
        let frozen = self.frozen_ids();
        let mut grads = GradSet::zeros_like(&self.params);

        let mut report = TrainReport { dev_f1: Vec::new(), best_epoch: 0, best_f1: f64::NEG_INFINITY };
        let mut best_params = self.params.clone();
        let mut stale = 0usize;

        let mut order: Vec<usize> = (0..examples.len()).collect();
        for epoch in 1..=hyper.max_epochs {
            order.shuffle(&mut rng);
            for batch_idx in order.chunks(hyper.batch_size) {
                let batch: Vec<(Vec<char>, Vec<usize>)> =
                    batch_idx.iter().map(|&i| examples[i].clone()).collect();
                grads.reset();
                let loss = {
                    let mut sess = Session::new(&self.params);
                    let dropout = (self.config.dropout > 0.0).then_some(&mut rng);
                    let loss = self.batch_loss(&mut sess, &batch, dropout);
                    sess.backward(loss, &mut grads);
                    sess.tape.scalar(loss)
                };
                if !loss.is_finite() || grads.has_nonfinite() {
                    self.params = best_params;
                    return Err(ModelError::NonFinite { epoch });
                }
                grads.clip_global_norm(hyper.clip_norm);
                adam.step(&mut self.params, &grads, |id| frozen.contains(&id));
            }

            let f1 = self.evaluate(dev);
            report.dev_f1.push(f1);
            if f1 > report.best_f1 {
                report.best_f1 = f1;
                report.best_epoch = epoch;
                best_params = self.params.clone();
                stale = 0;
            } else {
                stale += 1;
                if stale >= hyper.patience {
                    break;
                }
            }
        }
        self.params = best_params;
        Ok(report)
    }
}

struct ForwardNodes {
    hidden: Vec<NodeId>,
    emissions: Vec<NodeId>,
}
