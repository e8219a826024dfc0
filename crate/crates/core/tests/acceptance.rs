//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured values (run with `--nocapture` to see them).
//!
//! Oracles here are deliberately independent of the library internals:
//! CRF quantities are re-derived by exhaustive path enumeration, gradients
//! by central finite differences, and scoring by hand-built span sets.

use std::time::Instant;

use rand::rngs::SmallRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radseg_core::corpus::{to_bmes, Sentence};
use radseg_core::embedding::{cosine, pretrain_sentences, EmbeddingSet, PretrainConfig};
use radseg_core::lexicon::{DecomposeMode, RadicalLexicon};
use radseg_core::nn::crf;
use radseg_core::nn::{grad_check_blocks, GradSet};
use radseg_core::scorer::{score_pair, EvalReport};
use radseg_core::segmenter::{Ablation, ModelConfig, SegModel, TrainHyper};

// ---------------------------------------------------------------------------
// Independent oracles.

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Every tag path of length `n` over `num_tags` tags.
fn all_paths(n: usize, num_tags: usize) -> Vec<Vec<usize>> {
    let total = num_tags.pow(n as u32);
    (0..total)
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let t = code % num_tags;
                    code /= num_tags;
                    t
                })
                .collect()
        })
        .collect()
}

/// Path score recomputed from scratch (START row, STOP column convention).
fn oracle_path_score(e: &[Vec<f64>], trans: &[f64], num_tags: usize, tags: &[usize]) -> f64 {
    let size = num_tags + 2;
    let mut score = trans[num_tags * size + tags[0]];
    for (t, &tag) in tags.iter().enumerate() {
        score += e[t][tag];
    }
    for w in tags.windows(2) {
        score += trans[w[0] * size + w[1]];
    }
    score + trans[tags[tags.len() - 1] * size + num_tags + 1]
}

fn random_crf_instance(rng: &mut SmallRng, n: usize, num_tags: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let e = (0..n).map(|_| (0..num_tags).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
    let size = num_tags + 2;
    let trans = (0..size * size).map(|_| rng.random_range(-2.0..2.0)).collect();
    (e, trans)
}

fn rows(e: &[Vec<f64>]) -> Vec<&[f64]> {
    e.iter().map(Vec::as_slice).collect()
}

// ---------------------------------------------------------------------------
// Synthetic segmentation data with radical structure.

const SEMS: [char; 8] = ['水', '木', '火', '土', '金', '日', '月', '山'];
const PHOS: [char; 10] = ['可', '丁', '青', '白', '生', '方', '工', '马', '牛', '羊'];
const SINGLES: [char; 6] = ['的', '了', '在', '是', '我', '不'];

fn content_char(family: usize, phonetic: usize) -> char {
    char::from_u32(0x5100 + (family as u32) * 0x20 + phonetic as u32).unwrap()
}

fn synthetic_lexicon() -> RadicalLexicon {
    let mut entries = Vec::new();
    for (i, &sem) in SEMS.iter().enumerate() {
        for (j, &pho) in PHOS.iter().enumerate() {
            entries.push((content_char(i, j), vec![sem, pho], 0));
        }
    }
    RadicalLexicon::from_entries(entries)
}

/// Closed word vocabulary: two-character words stay within one semantic
/// family, so the radical structure carries a real segmentation signal.
fn synthetic_words() -> Vec<String> {
    let mut words = Vec::new();
    for i in 0..SEMS.len() {
        for j in 0..PHOS.len() {
            let mut w = String::new();
            w.push(content_char(i, j));
            w.push(content_char(i, (j + 1) % PHOS.len()));
            words.push(w);
        }
    }
    words
}

fn synthetic_corpus(sentences: usize, seed: u64) -> Vec<Sentence> {
    let words = synthetic_words();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Zipf-ish weights give the vocabulary a long tail of rare words whose
    // characters are still radical-related to frequent ones.
    let weights: Vec<f64> = (0..words.len()).map(|r| 1.0 / (r + 1) as f64).collect();
    let total: f64 = weights.iter().sum();
    let cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w / total;
            Some(*acc)
        })
        .collect();
    (0..sentences)
        .map(|_| {
            let len = rng.random_range(3..=8);
            let mut picked = Vec::with_capacity(len);
            for _ in 0..len {
                let kind: f64 = rng.random();
                if kind < 0.25 {
                    picked.push(SINGLES.choose(&mut rng).unwrap().to_string());
                } else if kind < 0.45 {
                    // Content characters double as single-character words,
                    // so the boundary decision is genuinely ambiguous.
                    let family = rng.random_range(0..SEMS.len());
                    let phonetic = rng.random_range(0..PHOS.len());
                    picked.push(content_char(family, phonetic).to_string());
                } else {
                    let x: f64 = rng.random();
                    let idx = cumulative.partition_point(|&c| c < x).min(words.len() - 1);
                    picked.push(words[idx].clone());
                }
            }
            Sentence::new(picked)
        })
        .collect()
}

// ---------------------------------------------------------------------------

#[test]
fn c01_crf_partition_matches_exhaustive_enumeration() {
    let start = Instant::now();
    let mut rng = SmallRng::seed_from_u64(101);
    let mut worst_z: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    for trial in 0..200 {
        let n = rng.random_range(1..=6);
        let (e, trans) = random_crf_instance(&mut rng, n, 4);
        let fast = crf::log_partition(&rows(&e), &trans, 4);
        let scores: Vec<f64> =
            all_paths(n, 4).iter().map(|p| oracle_path_score(&e, &trans, 4, p)).collect();
        let slow = logsumexp(&scores);
        worst_z = worst_z.max((fast - slow).abs());
        assert!((fast - slow).abs() < 1e-10, "criterion 1: trial {trial} n={n}");

        let total: f64 = all_paths(n, 4)
            .iter()
            .map(|p| crf::log_likelihood(&rows(&e), &trans, 4, p).exp())
            .sum();
        worst_sum = worst_sum.max((total - 1.0).abs());
        assert!((total - 1.0).abs() < 1e-8, "criterion 1: likelihoods sum to {total}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 10, "criterion 1 runtime {elapsed:?}");
    println!(
        "PASS criterion 1: CRF partition vs enumeration (200 instances, max |Δlog Z| = {worst_z:.2e}, max |Σp − 1| = {worst_sum:.2e}, {elapsed:.2?})"
    );
}

#[test]
fn c02_viterbi_matches_brute_force_maximum() {
    let start = Instant::now();
    let mut rng = SmallRng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let n = rng.random_range(1..=6);
        let (e, trans) = random_crf_instance(&mut rng, n, 4);
        let (path, score) = crf::viterbi(&rows(&e), &trans, 4);
        let best = all_paths(n, 4)
            .iter()
            .map(|p| oracle_path_score(&e, &trans, 4, p))
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max((score - best).abs());
        assert!((score - best).abs() < 1e-10, "criterion 2: trial {trial} n={n}");
        let rescored = oracle_path_score(&e, &trans, 4, &path);
        assert!((rescored - score).abs() < 1e-10, "criterion 2: path score mismatch");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 10, "criterion 2 runtime {elapsed:?}");
    println!(
        "PASS criterion 2: Viterbi vs brute-force maximum (200 instances, max |Δ| = {worst:.2e}, {elapsed:.2?})"
    );
}

fn audit_batch() -> (RadicalLexicon, Vec<Sentence>) {
    let lex = RadicalLexicon::from_reader(
        "明\t日 月\t0\n河\t水 可\t0\n汉\t水 又\t0\n好\t女 子\t0\n".as_bytes(),
    )
    .unwrap();
    let corpus = vec![
        Sentence::new(["明", "河水", "好"]),
        Sentence::new(["好汉", "明"]),
        Sentence::new(["河", "明月"]),
    ];
    (lex, corpus)
}

#[test]
fn c03_end_to_end_gradient_audit_for_every_ablation() {
    let start = Instant::now();
    let (lex, corpus) = audit_batch();
    let batch: Vec<_> = corpus[..2].iter().map(|s| to_bmes(s).unwrap()).collect();
    let mut worst_overall: f64 = 0.0;
    for ablation in Ablation::ALL {
        let config = ModelConfig {
            k: 3,
            d: 2,
            bigram_dim: 2,
            dropout: 0.0,
            ..ModelConfig::new(ablation)
        };
        let model = SegModel::build(config, lex.clone(), &corpus, None).unwrap();
        let mut grads = GradSet::zeros_like(model.params());
        model.batch_nll_gradients(&batch, &mut grads);
        let mut params = model.params().clone();
        let err = grad_check_blocks(&mut params, &grads, 1e-4, |ps| {
            model.with_params(ps.clone()).batch_nll(&batch)
        });
        worst_overall = worst_overall.max(err);
        assert!(err < 1e-4, "criterion 3: ablation {} error {err}", ablation.name());
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 120, "criterion 3 runtime {elapsed:?}");
    println!(
        "PASS criterion 3: end-to-end gradient audit, all 6 ablations (max rel err = {worst_overall:.2e} < 1e-4, {elapsed:.2?})"
    );
}

#[test]
fn c04_sgns_gradient_audit() {
    let lex = RadicalLexicon::from_reader("明\t日 月\t0\n".as_bytes()).unwrap();
    let mut rng = SmallRng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let alphabet = lex.build_alphabet(['明', '日', '火', '水', '口'], true);
        let mut set = EmbeddingSet::init(alphabet, 5, trial);
        for id in 0..set.alphabet().char_space().len() {
            for x in set.output_row_mut(id) {
                *x = rng.random_range(-0.8..0.8);
            }
        }
        let space = set.alphabet().char_space().clone();
        let rows: Vec<usize> = lex
            .decompose('明', DecomposeMode::Full)
            .tokens
            .iter()
            .map(|&t| space.id_or_unk(t) as usize)
            .collect();
        let ctx = space.id_or_unk('火') as usize;
        let negs = vec![space.id_or_unk('水') as usize, space.id_or_unk('口') as usize];

        // Analytic gradient recovered from one unit-rate step.
        let before = set.clone();
        let mut stepped = set.clone();
        stepped.sgns_step(&lex, DecomposeMode::Full, '明', '火', &['水', '口'], 1.0).unwrap();

        let eps = 1e-5;
        let dim = set.dim();
        let mut probe = |which_input: bool, row: usize, i: usize| {
            let analytic = if which_input {
                stepped.input_row(row)[i] - before.input_row(row)[i]
            } else {
                stepped.output_row(row)[i] - before.output_row(row)[i]
            };
            let mut plus = before.clone();
            let mut minus = before.clone();
            if which_input {
                plus.input_row_mut(row)[i] += eps;
                minus.input_row_mut(row)[i] -= eps;
            } else {
                plus.output_row_mut(row)[i] += eps;
                minus.output_row_mut(row)[i] -= eps;
            }
            let numeric = (plus.sgns_objective(&rows, ctx, &negs)
                - minus.sgns_objective(&rows, ctx, &negs))
                / (2.0 * eps);
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(err);
        };
        for &row in &rows {
            for i in 0..dim {
                probe(true, row, i);
            }
        }
        for &t in std::iter::once(&ctx).chain(&negs) {
            for i in 0..dim {
                probe(false, t, i);
            }
        }
    }
    assert!(worst < 1e-6, "criterion 4: max rel err {worst}");
    println!("PASS criterion 4: SGNS gradient audit (100 instances, max rel err = {worst:.2e} < 1e-6)");
}

#[test]
fn c05_decomposition_and_score_semantics() {
    let lex = RadicalLexicon::from_reader("明\t日 月\t0\n".as_bytes()).unwrap();
    let seq = lex.decompose('明', DecomposeMode::Full);
    assert_eq!(seq.tokens.len(), 4, "criterion 5: 4-token sequence");
    assert_eq!(seq.tokens[0], '明', "criterion 5: raw character first");
    assert_eq!(seq.tokens[1..], ['日', '月', '日'], "criterion 5: duplicated semantic radical");

    let mut rng = SmallRng::seed_from_u64(505);
    for trial in 0..100 {
        let alphabet = lex.build_alphabet(['明', '日', '星'], true);
        let mut set = EmbeddingSet::init(alphabet, 4, trial);
        for id in 0..set.alphabet().char_space().len() {
            for x in set.output_row_mut(id) {
                *x = rng.random_range(-1.0..1.0);
            }
        }
        let space = set.alphabet().char_space().clone();
        let whole = set.score(&lex, DecomposeMode::Full, '明', '星');
        let ctx = space.id_or_unk('星') as usize;
        let per_token: f64 = seq
            .tokens
            .iter()
            .map(|&t| {
                set.input_row(space.id_or_unk(t) as usize)
                    .iter()
                    .zip(set.output_row(ctx))
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .sum();
        assert_eq!(whole, per_token, "criterion 5: linearity exact, trial {trial}");
    }
    println!("PASS criterion 5: decomposition shape and exact radical-sum score linearity (100 instances)");
}

#[test]
fn c06_shared_radical_similarity_trend() {
    let start = Instant::now();
    let lex =
        RadicalLexicon::from_reader("a\tp q\t0\nb\tp q\t0\nc\tx y\t0\n".as_bytes()).unwrap();
    let mut sentences: Vec<Vec<char>> = Vec::new();
    for _ in 0..60 {
        sentences.push("adada".chars().collect());
        sentences.push("bebeb".chars().collect());
        sentences.push("cfcfc".chars().collect());
    }
    let mut margins = Vec::new();
    for seed in [1, 2, 3] {
        let cfg = PretrainConfig {
            dim: 25,
            epochs: 50,
            window: 2,
            negatives: 3,
            seed,
            ..PretrainConfig::default()
        };
        let set = pretrain_sentences(&sentences, &lex, &cfg).unwrap();
        let vec_of = |c| set.char_input_vector(&lex.decompose(c, DecomposeMode::Full));
        let ab = cosine(&vec_of('a'), &vec_of('b'));
        let ac = cosine(&vec_of('a'), &vec_of('c'));
        assert!(ab > ac, "criterion 6: seed {seed}: cos(a,b)={ab} vs cos(a,c)={ac}");
        margins.push(ab - ac);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "criterion 6 runtime {elapsed:?}");
    println!(
        "PASS criterion 6: shared-radical similarity, 3/3 seeds (margins {margins:.3?}, k=25, 50 epochs, {elapsed:.2?})"
    );
}

#[test]
fn c07_overfit_capacity_on_toy_corpus() {
    let start = Instant::now();
    let lex = synthetic_lexicon();
    let corpus = synthetic_corpus(50, 7);
    let config = ModelConfig {
        k: 32,
        d: 32,
        bigram_dim: 32,
        dropout: 0.0,
        ..ModelConfig::new(Ablation::RadicalTie)
    };
    let mut model = SegModel::build(config, lex, &corpus, None).unwrap();
    let hyper = TrainHyper {
        batch_size: 8,
        learning_rate: 2e-3,
        max_epochs: 50,
        patience: 50,
        ..TrainHyper::default()
    };
    let report = model.train(&corpus, &corpus, &hyper).unwrap();
    let elapsed = start.elapsed();
    assert!(
        report.best_f1 >= 99.0,
        "criterion 7: best train==eval F1 {:.2} after {} epochs",
        report.best_f1,
        report.dev_f1.len()
    );
    assert!(elapsed.as_secs() < 300, "criterion 7 runtime {elapsed:?}");
    println!(
        "PASS criterion 7: radical_tie overfits 50 sentences (F1 = {:.2} ≥ 99.0 at epoch {}, {elapsed:.2?})",
        report.best_f1, report.best_epoch
    );
}

#[test]
fn c08_ablation_direction_trend() {
    let start = Instant::now();
    let lex = synthetic_lexicon();
    let sentences = synthetic_corpus(2000, 8);
    let cut = sentences.len() - sentences.len().div_ceil(10);
    let (train, dev) = (&sentences[..cut], &sentences[cut..]);

    let mut table: Vec<(String, Vec<f64>)> = Vec::new();
    for ablation in [Ablation::Baseline, Ablation::RadicalTie] {
        let mut scores = Vec::new();
        for seed in [1, 2, 3] {
            let config = ModelConfig {
                k: 16,
                d: 16,
                bigram_dim: 16,
                dropout: 0.2,
                seed,
                ..ModelConfig::new(ablation)
            };
            let mut model = SegModel::build(config, lex.clone(), train, None).unwrap();
            let hyper = TrainHyper {
                batch_size: 32,
                learning_rate: 2e-3,
                max_epochs: 6,
                patience: 6,
                seed,
                ..TrainHyper::default()
            };
            let report = model.train(train, dev, &hyper).unwrap();
            scores.push(report.best_f1);
        }
        table.push((ablation.name().to_string(), scores));
    }

    println!("trend table (dev F1 over 3 seeds):");
    let mut means = Vec::new();
    for (name, scores) in &table {
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        means.push(mean);
        println!(
            "  {name:<14} {:>6.2} {:>6.2} {:>6.2}  mean {mean:.2}",
            scores[0], scores[1], scores[2]
        );
    }
    let (baseline_mean, tie_mean) = (means[0], means[1]);
    let elapsed = start.elapsed();
    assert!(
        tie_mean >= baseline_mean - 0.2,
        "criterion 8: radical_tie mean {tie_mean:.2} vs baseline mean {baseline_mean:.2}"
    );
    assert!(elapsed.as_secs() < 1800, "criterion 8 runtime {elapsed:?}");
    println!(
        "PASS criterion 8 (soft trend): radical_tie mean {tie_mean:.2} ≥ baseline mean {baseline_mean:.2} − 0.2 ({elapsed:.2?})"
    );
}

#[test]
fn c09_tying_reduces_rows_and_aliases_lookups() {
    let (lex, corpus) = audit_batch();
    let mut config = ModelConfig::new(Ablation::RadicalTie);
    config.k = 4;
    config.d = 3;
    let tied = SegModel::build(config.clone(), lex.clone(), &corpus, None).unwrap();
    config.ablation = Ablation::Radical;
    let untied = SegModel::build(config, lex.clone(), &corpus, None).unwrap();
    assert!(
        tied.embedding_rows() < untied.embedding_rows(),
        "criterion 9: {} vs {} rows",
        tied.embedding_rows(),
        untied.embedding_rows()
    );

    // One write must be visible through both lookup roles.
    let mut tied = tied;
    let seq = lex.decompose('河', DecomposeMode::Full);
    let before_compose = tied.compose_character(&seq);
    let before_encode = tied.encode_sentence(&['水']);
    let (table, row) = tied.radical_embedding_slot('水').unwrap();
    assert_eq!(tied.char_embedding_slot('水').unwrap(), (table, row));
    for x in tied.params_mut().get_mut(table).row_mut(row) {
        *x += 0.5;
    }
    assert_ne!(tied.compose_character(&seq), before_compose, "criterion 9: radical path");
    assert_ne!(tied.encode_sentence(&['水']), before_encode, "criterion 9: char path");
    println!(
        "PASS criterion 9: tying (rows {} < {}, one write visible through both roles)",
        tied.embedding_rows(),
        untied.embedding_rows()
    );
}

#[test]
fn c10_scorer_worked_example_and_properties() {
    let report = EvalReport::from_counts(3, 4, 2);
    assert_eq!(report.display_precision(), "50.0", "criterion 10");
    assert_eq!(report.display_recall(), "66.7", "criterion 10");
    assert_eq!(report.display_f1(), "57.1", "criterion 10");

    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let random_pair = |rng: &mut ChaCha8Rng| {
        let n = rng.random_range(2..=14);
        let chars: Vec<char> = (0..n).map(|i| char::from(b'a' + (i % 26) as u8)).collect();
        let cut = |rng: &mut ChaCha8Rng| {
            let mut words = Vec::new();
            let mut word = String::new();
            for (i, &c) in chars.iter().enumerate() {
                word.push(c);
                if i + 1 == chars.len() || rng.random::<bool>() {
                    words.push(std::mem::take(&mut word));
                }
            }
            Sentence { words }
        };
        (cut(rng), cut(rng))
    };
    for trial in 0..1000 {
        let (gold, pred) = random_pair(&mut rng);
        // Symmetry.
        let (t, p, c) = score_pair(&gold, &pred).unwrap();
        let forward = EvalReport::from_counts(t, p, c);
        let (t2, p2, c2) = score_pair(&pred, &gold).unwrap();
        let backward = EvalReport::from_counts(t2, p2, c2);
        assert!(
            (forward.precision - backward.recall).abs() < 1e-15
                && (forward.recall - backward.precision).abs() < 1e-15
                && (forward.f1 - backward.f1).abs() < 1e-15,
            "criterion 10: symmetry, trial {trial}"
        );
        // Identity.
        let (t, p, c) = score_pair(&gold, &gold).unwrap();
        let this = EvalReport::from_counts(t, p, c);
        assert_eq!((this.precision, this.recall, this.f1), (1.0, 1.0, 1.0), "criterion 10");
        // Monotonicity: one more correct predicted word.
        let c3 = c2.min(t2.saturating_sub(1)).min(p2);
        let before = EvalReport::from_counts(t2, p2, c3);
        let after = EvalReport::from_counts(t2, p2 + 1, c3 + 1);
        assert!(after.f1 >= before.f1 - 1e-15, "criterion 10: monotonicity, trial {trial}");
    }
    println!("PASS criterion 10: scorer worked example (50.0/66.7/57.1) and 1000 random-pair properties");
}

#[test]
fn c12_segment_conservation_on_random_lines() {
    let lex = synthetic_lexicon();
    let corpus = synthetic_corpus(40, 12);
    let config = ModelConfig {
        k: 8,
        d: 6,
        bigram_dim: 4,
        dropout: 0.0,
        ..ModelConfig::new(Ablation::RadicalTieBigram)
    };
    let model = SegModel::build(config, lex, &corpus, None).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(1212);
    let known: Vec<char> = synthetic_words().concat().chars().collect();
    let mut checked = 0usize;
    for _ in 0..10_000 {
        let len = rng.random_range(1..=20);
        let line: String = (0..len)
            .map(|_| match rng.random_range(0..4u8) {
                // In-vocabulary characters.
                0 | 1 => *known.choose(&mut rng).unwrap(),
                // OOV-heavy material: ASCII, random CJK, symbols.
                2 => char::from(rng.random_range(b'!'..=b'~')),
                _ => char::from_u32(rng.random_range(0x4E00..0x9FFF)).unwrap(),
            })
            .collect();
        let words = model.segment(&line);
        let rebuilt: String = words.concat();
        let expected: String = line.trim().chars().collect();
        assert_eq!(rebuilt, expected, "criterion 12: conservation broke on {line:?}");
        assert!(words.iter().all(|w| !w.is_empty()), "criterion 12: empty word");
        checked += 1;
    }
    assert!(model.segment("").is_empty(), "criterion 12: empty line");
    println!("PASS criterion 12: character conservation on {checked} random lines (OOV-heavy included)");
}
