//! Linear-chain CRF: log-partition, gold-path likelihood, Viterbi.
//!
//! Transitions form a `(T+2) × (T+2)` row-major matrix over the tags plus
//! START (row `T`, source only) and STOP (column `T+1`, sink only). A path
//! scores `A[START,y_1] + Σ_t e[t][y_t] + Σ_t A[y_t,y_{t+1}] + A[y_n,STOP]`.
//! Everything runs in log space with max-shifted log-sum-exp.

pub fn start_tag(num_tags: usize) -> usize {
    num_tags
}

pub fn stop_tag(num_tags: usize) -> usize {
    num_tags + 1
}

/// Row-major side length of the transition matrix.
pub fn trans_size(num_tags: usize) -> usize {
    num_tags + 2
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// log Σ over all tag paths of exp(path score).
pub fn log_partition(emissions: &[&[f64]], trans: &[f64], num_tags: usize) -> f64 {
    let n = emissions.len();
    assert!(n >= 1, "empty sequence");
    let size = trans_size(num_tags);
    assert_eq!(trans.len(), size * size, "transition matrix shape mismatch");
    let start = start_tag(num_tags);
    let stop = stop_tag(num_tags);

    let mut alpha: Vec<f64> =
        (0..num_tags).map(|j| trans[start * size + j] + emissions[0][j]).collect();
    let mut scratch = vec![0.0; num_tags];
    for e in &emissions[1..] {
        let mut next = vec![0.0; num_tags];
        for (j, slot) in next.iter_mut().enumerate() {
            for i in 0..num_tags {
                scratch[i] = alpha[i] + trans[i * size + j];
            }
            *slot = logsumexp(&scratch) + e[j];
        }
        alpha = next;
    }
    for i in 0..num_tags {
        scratch[i] = alpha[i] + trans[i * size + stop];
    }
    logsumexp(&scratch)
}

/// Score of one tag path, including START/STOP transitions.
pub fn path_score(emissions: &[&[f64]], trans: &[f64], num_tags: usize, tags: &[usize]) -> f64 {
    assert_eq!(emissions.len(), tags.len(), "one emission row per tag");
    assert!(!tags.is_empty(), "empty sequence");
    assert!(tags.iter().all(|&t| t < num_tags), "invalid tag id");
    let size = trans_size(num_tags);
    let mut score = trans[start_tag(num_tags) * size + tags[0]];
    for (t, &tag) in tags.iter().enumerate() {
        score += emissions[t][tag];
    }
    for w in tags.windows(2) {
        score += trans[w[0] * size + w[1]];
    }
    score + trans[tags[tags.len() - 1] * size + stop_tag(num_tags)]
}

/// Gold-path score minus the log-partition; never positive.
pub fn log_likelihood(emissions: &[&[f64]], trans: &[f64], num_tags: usize, tags: &[usize]) -> f64 {
    path_score(emissions, trans, num_tags, tags) - log_partition(emissions, trans, num_tags)
}

/// Highest-scoring tag path and its score.
///
/// Ties break toward the lowest tag id at every backtracking step, so
/// decoding is deterministic.
pub fn viterbi(emissions: &[&[f64]], trans: &[f64], num_tags: usize) -> (Vec<usize>, f64) {
    let n = emissions.len();
    assert!(n >= 1, "empty sequence");
    let size = trans_size(num_tags);
    let start = start_tag(num_tags);
    let stop = stop_tag(num_tags);

    let mut delta: Vec<f64> =
        (0..num_tags).map(|j| trans[start * size + j] + emissions[0][j]).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(n);
    for e in &emissions[1..] {
        let mut next = vec![f64::NEG_INFINITY; num_tags];
        let mut pointers = vec![0usize; num_tags];
        for j in 0..num_tags {
            let mut best = f64::NEG_INFINITY;
            let mut best_i = 0;
            for (i, &d) in delta.iter().enumerate() {
                let cand = d + trans[i * size + j];
                if cand > best {
                    best = cand;
                    best_i = i;
                }
            }
            next[j] = best + e[j];
            pointers[j] = best_i;
        }
        delta = next;
        back.push(pointers);
    }

    let mut best = f64::NEG_INFINITY;
    let mut best_j = 0;
    for (j, &d) in delta.iter().enumerate() {
        let cand = d + trans[j * size + stop];
        if cand > best {
            best = cand;
            best_j = j;
        }
    }

    let mut path = vec![best_j; n];
    for (t, pointers) in back.iter().enumerate().rev() {
        path[t] = pointers[path[t + 1]];
    }
    (path, best)
}

/// Exact posteriors from the forward-backward recursion.
pub(crate) struct Posterior {
    /// `marginals[t][j] = P(y_t = j)`.
    pub marginals: Vec<Vec<f64>>,
    /// Expected transition counts, `(T+2)²` row-major, including the
    /// START row and STOP column.
    pub expected_trans: Vec<f64>,
}

pub(crate) fn posterior(emissions: &[&[f64]], trans: &[f64], num_tags: usize) -> Posterior {
    let n = emissions.len();
    assert!(n >= 1, "empty sequence");
    let size = trans_size(num_tags);
    let start = start_tag(num_tags);
    let stop = stop_tag(num_tags);

    // alpha[t][j]: log-sum over prefixes ending in tag j at t (emission at t
    // included). beta[t][i]: log-sum over suffixes from tag i at t (emission
    // at t excluded).
    let mut alpha = vec![vec![0.0; num_tags]; n];
    for j in 0..num_tags {
        alpha[0][j] = trans[start * size + j] + emissions[0][j];
    }
    let mut scratch = vec![0.0; num_tags];
    for t in 1..n {
        for j in 0..num_tags {
            for i in 0..num_tags {
                scratch[i] = alpha[t - 1][i] + trans[i * size + j];
            }
            alpha[t][j] = logsumexp(&scratch) + emissions[t][j];
        }
    }
    let mut beta = vec![vec![0.0; num_tags]; n];
    for i in 0..num_tags {
        beta[n - 1][i] = trans[i * size + stop];
    }
    for t in (0..n - 1).rev() {
        for i in 0..num_tags {
            for j in 0..num_tags {
                scratch[j] = trans[i * size + j] + emissions[t + 1][j] + beta[t + 1][j];
            }
            beta[t][i] = logsumexp(&scratch);
        }
    }
    for i in 0..num_tags {
        scratch[i] = alpha[n - 1][i] + beta[n - 1][i];
    }
    let log_z = logsumexp(&scratch);

    let marginals: Vec<Vec<f64>> = (0..n)
        .map(|t| (0..num_tags).map(|j| (alpha[t][j] + beta[t][j] - log_z).exp()).collect())
        .collect();

    let mut expected = vec![0.0; size * size];
    for (j, m) in marginals[0].iter().enumerate() {
        expected[start * size + j] = *m;
    }
    for (i, m) in marginals[n - 1].iter().enumerate() {
        expected[i * size + stop] = *m;
    }
    for t in 0..n - 1 {
        for i in 0..num_tags {
            for j in 0..num_tags {
                expected[i * size + j] += (alpha[t][i]
                    + trans[i * size + j]
                    + emissions[t + 1][j]
                    + beta[t + 1][j]
                    - log_z)
                    .exp();
            }
        }
    }
    Posterior { marginals, expected_trans: expected }
}
