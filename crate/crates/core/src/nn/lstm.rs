//! LSTM cell and bidirectional encoder, in plain and taped forms.
//!
//! The cell is the standard formulation without peepholes:
//! `i,f,o = σ(Wx + Uh + b)`, `g = tanh(Wx + Uh + b)`,
//! `c = f⊙c_prev + i⊙g`, `h = o⊙tanh(c)`. Forget-gate biases initialize
//! to 1.0, all other biases to zero, matrices Glorot-uniform.

use rand::Rng;

use super::tape::{NodeId, Session, Tape};
use super::{ParamId, ParamSet, Tensor};

/// Gate order used throughout: input, forget, output, cell candidate.
pub const GATE_NAMES: [&str; 4] = ["i", "f", "o", "g"];
const FORGET: usize = 1;

/// Parameter handles of one directional LSTM.
#[derive(Debug, Clone)]
pub struct LstmIds {
    pub input_dim: usize,
    pub hidden: usize,
    pub w: [ParamId; 4],
    pub u: [ParamId; 4],
    pub b: [ParamId; 4],
}

impl LstmIds {
    /// Registers freshly initialized gate parameters under `prefix`.
    pub fn register(
        params: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(input_dim > 0 && hidden > 0, "lstm dims must be positive");
        let mut w = Vec::new();
        let mut u = Vec::new();
        let mut b = Vec::new();
        for (k, gate) in GATE_NAMES.iter().enumerate() {
            w.push(params.add(format!("{prefix}.w_{gate}"), Tensor::glorot(hidden, input_dim, rng)));
            u.push(params.add(format!("{prefix}.u_{gate}"), Tensor::glorot(hidden, hidden, rng)));
            let mut bias = Tensor::zeros(hidden, 1);
            if k == FORGET {
                bias.data.fill(1.0);
            }
            b.push(params.add(format!("{prefix}.b_{gate}"), bias));
        }
        LstmIds {
            input_dim,
            hidden,
            w: [w[0], w[1], w[2], w[3]],
            u: [u[0], u[1], u[2], u[3]],
            b: [b[0], b[1], b[2], b[3]],
        }
    }
}

fn matvec_into(out: &mut [f64], m: &Tensor, x: &[f64]) {
    assert_eq!(m.cols, x.len(), "matvec shape mismatch");
    for (r, slot) in out.iter_mut().enumerate() {
        *slot += m.row(r).iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One cell step; returns `(h, c)`.
#[allow(clippy::needless_range_loop)] // four gates share the index
pub fn lstm_cell(
    params: &ParamSet,
    ids: &LstmIds,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let hidden = ids.hidden;
    assert_eq!(x.len(), ids.input_dim, "input width mismatch");
    assert_eq!(h_prev.len(), hidden, "hidden state width mismatch");
    assert_eq!(c_prev.len(), hidden, "cell state width mismatch");

    let mut pre = [
        vec![0.0; hidden],
        vec![0.0; hidden],
        vec![0.0; hidden],
        vec![0.0; hidden],
    ];
    for k in 0..4 {
        pre[k].copy_from_slice(&params.get(ids.b[k]).data);
        matvec_into(&mut pre[k], params.get(ids.w[k]), x);
        matvec_into(&mut pre[k], params.get(ids.u[k]), h_prev);
    }
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    for j in 0..hidden {
        let i = sigmoid(pre[0][j]);
        let f = sigmoid(pre[1][j]);
        let o = sigmoid(pre[2][j]);
        let g = pre[3][j].tanh();
        c[j] = f * c_prev[j] + i * g;
        h[j] = o * c[j].tanh();
    }
    (h, c)
}

/// Per-direction hidden states over a sequence, initial states zero.
///
/// Both vectors are indexed by the original position: `backward[t]` is the
/// backward LSTM's state after reading `x_n .. x_t`.
pub fn bilstm_states(
    params: &ParamSet,
    fwd: &LstmIds,
    bwd: &LstmIds,
    xs: &[Vec<f64>],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    assert!(!xs.is_empty(), "empty sequence");
    let mut forward = Vec::with_capacity(xs.len());
    let mut h = vec![0.0; fwd.hidden];
    let mut c = vec![0.0; fwd.hidden];
    for x in xs {
        let (nh, nc) = lstm_cell(params, fwd, x, &h, &c);
        forward.push(nh.clone());
        h = nh;
        c = nc;
    }
    let mut backward = vec![Vec::new(); xs.len()];
    let mut h = vec![0.0; bwd.hidden];
    let mut c = vec![0.0; bwd.hidden];
    for (t, x) in xs.iter().enumerate().rev() {
        let (nh, nc) = lstm_cell(params, bwd, x, &h, &c);
        backward[t] = nh.clone();
        h = nh;
        c = nc;
    }
    (forward, backward)
}

/// Position-wise `[→h_t ; ←h_t]`, each row of width `2·hidden`.
pub fn bilstm(params: &ParamSet, fwd: &LstmIds, bwd: &LstmIds, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (forward, backward) = bilstm_states(params, fwd, bwd, xs);
    forward
        .into_iter()
        .zip(backward)
        .map(|(mut f, b)| {
            f.extend(b);
            f
        })
        .collect()
}

/// Tape leaves of one directional LSTM's parameters.
#[derive(Debug, Clone)]
pub struct LstmLeaves {
    pub hidden: usize,
    w: [NodeId; 4],
    u: [NodeId; 4],
    b: [NodeId; 4],
}

impl LstmLeaves {
    pub fn new(session: &mut Session, ids: &LstmIds) -> Self {
        LstmLeaves {
            hidden: ids.hidden,
            w: ids.w.map(|id| session.param(id)),
            u: ids.u.map(|id| session.param(id)),
            b: ids.b.map(|id| session.param(id)),
        }
    }
}

/// Taped cell step; returns `(h, c)` nodes.
#[allow(clippy::needless_range_loop)] // four gates share the index
pub fn lstm_cell_t(
    tape: &mut Tape,
    leaves: &LstmLeaves,
    x: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
) -> (NodeId, NodeId) {
    let mut gates = [0usize; 4];
    for k in 0..4 {
        let wx = tape.matvec(leaves.w[k], x);
        let uh = tape.matvec(leaves.u[k], h_prev);
        let lin = tape.add(wx, uh);
        gates[k] = tape.add(lin, leaves.b[k]);
    }
    let i = tape.sigmoid(gates[0]);
    let f = tape.sigmoid(gates[1]);
    let o = tape.sigmoid(gates[2]);
    let g = tape.tanh(gates[3]);
    let fc = tape.mul(f, c_prev);
    let ig = tape.mul(i, g);
    let c = tape.add(fc, ig);
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc);
    (h, c)
}

/// Taped per-direction states, indexed by original position.
pub fn bilstm_states_t(
    tape: &mut Tape,
    fwd: &LstmLeaves,
    bwd: &LstmLeaves,
    xs: &[NodeId],
) -> (Vec<NodeId>, Vec<NodeId>) {
    assert!(!xs.is_empty(), "empty sequence");
    let zero_f = tape.leaf(vec![0.0; fwd.hidden]);
    let mut forward = Vec::with_capacity(xs.len());
    let (mut h, mut c) = (zero_f, zero_f);
    for &x in xs {
        let (nh, nc) = lstm_cell_t(tape, fwd, x, h, c);
        forward.push(nh);
        h = nh;
        c = nc;
    }
    let zero_b = tape.leaf(vec![0.0; bwd.hidden]);
    let mut backward = vec![0usize; xs.len()];
    let (mut h, mut c) = (zero_b, zero_b);
    for (t, &x) in xs.iter().enumerate().rev() {
        let (nh, nc) = lstm_cell_t(tape, bwd, x, h, c);
        backward[t] = nh;
        h = nh;
        c = nc;
    }
    (forward, backward)
}

/// Taped position-wise `[→h_t ; ←h_t]`.
pub fn bilstm_t(tape: &mut Tape, fwd: &LstmLeaves, bwd: &LstmLeaves, xs: &[NodeId]) -> Vec<NodeId> {
    let (forward, backward) = bilstm_states_t(tape, fwd, bwd, xs);
    forward
        .into_iter()
        .zip(backward)
        .map(|(f, b)| tape.concat(&[f, b]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, GradSet};
    use rand::rngs::SmallRng;
    use rand::SeedableRng;

    fn zero_lstm(params: &mut ParamSet, prefix: &str, input_dim: usize, hidden: usize) -> LstmIds {
        let mut rng = SmallRng::seed_from_u64(0);
        let ids = LstmIds::register(params, prefix, input_dim, hidden, &mut rng);
        for k in 0..4 {
            params.get_mut(ids.w[k]).data.fill(0.0);
            params.get_mut(ids.u[k]).data.fill(0.0);
            params.get_mut(ids.b[k]).data.fill(0.0);
        }
        ids
    }

    #[test]
    fn forget_bias_initializes_to_one() {
        let mut ps = ParamSet::new();
        let mut rng = SmallRng::seed_from_u64(1);
        let ids = LstmIds::register(&mut ps, "t", 3, 2, &mut rng);
        assert!(ps.get(ids.b[FORGET]).data.iter().all(|&x| x == 1.0));
        assert!(ps.get(ids.b[0]).data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_everything_yields_zero_states() {
        let mut ps = ParamSet::new();
        let ids = zero_lstm(&mut ps, "z", 2, 3);
        let (h, c) = lstm_cell(&ps, &ids, &[0.0, 0.0], &[0.0; 3], &[0.0; 3]);
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(c, vec![0.0; 3]);
    }

    #[test]
    fn saturated_forget_carries_cell_state() {
        let mut ps = ParamSet::new();
        let ids = zero_lstm(&mut ps, "carry", 2, 3);
        // f-gate pinned to 1, i-gate to 0.
        ps.get_mut(ids.b[FORGET]).data.fill(100.0);
        ps.get_mut(ids.b[0]).data.fill(-100.0);
        let c_prev = vec![0.7, -1.3, 0.25];
        let (_, c) = lstm_cell(&ps, &ids, &[0.4, -0.2], &[0.1; 3], &c_prev);
        for (a, b) in c.iter().zip(&c_prev) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    /// Straight-line reimplementation of the five cell equations,
    /// independent of the production loops.
    fn cell_oracle(
        ps: &ParamSet,
        ids: &LstmIds,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let hidden = ids.hidden;
        let gate = |w: ParamId, u: ParamId, b: ParamId, j: usize| -> f64 {
            let mut s = ps.get(b).data[j];
            for (col, &xv) in x.iter().enumerate() {
                s += ps.get(w).data[j * ids.input_dim + col] * xv;
            }
            for (col, &hv) in h_prev.iter().enumerate() {
                s += ps.get(u).data[j * hidden + col] * hv;
            }
            s
        };
        let mut h = vec![0.0; hidden];
        let mut c = vec![0.0; hidden];
        for j in 0..hidden {
            let i = 1.0 / (1.0 + (-gate(ids.w[0], ids.u[0], ids.b[0], j)).exp());
            let f = 1.0 / (1.0 + (-gate(ids.w[1], ids.u[1], ids.b[1], j)).exp());
            let o = 1.0 / (1.0 + (-gate(ids.w[2], ids.u[2], ids.b[2], j)).exp());
            let g = gate(ids.w[3], ids.u[3], ids.b[3], j).tanh();
            c[j] = f * c_prev[j] + i * g;
            h[j] = o * c[j].tanh();
        }
        (h, c)
    }

    #[test]
    fn cell_matches_straight_line_oracle() {
        let mut rng = SmallRng::seed_from_u64(7);
        for trial in 0..20 {
            let mut ps = ParamSet::new();
            let ids = LstmIds::register(&mut ps, &format!("o{trial}"), 2, 3, &mut rng);
            let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let h_prev: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c_prev: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (h, c) = lstm_cell(&ps, &ids, &x, &h_prev, &c_prev);
            let (oh, oc) = cell_oracle(&ps, &ids, &x, &h_prev, &c_prev);
            for (a, b) in h.iter().zip(&oh).chain(c.iter().zip(&oc)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bilstm_length_one_is_two_single_steps() {
        let mut rng = SmallRng::seed_from_u64(11);
        let mut ps = ParamSet::new();
        let fwd = LstmIds::register(&mut ps, "f", 2, 3, &mut rng);
        let bwd = LstmIds::register(&mut ps, "b", 2, 3, &mut rng);
        let x = vec![0.3, -0.8];
        let out = bilstm(&ps, &fwd, &bwd, std::slice::from_ref(&x));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].len(), 6);
        let (hf, _) = lstm_cell(&ps, &fwd, &x, &[0.0; 3], &[0.0; 3]);
        let (hb, _) = lstm_cell(&ps, &bwd, &x, &[0.0; 3], &[0.0; 3]);
        assert_eq!(&out[0][..3], hf.as_slice());
        assert_eq!(&out[0][3..], hb.as_slice());
    }

    #[test]
    fn bilstm_reversal_symmetry() {
        let mut rng = SmallRng::seed_from_u64(13);
        let mut ps = ParamSet::new();
        let fwd = LstmIds::register(&mut ps, "f", 2, 3, &mut rng);
        let bwd = LstmIds::register(&mut ps, "b", 2, 3, &mut rng);
        let xs: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let out = bilstm(&ps, &fwd, &bwd, &xs);
        let reversed: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let swapped = bilstm(&ps, &bwd, &fwd, &reversed);
        for t in 0..4 {
            let mirror = &swapped[3 - t];
            // Halves swap along with the directions.
            assert_eq!(&out[t][..3], &mirror[3..]);
            assert_eq!(&out[t][3..], &mirror[..3]);
        }
    }

    #[test]
    fn bilstm_matches_manual_unroll() {
        let mut rng = SmallRng::seed_from_u64(17);
        let mut ps = ParamSet::new();
        let fwd = LstmIds::register(&mut ps, "f", 2, 3, &mut rng);
        let bwd = LstmIds::register(&mut ps, "b", 2, 3, &mut rng);
        let xs: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let out = bilstm(&ps, &fwd, &bwd, &xs);

        let mut h = vec![0.0; 3];
        let mut c = vec![0.0; 3];
        let mut fwd_states = Vec::new();
        for x in &xs {
            let (nh, nc) = cell_oracle(&ps, &fwd, x, &h, &c);
            fwd_states.push(nh.clone());
            h = nh;
            c = nc;
        }
        let mut h = vec![0.0; 3];
        let mut c = vec![0.0; 3];
        let mut bwd_states = vec![Vec::new(); 4];
        for t in (0..4).rev() {
            let (nh, nc) = cell_oracle(&ps, &bwd, &xs[t], &h, &c);
            bwd_states[t] = nh.clone();
            h = nh;
            c = nc;
        }
        for t in 0..4 {
            for j in 0..3 {
                assert!((out[t][j] - fwd_states[t][j]).abs() < 1e-12);
                assert!((out[t][3 + j] - bwd_states[t][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    #[should_panic(expected = "empty sequence")]
    fn bilstm_rejects_empty_input() {
        let mut ps = ParamSet::new();
        let ids = zero_lstm(&mut ps, "e", 2, 3);
        bilstm(&ps, &ids.clone(), &ids, &[]);
    }

    #[test]
    fn taped_cell_matches_plain_cell() {
        let mut rng = SmallRng::seed_from_u64(19);
        let mut ps = ParamSet::new();
        let ids = LstmIds::register(&mut ps, "t", 2, 3, &mut rng);
        let x = vec![0.5, -0.4];
        let h_prev = vec![0.2, 0.1, -0.3];
        let c_prev = vec![-0.1, 0.6, 0.0];
        let (h, c) = lstm_cell(&ps, &ids, &x, &h_prev, &c_prev);

        let mut sess = Session::new(&ps);
        let leaves = LstmLeaves::new(&mut sess, &ids);
        let xn = sess.input(x);
        let hn = sess.input(h_prev);
        let cn = sess.input(c_prev);
        let (ht, ct) = lstm_cell_t(&mut sess.tape, &leaves, xn, hn, cn);
        assert_eq!(sess.tape.value(ht), h.as_slice());
        assert_eq!(sess.tape.value(ct), c.as_slice());
    }

    #[test]
    fn cell_gradient_survives_finite_difference_audit() {
        // Loss: sum of the cell's h output over a fixed input.
        let mut rng = SmallRng::seed_from_u64(23);
        let mut ps = ParamSet::new();
        let ids = LstmIds::register(&mut ps, "fd", 2, 3, &mut rng);
        let x = vec![0.7, -0.2];
        let h_prev = vec![0.1, -0.5, 0.3];
        let c_prev = vec![0.4, 0.0, -0.6];

        let forward = |ps: &ParamSet| -> f64 {
            let (h, _) = lstm_cell(ps, &ids, &x, &h_prev, &c_prev);
            h.iter().sum()
        };

        let mut sess = Session::new(&ps);
        let leaves = LstmLeaves::new(&mut sess, &ids);
        let xn = sess.input(x.clone());
        let hn = sess.input(h_prev.clone());
        let cn = sess.input(c_prev.clone());
        let (ht, _) = lstm_cell_t(&mut sess.tape, &leaves, xn, hn, cn);
        let ones = sess.input(vec![1.0; 3]);
        let loss = sess.tape.dot(ht, ones);
        let mut grads = GradSet::zeros_like(&ps);
        sess.backward(loss, &mut grads);
        drop(sess);

        let err = grad_check(&mut ps, &grads, 1e-5, forward);
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn taped_bilstm_matches_plain_bilstm() {
        let mut rng = SmallRng::seed_from_u64(29);
        let mut ps = ParamSet::new();
        let fwd = LstmIds::register(&mut ps, "f", 2, 2, &mut rng);
        let bwd = LstmIds::register(&mut ps, "b", 2, 2, &mut rng);
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let plain = bilstm(&ps, &fwd, &bwd, &xs);

        let mut sess = Session::new(&ps);
        let fl = LstmLeaves::new(&mut sess, &fwd);
        let bl = LstmLeaves::new(&mut sess, &bwd);
        let nodes: Vec<NodeId> = xs.iter().map(|x| sess.input(x.clone())).collect();
        let taped = bilstm_t(&mut sess.tape, &fl, &bl, &nodes);
        for (t, &node) in taped.iter().enumerate() {
            assert_eq!(sess.tape.value(node), plain[t].as_slice());
        }
    }
}
