//! Tape-based reverse-mode differentiation over vector-valued nodes.
//!
//! A forward pass appends nodes in topological order; [`Tape::backward`]
//! walks them in reverse, accumulating adjoints additively wherever a node
//! fans out. The CRF log-likelihood is a single fused node whose backward
//! pass computes exact marginals, so tag-level dynamic programming never
//! has to be unrolled onto the tape.

use std::collections::HashMap;

use super::{crf, GradSet, ParamId, ParamSet};

pub type NodeId = usize;

enum Op {
    Leaf,
    Add(NodeId, NodeId),
    /// Elementwise sum of same-shape nodes.
    AddN(Vec<NodeId>),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    MatVec { w: NodeId, x: NodeId, rows: usize, cols: usize },
    Concat(Vec<NodeId>),
    Dot(NodeId, NodeId),
    /// Inverted dropout; the mask holds 0 or 1/(1−p).
    Dropout { x: NodeId, mask: Vec<f64> },
    /// Fused CRF log-likelihood of a gold tag path.
    CrfLogLik { emissions: Vec<NodeId>, trans: NodeId, num_tags: usize, tags: Vec<usize> },
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].value
    }

    /// Scalar value of a 1-element node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id].value.len(), 1);
        self.nodes[id].value[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.nodes[a].value.len(), self.nodes[b].value.len(), "add shape mismatch");
        let value =
            self.nodes[a].value.iter().zip(&self.nodes[b].value).map(|(x, y)| x + y).collect();
        self.push(value, Op::Add(a, b))
    }

    pub fn add_n(&mut self, ids: &[NodeId]) -> NodeId {
        assert!(!ids.is_empty(), "add_n of nothing");
        let len = self.nodes[ids[0]].value.len();
        let mut value = vec![0.0; len];
        for &id in ids {
            assert_eq!(self.nodes[id].value.len(), len, "add_n shape mismatch");
            for (v, x) in value.iter_mut().zip(&self.nodes[id].value) {
                *v += x;
            }
        }
        self.push(value, Op::AddN(ids.to_vec()))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.nodes[a].value.len(), self.nodes[b].value.len(), "mul shape mismatch");
        let value =
            self.nodes[a].value.iter().zip(&self.nodes[b].value).map(|(x, y)| x * y).collect();
        self.push(value, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let value = self.nodes[a].value.iter().map(|x| x * factor).collect();
        self.push(value, Op::Scale(a, factor))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.iter().map(|x| x.tanh()).collect();
        self.push(value, Op::Tanh(a))
    }

    /// `w` is a row-major `rows × cols` matrix node, `x` a `cols` vector.
    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> NodeId {
        let cols = self.nodes[x].value.len();
        let w_len = self.nodes[w].value.len();
        assert!(cols > 0 && w_len.is_multiple_of(cols), "matvec shape mismatch");
        let rows = w_len / cols;
        let wv = &self.nodes[w].value;
        let xv = &self.nodes[x].value;
        let mut value = vec![0.0; rows];
        for r in 0..rows {
            let row = &wv[r * cols..(r + 1) * cols];
            value[r] = row.iter().zip(xv).map(|(a, b)| a * b).sum();
        }
        self.push(value, Op::MatVec { w, x, rows, cols })
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut value = Vec::new();
        for &p in parts {
            value.extend_from_slice(&self.nodes[p].value);
        }
        self.push(value, Op::Concat(parts.to_vec()))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.nodes[a].value.len(), self.nodes[b].value.len(), "dot shape mismatch");
        let value =
            self.nodes[a].value.iter().zip(&self.nodes[b].value).map(|(x, y)| x * y).sum();
        self.push(vec![value], Op::Dot(a, b))
    }

    pub fn dropout(&mut self, x: NodeId, mask: Vec<f64>) -> NodeId {
        assert_eq!(self.nodes[x].value.len(), mask.len(), "dropout mask shape mismatch");
        let value = self.nodes[x].value.iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.push(value, Op::Dropout { x, mask })
    }

    /// Gold-path log-likelihood under a linear-chain CRF.
    ///
    /// `emissions` holds one `num_tags` vector per position; `trans` is the
    /// `(num_tags+2)²` transition matrix with START/STOP in the last rows.
    pub fn crf_log_likelihood(
        &mut self,
        emissions: &[NodeId],
        trans: NodeId,
        num_tags: usize,
        tags: &[usize],
    ) -> NodeId {
        assert_eq!(emissions.len(), tags.len(), "one emission row per tag");
        assert!(!emissions.is_empty(), "empty sequence");
        for &e in emissions {
            assert_eq!(self.nodes[e].value.len(), num_tags, "emission width mismatch");
        }
        assert!(tags.iter().all(|&t| t < num_tags), "invalid tag id");
        let rows: Vec<&[f64]> = emissions.iter().map(|&e| self.nodes[e].value.as_slice()).collect();
        let ll = crf::log_likelihood(&rows, &self.nodes[trans].value, num_tags, tags);
        self.push(
            vec![ll],
            Op::CrfLogLik { emissions: emissions.to_vec(), trans, num_tags, tags: tags.to_vec() },
        )
    }

    /// Reverse pass from a scalar node; returns per-node adjoints.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        assert_eq!(self.nodes[loss].value.len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        grads[loss] = vec![1.0];

        for id in (0..=loss).rev() {
            if grads[id].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads[id]);
            match &self.nodes[id].op {
                Op::Leaf => {
                    grads[id] = g;
                    continue;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[*a], &g);
                    accumulate(&mut grads[*b], &g);
                }
                Op::AddN(ids) => {
                    for &i in ids {
                        accumulate(&mut grads[i], &g);
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let ga: Vec<f64> =
                        g.iter().zip(&self.nodes[b].value).map(|(x, y)| x * y).collect();
                    let gb: Vec<f64> =
                        g.iter().zip(&self.nodes[a].value).map(|(x, y)| x * y).collect();
                    accumulate(&mut grads[a], &ga);
                    accumulate(&mut grads[b], &gb);
                }
                Op::Scale(a, factor) => {
                    let ga: Vec<f64> = g.iter().map(|x| x * factor).collect();
                    accumulate(&mut grads[*a], &ga);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[id].value;
                    let ga: Vec<f64> =
                        g.iter().zip(y).map(|(x, s)| x * s * (1.0 - s)).collect();
                    accumulate(&mut grads[*a], &ga);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[id].value;
                    let ga: Vec<f64> = g.iter().zip(y).map(|(x, t)| x * (1.0 - t * t)).collect();
                    accumulate(&mut grads[*a], &ga);
                }
                Op::MatVec { w, x, rows, cols } => {
                    let (w, x, rows, cols) = (*w, *x, *rows, *cols);
                    let wv = &self.nodes[w].value;
                    let xv = &self.nodes[x].value;
                    let mut gw = vec![0.0; rows * cols];
                    let mut gx = vec![0.0; cols];
                    for r in 0..rows {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        let row = &wv[r * cols..(r + 1) * cols];
                        let grow = &mut gw[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            grow[c] += gr * xv[c];
                            gx[c] += gr * row[c];
                        }
                    }
                    accumulate(&mut grads[w], &gw);
                    accumulate(&mut grads[x], &gx);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.nodes[p].value.len();
                        accumulate(&mut grads[p], &g[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::Dot(a, b) => {
                    let (a, b) = (*a, *b);
                    let s = g[0];
                    let ga: Vec<f64> = self.nodes[b].value.iter().map(|x| s * x).collect();
                    let gb: Vec<f64> = self.nodes[a].value.iter().map(|x| s * x).collect();
                    accumulate(&mut grads[a], &ga);
                    accumulate(&mut grads[b], &gb);
                }
                Op::Dropout { x, mask } => {
                    let gx: Vec<f64> = g.iter().zip(mask).map(|(v, m)| v * m).collect();
                    accumulate(&mut grads[*x], &gx);
                }
                Op::CrfLogLik { emissions, trans, num_tags, tags } => {
                    let s = g[0];
                    let rows: Vec<&[f64]> =
                        emissions.iter().map(|&e| self.nodes[e].value.as_slice()).collect();
                    let post = crf::posterior(&rows, &self.nodes[*trans].value, *num_tags);
                    // d ll / d emissions[t] = onehot(gold_t) − marginal_t.
                    for (t, &e) in emissions.iter().enumerate() {
                        let mut ge = post.marginals[t].iter().map(|m| -s * m).collect::<Vec<_>>();
                        ge[tags[t]] += s;
                        accumulate(&mut grads[e], &ge);
                    }
                    // d ll / d trans = gold transition counts − expected counts.
                    let mut gt: Vec<f64> = post.expected_trans.iter().map(|e| -s * e).collect();
                    let size = num_tags + 2;
                    let start = *num_tags;
                    let stop = num_tags + 1;
                    gt[start * size + tags[0]] += s;
                    for w in tags.windows(2) {
                        gt[w[0] * size + w[1]] += s;
                    }
                    gt[tags[tags.len() - 1] * size + stop] += s;
                    accumulate(&mut grads[*trans], &gt);
                }
            }
            grads[id] = g;
        }
        Gradients { grads }
    }
}

fn accumulate(slot: &mut Vec<f64>, delta: &[f64]) {
    if slot.is_empty() {
        slot.extend_from_slice(delta);
    } else {
        debug_assert_eq!(slot.len(), delta.len());
        for (s, d) in slot.iter_mut().zip(delta) {
            *s += d;
        }
    }
}

/// Per-node adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. a node; empty slice if unreached.
    pub fn of(&self, id: NodeId) -> &[f64] {
        &self.grads[id]
    }
}

enum BackRef {
    Full { node: NodeId, param: ParamId },
    Row { node: NodeId, param: ParamId, row: usize },
}

/// One forward/backward pass over a parameter set.
///
/// Leaves created from the same parameter (or parameter row) are cached, so
/// reuse within a pass shares a node and its adjoint accumulates once.
pub struct Session<'p> {
    pub tape: Tape,
    params: &'p ParamSet,
    full_cache: HashMap<ParamId, NodeId>,
    row_cache: HashMap<(ParamId, usize), NodeId>,
    backrefs: Vec<BackRef>,
}

impl<'p> Session<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Session {
            tape: Tape::new(),
            params,
            full_cache: HashMap::new(),
            row_cache: HashMap::new(),
            backrefs: Vec::new(),
        }
    }

    pub fn params(&self) -> &ParamSet {
        self.params
    }

    /// Leaf holding an entire parameter tensor (row-major).
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&node) = self.full_cache.get(&id) {
            return node;
        }
        let node = self.tape.leaf(self.params.get(id).data.clone());
        self.full_cache.insert(id, node);
        self.backrefs.push(BackRef::Full { node, param: id });
        node
    }

    /// Leaf holding one row of a parameter tensor (embedding lookup).
    pub fn param_row(&mut self, id: ParamId, row: usize) -> NodeId {
        if let Some(&node) = self.row_cache.get(&(id, row)) {
            return node;
        }
        let node = self.tape.leaf(self.params.get(id).row(row).to_vec());
        self.row_cache.insert((id, row), node);
        self.backrefs.push(BackRef::Row { node, param: id, row });
        node
    }

    /// Leaf for a non-parameter input.
    pub fn input(&mut self, value: Vec<f64>) -> NodeId {
        self.tape.leaf(value)
    }

    /// Runs the reverse pass and accumulates parameter gradients.
    pub fn backward(&self, loss: NodeId, grads: &mut GradSet) {
        let node_grads = self.tape.backward(loss);
        for backref in &self.backrefs {
            match *backref {
                BackRef::Full { node, param } => {
                    let g = node_grads.of(node);
                    if g.is_empty() {
                        continue;
                    }
                    for (slot, d) in grads.get_mut(param).data.iter_mut().zip(g) {
                        *slot += d;
                    }
                }
                BackRef::Row { node, param, row } => {
                    let g = node_grads.of(node);
                    if g.is_empty() {
                        continue;
                    }
                    for (slot, d) in grads.get_mut(param).row_mut(row).iter_mut().zip(g) {
                        *slot += d;
                    }
                }
            }
        }
    }
}
