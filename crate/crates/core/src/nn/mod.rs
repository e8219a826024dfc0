//! Numerical kernel: parameter tensors, reverse-mode differentiation,
//! LSTM cells, and the linear-chain CRF.
//!
//! Parameters live in a flat [`ParamSet`] registry so the optimizer,
//! gradient clipping, checkpointing and finite-difference audits can walk
//! every block uniformly. Forward passes record onto a [`tape::Tape`];
//! gradients accumulate additively at fan-out and flow back into a
//! [`GradSet`] through the session's leaf bookkeeping.

pub mod crf;
pub mod lstm;
pub mod tape;

use rand::Rng;

/// Dense row-major matrix; vectors use `cols == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor shape mismatch");
        Tensor { rows, cols, data }
    }

    /// Uniform ±√(6/(fan_in+fan_out)) init for weight matrices.
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
        Tensor { rows, cols, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn has_nonfinite(&self) -> bool {
        self.data.iter().any(|x| !x.is_finite())
    }
}

/// Handle into a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named registry of every trainable tensor in a model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    tensors: Vec<Tensor>,
    names: Vec<String>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name {name:?}");
        self.tensors.push(tensor);
        self.names.push(name);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn value_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn has_nonfinite(&self) -> bool {
        self.tensors.iter().any(Tensor::has_nonfinite)
    }
}

/// Gradient buffers mirroring a [`ParamSet`]'s shapes.
#[derive(Debug, Clone)]
pub struct GradSet {
    grads: Vec<Tensor>,
}

impl GradSet {
    pub fn zeros_like(params: &ParamSet) -> Self {
        GradSet {
            grads: params.tensors.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect(),
        }
    }

    pub fn reset(&mut self) {
        for g in &mut self.grads {
            g.data.fill(0.0);
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            for x in &mut g.data {
                *x *= factor;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| &g.data)
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Scales gradients down so the global norm is at most `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn has_nonfinite(&self) -> bool {
        self.grads.iter().any(Tensor::has_nonfinite)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: u32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            steps: 0,
            m: params.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            v: params.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    /// Applies one update; parameters whose id satisfies `frozen` are skipped.
    pub fn step(&mut self, params: &mut ParamSet, grads: &GradSet, frozen: impl Fn(ParamId) -> bool) {
        self.steps += 1;
        let bc1 = 1.0 - self.beta1.powi(self.steps as i32);
        let bc2 = 1.0 - self.beta2.powi(self.steps as i32);
        for idx in 0..params.tensors.len() {
            if frozen(ParamId(idx)) {
                continue;
            }
            let g = &grads.grads[idx].data;
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            let t = &mut params.tensors[idx].data;
            for i in 0..t.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                t[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Central-difference audit of an analytic gradient.
///
/// Perturbs every coordinate of every tensor by ±eps, evaluates `value`,
/// and returns the maximum relative error `|a−n| / max(|a|,|n|,1e-8)`
/// against the provided analytic gradients. The closure must be
/// deterministic in the parameters.
pub fn grad_check(
    params: &mut ParamSet,
    analytic: &GradSet,
    eps: f64,
    mut value: impl FnMut(&ParamSet) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for idx in 0..params.tensors.len() {
        for i in 0..params.tensors[idx].len() {
            let original = params.tensors[idx].data[i];
            params.tensors[idx].data[i] = original + eps;
            let plus = value(params);
            params.tensors[idx].data[i] = original - eps;
            let minus = value(params);
            params.tensors[idx].data[i] = original;
            assert!(plus.is_finite() && minus.is_finite(), "non-finite value during grad check");
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.grads[idx].data[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    worst
}

/// Central-difference audit scored per parameter block.
///
/// Within each tensor the worst absolute deviation is measured against the
/// block's own gradient scale (floored at 1e-8). Coordinates whose true
/// gradient sits below the finite-difference noise floor are then judged
/// relative to the block they belong to instead of against the floor
/// alone, which is what an end-to-end audit of a deep model needs.
pub fn grad_check_blocks(
    params: &mut ParamSet,
    analytic: &GradSet,
    eps: f64,
    mut value: impl FnMut(&ParamSet) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for idx in 0..params.tensors.len() {
        let mut block_dev: f64 = 0.0;
        let mut block_scale: f64 = 0.0;
        for i in 0..params.tensors[idx].len() {
            let original = params.tensors[idx].data[i];
            params.tensors[idx].data[i] = original + eps;
            let plus = value(params);
            params.tensors[idx].data[i] = original - eps;
            let minus = value(params);
            params.tensors[idx].data[i] = original;
            assert!(plus.is_finite() && minus.is_finite(), "non-finite value during grad check");
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.grads[idx].data[i];
            block_dev = block_dev.max((a - numeric).abs());
            block_scale = block_scale.max(a.abs()).max(numeric.abs());
        }
        worst = worst.max(block_dev / block_scale.max(1e-8));
    }
    worst
}
