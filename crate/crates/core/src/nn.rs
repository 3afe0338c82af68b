//! Feed-forward network machinery: tanh MLPs over a flat parameter vector,
//! exact reverse-mode gradients, orthogonal initialization and Adam.
//!
//! Parameters live in one flat `Vec<f64>` (per layer: row-major weight
//! matrix, then bias), which makes flattened gradient surgery, optimizer
//! state and checkpointing trivial.

use rand::Rng;
use rand_distr::StandardNormal;

/// Layer sizes from input to output, e.g. `[8, 256, 256, 4]`. Hidden layers
/// use tanh, the output layer is linear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub sizes: Vec<usize>,
}

impl Architecture {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2, "need at least one layer");
        assert!(sizes.iter().all(|&s| s > 0));
        Self { sizes }
    }

    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        (0..self.layer_count())
            .map(|l| self.sizes[l + 1] * self.sizes[l] + self.sizes[l + 1])
            .sum()
    }

    /// Offset of layer `l`'s weight block in the flat vector.
    pub fn weight_offset(&self, layer: usize) -> usize {
        (0..layer)
            .map(|l| self.sizes[l + 1] * self.sizes[l] + self.sizes[l + 1])
            .sum()
    }

    pub fn bias_offset(&self, layer: usize) -> usize {
        self.weight_offset(layer) + self.sizes[layer + 1] * self.sizes[layer]
    }
}

/// MLP parameters over a flat storage vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub arch: Architecture,
    pub data: Vec<f64>,
}

/// Per-layer activations recorded by a traced forward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpTrace {
    /// `activations[0]` is the input; each following entry is the layer
    /// output (post-tanh for hidden layers, raw linear for the last).
    activations: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace recorded")
    }
}

impl MlpParams {
    pub fn zeros(arch: Architecture) -> Self {
        let n = arch.param_count();
        Self {
            arch,
            data: vec![0.0; n],
        }
    }

    /// Orthogonal initialization: gain sqrt(2) on hidden layers,
    /// `output_gain` on the last layer, all biases zero.
    pub fn orthogonal_init<R: Rng>(arch: Architecture, output_gain: f64, rng: &mut R) -> Self {
        let mut params = Self::zeros(arch);
        let layers = params.arch.layer_count();
        for l in 0..layers {
            let gain = if l + 1 == layers {
                output_gain
            } else {
                2.0_f64.sqrt()
            };
            let rows = params.arch.sizes[l + 1];
            let cols = params.arch.sizes[l];
            let w = orthogonal_matrix(rows, cols, gain, rng);
            let offset = params.arch.weight_offset(l);
            params.data[offset..offset + rows * cols].copy_from_slice(&w);
        }
        params
    }

    fn weights(&self, layer: usize) -> &[f64] {
        let rows = self.arch.sizes[layer + 1];
        let cols = self.arch.sizes[layer];
        let offset = self.arch.weight_offset(layer);
        &self.data[offset..offset + rows * cols]
    }

    fn biases(&self, layer: usize) -> &[f64] {
        let rows = self.arch.sizes[layer + 1];
        let offset = self.arch.bias_offset(layer);
        &self.data[offset..offset + rows]
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut trace = MlpTrace::default();
        self.forward_trace(input, &mut trace);
        trace.activations.pop().unwrap()
    }

    /// Forward pass recording every layer activation for a later backward.
    pub fn forward_trace(&self, input: &[f64], trace: &mut MlpTrace) {
        assert_eq!(input.len(), self.arch.input_dim());
        trace.activations.clear();
        trace.activations.push(input.to_vec());
        let layers = self.arch.layer_count();
        for l in 0..layers {
            let rows = self.arch.sizes[l + 1];
            let cols = self.arch.sizes[l];
            let w = self.weights(l);
            let b = self.biases(l);
            let x = trace.activations.last().unwrap();
            let mut out = vec![0.0; rows];
            for r in 0..rows {
                let row = &w[r * cols..(r + 1) * cols];
                let mut acc = b[r];
                for (wv, xv) in row.iter().zip(x) {
                    acc += wv * xv;
                }
                out[r] = if l + 1 == layers { acc } else { acc.tanh() };
            }
            trace.activations.push(out);
        }
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
    /// `grad` must have `param_count` length; contributions add, so batches
    /// accumulate naturally.
    pub fn backward(&self, trace: &MlpTrace, d_output: &[f64], grad: &mut [f64]) {
        let layers = self.arch.layer_count();
        assert_eq!(d_output.len(), self.arch.output_dim());
        assert_eq!(grad.len(), self.arch.param_count());
        let mut dz = d_output.to_vec();
        for l in (0..layers).rev() {
            let rows = self.arch.sizes[l + 1];
            let cols = self.arch.sizes[l];
            let w = self.weights(l);
            let x = &trace.activations[l];
            let w_off = self.arch.weight_offset(l);
            let b_off = self.arch.bias_offset(l);
            for r in 0..rows {
                let g = dz[r];
                let grow = &mut grad[w_off + r * cols..w_off + (r + 1) * cols];
                for (gv, xv) in grow.iter_mut().zip(x) {
                    *gv += g * xv;
                }
                grad[b_off + r] += g;
            }
            if l > 0 {
                let mut dx = vec![0.0; cols];
                for r in 0..rows {
                    let g = dz[r];
                    let row = &w[r * cols..(r + 1) * cols];
                    for (dv, wv) in dx.iter_mut().zip(row) {
                        *dv += g * wv;
                    }
                }
                // Through tanh: activations[l] holds tanh(z).
                let a = &trace.activations[l];
                for (dv, av) in dx.iter_mut().zip(a) {
                    *dv *= 1.0 - av * av;
                }
                dz = dx;
            }
        }
    }
}

/// Random matrix with orthonormal columns (rows >= cols) or rows (otherwise),
/// scaled by `gain`. Modified Gram-Schmidt on Gaussian draws.
fn orthogonal_matrix<R: Rng>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (n, k, transpose) = if rows >= cols {
        (rows, cols, false)
    } else {
        (cols, rows, true)
    };
    // k column vectors of dimension n, orthonormalized.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (vv, bv) in v.iter_mut().zip(b) {
                *vv -= dot * bv;
            }
        }
        let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue; // numerically degenerate draw, retry
        }
        for vv in v.iter_mut() {
            *vv /= norm;
        }
        basis.push(v);
    }
    let mut w = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let value = if transpose { basis[r][c] } else { basis[c][r] };
            w[r * cols + c] = gain * value;
        }
    }
    w
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators and step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }
}

/// Standard bias-corrected Adam update, descending along `grad`.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, cfg: AdamConfig) {
    assert_eq!(params.len(), grad.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}
