//! Dense-network substrate: plain MLPs with ReLU hidden layers, hand-rolled
//! reverse-mode gradients, and Adam. Everything is `f64`; there is no
//! computation graph, just a layer loop, which keeps runs bitwise
//! reproducible per seed.

mod checkpoint;

pub use checkpoint::{read_params, write_params, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::error::{Result, RlvError};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Linear,
    Tanh,
    Sigmoid,
}

/// Shape of one MLP: layer widths (input first, output last) plus the output
/// activation. Hidden activations are always ReLU.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, output_activation: OutputActivation) -> Result<Self> {
        if layer_widths.len() < 2 {
            return Err(RlvError::Config(
                "MlpSpec needs at least input and output widths".into(),
            ));
        }
        if layer_widths.iter().any(|&w| w == 0) {
            return Err(RlvError::Config("MlpSpec layer widths must be >= 1".into()));
        }
        Ok(Self {
            layer_widths,
            output_activation,
        })
    }

    /// Convenience: input -> hidden... -> output with the given activation.
    pub fn with_hidden(
        input: usize,
        hidden: &[usize],
        output: usize,
        activation: OutputActivation,
    ) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        Self::new(widths, activation)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// Flat parameter store for one network: per-layer weight matrices
/// (`(fan_in, fan_out)`) and bias vectors. Also reused as the congruent
/// gradient/moment buffer type.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let weights = spec
            .layer_widths
            .windows(2)
            .map(|w| Array2::zeros((w[0], w[1])))
            .collect();
        let biases = spec
            .layer_widths
            .iter()
            .skip(1)
            .map(|&w| Array1::zeros(w))
            .collect();
        Self { weights, biases }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng>(spec: &MlpSpec, rng: &mut R) -> Self {
        let mut params = Self::zeros(spec);
        for w in &mut params.weights {
            let (fan_in, fan_out) = (w.nrows(), w.ncols());
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            for v in w.iter_mut() {
                *v = dist.sample(rng);
            }
        }
        params
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn matches(&self, spec: &MlpSpec) -> bool {
        self.weights.len() == spec.num_layers()
            && self.biases.len() == spec.num_layers()
            && self
                .weights
                .iter()
                .zip(spec.layer_widths.windows(2))
                .all(|(w, s)| w.nrows() == s[0] && w.ncols() == s[1])
            && self
                .biases
                .iter()
                .zip(spec.layer_widths.iter().skip(1))
                .all(|(b, &s)| b.len() == s)
    }

    /// `self += c * other`, shapes must be congruent.
    pub fn add_scaled(&mut self, other: &MlpParams, c: f64) {
        for (w, o) in self.weights.iter_mut().zip(&other.weights) {
            w.scaled_add(c, o);
        }
        for (b, o) in self.biases.iter_mut().zip(&other.biases) {
            b.scaled_add(c, o);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for w in &mut self.weights {
            *w *= c;
        }
        for b in &mut self.biases {
            *b *= c;
        }
    }

    /// Flatten into `out` in layer order, weights row-major then bias.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
    }

    pub fn from_flat(spec: &MlpSpec, flat: &[f64]) -> Result<Self> {
        if flat.len() != spec.param_count() {
            return Err(RlvError::Checkpoint(format!(
                "parameter count mismatch: expected {}, got {}",
                spec.param_count(),
                flat.len()
            )));
        }
        let mut params = Self::zeros(spec);
        let mut off = 0;
        for (w, b) in params.weights.iter_mut().zip(params.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v = flat[off];
                off += 1;
            }
            for v in b.iter_mut() {
                *v = flat[off];
                off += 1;
            }
        }
        Ok(params)
    }
}

/// An MLP: shape plus its parameters.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: MlpParams,
}

impl Mlp {
    pub fn init<R: Rng>(spec: MlpSpec, rng: &mut R) -> Self {
        let params = MlpParams::glorot(&spec, rng);
        Self { spec, params }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let params = MlpParams::zeros(&spec);
        Self { spec, params }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        forward(&self.spec, &self.params, input)
    }

    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Result<ForwardCache> {
        forward_batch(&self.spec, &self.params, input)
    }

    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<f64>,
    ) -> (MlpParams, Array2<f64>) {
        backward_batch(&self.spec, &self.params, cache, upstream)
    }
}

/// Post-activation values per layer, `activations[0]` being the input batch
/// and the last entry the network output.
pub struct ForwardCache {
    pub activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> ArrayView2<'_, f64> {
        self.activations.last().unwrap().view()
    }
}

fn apply_output_activation(act: OutputActivation, z: &mut Array2<f64>) {
    match act {
        OutputActivation::Linear => {}
        OutputActivation::Tanh => z.mapv_inplace(f64::tanh),
        OutputActivation::Sigmoid => z.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp())),
    }
}

/// Batched forward pass; rows are samples.
pub fn forward_batch(
    spec: &MlpSpec,
    params: &MlpParams,
    input: ArrayView2<f64>,
) -> Result<ForwardCache> {
    if input.ncols() != spec.input_dim() {
        return Err(RlvError::ShapeMismatch {
            layer: 0,
            expected: spec.input_dim(),
            got: input.ncols(),
        });
    }
    let n_layers = spec.num_layers();
    let mut activations = Vec::with_capacity(n_layers + 1);
    activations.push(input.to_owned());
    for l in 0..n_layers {
        let mut z = activations[l].dot(&params.weights[l]);
        z += &params.biases[l];
        if l + 1 < n_layers {
            z.mapv_inplace(|v| v.max(0.0));
        } else {
            apply_output_activation(spec.output_activation, &mut z);
        }
        activations.push(z);
    }
    Ok(ForwardCache { activations })
}

/// Single-sample forward pass.
pub fn forward(spec: &MlpSpec, params: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    let x = ArrayView2::from_shape((1, input.len()), input)
        .map_err(|_| RlvError::ShapeMismatch {
            layer: 0,
            expected: spec.input_dim(),
            got: input.len(),
        })?;
    let cache = forward_batch(spec, params, x)?;
    Ok(cache.output().row(0).to_vec())
}

/// Reverse-mode pass. `upstream` is d(sum of upstream . output)/d(output);
/// returns gradients congruent to `params` plus the gradient with respect to
/// the input batch (for chaining into an upstream encoder).
pub fn backward_batch(
    spec: &MlpSpec,
    params: &MlpParams,
    cache: &ForwardCache,
    upstream: ArrayView2<f64>,
) -> (MlpParams, Array2<f64>) {
    let n_layers = spec.num_layers();
    let output = cache.activations.last().unwrap();
    // Through the output activation.
    let mut dz = match spec.output_activation {
        OutputActivation::Linear => upstream.to_owned(),
        OutputActivation::Tanh => {
            let mut d = upstream.to_owned();
            d.zip_mut_with(output, |g, &a| *g *= 1.0 - a * a);
            d
        }
        OutputActivation::Sigmoid => {
            let mut d = upstream.to_owned();
            d.zip_mut_with(output, |g, &a| *g *= a * (1.0 - a));
            d
        }
    };
    let mut grads = MlpParams::zeros(spec);
    for l in (0..n_layers).rev() {
        let a_prev = &cache.activations[l];
        grads.weights[l] = a_prev.t().dot(&dz);
        grads.biases[l] = dz.sum_axis(Axis(0));
        let mut da = dz.dot(&params.weights[l].t());
        if l > 0 {
            // ReLU gate: post-activation > 0 iff the unit fired.
            da.zip_mut_with(a_prev, |g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
        }
        dz = da;
    }
    (grads, dz)
}

/// Bias-corrected Adam. Moment buffers are congruent to the parameters they
/// track; `step` refuses non-finite gradients and leaves parameters untouched.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    first_moment: MlpParams,
    second_moment: MlpParams,
}

impl Adam {
    pub fn new(spec: &MlpSpec, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            first_moment: MlpParams::zeros(spec),
            second_moment: MlpParams::zeros(spec),
        }
    }

    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams) -> Result<()> {
        if !grads.is_finite() {
            return Err(RlvError::NonFinite {
                context: "Adam gradient".into(),
            });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (lr, beta1, beta2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for l in 0..params.weights.len() {
            for ((p, m), (v, g)) in params.weights[l]
                .iter_mut()
                .zip(self.first_moment.weights[l].iter_mut())
                .zip(
                    self.second_moment.weights[l]
                        .iter_mut()
                        .zip(grads.weights[l].iter()),
                )
            {
                update(p, m, v, *g);
            }
            for ((p, m), (v, g)) in params.biases[l]
                .iter_mut()
                .zip(self.first_moment.biases[l].iter_mut())
                .zip(
                    self.second_moment.biases[l]
                        .iter_mut()
                        .zip(grads.biases[l].iter()),
                )
            {
                update(p, m, v, *g);
            }
        }
        Ok(())
    }
}

/// Adam for a single scalar parameter (the entropy temperature's log-alpha).
#[derive(Debug, Clone)]
pub struct ScalarAdam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    m: f64,
    v: f64,
}

impl ScalarAdam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: 0.0,
            v: 0.0,
        }
    }

    pub fn step(&mut self, param: &mut f64, grad: f64) -> Result<()> {
        if !grad.is_finite() {
            return Err(RlvError::NonFinite {
                context: "scalar Adam gradient".into(),
            });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad;
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad;
        let m_hat = self.m / (1.0 - self.beta1.powi(t));
        let v_hat = self.v / (1.0 - self.beta2.powi(t));
        *param -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        Ok(())
    }
}

/// Soft blend used for target networks: `target = (1 - tau) * target + tau * online`.
pub fn soft_update(target: &mut MlpParams, online: &MlpParams, tau: f64) {
    for (t, o) in target.weights.iter_mut().zip(&online.weights) {
        t.zip_mut_with(o, |t, &o| *t = (1.0 - tau) * *t + tau * o);
    }
    for (t, o) in target.biases.iter_mut().zip(&online.biases) {
        t.zip_mut_with(o, |t, &o| *t = (1.0 - tau) * *t + tau * o);
    }
}

pub fn rows_to_array(rows: &[Vec<f64>]) -> Array2<f64> {
    let ncols = rows.first().map_or(0, |r| r.len());
    let mut out = Array2::zeros((rows.len(), ncols));
    for (i, r) in rows.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    out
}

pub fn array_row(a: ArrayView1<f64>) -> Vec<f64> {
    a.to_vec()
}
