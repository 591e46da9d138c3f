//! Structure-preserving closure networks.
//!
//! A fully connected network maps the moments `m_0..m_N` to raw outputs
//! `z_0..z_N`. A head turns these into characteristic speeds:
//!
//! * [`Head::Bound`]: `r_i = tanh(z_i)`, so every speed lies in (-1, 1);
//! * [`Head::Distinct`]: `r_0 = z_0`, `r_i = r_{i-1} + softplus(z_i) + gamma`,
//!   so adjacent speeds are separated by at least `gamma`.
//!
//! The speeds are expanded into the monic characteristic polynomial by
//! repeated multiplication with `(x - r_i)` and mapped linearly to closure
//! weights. The resulting coefficient matrix has exactly the speeds as its
//! eigenvalues.

mod io;
mod tape;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::closure::{ClosureWeights, CoeffToWeights, DEFAULT_GAMMA};
use crate::error::{Error, Result};
use crate::polyalg::gauss_legendre;

pub use io::{load_model, model_from_json, model_to_json, save_model};
pub use tape::{backward, forward, grad_check, loss_and_grad, loss_batch, Tape};
pub use train::{
    adam_step, e2_error, input_statistics, prepare_model, train, AdamState, EpochRecord, TrainConfig, TrainOutcome,
    TrainingSample,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Version(format!("unknown activation {other:?}"))),
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    #[inline]
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Bound,
    Distinct,
}

impl Head {
    pub fn as_str(&self) -> &'static str {
        match self {
            Head::Bound => "bound",
            Head::Distinct => "distinct",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bound" => Ok(Head::Bound),
            "distinct" => Ok(Head::Distinct),
            other => Err(Error::Version(format!("unknown head {other:?}"))),
        }
    }
}

/// `ln(1 + e^x) + gamma`, evaluated without overflow.
#[inline]
pub fn kappa(x: f64, gamma: f64) -> f64 {
    softplus(x) + gamma
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Position of one dense layer inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct LayerSlot {
    pub n_in: usize,
    pub n_out: usize,
    /// Offset of the `n_out x n_in` weight block; biases follow it.
    pub offset: usize,
}

impl LayerSlot {
    pub fn w_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.n_in * self.n_out
    }

    pub fn b_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.n_in * self.n_out;
        start..start + self.n_out
    }
}

/// Network architecture without parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub order: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
    pub gamma: f64,
}

impl ModelSpec {
    /// Six hidden layers of 64 ReLU units.
    pub fn default_for(order: usize, head: Head) -> Self {
        ModelSpec {
            order,
            hidden: vec![64; 6],
            activation: Activation::Relu,
            head,
            gamma: DEFAULT_GAMMA,
        }
    }
}

/// Fully connected closure network with its structure head.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub order: usize,
    /// `[N+1, hidden..., N+1]`.
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
    pub gamma: f64,
    /// Inputs are divided by `m_0` before the affine standardization below.
    pub density_normalized: bool,
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub(crate) params: Vec<f64>,
    pub(crate) slots: Vec<LayerSlot>,
    pub(crate) coeff_map: CoeffToWeights,
}

fn layout(widths: &[usize]) -> (Vec<LayerSlot>, usize) {
    let mut slots = Vec::with_capacity(widths.len() - 1);
    let mut offset = 0;
    for w in widths.windows(2) {
        slots.push(LayerSlot {
            n_in: w[0],
            n_out: w[1],
            offset,
        });
        offset += w[0] * w[1] + w[1];
    }
    (slots, offset)
}

impl MlpModel {
    /// All-zero parameters; used by tests and as the shell for loading.
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        if spec.gamma <= 0.0 || !spec.gamma.is_finite() {
            return Err(Error::Degenerate(format!("gamma must be positive, got {}", spec.gamma)));
        }
        if spec.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Degenerate("hidden widths must be positive".into()));
        }
        let coeff_map = CoeffToWeights::new(spec.order)?;
        let n = spec.order + 1;
        let mut widths = vec![n];
        widths.extend_from_slice(&spec.hidden);
        widths.push(n);
        let (slots, count) = layout(&widths);
        Ok(MlpModel {
            order: spec.order,
            widths,
            activation: spec.activation,
            head: spec.head,
            gamma: spec.gamma,
            density_normalized: false,
            input_shift: vec![0.0; n],
            input_scale: vec![1.0; n],
            params: vec![0.0; count],
            slots,
            coeff_map,
        })
    }

    /// Seeded fan-in-scaled uniform initialization. The output bias is set
    /// so the untrained network reproduces the P_N speeds (the Gauss-Legendre
    /// nodes of order N+1).
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = model.slots.len() - 1;
        for (l, slot) in model.slots.clone().iter().enumerate() {
            let gain = match model.activation {
                Activation::Relu => 6.0,
                Activation::Tanh => 3.0,
            };
            let mut bound = (gain / slot.n_in as f64).sqrt();
            if l == last {
                bound *= 0.1;
            }
            for p in &mut model.params[slot.w_range()] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        let nodes = gauss_legendre(spec.order + 1)?.nodes;
        let bias = model.slots[last].b_range();
        let target = head_preimage(spec.head, &nodes, spec.gamma);
        model.params[bias].copy_from_slice(&target);
        Ok(model)
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            order: self.order,
            hidden: self.widths[1..self.widths.len() - 1].to_vec(),
            activation: self.activation,
            head: self.head,
            gamma: self.gamma,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layer_weights(&self, layer: usize) -> &[f64] {
        &self.params[self.slots[layer].w_range()]
    }

    pub fn layer_bias(&self, layer: usize) -> &[f64] {
        &self.params[self.slots[layer].b_range()]
    }

    pub fn n_layers(&self) -> usize {
        self.slots.len()
    }

    /// Sets the input preprocessing (density normalization and affine
    /// standardization), typically from training-set statistics.
    pub fn set_input_transform(&mut self, density_normalized: bool, shift: Vec<f64>, scale: Vec<f64>) -> Result<()> {
        let n = self.order + 1;
        if shift.len() != n || scale.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: shift.len().min(scale.len()),
            });
        }
        if scale.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Degenerate("input scales must be positive".into()));
        }
        self.density_normalized = density_normalized;
        self.input_shift = shift;
        self.input_scale = scale;
        Ok(())
    }

    /// Network input for the moment vector `m`.
    pub fn transform_input(&self, m: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let d = if self.density_normalized { m[0] } else { 1.0 };
        for ((&v, &s), &c) in m.iter().zip(&self.input_shift).zip(&self.input_scale) {
            out.push((v / d - s) / c);
        }
    }

    pub fn check_input(&self, m: &[f64]) -> Result<()> {
        if m.len() != self.order + 1 {
            return Err(Error::Shape {
                expected: self.order + 1,
                got: m.len(),
            });
        }
        if self.density_normalized && !(m[0] > 0.0) {
            return Err(Error::Numeric(format!(
                "density-normalized closure needs m_0 > 0, got {}",
                m[0]
            )));
        }
        Ok(())
    }

    pub fn closure_weights(&self, m: &[f64]) -> Result<ClosureWeights> {
        Ok(forward(self, m)?.0)
    }

    /// Sorted characteristic speeds at `m`.
    pub fn speeds(&self, m: &[f64]) -> Result<Vec<f64>> {
        let (_, tape) = forward(self, m)?;
        let mut r = tape.speeds().to_vec();
        r.sort_by(f64::total_cmp);
        Ok(r)
    }
}

/// Raw outputs `z` for which the head produces `speeds` (sorted ascending).
/// Distinct-head gaps smaller than `gamma` are widened slightly.
fn head_preimage(head: Head, speeds: &[f64], gamma: f64) -> Vec<f64> {
    match head {
        Head::Bound => speeds.iter().map(|r| r.clamp(-0.999, 0.999).atanh()).collect(),
        Head::Distinct => {
            let mut z = Vec::with_capacity(speeds.len());
            z.push(speeds[0]);
            for w in speeds.windows(2) {
                let excess = (w[1] - w[0] - gamma).max(1e-3);
                // inverse softplus
                z.push(excess + (-(-excess).exp_m1()).ln());
            }
            z
        }
    }
}
