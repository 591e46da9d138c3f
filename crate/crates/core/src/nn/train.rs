//! Minibatch training with Adam.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{dot2, forward_into, loss_and_grad_into, BackScratch, Tape};
use super::{MlpModel, ModelSpec};
use crate::error::{Error, Result};

/// One training point: moments, their spatial derivatives `dm_0..dm_N`,
/// and the target derivative `dm_{N+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub moments: Vec<f64>,
    pub gradients: Vec<f64>,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub decay_every: usize,
    pub decay_factor: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 1024,
            lr: 1e-3,
            decay_every: 100,
            decay_factor: 0.5,
            l2: 1e-7,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let halvings = if self.decay_every == 0 { 0 } else { epoch / self.decay_every };
        self.lr * self.decay_factor.powi(halvings as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_e2: f64,
    pub val_e2: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation error seen.
    pub model: MlpModel,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn best_val_e2(&self) -> f64 {
        self.history[self.best_epoch].val_e2
    }

    pub fn write_history_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "epoch,lr,train_loss,train_E2,val_E2")?;
        for r in &self.history {
            writeln!(f, "{},{:e},{:e},{:e},{:e}", r.epoch, r.lr, r.train_loss, r.train_e2, r.val_e2)?;
        }
        f.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t);
    let c2 = 1.0 - b2.powi(state.t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + state.eps);
    }
}

/// Relative L2 error `|pred - true| / |true|` of the closing gradient.
pub fn e2_error(model: &MlpModel, samples: &[TrainingSample]) -> Result<f64> {
    let mut tape = Tape::default();
    let (mut num, mut den) = (0.0, 0.0);
    for s in samples {
        forward_into(model, &s.moments, &mut tape)?;
        let pred = dot2(tape.weights(), &s.gradients);
        num += (pred - s.target).powi(2);
        den += s.target * s.target;
    }
    if den == 0.0 {
        return Err(Error::Degenerate("relative error of an all-zero target".into()));
    }
    Ok((num / den).sqrt())
}

/// Mean and standard deviation of each network input feature over `samples`,
/// for use with [`MlpModel::set_input_transform`].
pub fn input_statistics(model: &MlpModel, samples: &[TrainingSample], density_normalized: bool) -> (Vec<f64>, Vec<f64>) {
    let n = model.order + 1;
    let mut mean = vec![0.0; n];
    let mut sq = vec![0.0; n];
    for s in samples {
        let d = if density_normalized { s.moments[0] } else { 1.0 };
        for i in 0..n {
            let v = s.moments[i] / d;
            mean[i] += v;
            sq[i] += v * v;
        }
    }
    let count = samples.len().max(1) as f64;
    let mut std = vec![1.0; n];
    for i in 0..n {
        mean[i] /= count;
        let var = sq[i] / count - mean[i] * mean[i];
        std[i] = if var > 1e-24 { var.sqrt() } else { 1.0 };
    }
    (mean, std)
}

/// A freshly initialized model whose input transform is fitted to `samples`.
pub fn prepare_model(spec: &ModelSpec, samples: &[TrainingSample], seed: u64, density_normalized: bool) -> Result<MlpModel> {
    let mut model = MlpModel::init(spec, seed)?;
    if samples.iter().any(|s| s.moments.len() != spec.order + 1 || s.gradients.len() != spec.order + 1) {
        return Err(Error::Shape {
            expected: spec.order + 1,
            got: samples.iter().map(|s| s.moments.len()).find(|&l| l != spec.order + 1).unwrap_or(0),
        });
    }
    if density_normalized && samples.iter().any(|s| !(s.moments[0] > 0.0)) {
        return Err(Error::Degenerate("density normalization needs m0 > 0 in every sample".into()));
    }
    let (shift, scale) = input_statistics(&model, samples, density_normalized);
    model.set_input_transform(density_normalized, shift, scale)?;
    Ok(model)
}

/// Trains `model` on `train_set`, evaluating `val_set` after every epoch.
pub fn train(model: MlpModel, train_set: &[TrainingSample], val_set: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Usage("training and validation sets must be non-empty".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Usage("epochs and batch size must be positive".into()));
    }
    let mut model = model;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model.param_count());
    let mut grads = vec![0.0; model.param_count()];
    let mut tape = Tape::default();
    let mut scratch = BackScratch::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0usize, model.clone());

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut n_batches) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| &train_set[i]));
            let loss = loss_and_grad_into(&model, &batch, cfg.l2, &mut grads, &mut tape, &mut scratch)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!("non-finite loss or gradient in epoch {epoch}")));
            }
            adam_step(model.params_mut(), &grads, &mut adam, lr);
            loss_sum += loss;
            n_batches += 1;
        }
        let train_e2 = e2_error(&model, train_set)?;
        let val_e2 = e2_error(&model, val_set)?;
        log::debug!("epoch {epoch}: lr {lr:e} train E2 {train_e2:.4e} val E2 {val_e2:.4e}");
        history.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / n_batches as f64,
            train_e2,
            val_e2,
        });
        if val_e2 < best.0 {
            best = (val_e2, epoch, model.clone());
        }
    }
    Ok(TrainOutcome {
        model: best.2,
        best_epoch: best.1,
        history,
    })
}
