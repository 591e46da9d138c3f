//! Forward pass with a recorded tape and reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{kappa, sigmoid, Head, MlpModel, TrainingSample};
use crate::closure::ClosureWeights;
use crate::error::{Error, Result};

/// Intermediate values of one forward evaluation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    /// `acts[0]` is the transformed input, `acts[l]` the output of hidden layer `l`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pres: Vec<Vec<f64>>,
    z: Vec<f64>,
    r: Vec<f64>,
    /// `stages[j]` holds the coefficients of `prod_{i<j} (x - r_i)`.
    stages: Vec<Vec<f64>>,
    stages_lo: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl Tape {
    pub fn raw_output(&self) -> &[f64] {
        &self.z
    }

    /// Speeds in head order (ascending for the distinct head).
    pub fn speeds(&self) -> &[f64] {
        &self.r
    }

    /// Monic characteristic polynomial coefficients, lowest degree first.
    pub fn poly_coeffs(&self) -> &[f64] {
        self.stages.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn dd_add(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (s, e) = two_sum(a.0, b.0);
    let e = e + a.1 + b.1;
    let hi = s + e;
    (hi, e - (hi - s))
}

/// `(hi + lo) * x` as a double-double.
#[inline]
fn dd_mul(hi: f64, lo: f64, x: f64) -> (f64, f64) {
    let p = hi * x;
    let e = hi.mul_add(x, -p) + lo * x;
    let s = p + e;
    (s, e - (s - p))
}

/// Compensated dot product.
pub(crate) fn dot2(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        acc = dd_add(acc, dd_mul(x, 0.0, y));
    }
    acc.0 + acc.1
}

fn dense(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let n_in = x.len();
    out.clear();
    out.extend(b.iter().zip(w.chunks_exact(n_in)).map(|(bi, row)| {
        bi + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()
    }));
}

pub(crate) fn forward_into(model: &MlpModel, m: &[f64], tape: &mut Tape) -> Result<()> {
    model.check_input(m)?;
    let n_layers = model.slots.len();
    tape.acts.resize_with(n_layers, Vec::new);
    tape.pres.resize_with(n_layers - 1, Vec::new);
    model.transform_input(m, &mut tape.acts[0]);

    for (l, slot) in model.slots.iter().enumerate() {
        let w = &model.params[slot.w_range()];
        let b = &model.params[slot.b_range()];
        if l + 1 == n_layers {
            let (x, z) = (&tape.acts[l], &mut tape.z);
            dense(w, b, x, z);
        } else {
            let mut pre = std::mem::take(&mut tape.pres[l]);
            dense(w, b, &tape.acts[l], &mut pre);
            let act = &mut tape.acts[l + 1];
            act.clear();
            act.extend(pre.iter().map(|&p| model.activation.apply(p)));
            tape.pres[l] = pre;
        }
    }

    tape.r.clear();
    match model.head {
        Head::Bound => tape.r.extend(tape.z.iter().map(|z| z.tanh())),
        Head::Distinct => {
            let mut acc = tape.z[0];
            tape.r.push(acc);
            for &z in &tape.z[1..] {
                acc += kappa(z, model.gamma);
                tape.r.push(acc);
            }
        }
    }

    // The coefficient map has large entries of alternating sign, so the
    // expansion and the map are carried out in double-double arithmetic.
    let n = model.order;
    tape.stages.resize_with(n + 2, Vec::new);
    tape.stages_lo.resize_with(n + 2, Vec::new);
    tape.stages[0].clear();
    tape.stages[0].push(1.0);
    tape.stages_lo[0].clear();
    tape.stages_lo[0].push(0.0);
    for j in 0..=n {
        let (head, tail) = tape.stages.split_at_mut(j + 1);
        let (head_lo, tail_lo) = tape.stages_lo.split_at_mut(j + 1);
        let (prev, prev_lo) = (&head[j], &head_lo[j]);
        let (next, next_lo) = (&mut tail[0], &mut tail_lo[0]);
        next.clear();
        next_lo.clear();
        let rj = tape.r[j];
        for i in 0..=j + 1 {
            let shifted = if i > 0 { (prev[i - 1], prev_lo[i - 1]) } else { (0.0, 0.0) };
            let scaled = if i <= j { dd_mul(prev[i], prev_lo[i], -rj) } else { (0.0, 0.0) };
            let (hi, lo) = dd_add(shifted, scaled);
            next.push(hi);
            next_lo.push(lo);
        }
    }

    let c = &tape.stages[n + 1];
    let c_lo = &tape.stages_lo[n + 1];
    tape.weights.clear();
    for k in 0..=n {
        let mut acc = (0.0, 0.0);
        for i in k..=n + 1 {
            let e = model.coeff_map.entry(k, i);
            acc = dd_add(acc, dd_mul(c[i], c_lo[i], e));
        }
        tape.weights.push(acc.0 + acc.1);
    }
    if tape.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numeric("non-finite closure weights".into()));
    }
    Ok(())
}

/// Closure weights at `m` together with the recorded intermediates.
pub fn forward(model: &MlpModel, m: &[f64]) -> Result<(ClosureWeights, Tape)> {
    let mut tape = Tape::default();
    forward_into(model, m, &mut tape)?;
    Ok((ClosureWeights(tape.weights.clone()), tape))
}

/// Scratch buffers reused across backward passes.
#[derive(Default)]
pub(crate) struct BackScratch {
    g_c: Vec<f64>,
    g_prev: Vec<f64>,
    g_r: Vec<f64>,
    g_z: Vec<f64>,
    g_a: Vec<f64>,
    g_a_next: Vec<f64>,
}

/// Adds `d(upstream . w)/d(theta)` to `grads`.
pub(crate) fn backward_into(
    model: &MlpModel,
    tape: &Tape,
    upstream: &[f64],
    grads: &mut [f64],
    s: &mut BackScratch,
) {
    let n = model.order;

    // weights are linear in the coefficients
    s.g_c.clear();
    s.g_c.resize(n + 2, 0.0);
    let cols = n + 2;
    for (k, &gk) in upstream.iter().enumerate() {
        if gk != 0.0 {
            for i in k..cols {
                s.g_c[i] += model.coeff_map.entry(k, i) * gk;
            }
        }
    }

    // unwind the Vieta products
    s.g_r.clear();
    s.g_r.resize(n + 1, 0.0);
    for j in (0..=n).rev() {
        let prev = &tape.stages[j];
        let rj = tape.r[j];
        s.g_prev.clear();
        let mut gr = 0.0;
        for (i, &ci) in prev.iter().enumerate() {
            s.g_prev.push(s.g_c[i + 1] - rj * s.g_c[i]);
            gr -= ci * s.g_c[i];
        }
        s.g_r[j] = gr;
        std::mem::swap(&mut s.g_c, &mut s.g_prev);
    }

    s.g_z.clear();
    match model.head {
        Head::Bound => s
            .g_z
            .extend(s.g_r.iter().zip(&tape.r).map(|(g, r)| g * (1.0 - r * r))),
        Head::Distinct => {
            // r is a cumulative sum, so dr_i/dz_j = kappa'(z_j) for j <= i
            s.g_z.resize(n + 1, 0.0);
            let mut acc = 0.0;
            for i in (0..=n).rev() {
                acc += s.g_r[i];
                s.g_z[i] = if i == 0 { acc } else { acc * sigmoid(tape.z[i]) };
            }
        }
    }

    // dense layers, last to first
    s.g_a.clear();
    s.g_a.extend_from_slice(&s.g_z);
    for l in (0..model.slots.len()).rev() {
        let slot = model.slots[l];
        let x = &tape.acts[l];
        {
            let (gw, gb) = grads[slot.offset..slot.b_range().end].split_at_mut(slot.n_in * slot.n_out);
            for ((row, gbi), &g) in gw.chunks_exact_mut(slot.n_in).zip(gb.iter_mut()).zip(&s.g_a) {
                if g != 0.0 {
                    *gbi += g;
                    for (wr, xi) in row.iter_mut().zip(x) {
                        *wr += g * xi;
                    }
                }
            }
        }
        if l == 0 {
            break;
        }
        let w = &model.params[slot.w_range()];
        s.g_a_next.clear();
        s.g_a_next.resize(slot.n_in, 0.0);
        for (row, &g) in w.chunks_exact(slot.n_in).zip(&s.g_a) {
            if g != 0.0 {
                for (o, wr) in s.g_a_next.iter_mut().zip(row) {
                    *o += g * wr;
                }
            }
        }
        let pre = &tape.pres[l - 1];
        let act = &tape.acts[l];
        for ((o, &p), &a) in s.g_a_next.iter_mut().zip(pre).zip(act) {
            *o *= model.activation.derivative(p, a);
        }
        std::mem::swap(&mut s.g_a, &mut s.g_a_next);
    }
}

/// Gradient of `upstream . w(m)` with respect to every parameter.
pub fn backward(model: &MlpModel, tape: &Tape, upstream: &[f64]) -> Vec<f64> {
    let mut grads = vec![0.0; model.param_count()];
    backward_into(model, tape, upstream, &mut grads, &mut BackScratch::default());
    grads
}

fn check_sample(model: &MlpModel, s: &TrainingSample) -> Result<()> {
    if s.gradients.len() != model.order + 1 {
        return Err(Error::Shape {
            expected: model.order + 1,
            got: s.gradients.len(),
        });
    }
    Ok(())
}

/// Mean squared error of the predicted closing gradient, without penalty.
pub fn loss_batch(model: &MlpModel, batch: &[TrainingSample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let mut tape = Tape::default();
    let mut sum = 0.0;
    for s in batch {
        check_sample(model, s)?;
        forward_into(model, &s.moments, &mut tape)?;
        let pred = dot2(&tape.weights, &s.gradients);
        sum += (pred - s.target).powi(2);
    }
    Ok(sum / batch.len() as f64)
}

/// Penalty-free batch loss and the gradient of `loss + l2 * |theta|^2`.
pub fn loss_and_grad(model: &MlpModel, batch: &[TrainingSample], l2: f64) -> Result<(f64, Vec<f64>)> {
    let mut grads = vec![0.0; model.param_count()];
    let refs: Vec<&TrainingSample> = batch.iter().collect();
    let loss = loss_and_grad_into(model, &refs, l2, &mut grads, &mut Tape::default(), &mut BackScratch::default())?;
    Ok((loss, grads))
}

pub(crate) fn loss_and_grad_into(
    model: &MlpModel,
    batch: &[&TrainingSample],
    l2: f64,
    grads: &mut [f64],
    tape: &mut Tape,
    scratch: &mut BackScratch,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    grads.iter_mut().for_each(|g| *g = 0.0);
    let inv = 1.0 / batch.len() as f64;
    let mut sum = 0.0;
    let mut upstream = vec![0.0; model.order + 1];
    for s in batch {
        check_sample(model, s)?;
        forward_into(model, &s.moments, tape)?;
        let pred = dot2(&tape.weights, &s.gradients);
        let res = pred - s.target;
        sum += res * res;
        for (u, g) in upstream.iter_mut().zip(&s.gradients) {
            *u = 2.0 * res * inv * g;
        }
        backward_into(model, tape, &upstream, grads, scratch);
    }
    if l2 != 0.0 {
        for (g, p) in grads.iter_mut().zip(&model.params) {
            *g += 2.0 * l2 * p;
        }
    }
    Ok(sum * inv)
}

/// Largest relative discrepancy `|fd - ad| / (|fd| + |ad| + 1e-12)` between
/// central differences and reverse-mode gradients of the single-sample loss,
/// over `n_params` parameters chosen with `seed`.
pub fn grad_check(model: &MlpModel, sample_point: &TrainingSample, step: f64, n_params: usize, seed: u64) -> Result<f64> {
    let batch = std::slice::from_ref(sample_point);
    let (_, ad) = loss_and_grad(model, batch, 0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = n_params.min(model.param_count());
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for idx in sample(&mut rng, model.param_count(), count).into_iter() {
        let p0 = model.params[idx];
        probe.params[idx] = p0 + step;
        let lp = loss_batch(&probe, batch)?;
        probe.params[idx] = p0 - step;
        let lm = loss_batch(&probe, batch)?;
        probe.params[idx] = p0;
        let fd = (lp - lm) / (2.0 * step);
        let rel = (fd - ad[idx]).abs() / (fd.abs() + ad[idx].abs() + 1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, MlpModel, ModelSpec};
    use rand::Rng;

    fn sample_point(order: usize, seed: u64) -> TrainingSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut moments = vec![1.0];
        moments.extend((0..order).map(|_| rng.gen_range(-0.3..0.3)));
        TrainingSample {
            moments,
            gradients: (0..=order).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            target: rng.gen_range(-1.0..1.0),
        }
    }

    fn model(order: usize, head: Head, act: Activation, seed: u64) -> MlpModel {
        let spec = ModelSpec {
            order,
            hidden: vec![16, 16, 16],
            activation: act,
            head,
            gamma: 0.1,
        };
        MlpModel::init(&spec, seed).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (head, act) in [
            (Head::Bound, Activation::Tanh),
            (Head::Distinct, Activation::Tanh),
            (Head::Bound, Activation::Relu),
            (Head::Distinct, Activation::Relu),
        ] {
            for seed in 0..3 {
                let m = model(6, head, act, seed);
                let s = sample_point(6, seed + 10);
                let err = grad_check(&m, &s, 1e-6, 20, seed).unwrap();
                assert!(err <= 1e-5, "{head:?} {act:?} seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn backward_of_weight_component_matches_fd() {
        // d w_k / d theta for the raw pipeline, not just the loss
        let m = model(3, Head::Distinct, Activation::Tanh, 4);
        let x = [1.0, 0.1, -0.05, 0.2];
        let (_, tape) = forward(&m, &x).unwrap();
        for k in 0..4 {
            let mut up = vec![0.0; 4];
            up[k] = 1.0;
            let g = backward(&m, &tape, &up);
            let mut probe = m.clone();
            for idx in [0, 7, m.param_count() - 1, m.param_count() - 6] {
                let p0 = probe.params[idx];
                probe.params[idx] = p0 + 1e-6;
                let wp = probe.closure_weights(&x).unwrap().0[k];
                probe.params[idx] = p0 - 1e-6;
                let wm = probe.closure_weights(&x).unwrap().0[k];
                probe.params[idx] = p0;
                let fd = (wp - wm) / 2e-6;
                assert!((fd - g[idx]).abs() <= 1e-6 * (1.0 + fd.abs()), "k {k} idx {idx}: {fd} vs {}", g[idx]);
            }
        }
    }

    #[test]
    fn gradients_through_saturated_bound_head() {
        let mut m = model(3, Head::Bound, Activation::Tanh, 6);
        let last = m.n_layers() - 1;
        let br = m.slots[last].b_range();
        m.params[br].copy_from_slice(&[5.0, -5.0, 4.5, -4.8]);
        let s = sample_point(3, 1);
        // gradients here are ~1e-6, so a wider step keeps rounding out of the difference
        let err = grad_check(&m, &s, 1e-4, 20, 2).unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn single_layer_model_gradients() {
        let spec = ModelSpec {
            order: 2,
            hidden: vec![],
            activation: Activation::Relu,
            head: Head::Distinct,
            gamma: 0.1,
        };
        let m = MlpModel::init(&spec, 8).unwrap();
        let s = sample_point(2, 4);
        let err = grad_check(&m, &s, 1e-6, 12, 0).unwrap();
        assert!(err <= 1e-8, "{err}");
    }

    /// d c_i / d r_j is minus the elementary symmetric polynomial of degree
    /// N+1-i-1 in the remaining roots.
    #[test]
    fn vieta_gradient_matches_subset_sums() {
        let spec = ModelSpec {
            order: 2,
            hidden: vec![2],
            activation: Activation::Relu,
            head: Head::Distinct,
            gamma: 0.1,
        };
        let mut model = MlpModel::zeros(&spec).unwrap();
        // roots 1, 2, 3 from the output bias alone
        let inv_softplus = |y: f64| y + (-(-y).exp_m1()).ln();
        let last = model.n_layers() - 1;
        let br = model.slots[last].b_range();
        model.params[br].copy_from_slice(&[1.0, inv_softplus(0.9), inv_softplus(0.9)]);
        let (_, tape) = forward(&model, &[0.0, 0.0, 0.0]).unwrap();
        let roots = tape.speeds().to_vec();
        for (a, b) in roots.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let esym = |vals: &[f64], k: usize| -> f64 {
            (0u32..1 << vals.len())
                .filter(|mask| mask.count_ones() as usize == k)
                .map(|mask| (0..vals.len()).filter(|i| mask >> i & 1 == 1).map(|i| vals[i]).product::<f64>())
                .sum()
        };
        // pull back a unit cotangent on c_i through the recorded recurrence
        for i in 0..3 {
            let mut s = BackScratch::default();
            s.g_c = vec![0.0; 4];
            s.g_c[i] = 1.0;
            for j in (0..=2).rev() {
                let prev = &tape.stages[j];
                let rj = tape.r[j];
                s.g_prev.clear();
                let mut gr = 0.0;
                for (ii, &ci) in prev.iter().enumerate() {
                    s.g_prev.push(s.g_c[ii + 1] - rj * s.g_c[ii]);
                    gr -= ci * s.g_c[ii];
                }
                s.g_r.push(gr);
                std::mem::swap(&mut s.g_c, &mut s.g_prev);
            }
            s.g_r.reverse();
            for j in 0..3 {
                let others: Vec<f64> = (0..3).filter(|&q| q != j).map(|q| roots[q]).collect();
                // c_i = (-1)^(3-i) e_{3-i}(r), so dc_i/dr_j = (-1)^(3-i) e_{2-i}(others)
                let sign = if (3 - i) % 2 == 0 { 1.0 } else { -1.0 };
                let expected = sign * esym(&others, 2 - i);
                assert!((s.g_r[j] - expected).abs() < 1e-12, "c_{i} r_{j}: {} vs {expected}", s.g_r[j]);
            }
        }
    }

    #[test]
    fn zero_relu_network_has_zero_deep_gradients() {
        let spec = ModelSpec {
            order: 3,
            hidden: vec![5, 5, 5],
            activation: Activation::Relu,
            head: Head::Bound,
            gamma: 0.1,
        };
        let m = MlpModel::zeros(&spec).unwrap();
        let s = TrainingSample {
            moments: vec![0.0; 4],
            gradients: vec![1.0, -0.5, 0.3, 0.2],
            target: 1.0,
        };
        let (_, g) = loss_and_grad(&m, &[s], 0.0).unwrap();
        for l in 0..m.n_layers() - 1 {
            assert!(g[m.slots[l].w_range()].iter().all(|&v| v == 0.0));
        }
        // only the output bias sees a signal
        assert!(g[m.slots[m.n_layers() - 1].b_range()].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn loss_hand_examples() {
        let spec = ModelSpec {
            order: 1,
            hidden: vec![],
            activation: Activation::Relu,
            head: Head::Bound,
            gamma: 0.1,
        };
        let m = MlpModel::zeros(&spec).unwrap();
        // zero speeds give w = (0, -1/3 * 3 ... ) computed independently below
        // N = 1, rho = 1, c = (0, 0, 1): w_k = -(3/2) b_{2k}, b_20 = 1/3, b_21 = 0
        let w = m.closure_weights(&[1.0, 0.0]).unwrap();
        assert!((w.0[0] + 0.5).abs() < 1e-15 && w.0[1].abs() < 1e-15);
        let s = TrainingSample {
            moments: vec![1.0, 0.0],
            gradients: vec![2.0, 7.0],
            target: 0.5,
        };
        // prediction -1, residual -1.5
        assert!((loss_batch(&m, std::slice::from_ref(&s)).unwrap() - 2.25).abs() < 1e-14);
        let perfect = TrainingSample { target: -1.0, ..s.clone() };
        assert_eq!(loss_batch(&m, &[perfect]).unwrap(), 0.0);
        let blind = TrainingSample {
            moments: vec![1.0, 0.0],
            gradients: vec![0.0, 1.0],
            target: 1.0,
        };
        assert_eq!(loss_batch(&m, &[blind]).unwrap(), 1.0);
    }

    #[test]
    fn l2_penalty_gradient() {
        let m = model(2, Head::Bound, Activation::Relu, 1);
        let s = sample_point(2, 3);
        let (_, g0) = loss_and_grad(&m, std::slice::from_ref(&s), 0.0).unwrap();
        let (_, g1) = loss_and_grad(&m, std::slice::from_ref(&s), 0.5).unwrap();
        for ((a, b), p) in g0.iter().zip(&g1).zip(m.params()) {
            assert!((b - a - p).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_is_mean_squared_residual() {
        let m = model(3, Head::Bound, Activation::Relu, 2);
        let batch: Vec<_> = (0..5).map(|i| sample_point(3, i)).collect();
        let direct: f64 = batch
            .iter()
            .map(|s| (m.closure_weights(&s.moments).unwrap().predict_gradient(&s.gradients) - s.target).powi(2))
            .sum::<f64>()
            / 5.0;
        assert!((loss_batch(&m, &batch).unwrap() - direct).abs() < 1e-14);
        assert!(matches!(loss_batch(&m, &[]), Err(Error::Usage(_))));
    }
}
