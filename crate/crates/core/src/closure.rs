//! Closure weights, the closure coefficient matrix and the maps between them
//! and the characteristic speeds.
//!
//! For order `N` the moment system is `m_t + A m_x = S m` with `A` an
//! `(N+1) x (N+1)` unreduced lower Hessenberg matrix. Rows `0..N` carry the
//! fixed Legendre transport coefficients; the last row holds
//! `a_j = (N+1)/(2N+1) * w_j`, shifted by `N/(2N+1)` at `j = N-1`, where
//! `w` are the weights of the gradient closure
//! `d_x m_{N+1} = sum_j w_j d_x m_j`.
//!
//! Given any set of speeds `r_0..r_N`, [`spectrum_to_weights`] returns the
//! unique weights whose matrix has exactly those eigenvalues.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, max_real_part_shifted, ComplexSpectrum, DenseMatrix};
use crate::nn::MlpModel;
use crate::polyalg::{monomial_to_legendre_table, vieta_coeffs, LegendreCoeffs, MAX_DEGREE};

/// Minimum gap between adjacent speeds produced by the distinct head.
pub const DEFAULT_GAMMA: f64 = 0.1;

/// Imaginary parts below `REAL_TOL * (1 + |Re|)` count as real.
pub const REAL_TOL: f64 = 1e-10;

/// Weights `w_0..w_N` of the gradient closure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosureWeights(pub Vec<f64>);

impl ClosureWeights {
    pub fn zeros(order: usize) -> Self {
        ClosureWeights(vec![0.0; order + 1])
    }

    pub fn order(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Predicted `d_x m_{N+1}` for the given lower-order gradients.
    pub fn predict_gradient(&self, gradients: &[f64]) -> f64 {
        self.0.iter().zip(gradients).map(|(w, g)| w * g).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosureMatrix {
    pub order: usize,
    pub matrix: DenseMatrix,
}

impl ClosureMatrix {
    /// Last-row entries `a_0..a_N`.
    pub fn last_row(&self) -> &[f64] {
        self.matrix.row(self.order)
    }
}

/// Sorted real characteristic speeds.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Spectrum(values)
    }

    pub fn order(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// `rho = N! / (2N - 1)!!`, the product of the superdiagonal of `A`.
pub fn rho(order: usize) -> f64 {
    (1..=order).map(|j| j as f64 / (2 * j - 1) as f64).product()
}

fn check_order(order: usize) -> Result<()> {
    if order == 0 || order + 1 > MAX_DEGREE {
        return Err(Error::UnsupportedOrder(order));
    }
    Ok(())
}

/// Transport entries of row `i < N`: `(i/(2i+1), (i+1)/(2i+1))` at columns
/// `i-1` and `i+1`.
fn transport_coeffs(i: usize) -> (f64, f64) {
    let d = (2 * i + 1) as f64;
    (i as f64 / d, (i + 1) as f64 / d)
}

pub fn weights_to_matrix(w: &ClosureWeights) -> Result<ClosureMatrix> {
    let n = w.order();
    check_order(n)?;
    let mut a = DenseMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        let (lo, hi) = transport_coeffs(i);
        if i > 0 {
            a[(i, i - 1)] = lo;
        }
        a[(i, i + 1)] = hi;
    }
    let nf = n as f64;
    let scale = (nf + 1.0) / (2.0 * nf + 1.0);
    for (j, &wj) in w.0.iter().enumerate() {
        a[(n, j)] = scale * wj;
    }
    a[(n, n - 1)] += nf / (2.0 * nf + 1.0);
    Ok(ClosureMatrix { order: n, matrix: a })
}

/// Legendre coefficients of `q_{N+1} = (N+1)/(2N+1) P_{N+1} + N/(2N+1) P_{N-1}
/// - sum_k a_k P_k`; `rho * q_{N+1}` is the characteristic polynomial of `A`.
pub fn char_poly_legendre(w: &ClosureWeights) -> Result<LegendreCoeffs> {
    let m = weights_to_matrix(w)?;
    let n = m.order;
    let nf = n as f64;
    let mut alpha = vec![0.0; n + 2];
    for (k, &a) in m.last_row().iter().enumerate() {
        alpha[k] = -a;
    }
    alpha[n - 1] += nf / (2.0 * nf + 1.0);
    alpha[n + 1] = (nf + 1.0) / (2.0 * nf + 1.0);
    Ok(LegendreCoeffs(alpha))
}

/// Linear map from monic characteristic-polynomial coefficients
/// `c_0..c_{N+1}` (with `c_{N+1} = 1`) to closure weights:
/// `w_k = -(2N+1)/(rho (N+1)) * sum_{i >= k} c_i b_{ik}`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffToWeights {
    order: usize,
    /// `(N+1) x (N+2)` row-major.
    entries: Vec<f64>,
}

impl CoeffToWeights {
    pub fn new(order: usize) -> Result<Self> {
        check_order(order)?;
        let n = order;
        let b = monomial_to_legendre_table(n + 1)?;
        let factor = -((2 * n + 1) as f64) / (rho(n) * (n + 1) as f64);
        let cols = n + 2;
        let mut entries = vec![0.0; (n + 1) * cols];
        for k in 0..=n {
            for i in k..=n + 1 {
                entries[k * cols + i] = factor * b[i][k];
            }
        }
        Ok(CoeffToWeights { order, entries })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn entry(&self, k: usize, i: usize) -> f64 {
        self.entries[k * (self.order + 2) + i]
    }

    pub fn apply(&self, c: &[f64]) -> Vec<f64> {
        let cols = self.order + 2;
        debug_assert_eq!(c.len(), cols);
        self.entries
            .chunks_exact(cols)
            .map(|row| row.iter().zip(c).map(|(e, ci)| e * ci).sum())
            .collect()
    }

    /// Pull a weight-space cotangent back to coefficient space.
    pub fn apply_transpose(&self, g: &[f64]) -> Vec<f64> {
        let cols = self.order + 2;
        let mut out = vec![0.0; cols];
        for (row, gk) in self.entries.chunks_exact(cols).zip(g) {
            for (o, e) in out.iter_mut().zip(row) {
                *o += e * gk;
            }
        }
        out
    }
}

/// Closure weights whose coefficient matrix has eigenvalues `r`.
///
/// Repeated speeds are accepted; the resulting matrix then has a repeated
/// (defective) eigenvalue.
pub fn spectrum_to_weights(r: &Spectrum) -> Result<ClosureWeights> {
    let map = CoeffToWeights::new(r.order())?;
    Ok(ClosureWeights(map.apply(&vieta_coeffs(r.values()).0)))
}

pub fn closure_spectrum(w: &ClosureWeights) -> Result<ComplexSpectrum> {
    eigenvalues(&weights_to_matrix(w)?.matrix)
}

/// The classical P_N closure: `m_{N+1} = 0`, so every weight vanishes.
pub fn pn_closure(m: &[f64]) -> ClosureWeights {
    ClosureWeights::zeros(m.len().saturating_sub(1))
}

/// Weights predicted by a trained network at moment state `m`.
pub fn ml_closure(model: &MlpModel, m: &[f64]) -> Result<ClosureWeights> {
    model.closure_weights(m)
}

/// Something that maps a local moment vector to closure weights.
pub trait Closure: Sync {
    fn order(&self) -> usize;

    fn weights(&self, m: &[f64]) -> Result<ClosureWeights>;

    /// Characteristic speeds at `m` when they are known without an
    /// eigensolve; `None` means callers must compute them from the matrix.
    fn speeds(&self, _m: &[f64]) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }

    /// Weights and, when available, speeds from a single evaluation.
    fn evaluate(&self, m: &[f64]) -> Result<(ClosureWeights, Option<Vec<f64>>)> {
        Ok((self.weights(m)?, self.speeds(m)?))
    }

    /// True when the weights do not depend on the state.
    fn is_constant(&self) -> bool {
        false
    }

    fn label(&self) -> String;
}

impl<T: Closure + ?Sized> Closure for &T {
    fn order(&self) -> usize {
        (**self).order()
    }

    fn weights(&self, m: &[f64]) -> Result<ClosureWeights> {
        (**self).weights(m)
    }

    fn speeds(&self, m: &[f64]) -> Result<Option<Vec<f64>>> {
        (**self).speeds(m)
    }

    fn evaluate(&self, m: &[f64]) -> Result<(ClosureWeights, Option<Vec<f64>>)> {
        (**self).evaluate(m)
    }

    fn is_constant(&self) -> bool {
        (**self).is_constant()
    }

    fn label(&self) -> String {
        (**self).label()
    }
}

#[derive(Clone, Debug)]
pub struct PnClosure {
    pub order: usize,
}

impl Closure for PnClosure {
    fn order(&self) -> usize {
        self.order
    }

    fn weights(&self, m: &[f64]) -> Result<ClosureWeights> {
        if m.len() != self.order + 1 {
            return Err(Error::Shape {
                expected: self.order + 1,
                got: m.len(),
            });
        }
        Ok(pn_closure(m))
    }

    fn is_constant(&self) -> bool {
        true
    }

    fn label(&self) -> String {
        format!("P{}", self.order)
    }
}

/// Fixed weights independent of the state.
#[derive(Clone, Debug)]
pub struct ConstantClosure {
    pub weights: ClosureWeights,
}

impl Closure for ConstantClosure {
    fn order(&self) -> usize {
        self.weights.order()
    }

    fn weights(&self, _m: &[f64]) -> Result<ClosureWeights> {
        Ok(self.weights.clone())
    }

    fn is_constant(&self) -> bool {
        true
    }

    fn label(&self) -> String {
        "constant".into()
    }
}

impl Closure for MlpModel {
    fn order(&self) -> usize {
        self.order
    }

    fn weights(&self, m: &[f64]) -> Result<ClosureWeights> {
        self.closure_weights(m)
    }

    fn speeds(&self, m: &[f64]) -> Result<Option<Vec<f64>>> {
        Ok(Some(self.speeds(m)?))
    }

    fn evaluate(&self, m: &[f64]) -> Result<(ClosureWeights, Option<Vec<f64>>)> {
        let (w, tape) = crate::nn::forward(self, m)?;
        let mut r = tape.speeds().to_vec();
        r.sort_by(f64::total_cmp);
        Ok((w, Some(r)))
    }

    fn label(&self) -> String {
        format!("ml-{}", self.head.as_str())
    }
}

/// Linearized source Jacobian `diag(-sigma_a, -(sigma_s + sigma_a), ...)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceJacobian {
    pub sigma_s: f64,
    pub sigma_a: f64,
}

impl SourceJacobian {
    pub fn new(sigma_s: f64, sigma_a: f64) -> Result<Self> {
        if !(sigma_s >= 0.0 && sigma_a >= 0.0) {
            return Err(Error::Degenerate(format!(
                "cross sections must be nonnegative (sigma_s = {sigma_s}, sigma_a = {sigma_a})"
            )));
        }
        Ok(SourceJacobian { sigma_s, sigma_a })
    }

    pub fn diagonal(&self, order: usize) -> Vec<f64> {
        let mut d = vec![-(self.sigma_s + self.sigma_a); order + 1];
        d[0] = -self.sigma_a;
        d
    }

    pub fn matrix(&self, order: usize) -> DenseMatrix {
        DenseMatrix::from_diag(&self.diagonal(order))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityReport {
    pub all_real: bool,
    pub max_abs_eig: f64,
    pub min_gap: f64,
    /// Keyed by the threshold in scientific notation, e.g. `"1e-3"`.
    pub close_pair_counts: BTreeMap<String, usize>,
    pub unstable_xi_count: usize,
}

/// Formats a threshold the way report keys and CSV headers spell it.
pub fn threshold_key(eps: f64) -> String {
    format!("{eps:e}")
}

pub fn hyperbolicity_check(spec: &ComplexSpectrum, thresholds: &[f64]) -> HyperbolicityReport {
    let all_real = spec
        .values
        .iter()
        .all(|z| z.im.abs() <= REAL_TOL * (1.0 + z.re.abs()));
    let mut re = spec.real_parts();
    re.sort_by(f64::total_cmp);
    let gaps: Vec<f64> = re.windows(2).map(|w| w[1] - w[0]).collect();
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let close_pair_counts = thresholds
        .iter()
        .map(|&eps| (threshold_key(eps), gaps.iter().filter(|&&g| g < eps).count()))
        .collect();
    HyperbolicityReport {
        all_real,
        max_abs_eig: spec.max_abs(),
        min_gap,
        close_pair_counts,
        unstable_xi_count: 0,
    }
}

/// Result of scanning `max Re spec(i xi A + S)` over integer wavenumbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityScan {
    pub xi: Vec<i64>,
    pub max_real: Vec<f64>,
    pub unstable_count: usize,
}

/// Values above this count as linearly unstable.
pub const UNSTABLE_TOL: f64 = 1e-8;

pub fn linear_stability_scan(
    w: &ClosureWeights,
    source: &SourceJacobian,
    xi_min: i64,
    xi_max: i64,
) -> Result<StabilityScan> {
    let a = weights_to_matrix(w)?;
    let s = source.matrix(a.order);
    let mut xi = Vec::new();
    let mut max_real = Vec::new();
    for k in xi_min..=xi_max {
        xi.push(k);
        max_real.push(max_real_part_shifted(&a.matrix, &s, k as f64)?);
    }
    let unstable_count = max_real.iter().filter(|&&v| v > UNSTABLE_TOL).count();
    Ok(StabilityScan {
        xi,
        max_real,
        unstable_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::{gauss_legendre, legendre_to_poly, poly_roots, PolyCoeffs};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn random_spectrum(rng: &mut ChaCha8Rng, n: usize, min_gap: f64) -> Vec<f64> {
        loop {
            let mut r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            r.sort_by(f64::total_cmp);
            if r.windows(2).all(|w| w[1] - w[0] >= min_gap) {
                return r;
            }
        }
    }

    #[test]
    fn matrix_examples() {
        let a = weights_to_matrix(&ClosureWeights(vec![0.0, 0.0])).unwrap();
        assert!(close(a.matrix.as_slice(), &[0.0, 1.0, 1.0 / 3.0, 0.0], 1e-16));

        let a = weights_to_matrix(&ClosureWeights(vec![0.0; 3])).unwrap();
        assert!(close(
            a.matrix.as_slice(),
            &[0.0, 1.0, 0.0, 1.0 / 3.0, 0.0, 2.0 / 3.0, 0.0, 0.4, 0.0],
            1e-16
        ));

        let a = weights_to_matrix(&ClosureWeights(vec![0.0, 0.0, 1.0])).unwrap();
        assert!(close(a.last_row(), &[0.0, 0.4, 0.6], 1e-16));

        assert!(matches!(
            weights_to_matrix(&ClosureWeights(vec![0.0])),
            Err(Error::UnsupportedOrder(0))
        ));
    }

    #[test]
    fn char_poly_examples() {
        let a = char_poly_legendre(&ClosureWeights::zeros(2)).unwrap();
        assert!(close(&a.0, &[0.0, 0.0, 0.0, 0.6], 1e-16));
        let a = char_poly_legendre(&ClosureWeights::zeros(1)).unwrap();
        assert!(close(&a.0, &[0.0, 0.0, 2.0 / 3.0], 1e-16));
        assert!(close(&legendre_to_poly(&a).0, &[-1.0 / 3.0, 0.0, 1.0], 1e-15));
        assert!((rho(2) - 2.0 / 3.0).abs() < 1e-16);
        let m = weights_to_matrix(&ClosureWeights::zeros(2)).unwrap();
        assert!((rho(2) - m.matrix[(0, 1)] * m.matrix[(1, 2)]).abs() < 1e-16);
    }

    #[test]
    fn char_poly_matches_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..=5 {
            let w = ClosureWeights((0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let m = weights_to_matrix(&w).unwrap();
            let q = legendre_to_poly(&char_poly_legendre(&w).unwrap()).scale(rho(n));
            for s in 0..7 {
                let x = Complex64::new(-1.0 + 0.3 * s as f64, 0.2);
                let det = crate::linalg::tests::brute_char_poly(&m.matrix, x);
                assert!((det - q.eval_complex(x)).norm() < 1e-12 * (1.0 + det.norm()));
            }
        }
    }

    #[test]
    fn spectrum_to_weights_examples() {
        let s = (0.6f64).sqrt();
        let w = spectrum_to_weights(&Spectrum::new(vec![-s, 0.0, s])).unwrap();
        assert!(close(&w.0, &[0.0; 3], 1e-14), "{w:?}");
        let r = 1.0 / 3f64.sqrt();
        let w = spectrum_to_weights(&Spectrum::new(vec![-r, r])).unwrap();
        assert!(close(&w.0, &[0.0; 2], 1e-15));
        // repeated speeds are representable
        let w = spectrum_to_weights(&Spectrum::new(vec![0.0; 4])).unwrap();
        let m = weights_to_matrix(&w).unwrap();
        let q = legendre_to_poly(&char_poly_legendre(&w).unwrap()).scale(rho(3));
        assert!(close(&q.0, &[0.0, 0.0, 0.0, 0.0, 1.0], 1e-13));
        assert_eq!(m.order, 3);
    }

    #[test]
    fn closure_spectrum_examples() {
        let r = 1.0 / 3f64.sqrt();
        let s = closure_spectrum(&ClosureWeights::zeros(1)).unwrap();
        assert!(close(&s.real_parts(), &[-r, r], 1e-14));
        let s = closure_spectrum(&ClosureWeights::zeros(2)).unwrap();
        let v = 0.6f64.sqrt();
        assert!(close(&s.real_parts(), &[-v, 0.0, v], 1e-14));
        let s = closure_spectrum(&ClosureWeights::zeros(6)).unwrap();
        let re = s.real_parts();
        assert!(re.iter().all(|x| x.abs() < 1.0));
        assert!(re.windows(2).all(|w| w[1] > w[0]));
        for (a, b) in re.iter().zip(re.iter().rev()) {
            assert!((a + b).abs() < 1e-12);
        }
        let nodes = gauss_legendre(7).unwrap().nodes;
        assert!(close(&re, &nodes, 1e-12));
    }

    #[test]
    fn pn_closure_examples() {
        let w = pn_closure(&[1.0, 0.2, 0.1, 0.0, 0.0, 0.0, 0.3]);
        assert_eq!(w.0, vec![0.0; 7]);
        let s = closure_spectrum(&w).unwrap();
        assert!(s.max_abs() < 1.0);
        let p = PnClosure { order: 6 };
        assert!(matches!(p.weights(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn hyperbolicity_examples() {
        let r = hyperbolicity_check(&ComplexSpectrum::from_real(&[-0.5, 0.0, 0.5]), &[1e-3]);
        assert!(r.all_real);
        assert_eq!(r.min_gap, 0.5);
        assert_eq!(r.close_pair_counts["1e-3"], 0);
        assert_eq!(r.max_abs_eig, 0.5);

        let r = hyperbolicity_check(&ComplexSpectrum::from_real(&[0.1, 0.1 + 1e-4]), &[1e-3, 1e-5]);
        assert_eq!(r.close_pair_counts["1e-3"], 1);
        assert_eq!(r.close_pair_counts["1e-5"], 0);

        let rot = ComplexSpectrum::new(vec![Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0)]);
        assert!(!hyperbolicity_check(&rot, &[]).all_real);

        let json = serde_json::to_value(&r).unwrap();
        for key in ["all_real", "max_abs_eig", "min_gap", "close_pair_counts", "unstable_xi_count"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn stability_scan_examples() {
        let w = ClosureWeights::zeros(3);
        let scan = linear_stability_scan(&w, &SourceJacobian::new(0.0, 1.0).unwrap(), 0, 0).unwrap();
        assert!((scan.max_real[0] + 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = ClosureWeights((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let scan = linear_stability_scan(&w, &SourceJacobian::new(0.0, 0.0).unwrap(), 0, 0).unwrap();
        assert!(scan.max_real[0].abs() < 1e-12);

        let scan = linear_stability_scan(
            &ClosureWeights::zeros(6),
            &SourceJacobian::new(1.0, 1.0).unwrap(),
            -100,
            100,
        )
        .unwrap();
        assert_eq!(scan.xi.len(), 201);
        assert_eq!(scan.unstable_count, 0);
        assert!(scan.max_real.iter().all(|&v| v <= 1e-8));
    }

    #[test]
    fn source_jacobian_rejects_negative() {
        assert!(SourceJacobian::new(-1.0, 0.0).is_err());
        assert_eq!(SourceJacobian::new(2.0, 0.5).unwrap().diagonal(2), vec![-0.5, -2.5, -2.5]);
    }

    #[test]
    fn pn_spectrum_is_gauss_nodes_up_to_16() {
        for n in 1..=16 {
            let s = closure_spectrum(&ClosureWeights::zeros(n)).unwrap();
            let nodes = gauss_legendre(n + 1).unwrap().nodes;
            assert!(close(&s.real_parts(), &nodes, 1e-10), "N = {n}");
        }
    }

    #[test]
    fn hyperbolicity_classification_agrees_with_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let classify = |s: &ComplexSpectrum| {
            let rep = hyperbolicity_check(s, &[]);
            rep.all_real && rep.min_gap > 1e-6
        };
        let mut agree = 0;
        for case in 0..200 {
            let n = 2 + case % 6;
            let w = ClosureWeights((0..=n).map(|_| rng.gen_range(-1.5..1.5)).collect());
            let by_matrix = classify(&closure_spectrum(&w).unwrap());
            let q: PolyCoeffs =
                legendre_to_poly(&char_poly_legendre(&w).unwrap()).scale(rho(n));
            let by_roots = classify(&poly_roots(&q).unwrap());
            if by_matrix == by_roots {
                agree += 1;
            }
        }
        assert_eq!(agree, 200);
    }

    proptest! {
        #[test]
        fn spectrum_round_trip(seed in 0u64..100_000, n in 2usize..=10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_spectrum(&mut rng, n + 1, 0.05);
            let w = spectrum_to_weights(&Spectrum::new(r.clone())).unwrap();
            let s = closure_spectrum(&w).unwrap();
            for (a, b) in s.values.iter().zip(&r) {
                prop_assert!((a.re - b).abs() < 1e-7 && a.im.abs() < 1e-7);
            }
        }

        #[test]
        fn weights_matrix_weights(seed in 0u64..100_000, n in 1usize..=8) {
            // matrix -> char poly -> roots -> weights recovers the input when
            // the spectrum happens to be real and simple
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_spectrum(&mut rng, n + 1, 0.05);
            let w = spectrum_to_weights(&Spectrum::new(r)).unwrap();
            let back = closure_spectrum(&w).unwrap();
            let w2 = spectrum_to_weights(&Spectrum::new(back.real_parts())).unwrap();
            let scale = 1.0 + w.0.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for (a, b) in w.0.iter().zip(&w2.0) {
                prop_assert!((a - b).abs() < 1e-7 * scale);
            }
        }
    }
}
