//! Legendre polynomials, Gauss-Legendre quadrature, monomial/Legendre basis
//! changes, Vieta expansion and the associated polynomial sequence of an
//! unreduced lower Hessenberg matrix.

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, ComplexSpectrum, DenseMatrix};

/// Largest degree accepted by the monomial-to-Legendre transform.
pub const MAX_DEGREE: usize = 40;

/// Monomial-basis coefficients `c_0 + c_1 x + ... + c_d x^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyCoeffs(pub Vec<f64>);

/// Legendre-basis coefficients `alpha_0 P_0 + ... + alpha_d P_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct LegendreCoeffs(pub Vec<f64>);

impl PolyCoeffs {
    pub fn new(coeffs: Vec<f64>) -> Self {
        PolyCoeffs(coeffs)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    /// Degree ignoring trailing zero coefficients (0 for the zero polynomial).
    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, x: num_complex::Complex64) -> num_complex::Complex64 {
        self.0
            .iter()
            .rev()
            .fold(num_complex::Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
    }

    pub fn scale(&self, s: f64) -> Self {
        PolyCoeffs(self.0.iter().map(|c| c * s).collect())
    }
}

impl LegendreCoeffs {
    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.0.len();
        if n == 0 {
            return 0.0;
        }
        let p = legendre_all(n - 1, x);
        self.0.iter().zip(&p).map(|(a, b)| a * b).sum()
    }
}

/// `P_n(x)` by the upward three-term recurrence.
pub fn legendre_eval(n: usize, x: f64) -> f64 {
    legendre_with_deriv(n, x).0
}

/// `(P_n(x), P_n'(x))`.
pub fn legendre_with_deriv(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    // derivative recurrence P'_{k+1} = P'_{k-1} + (2k+1) P_k avoids the
    // (x^2 - 1) division at the endpoints
    let (mut d0, mut d1) = (0.0, 1.0);
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        let d2 = d0 + (2.0 * kf + 1.0) * p1;
        p0 = p1;
        p1 = p2;
        d0 = d1;
        d1 = d2;
    }
    (p1, d1)
}

/// `[P_0(x), ..., P_n(x)]`.
pub fn legendre_all(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(x);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * out[k] - kf * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// Monomial coefficients of `P_n`.
pub fn legendre_monomial(n: usize) -> PolyCoeffs {
    let mut prev = vec![1.0];
    if n == 0 {
        return PolyCoeffs(prev);
    }
    let mut cur = vec![0.0, 1.0];
    for k in 1..n {
        let kf = k as f64;
        let mut next = vec![0.0; k + 2];
        for (i, &c) in cur.iter().enumerate() {
            next[i + 1] += (2.0 * kf + 1.0) * c / (kf + 1.0);
        }
        for (i, &c) in prev.iter().enumerate() {
            next[i] -= kf * c / (kf + 1.0);
        }
        prev = cur;
        cur = next;
    }
    PolyCoeffs(cur)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss-Legendre rule of order `n` on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> Result<Quadrature> {
    if n == 0 {
        return Err(Error::Degenerate("quadrature order must be >= 1".into()));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    // roots are symmetric; solve for the upper half
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut converged = false;
        for _ in 0..100 {
            let (p, dp) = legendre_with_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-15 * x.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numeric(format!(
                "Newton iteration for Gauss-Legendre node {i} of order {n} did not converge"
            )));
        }
        let (_, dp) = legendre_with_deriv(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(Quadrature { nodes, weights })
}

/// Row `b_{m,0..=m}` of the monomial-to-Legendre transform:
/// `x^m = sum_k b_{mk} P_k(x)`.
pub fn monomial_to_legendre_row(m: usize) -> Result<Vec<f64>> {
    if m > MAX_DEGREE {
        return Err(Error::Range {
            degree: m,
            max: MAX_DEGREE,
        });
    }
    let mut row = vec![0.0; m + 1];
    // F(m, 0) = m! / (2m - 1)!!
    let mut f = 1.0;
    for j in 1..=m {
        f *= j as f64 / (2 * j - 1) as f64;
    }
    let mf = m as f64;
    for k in 0..=m / 2 {
        row[m - 2 * k] = f;
        let kf = k as f64;
        // F(m, k+1) / F(m, k)
        f *= (2.0 * mf - 4.0 * kf - 3.0) / (2.0 * mf - 4.0 * kf + 1.0) * (2.0 * mf - 2.0 * kf + 1.0)
            / (2.0 * (kf + 1.0));
    }
    Ok(row)
}

/// Full lower-triangular table `b[m][k]` for `m <= max_degree`.
pub fn monomial_to_legendre_table(max_degree: usize) -> Result<Vec<Vec<f64>>> {
    (0..=max_degree).map(monomial_to_legendre_row).collect()
}

/// `alpha_k = sum_{i >= k} c_i b_{ik}`.
pub fn poly_to_legendre(p: &PolyCoeffs) -> Result<LegendreCoeffs> {
    let n = p.0.len();
    if n == 0 {
        return Ok(LegendreCoeffs(Vec::new()));
    }
    let table = monomial_to_legendre_table(n - 1)?;
    let mut alpha = vec![0.0; n];
    for (i, (&c, row)) in p.0.iter().zip(&table).enumerate() {
        for k in 0..=i {
            alpha[k] += c * row[k];
        }
    }
    Ok(LegendreCoeffs(alpha))
}

/// Inverse basis change, summing the monomial forms of each `P_k`.
pub fn legendre_to_poly(a: &LegendreCoeffs) -> PolyCoeffs {
    let mut out = vec![0.0; a.0.len()];
    for (k, &alpha) in a.0.iter().enumerate() {
        if alpha == 0.0 {
            continue;
        }
        for (i, c) in legendre_monomial(k).0.iter().enumerate() {
            out[i] += alpha * c;
        }
    }
    PolyCoeffs(out)
}

/// Monic polynomial with the given roots, built by repeated multiplication
/// with `(x - r_i)`.
pub fn vieta_coeffs(roots: &[f64]) -> PolyCoeffs {
    let mut c = vec![1.0];
    for &r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (i, &ci) in c.iter().enumerate() {
            next[i + 1] += ci;
            next[i] -= r * ci;
        }
        c = next;
    }
    PolyCoeffs(c)
}

/// Roots as eigenvalues of the companion matrix.
pub fn poly_roots(p: &PolyCoeffs) -> Result<ComplexSpectrum> {
    let n = p.0.len().saturating_sub(1);
    if n == 0 {
        return Err(Error::Degenerate("polynomial degree must be >= 1".into()));
    }
    let lead = p.0[n];
    if lead == 0.0 || !lead.is_finite() {
        return Err(Error::Degenerate(format!(
            "leading coefficient is {lead}"
        )));
    }
    let mut comp = DenseMatrix::zeros(n, n);
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        comp[(i, n - 1)] = -p.0[i] / lead;
    }
    eigenvalues(&comp)
}

/// Checks the unreduced lower Hessenberg structure.
pub fn check_unreduced_lower_hessenberg(h: &DenseMatrix) -> Result<()> {
    if !h.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            h.rows(),
            h.cols()
        )));
    }
    let n = h.rows();
    for i in 0..n {
        for j in i + 2..n {
            if h[(i, j)] != 0.0 {
                return Err(Error::Structure {
                    row: i,
                    col: j,
                    reason: "nonzero entry above the first superdiagonal".into(),
                });
            }
        }
        if i + 1 < n && h[(i, i + 1)] == 0.0 {
            return Err(Error::Structure {
                row: i,
                col: i + 1,
                reason: "zero superdiagonal entry (reduced Hessenberg)".into(),
            });
        }
    }
    Ok(())
}

/// Associated polynomial sequence `q_0..q_n` of an unreduced lower
/// Hessenberg matrix of order `n`:
/// `q_i = (x q_{i-1} - sum_{j<=i} h_{ij} q_{j-1}) / h_{i,i+1}` with the
/// convention `h_{n,n+1} = 1` (indices 1-based as in the usual statement).
pub fn associated_poly_seq(h: &DenseMatrix) -> Result<Vec<PolyCoeffs>> {
    check_unreduced_lower_hessenberg(h)?;
    let n = h.rows();
    let mut seq: Vec<PolyCoeffs> = Vec::with_capacity(n + 1);
    seq.push(PolyCoeffs(vec![1.0]));
    for i in 1..=n {
        let row = i - 1;
        let mut next = vec![0.0; i + 1];
        for (d, &c) in seq[i - 1].0.iter().enumerate() {
            next[d + 1] += c;
        }
        for j in 1..=i {
            let hij = h[(row, j - 1)];
            if hij == 0.0 {
                continue;
            }
            for (d, &c) in seq[j - 1].0.iter().enumerate() {
                next[d] -= hij * c;
            }
        }
        let sup = if i < n { h[(row, i)] } else { 1.0 };
        for c in next.iter_mut() {
            *c /= sup;
        }
        seq.push(PolyCoeffs(next));
    }
    Ok(seq)
}
