//! Dense real matrices and a nonsymmetric eigensolver.
//!
//! Eigenvalues are computed by balancing, Householder reduction to upper
//! Hessenberg form and the Francis implicit double-shift QR iteration. The
//! orders used throughout the crate are small (at most a few dozen), so
//! everything is stored densely in row-major order.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    /// Builds a matrix from row slices; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(nrows * ncols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != ncols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {ncols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(DenseMatrix {
            rows: nrows,
            cols: ncols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec length mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn norm_frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn require_square(&self) -> Result<()> {
        if !self.is_square() {
            return Err(Error::Dimension(format!(
                "expected a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Eigenvalues of a real matrix, sorted by (real part, imaginary part).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrum {
    pub values: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn new(mut values: Vec<Complex64>) -> Self {
        values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        ComplexSpectrum { values }
    }

    /// Wraps real values, e.g. the roots produced by a closure head.
    pub fn from_real(values: &[f64]) -> Self {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_real(&self) -> f64 {
        self.values
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Orthogonal similarity reduction to upper Hessenberg form by Householder
/// reflections. Entries below the first subdiagonal are set to exact zeros.
pub fn hessenberg_reduce(m: &DenseMatrix) -> Result<DenseMatrix> {
    m.require_square()?;
    let n = m.rows;
    let mut h = m.clone();
    if n < 3 {
        return Ok(h);
    }
    let mut v = vec![0.0; n];
    for k in 0..n - 2 {
        let scale: f64 = (k + 1..n).map(|i| h[(i, k)].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut sigma = 0.0;
        for i in k + 1..n {
            v[i] = h[(i, k)] / scale;
            sigma += v[i] * v[i];
        }
        let alpha = if v[k + 1] > 0.0 {
            -sigma.sqrt()
        } else {
            sigma.sqrt()
        };
        // v = x - alpha e1, beta = v'v / 2
        let beta = sigma - v[k + 1] * alpha;
        v[k + 1] -= alpha;
        if beta == 0.0 {
            continue;
        }
        // left: rows k+1.., columns k..
        for j in k..n {
            let f: f64 = (k + 1..n).map(|i| v[i] * h[(i, j)]).sum::<f64>() / beta;
            for i in k + 1..n {
                h[(i, j)] -= f * v[i];
            }
        }
        // right: all rows, columns k+1..
        for i in 0..n {
            let f: f64 = (k + 1..n).map(|j| v[j] * h[(i, j)]).sum::<f64>() / beta;
            for j in k + 1..n {
                h[(i, j)] -= f * v[j];
            }
        }
        h[(k + 1, k)] = alpha * scale;
        for i in k + 2..n {
            h[(i, k)] = 0.0;
        }
    }
    Ok(h)
}

/// Diagonal similarity scaling by powers of two so rows and columns have
/// comparable norms (the EISPACK `balanc` scaling pass, no permutations).
fn balance(a: &mut DenseMatrix) {
    let n = a.rows;
    const RADIX: f64 = 2.0;
    const RADIX2: f64 = RADIX * RADIX;
    loop {
        let mut done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut g = r / RADIX;
            let mut f = 1.0;
            while c < g {
                f *= RADIX;
                c *= RADIX2;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= RADIX2;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let g = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= g;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
}

/// All eigenvalues of a square real matrix.
///
/// Fails with [`Error::Convergence`] if the double-shift iteration needs more
/// than `100 * n` sweeps in total.
pub fn eigenvalues(m: &DenseMatrix) -> Result<ComplexSpectrum> {
    m.require_square()?;
    if !m.is_finite() {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let n = m.rows;
    if n == 0 {
        return Ok(ComplexSpectrum::new(Vec::new()));
    }
    let mut a = m.clone();
    balance(&mut a);
    let h = hessenberg_reduce(&a)?;
    let (re, im) = hqr(h)?;
    Ok(ComplexSpectrum::new(
        re.into_iter()
            .zip(im)
            .map(|(r, i)| Complex64::new(r, i))
            .collect(),
    ))
}

/// Francis double-shift QR on an upper Hessenberg matrix (eigenvalues only).
/// Follows the structure of the EISPACK routine `hqr`.
fn hqr(mut h: DenseMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let nn = h.rows;
    let mut wr = vec![0.0; nn];
    let mut wi = vec![0.0; nn];
    let eps = f64::EPSILON;
    let max_sweeps = 100 * nn;

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[(i, j)].abs();
        }
    }

    let mut exshift = 0.0;
    let mut total = 0usize;
    let mut iter = 0usize;
    // active block is rows/cols l..=n
    let mut n = nn as isize - 1;
    let (mut p, mut q, mut r, mut s, mut z);
    let (mut w, mut x, mut y);
    while n >= 0 {
        let nu = n as usize;
        let mut l = nu;
        while l > 0 {
            s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[(l, l - 1)].abs() <= eps * s {
                break;
            }
            l -= 1;
        }

        if l == nu {
            wr[nu] = h[(nu, nu)] + exshift;
            wi[nu] = 0.0;
            n -= 1;
            iter = 0;
        } else if l + 1 == nu {
            w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            p = (h[(nu - 1, nu - 1)] - h[(nu, nu)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            x = h[(nu, nu)] + exshift;
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                wr[nu - 1] = x + z;
                wr[nu] = if z != 0.0 { x - w / z } else { x + z };
                wi[nu - 1] = 0.0;
                wi[nu] = 0.0;
            } else {
                wr[nu - 1] = x + p;
                wr[nu] = x + p;
                wi[nu - 1] = z;
                wi[nu] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            if total >= max_sweeps {
                return Err(Error::Convergence {
                    row: nu,
                    iterations: total,
                });
            }
            x = h[(nu, nu)];
            y = h[(nu - 1, nu - 1)];
            w = h[(nu, nu - 1)] * h[(nu - 1, nu)];

            if iter == 10 {
                exshift += x;
                for i in 0..=nu {
                    h[(i, i)] -= x;
                }
                s = h[(nu, nu - 1)].abs() + h[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in 0..=nu {
                        h[(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            total += 1;

            // look for two consecutive small subdiagonal elements
            let mut m = nu - 2;
            loop {
                z = h[(m, m)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - r - s;
                r = h[(m + 2, m + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[(m, m - 1)].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }

            // double QR step on rows l..=n, columns m..=n
            for k in m..nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if notlast { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s == 0.0 {
                    continue;
                }
                if k != m {
                    h[(k, k - 1)] = -s * x;
                } else if l != m {
                    h[(k, k - 1)] = -h[(k, k - 1)];
                }
                p += s;
                x = p / s;
                y = q / s;
                z = r / s;
                q /= p;
                r /= p;

                for j in k..=nu {
                    p = h[(k, j)] + q * h[(k + 1, j)];
                    if notlast {
                        p += r * h[(k + 2, j)];
                        h[(k + 2, j)] -= p * z;
                    }
                    h[(k, j)] -= p * x;
                    h[(k + 1, j)] -= p * y;
                }
                for i in l..=nu.min(k + 3) {
                    p = x * h[(i, k)] + y * h[(i, k + 1)];
                    if notlast {
                        p += z * h[(i, k + 2)];
                        h[(i, k + 2)] -= p * r;
                    }
                    h[(i, k)] -= p;
                    h[(i, k + 1)] -= p * q;
                }
            }
        }
    }
    Ok((wr, wi))
}

/// Largest real part over the spectrum of `i*xi*A + S`.
///
/// The complex matrix is embedded as the real block matrix
/// `[[S, -xi A], [xi A, S]]`, whose spectrum is the union of the spectra of
/// `S + i xi A` and its conjugate; both share the same real parts.
pub fn max_real_part_shifted(a: &DenseMatrix, s: &DenseMatrix, xi: f64) -> Result<f64> {
    a.require_square()?;
    s.require_square()?;
    if a.rows != s.rows {
        return Err(Error::Dimension(format!(
            "A is {}x{} but S is {}x{}",
            a.rows, a.cols, s.rows, s.cols
        )));
    }
    let n = a.rows;
    let block = DenseMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let (bi, ii) = (i / n, i % n);
        let (bj, jj) = (j / n, j % n);
        match (bi, bj) {
            (0, 0) | (1, 1) => s[(ii, jj)],
            (0, 1) => -xi * a[(ii, jj)],
            _ => xi * a[(ii, jj)],
        }
    });
    Ok(eigenvalues(&block)?.max_real())
}
