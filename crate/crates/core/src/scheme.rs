//! Shared discretization kernels on a periodic grid: WENO5 reconstruction,
//! SSP-RK3 time stepping and central differences.

use crate::error::Result;

const WENO_EPS: f64 = 1e-6;

/// Fifth-order WENO (Jiang-Shu) value at `i+1/2` from the left-biased
/// stencil `v = (v_{i-2}, ..., v_{i+2})`.
#[inline]
pub fn weno5(v: [f64; 5]) -> f64 {
    let [a, b, c, d, e] = v;
    let q0 = (2.0 * a - 7.0 * b + 11.0 * c) / 6.0;
    let q1 = (-b + 5.0 * c + 2.0 * d) / 6.0;
    let q2 = (2.0 * c + 5.0 * d - e) / 6.0;

    let b0 = 13.0 / 12.0 * (a - 2.0 * b + c).powi(2) + 0.25 * (a - 4.0 * b + 3.0 * c).powi(2);
    let b1 = 13.0 / 12.0 * (b - 2.0 * c + d).powi(2) + 0.25 * (b - d).powi(2);
    let b2 = 13.0 / 12.0 * (c - 2.0 * d + e).powi(2) + 0.25 * (3.0 * c - 4.0 * d + e).powi(2);

    let a0 = 0.1 / (WENO_EPS + b0).powi(2);
    let a1 = 0.6 / (WENO_EPS + b1).powi(2);
    let a2 = 0.3 / (WENO_EPS + b2).powi(2);
    (a0 * q0 + a1 * q1 + a2 * q2) / (a0 + a1 + a2)
}

#[inline]
fn wrap(j: isize, n: usize) -> usize {
    j.rem_euclid(n as isize) as usize
}

/// `u` extended by three periodic ghost values on each side.
pub fn pad3(u: &[f64], out: &mut Vec<f64>) {
    let n = u.len();
    out.clear();
    out.extend_from_slice(&u[n - 3..]);
    out.extend_from_slice(u);
    out.extend_from_slice(&u[..3]);
}

/// Numerical flux at `j+1/2` from padded split fluxes `f+` (upwinded from
/// the left) and `f-` (upwinded from the right); padded index `j+3` is grid
/// point `j`.
#[inline]
pub fn split_flux_padded(fp: &[f64], fm: &[f64], j: usize) -> f64 {
    let c = j + 3;
    weno5([fp[c - 2], fp[c - 1], fp[c], fp[c + 1], fp[c + 2]])
        + weno5([fm[c + 3], fm[c + 2], fm[c + 1], fm[c], fm[c - 1]])
}

/// Conservative flux-difference derivative `(F_{j+1/2} - F_{j-1/2}) / dx`.
pub fn split_flux_derivative(fp: &[f64], fm: &[f64], dx: f64, out: &mut [f64]) {
    let n = fp.len();
    debug_assert!(fm.len() == n && out.len() == n && n >= 5);
    let (mut pp, mut pm) = (Vec::new(), Vec::new());
    pad3(fp, &mut pp);
    pad3(fm, &mut pm);
    // flux at -1/2 is the flux at n-1/2
    let mut left = split_flux_padded(&pp, &pm, n - 1);
    for j in 0..n {
        let right = split_flux_padded(&pp, &pm, j);
        out[j] = (right - left) / dx;
        left = right;
    }
}

/// Upwind WENO5 derivative of `speed * u` for a constant `speed`.
pub fn upwind_derivative(u: &[f64], speed: f64, dx: f64, out: &mut [f64]) {
    let n = u.len();
    let mut p = Vec::with_capacity(n + 6);
    pad3(u, &mut p);
    let flux = |j: usize| {
        let c = j + 3;
        if speed >= 0.0 {
            speed * weno5([p[c - 2], p[c - 1], p[c], p[c + 1], p[c + 2]])
        } else {
            speed * weno5([p[c + 3], p[c + 2], p[c + 1], p[c], p[c - 1]])
        }
    };
    let mut left = flux(n - 1);
    for j in 0..n {
        let right = flux(j);
        out[j] = (right - left) / dx;
        left = right;
    }
}

/// Fourth-order central difference on a periodic grid.
pub fn central_diff4(u: &[f64], dx: f64) -> Vec<f64> {
    let n = u.len();
    (0..n)
        .map(|j| {
            let j = j as isize;
            let g = |k: isize| u[wrap(j + k, n)];
            (g(-2) - 8.0 * g(-1) + 8.0 * g(1) - g(2)) / (12.0 * dx)
        })
        .collect()
}

/// Work buffers for [`SspRk3`].
#[derive(Clone, Debug, Default)]
pub struct SspRk3 {
    stage: Vec<f64>,
    rhs: Vec<f64>,
}

impl SspRk3 {
    pub fn new() -> Self {
        Self::default()
    }

    /// Advances `u` by `dt` with the Shu-Osher three-stage scheme.
    pub fn step<F>(&mut self, u: &mut [f64], dt: f64, mut rhs: F) -> Result<()>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        let n = u.len();
        self.stage.resize(n, 0.0);
        self.rhs.resize(n, 0.0);

        rhs(u, &mut self.rhs)?;
        for i in 0..n {
            self.stage[i] = u[i] + dt * self.rhs[i];
        }
        rhs(&self.stage, &mut self.rhs)?;
        for i in 0..n {
            self.stage[i] = 0.75 * u[i] + 0.25 * (self.stage[i] + dt * self.rhs[i]);
        }
        rhs(&self.stage, &mut self.rhs)?;
        for i in 0..n {
            u[i] = u[i] / 3.0 + 2.0 / 3.0 * (self.stage[i] + dt * self.rhs[i]);
        }
        Ok(())
    }
}

/// The CFL step, cut short to land exactly on `stop`.
pub fn next_dt(t: f64, stop: f64, dt_cfl: f64) -> f64 {
    let rest = stop - t;
    if dt_cfl >= rest * (1.0 - 1e-12) {
        rest
    } else {
        dt_cfl
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|j| j as f64 / n as f64).collect()
    }

    #[test]
    fn weno_on_linear_and_constant_data() {
        // the candidates agree on linear data, so the weights drop out
        let f = |x: f64| 1.0 + 2.0 * x;
        let v = [f(-2.0), f(-1.0), f(0.0), f(1.0), f(2.0)];
        let q = weno5(v);
        let q0 = (2.0 * v[0] - 7.0 * v[1] + 11.0 * v[2]) / 6.0;
        assert!((q - q0).abs() < 1e-12);
        assert_eq!(weno5([3.0; 5]), 3.0);
    }

    #[test]
    fn upwind_derivative_converges_at_fifth_order() {
        let mut errs = Vec::new();
        for n in [32, 64, 128] {
            let dx = 1.0 / n as f64;
            let u: Vec<f64> = grid(n).iter().map(|x| (2.0 * PI * x).sin()).collect();
            let mut d = vec![0.0; n];
            upwind_derivative(&u, -0.7, dx, &mut d);
            let e = grid(n)
                .iter()
                .zip(&d)
                .map(|(x, dj)| (dj + 0.7 * 2.0 * PI * (2.0 * PI * x).cos()).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        let order = (errs[1] / errs[2]).log2();
        assert!(order > 4.5, "{errs:?}");
    }

    #[test]
    fn constant_fields_have_zero_derivative() {
        let u = vec![2.5; 16];
        let mut d = vec![1.0; 16];
        upwind_derivative(&u, 0.3, 0.1, &mut d);
        assert!(d.iter().all(|&v| v == 0.0));
        split_flux_derivative(&u, &u, 0.1, &mut d);
        assert!(d.iter().all(|&v| v == 0.0));
        assert!(central_diff4(&u, 0.1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn central_difference_accuracy() {
        let err = |n: usize| {
            let dx = 1.0 / n as f64;
            let u: Vec<f64> = grid(n).iter().map(|x| (2.0 * PI * x).sin()).collect();
            central_diff4(&u, dx)
                .iter()
                .zip(grid(n))
                .map(|(d, x)| (d - 2.0 * PI * (2.0 * PI * x).cos()).abs())
                .fold(0.0, f64::max)
        };
        assert!(err(256) <= 1e-7, "{}", err(256));
        let ratio = err(128) / err(256);
        assert!((ratio - 16.0).abs() < 0.5, "{ratio}");
    }

    #[test]
    fn ssp_rk3_is_third_order() {
        let solve = |steps: usize| {
            let dt = 1.0 / steps as f64;
            let mut u = vec![1.0];
            let mut rk = SspRk3::new();
            for _ in 0..steps {
                rk.step(&mut u, dt, |y, out| {
                    out[0] = -y[0];
                    Ok(())
                })
                .unwrap();
            }
            (u[0] - (-1f64).exp()).abs()
        };
        let e: Vec<f64> = [20, 40, 80].iter().map(|&s| solve(s)).collect();
        for w in e.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 3.0).abs() < 0.1, "{e:?}");
        }
    }
}
