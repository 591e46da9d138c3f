//! Discrete-ordinates reference solver for the slab-geometry transport
//! equation
//!
//! ```text
//! f_t + v f_x = sigma_s (1/2 int f dv - f) - sigma_a f,   x in [0, 1) periodic.
//! ```
//!
//! Directions are Gauss-Legendre nodes, transport is upwind WENO5 per
//! ordinate and time stepping is SSP-RK3.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::momsolver::MomentField;
use crate::polyalg::{gauss_legendre, legendre_all};
use crate::scheme::{central_diff4, next_dt, upwind_derivative, SspRk3};

/// Values below this count as a negative intensity.
pub const NEGATIVITY_TOL: f64 = -1e-12;

/// Pointwise scattering and absorption coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediumCoeffs {
    pub sigma_s: Vec<f64>,
    pub sigma_a: Vec<f64>,
}

impl MediumCoeffs {
    pub fn uniform(nx: usize, sigma_s: f64, sigma_a: f64) -> Result<Self> {
        Self::new(vec![sigma_s; nx], vec![sigma_a; nx])
    }

    pub fn new(sigma_s: Vec<f64>, sigma_a: Vec<f64>) -> Result<Self> {
        if sigma_s.len() != sigma_a.len() {
            return Err(Error::Shape {
                expected: sigma_s.len(),
                got: sigma_a.len(),
            });
        }
        if let Some(j) = sigma_s
            .iter()
            .chain(&sigma_a)
            .position(|s| !(s.is_finite() && *s >= 0.0))
        {
            return Err(Error::Degenerate(format!("negative or non-finite cross section at index {j}")));
        }
        Ok(MediumCoeffs { sigma_s, sigma_a })
    }

    pub fn nx(&self) -> usize {
        self.sigma_s.len()
    }
}

/// Intensity `f(x_j, v_q)` stored ordinate-major.
#[derive(Clone, Debug, PartialEq)]
pub struct KineticField {
    nx: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<f64>,
}

impl KineticField {
    /// Samples `f(x, v)` at `x_j = j / nx` and the Gauss-Legendre nodes.
    pub fn from_fn(nx: usize, nv: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if nx < 6 {
            return Err(Error::Degenerate(format!("grid of {nx} points is too small")));
        }
        let quad = gauss_legendre(nv)?;
        let mut values = Vec::with_capacity(nx * nv);
        for &v in &quad.nodes {
            for j in 0..nx {
                values.push(f(j as f64 / nx as f64, v));
            }
        }
        Ok(KineticField {
            nx,
            nodes: quad.nodes,
            weights: quad.weights,
            values,
        })
    }

    /// Direction-independent field `f(x, v) = g(x)`.
    pub fn isotropic(nx: usize, nv: usize, g: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(nx, nv, |x, _| g(x))
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nv(&self) -> usize {
        self.nodes.len()
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values of ordinate `q` over the grid.
    pub fn ordinate(&self, q: usize) -> &[f64] {
        &self.values[q * self.nx..(q + 1) * self.nx]
    }

    pub fn get(&self, j: usize, q: usize) -> f64 {
        self.values[q * self.nx + j]
    }
}

/// Time derivative of `f` under transport, scattering and absorption.
pub fn kinetic_rhs(f: &KineticField, med: &MediumCoeffs) -> Result<Vec<f64>> {
    if med.nx() != f.nx {
        return Err(Error::Shape {
            expected: f.nx,
            got: med.nx(),
        });
    }
    let mut out = vec![0.0; f.values.len()];
    rhs_into(f.nx, &f.nodes, &f.weights, &f.values, med, &mut out);
    Ok(out)
}

fn rhs_into(nx: usize, nodes: &[f64], weights: &[f64], u: &[f64], med: &MediumCoeffs, out: &mut [f64]) {
    let dx = 1.0 / nx as f64;
    // half-range scalar flux 1/2 sum_q w_q f_q
    let mut rho = vec![0.0; nx];
    for (q, &wq) in weights.iter().enumerate() {
        for (r, &v) in rho.iter_mut().zip(&u[q * nx..(q + 1) * nx]) {
            *r += 0.5 * wq * v;
        }
    }
    for (q, &v) in nodes.iter().enumerate() {
        let fq = &u[q * nx..(q + 1) * nx];
        let oq = &mut out[q * nx..(q + 1) * nx];
        upwind_derivative(fq, v, dx, oq);
        for j in 0..nx {
            let (ss, sa) = (med.sigma_s[j], med.sigma_a[j]);
            oq[j] = -oq[j] + ss * (rho[j] - fq[j]) - sa * fq[j];
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KineticConfig {
    pub nv: usize,
    pub cfl: f64,
}

impl Default for KineticConfig {
    fn default() -> Self {
        KineticConfig { nv: 64, cfl: 0.8 }
    }
}

/// `dt = cfl * dx / max |v_q|`.
pub fn kinetic_dt(f: &KineticField, cfl: f64) -> f64 {
    let vmax = f.nodes.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    cfl * f.dx() / vmax
}

/// Integrates to each of `times` (ascending, positive) and returns the
/// field at every one of them.
pub fn kinetic_solve(ic: &KineticField, med: &MediumCoeffs, times: &[f64], cfl: f64) -> Result<Vec<KineticField>> {
    if med.nx() != ic.nx {
        return Err(Error::Shape {
            expected: ic.nx,
            got: med.nx(),
        });
    }
    if times.is_empty() || times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Usage("snapshot times must be positive and increasing".into()));
    }
    if !(cfl > 0.0) {
        return Err(Error::Degenerate(format!("CFL factor must be positive, got {cfl}")));
    }
    let dt_cfl = kinetic_dt(ic, cfl);
    let mut f = ic.clone();
    let mut rk = SspRk3::new();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &stop in times {
        while t < stop {
            let dt = next_dt(t, stop, dt_cfl);
            let (nx, nodes, weights) = (f.nx, f.nodes.clone(), f.weights.clone());
            rk.step(&mut f.values, dt, |u, o| {
                rhs_into(nx, &nodes, &weights, u, med, o);
                Ok(())
            })?;
            t = if dt == stop - t { stop } else { t + dt };
            check_state(&f, t)?;
        }
        out.push(f.clone());
    }
    Ok(out)
}

fn check_state(f: &KineticField, t: f64) -> Result<()> {
    for (i, &v) in f.values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::BlowUp {
                t,
                point: i % f.nx,
                detail: format!("non-finite intensity on ordinate {}", i / f.nx),
            });
        }
        if v < NEGATIVITY_TOL {
            return Err(Error::Numeric(format!(
                "negative intensity {v:e} at t = {t}, grid point {}, ordinate {}",
                i % f.nx,
                i / f.nx
            )));
        }
    }
    Ok(())
}

/// `m_k(x_j) = 1/2 sum_q w_q P_k(v_q) f(x_j, v_q)` for `k = 0..=order`.
pub fn extract_moments(f: &KineticField, order: usize) -> Result<MomentField> {
    if order >= f.nv() {
        return Err(Error::Range {
            degree: order,
            max: f.nv() - 1,
        });
    }
    let nx = f.nx;
    let mut values = vec![0.0; (order + 1) * nx];
    for (q, (&v, &wq)) in f.nodes.iter().zip(&f.weights).enumerate() {
        let p = legendre_all(order, v);
        let fq = f.ordinate(q);
        for (k, &pk) in p.iter().enumerate() {
            let c = 0.5 * wq * pk;
            for (m, &fv) in values[k * nx..(k + 1) * nx].iter_mut().zip(fq) {
                *m += c * fv;
            }
        }
    }
    MomentField::new(order, nx, values)
}

/// Fourth-order central difference on the periodic unit grid.
pub fn spatial_derivative(u: &[f64]) -> Vec<f64> {
    central_diff4(u, 1.0 / u.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::legendre_eval;
    use std::f64::consts::PI;

    /// Periodized Gaussian of variance 0.02 on a unit background.
    fn gaussian(x: f64) -> f64 {
        1.0 + (-1..=1).map(|s| (-(x - 0.5 + s as f64).powi(2) / 0.04).exp()).sum::<f64>()
    }

    /// Spectral derivative of a periodic grid function by direct DFT.
    fn fourier_derivative(u: &[f64]) -> Vec<f64> {
        let n = u.len();
        let mut out = vec![0.0; n];
        for k in 1..n / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, &v) in u.iter().enumerate() {
                let a = 2.0 * PI * (k * j) as f64 / n as f64;
                re += v * a.cos();
                im -= v * a.sin();
            }
            let scale = 2.0 / n as f64 * 2.0 * PI * k as f64;
            for (j, o) in out.iter_mut().enumerate() {
                let a = 2.0 * PI * (k * j) as f64 / n as f64;
                // d/dx of (re cos a - im sin a)
                *o += scale * (-re * a.sin() - im * a.cos());
            }
        }
        out
    }

    #[test]
    fn equilibrium_and_pure_absorption() {
        let f = KineticField::isotropic(32, 8, |_| 2.0).unwrap();
        let r = kinetic_rhs(&f, &MediumCoeffs::uniform(32, 3.0, 0.0).unwrap()).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-13));
        let r = kinetic_rhs(&f, &MediumCoeffs::uniform(32, 0.0, 1.0).unwrap()).unwrap();
        assert!(r.iter().all(|v| (v + 2.0).abs() < 1e-13));
    }

    #[test]
    fn transport_term_matches_spectral_derivative() {
        let nx = 256;
        let f = KineticField::isotropic(nx, 8, gaussian).unwrap();
        let r = kinetic_rhs(&f, &MediumCoeffs::uniform(nx, 0.0, 0.0).unwrap()).unwrap();
        let d = fourier_derivative(f.ordinate(0));
        for (q, &v) in f.nodes().iter().enumerate() {
            for j in 0..nx {
                let e = (r[q * nx + j] + v * d[j]).abs();
                assert!(e < 1e-6, "q {q} j {j}: {e}");
            }
        }
    }

    #[test]
    fn absorption_decays_exponentially() {
        let f0 = KineticField::isotropic(32, 8, |_| 2.5).unwrap();
        let med = MediumCoeffs::uniform(32, 0.0, 1.0).unwrap();
        let out = kinetic_solve(&f0, &med, &[1.0], 0.8).unwrap();
        let decay = (-1f64).exp();
        for (a, b) in out[0].values().iter().zip(f0.values()) {
            assert!((a - decay * b).abs() < 1e-6);
        }
    }

    #[test]
    fn free_streaming_translates_each_ordinate() {
        let nx = 256;
        let g = |x: f64| 2.0 + (2.0 * PI * x).sin() + 0.5 * (4.0 * PI * x).cos();
        let f0 = KineticField::isotropic(nx, 8, g).unwrap();
        let med = MediumCoeffs::uniform(nx, 0.0, 0.0).unwrap();
        let t = 0.5;
        let f = &kinetic_solve(&f0, &med, &[t], 0.8).unwrap()[0];
        let exact = KineticField::from_fn(nx, 8, |x, v| g(x - v * t)).unwrap();
        let num: f64 = f.values().iter().zip(exact.values()).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = exact.values().iter().map(|b| b * b).sum();
        assert!((num / den).sqrt() <= 1e-3);
    }

    #[test]
    fn mass_is_conserved_without_absorption() {
        let nx = 64;
        let f0 = KineticField::from_fn(nx, 16, |x, v| 1.5 + v * (2.0 * PI * x).sin() + 0.3 * (6.0 * PI * x).cos()).unwrap();
        let sigma_s: Vec<f64> = (0..nx).map(|j| if j < nx / 2 { 100.0 } else { 1.0 }).collect();
        let med = MediumCoeffs::new(sigma_s, vec![0.0; nx]).unwrap();
        let mass = |f: &KineticField| extract_moments(f, 0).unwrap().component(0).iter().sum::<f64>() / nx as f64;
        let m0 = mass(&f0);
        let out = kinetic_solve(&f0, &med, &[0.5, 1.0], 0.8).unwrap();
        for f in &out {
            assert!((mass(f) - m0).abs() < 1e-10);
        }
    }

    #[test]
    fn moment_extraction() {
        let f = KineticField::isotropic(8, 16, |_| 1.0).unwrap();
        let m = extract_moments(&f, 5).unwrap();
        for k in 0..=5 {
            let expected = if k == 0 { 1.0 } else { 0.0 };
            assert!(m.component(k).iter().all(|v| (v - expected).abs() < 1e-14));
        }
        let f = KineticField::from_fn(8, 16, |_, v| legendre_eval(2, v)).unwrap();
        let m = extract_moments(&f, 4).unwrap();
        for k in 0..=4 {
            let expected = if k == 2 { 0.2 } else { 0.0 };
            assert!(m.component(k).iter().all(|v| (v - expected).abs() < 1e-14));
        }
        let f = KineticField::isotropic(64, 8, gaussian).unwrap();
        let m = extract_moments(&f, 1).unwrap();
        for j in 0..64 {
            assert!((m.component(0)[j] - gaussian(j as f64 / 64.0)).abs() < 1e-14);
        }
        assert!(matches!(extract_moments(&f, 8), Err(Error::Range { .. })));
    }

    #[test]
    fn first_moment_equation_holds() {
        let nx = 128;
        let f0 = KineticField::from_fn(nx, 16, |x, v| 2.0 + (2.0 * PI * x).sin() * (1.0 + 0.5 * v)).unwrap();
        let med = MediumCoeffs::uniform(nx, 2.0, 0.5).unwrap();
        let r = kinetic_rhs(&f0, &med).unwrap();
        let tend = KineticField {
            values: r,
            ..f0.clone()
        };
        let dm0 = extract_moments(&tend, 0).unwrap();
        let m = extract_moments(&f0, 1).unwrap();
        let dm1 = spatial_derivative(m.component(1));
        for j in 0..nx {
            let expected = -dm1[j] - 0.5 * m.component(0)[j];
            assert!((dm0.component(0)[j] - expected).abs() < 1e-5);
        }
    }

    #[test]
    fn mirror_symmetry_is_preserved() {
        let nx = 64;
        // f0(x, v) = f0(1 - x, -v) on the periodic grid x_j = j / nx
        let f0 = KineticField::from_fn(nx, 8, |x, v| 2.0 + v * (2.0 * PI * x).sin() + (4.0 * PI * x).cos()).unwrap();
        let med = MediumCoeffs::uniform(nx, 1.0, 0.2).unwrap();
        let f = &kinetic_solve(&f0, &med, &[0.3], 0.8).unwrap()[0];
        let m = extract_moments(f, 3).unwrap();
        for j in 1..nx {
            let mj = nx - j;
            assert!((m.component(0)[j] - m.component(0)[mj]).abs() < 1e-10);
            assert!((m.component(1)[j] + m.component(1)[mj]).abs() < 1e-10);
            assert!((m.component(3)[j] + m.component(3)[mj]).abs() < 1e-10);
        }
    }

    #[test]
    fn derivative_examples() {
        assert!(spatial_derivative(&[1.5; 16]).iter().all(|&v| v == 0.0));
        let n = 256;
        let u: Vec<f64> = (0..n).map(|j| (2.0 * PI * j as f64 / n as f64).sin()).collect();
        let d = spatial_derivative(&u);
        let err = (0..n)
            .map(|j| (d[j] - 2.0 * PI * (2.0 * PI * j as f64 / n as f64).cos()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-7);
    }

    #[test]
    fn input_validation() {
        assert!(MediumCoeffs::uniform(8, -1.0, 0.0).is_err());
        let f = KineticField::isotropic(8, 4, |_| 1.0).unwrap();
        assert!(kinetic_solve(&f, &MediumCoeffs::uniform(8, 0.0, 0.0).unwrap(), &[], 0.8).is_err());
        assert!(kinetic_rhs(&f, &MediumCoeffs::uniform(9, 0.0, 0.0).unwrap()).is_err());
    }
}
