//! Solver for the closed moment system `m_t + A(m) m_x = S m` on the
//! periodic unit interval.
//!
//! Spatial derivatives use WENO5 with global Lax-Friedrichs splitting. At
//! each point `j` the split fluxes `1/2 (A_j m_l +- c m_l)` are formed with
//! the matrix frozen at `j` over the stencil, so the scheme is exactly the
//! conservative flux-split scheme when `A` is constant. Rows `0..N` of `A`
//! never depend on the state and are handled globally; only the closure
//! row is re-evaluated per point.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::closure::{
    hyperbolicity_check, linear_stability_scan, threshold_key, weights_to_matrix, Closure, ClosureWeights,
    SourceJacobian, UNSTABLE_TOL,
};
use crate::error::{Error, Result};
use crate::kinetic::MediumCoeffs;
use crate::linalg::{eigenvalues, ComplexSpectrum};
use crate::scheme::{next_dt, pad3, split_flux_derivative, split_flux_padded, SspRk3};

/// Moments `m_k(x_j)` on `x_j = j / nx`, stored component-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentField {
    order: usize,
    nx: usize,
    values: Vec<f64>,
}

impl MomentField {
    pub fn new(order: usize, nx: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != (order + 1) * nx {
            return Err(Error::Shape {
                expected: (order + 1) * nx,
                got: values.len(),
            });
        }
        if nx < 6 {
            return Err(Error::Degenerate(format!("grid of {nx} points is too small")));
        }
        Ok(MomentField { order, nx, values })
    }

    pub fn from_fn(order: usize, nx: usize, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity((order + 1) * nx);
        for k in 0..=order {
            values.extend((0..nx).map(|j| f(k, j as f64 / nx as f64)));
        }
        Self::new(order, nx, values)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 / self.nx as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.values[k * self.nx..(k + 1) * self.nx]
    }

    /// The moment vector at grid point `j`.
    pub fn point(&self, j: usize) -> Vec<f64> {
        (0..=self.order).map(|k| self.values[k * self.nx + j]).collect()
    }

    /// The first `order + 1` components.
    pub fn truncate(&self, order: usize) -> Result<MomentField> {
        if order > self.order {
            return Err(Error::Range {
                degree: order,
                max: self.order,
            });
        }
        MomentField::new(order, self.nx, self.values[..(order + 1) * self.nx].to_vec())
    }

    pub fn linf(&self, k: usize) -> f64 {
        self.component(k).iter().fold(0.0, |a: f64, v| a.max(v.abs()))
    }
}

/// Where per-point spectra come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumSource {
    /// Speeds supplied by the closure when it has them, otherwise eigenvalues.
    Auto,
    /// Always run the eigensolver on the assembled matrix.
    Eigensolver,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub cfl: f64,
    pub t_end: f64,
    /// Extra output times in `(0, t_end)`; `t_end` is always included.
    pub snapshot_times: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub xi_range: (i64, i64),
    /// Linear-stability scan every this many steps; 0 disables it.
    pub stability_every: usize,
    pub spectrum_source: SpectrumSource,
    /// Growth of `max |m_0|` beyond this factor counts as blow-up.
    pub blowup_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            cfl: 0.8,
            t_end: 1.0,
            snapshot_times: Vec::new(),
            thresholds: vec![1e-3, 1e-4, 1e-5, 1e-6],
            xi_range: (-100, 100),
            stability_every: 10,
            spectrum_source: SpectrumSource::Auto,
            blowup_factor: 1e8,
        }
    }
}

/// `factor * dx / c`.
pub fn cfl_dt(max_speed: f64, dx: f64, factor: f64) -> Result<f64> {
    if !(max_speed > 0.0) || !max_speed.is_finite() {
        return Err(Error::Degenerate(format!("maximum speed must be positive, got {max_speed}")));
    }
    Ok(factor * dx / max_speed)
}

/// Closure rows of `A(m(x_j))` for every grid point plus the spectral data
/// needed for the splitting speed and the diagnostics.
struct PointData {
    /// `(N+1) x nx`, row `j` holds the last row of `A` at `x_j`.
    last_rows: Vec<f64>,
    weights: Vec<ClosureWeights>,
    speeds: Option<Vec<Vec<f64>>>,
}

fn closure_row(w: &ClosureWeights) -> Vec<f64> {
    let n = w.order();
    let nf = n as f64;
    let s = (nf + 1.0) / (2.0 * nf + 1.0);
    let mut row: Vec<f64> = w.0.iter().map(|wi| s * wi).collect();
    row[n - 1] += nf / (2.0 * nf + 1.0);
    row
}

fn evaluate_points(m: &MomentField, closure: &dyn Closure, want_speeds: bool) -> Result<PointData> {
    let n = m.order;
    let mut last_rows = Vec::with_capacity((n + 1) * m.nx);
    let mut weights = Vec::with_capacity(m.nx);
    let mut speeds = want_speeds.then(Vec::new);
    if closure.is_constant() {
        let w = closure.weights(&m.point(0))?;
        let row = closure_row(&w);
        for _ in 0..m.nx {
            last_rows.extend_from_slice(&row);
            weights.push(w.clone());
        }
        return Ok(PointData {
            last_rows,
            weights,
            speeds: None,
        });
    }
    for j in 0..m.nx {
        let mj = m.point(j);
        let (w, r) = closure.evaluate(&mj).map_err(|e| Error::BlowUp {
            t: f64::NAN,
            point: j,
            detail: format!("closure failed: {e}"),
        })?;
        if w.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                t: f64::NAN,
                point: j,
                detail: "non-finite closure weights".into(),
            });
        }
        last_rows.extend(closure_row(&w));
        weights.push(w);
        if let Some(s) = speeds.as_mut() {
            match r {
                Some(r) => s.push(r),
                None => speeds = None,
            }
        }
    }
    Ok(PointData {
        last_rows,
        weights,
        speeds,
    })
}

/// Cache of spectra for state-independent closures.
struct SpectralCache {
    constant: Option<ComplexSpectrum>,
}

fn point_spectra(data: &PointData, closure: &dyn Closure, source: SpectrumSource, cache: &mut SpectralCache) -> Result<Vec<ComplexSpectrum>> {
    if closure.is_constant() {
        if cache.constant.is_none() {
            cache.constant = Some(eigenvalues(&weights_to_matrix(&data.weights[0])?.matrix)?);
        }
        let s = cache.constant.clone().unwrap();
        return Ok(vec![s; data.weights.len()]);
    }
    if source == SpectrumSource::Auto {
        if let Some(speeds) = &data.speeds {
            return Ok(speeds.iter().map(|r| ComplexSpectrum::from_real(r)).collect());
        }
    }
    data.weights
        .iter()
        .map(|w| eigenvalues(&weights_to_matrix(w)?.matrix))
        .collect()
}

fn max_speed(spectra: &[ComplexSpectrum]) -> f64 {
    spectra.iter().map(ComplexSpectrum::max_abs).fold(0.0, f64::max)
}

fn rhs_with(m: &[f64], order: usize, nx: usize, rows: &[f64], c: f64, med: &MediumCoeffs, out: &mut [f64]) {
    let n = order;
    let dx = 1.0 / nx as f64;
    let comp = |k: usize| &m[k * nx..(k + 1) * nx];

    // transport rows 0..N are state independent and conservative
    let mut fp = vec![0.0; nx];
    let mut fm = vec![0.0; nx];
    for k in 0..n {
        let kf = k as f64;
        let up = (kf + 1.0) / (2.0 * kf + 1.0);
        let down = kf / (2.0 * kf + 1.0);
        let uk = comp(k);
        let next = comp(k + 1);
        for j in 0..nx {
            let mut flux = up * next[j];
            if k > 0 {
                flux += down * comp(k - 1)[j];
            }
            fp[j] = 0.5 * (flux + c * uk[j]);
            fm[j] = 0.5 * (flux - c * uk[j]);
        }
        split_flux_derivative(&fp, &fm, dx, &mut out[k * nx..(k + 1) * nx]);
    }

    // closure row, frozen at each point over its stencil
    let padded: Vec<Vec<f64>> = (0..=n)
        .map(|k| {
            let mut p = Vec::with_capacity(nx + 6);
            pad3(comp(k), &mut p);
            p
        })
        .collect();
    let mut gp = [0.0; 9];
    let mut gm = [0.0; 9];
    for j in 0..nx {
        let row = &rows[j * (n + 1)..(j + 1) * (n + 1)];
        // padded indices j..=j+6 cover grid points j-3..=j+3
        for l in 0..7 {
            let idx = j + l;
            let mut g = 0.0;
            for (i, a) in row.iter().enumerate() {
                g += a * padded[i][idx];
            }
            let un = padded[n][idx];
            gp[l + 1] = 0.5 * (g + c * un);
            gm[l + 1] = 0.5 * (g - c * un);
        }
        // local index l + 1 is grid point j - 3 + l, so the fluxes at j+1/2
        // and j-1/2 are centred at local indices 4 and 3
        let right = split_flux_padded(&gp[..], &gm[..], 1);
        let left = split_flux_padded(&gp[..], &gm[..], 0);
        out[n * nx + j] = (right - left) / dx;
    }

    for k in 0..=n {
        for j in 0..nx {
            let (ss, sa) = (med.sigma_s[j], med.sigma_a[j]);
            let s = if k == 0 { -sa } else { -(ss + sa) };
            let i = k * nx + j;
            out[i] = -out[i] + s * m[i];
        }
    }
}

fn check_shapes(m: &MomentField, closure: &dyn Closure, med: &MediumCoeffs) -> Result<()> {
    if closure.order() != m.order {
        return Err(Error::Shape {
            expected: m.order,
            got: closure.order(),
        });
    }
    if med.nx() != m.nx {
        return Err(Error::Shape {
            expected: m.nx,
            got: med.nx(),
        });
    }
    Ok(())
}

/// Time derivative of the closed moment system at `m`.
pub fn moment_rhs(m: &MomentField, closure: &dyn Closure, med: &MediumCoeffs) -> Result<MomentField> {
    check_shapes(m, closure, med)?;
    let data = evaluate_points(m, closure, true)?;
    let spectra = point_spectra(&data, closure, SpectrumSource::Auto, &mut SpectralCache { constant: None })?;
    let c = max_speed(&spectra);
    let mut out = vec![0.0; m.values.len()];
    rhs_with(&m.values, m.order, m.nx, &data.last_rows, c, med, &mut out);
    MomentField::new(m.order, m.nx, out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub max_abs_eig: f64,
    pub min_gap: f64,
    pub all_real: bool,
    /// Grid points with two eigenvalues closer than each threshold.
    pub close_pair_counts: BTreeMap<String, usize>,
    /// Grid points at which some integer `xi` in the scan range makes
    /// `i xi A + S` unstable; `None` between scans.
    pub unstable_xi_count: Option<usize>,
    pub linf_m0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowUpReport {
    pub t: f64,
    pub point: usize,
    pub detail: String,
    /// `(t, max |m_0|)` after every completed step.
    pub linf_history: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<(f64, MomentField)>,
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub blow_up: Option<BlowUpReport>,
    pub steps: usize,
}

impl Trajectory {
    pub fn completed(&self) -> bool {
        self.blow_up.is_none()
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&MomentField> {
        self.snapshots
            .iter()
            .find(|(ts, _)| (ts - t).abs() <= 1e-12 * t.max(1.0))
            .map(|(_, m)| m)
    }

    pub fn final_state(&self) -> Option<&MomentField> {
        self.snapshots.last().map(|(_, m)| m)
    }
}

fn diagnostics_record(
    t: f64,
    m: &MomentField,
    data: &PointData,
    spectra: &[ComplexSpectrum],
    cfg: &SolverConfig,
    med: &MediumCoeffs,
    scan: bool,
) -> Result<DiagnosticsRecord> {
    let mut counts: BTreeMap<String, usize> = cfg.thresholds.iter().map(|&e| (threshold_key(e), 0)).collect();
    let mut all_real = true;
    let mut max_abs: f64 = 0.0;
    let mut min_gap = f64::INFINITY;
    for s in spectra {
        let rep = hyperbolicity_check(s, &cfg.thresholds);
        all_real &= rep.all_real;
        max_abs = max_abs.max(rep.max_abs_eig);
        min_gap = min_gap.min(rep.min_gap);
        for (k, v) in rep.close_pair_counts {
            if v > 0 {
                *counts.get_mut(&k).unwrap() += 1;
            }
        }
    }
    let unstable = if scan {
        let (lo, hi) = cfg.xi_range;
        // the spectrum at -xi is the conjugate of the one at xi
        let (lo, hi) = if lo <= 0 && hi >= 0 { (0, hi.max(-lo)) } else { (lo, hi) };
        let mut count = 0;
        for (j, w) in data.weights.iter().enumerate() {
            let src = SourceJacobian::new(med.sigma_s[j], med.sigma_a[j])?;
            let s = linear_stability_scan(w, &src, lo, hi)?;
            if s.max_real.iter().any(|&v| v > UNSTABLE_TOL) {
                count += 1;
            }
        }
        Some(count)
    } else {
        None
    };
    Ok(DiagnosticsRecord {
        t,
        max_abs_eig: max_abs,
        min_gap,
        all_real,
        close_pair_counts: counts,
        unstable_xi_count: unstable,
        linf_m0: m.linf(0),
    })
}

fn validate_config(cfg: &SolverConfig) -> Result<Vec<f64>> {
    if !(cfg.t_end > 0.0) || !(cfg.cfl > 0.0) || !(cfg.blowup_factor > 1.0) {
        return Err(Error::Usage("t_end, cfl and blow-up factor must be positive".into()));
    }
    if cfg.xi_range.0 > cfg.xi_range.1 {
        return Err(Error::Usage("empty xi range".into()));
    }
    let mut stops: Vec<f64> = cfg
        .snapshot_times
        .iter()
        .copied()
        .filter(|&t| t > 0.0 && t < cfg.t_end)
        .collect();
    if stops.len() != cfg.snapshot_times.iter().filter(|&&t| t != cfg.t_end).count() {
        return Err(Error::Usage("snapshot times must lie in (0, t_end]".into()));
    }
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    stops.push(cfg.t_end);
    Ok(stops)
}

/// Integrates from `ic` to `cfg.t_end`. Blow-up is reported in the
/// returned trajectory rather than as an error.
pub fn solve(ic: &MomentField, closure: &dyn Closure, med: &MediumCoeffs, cfg: &SolverConfig) -> Result<Trajectory> {
    check_shapes(ic, closure, med)?;
    let stops = validate_config(cfg)?;
    let (order, nx) = (ic.order, ic.nx);
    let dx = ic.dx();

    let mut m = ic.clone();
    let mut rk = SspRk3::new();
    let mut cache = SpectralCache { constant: None };
    let mut traj = Trajectory {
        snapshots: Vec::new(),
        diagnostics: Vec::new(),
        blow_up: None,
        steps: 0,
    };
    let mut linf_history = vec![(0.0, m.linf(0))];
    let limit = cfg.blowup_factor * m.linf(0).max(1e-300);
    let want_speeds = true;

    let blow_up = |t: f64, point: usize, detail: String, hist: &Vec<(f64, f64)>| BlowUpReport {
        t,
        point,
        detail,
        linf_history: hist.clone(),
    };

    let mut t = 0.0;
    for &stop in &stops {
        while t < stop {
            let data = match evaluate_points(&m, closure, want_speeds) {
                Ok(d) => d,
                Err(Error::BlowUp { point, detail, .. }) => {
                    traj.blow_up = Some(blow_up(t, point, detail, &linf_history));
                    return Ok(traj);
                }
                Err(e) => return Err(e),
            };
            let spectra = point_spectra(&data, closure, cfg.spectrum_source, &mut cache)?;
            let scan = cfg.stability_every > 0 && traj.steps % cfg.stability_every == 0;
            traj.diagnostics
                .push(diagnostics_record(t, &m, &data, &spectra, cfg, med, scan)?);
            let c = max_speed(&spectra);
            let dt = next_dt(t, stop, cfl_dt(c, dx, cfg.cfl)?);

            // the splitting speed and closure rows are refreshed every stage
            let mut stage_err = None;
            let step = rk.step(&mut m.values, dt, |u, out| {
                let field = MomentField {
                    order,
                    nx,
                    values: u.to_vec(),
                };
                if let Some(j) = u.iter().position(|v| !v.is_finite()) {
                    stage_err = Some((j % nx, "non-finite stage value".to_string()));
                    return Err(Error::Numeric("non-finite stage".into()));
                }
                let d = match evaluate_points(&field, closure, want_speeds) {
                    Ok(d) => d,
                    Err(Error::BlowUp { point, detail, .. }) => {
                        stage_err = Some((point, detail));
                        return Err(Error::Numeric("closure failure".into()));
                    }
                    Err(e) => return Err(e),
                };
                let cs = if closure.is_constant() {
                    c
                } else {
                    match &d.speeds {
                        Some(s) => s.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())),
                        None => max_speed(&point_spectra(&d, closure, SpectrumSource::Eigensolver, &mut SpectralCache { constant: None })?),
                    }
                };
                rhs_with(u, order, nx, &d.last_rows, cs.max(c), med, out);
                Ok(())
            });
            if let Err(e) = step {
                if let Some((point, detail)) = stage_err {
                    traj.blow_up = Some(blow_up(t, point, detail, &linf_history));
                    return Ok(traj);
                }
                return Err(e);
            }
            traj.steps += 1;
            t = if dt == stop - t { stop } else { t + dt };

            let linf = m.linf(0);
            linf_history.push((t, linf));
            if let Some(i) = m.values.iter().position(|v| !v.is_finite()) {
                traj.blow_up = Some(blow_up(t, i % nx, "non-finite moment".into(), &linf_history));
                return Ok(traj);
            }
            if linf > limit {
                let j = (0..nx).max_by(|&a, &b| m.values[a].abs().total_cmp(&m.values[b].abs())).unwrap();
                traj.blow_up = Some(blow_up(t, j, format!("max |m_0| = {linf:e} exceeds growth limit"), &linf_history));
                return Ok(traj);
            }
        }
        traj.snapshots.push((stop, m.clone()));
    }

    let data = evaluate_points(&m, closure, want_speeds)?;
    let spectra = point_spectra(&data, closure, cfg.spectrum_source, &mut cache)?;
    let scan = cfg.stability_every > 0;
    traj.diagnostics
        .push(diagnostics_record(t, &m, &data, &spectra, cfg, med, scan)?);
    Ok(traj)
}
