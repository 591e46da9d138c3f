//! Browser bindings for three small operations of `hypclosure`.
//!
//! Each operation has a plain Rust form returning a JSON value (tested
//! natively) and a `wasm_bindgen` wrapper that hands the page a JSON string.

use hypclosure::bench::relative_l2;
use hypclosure::closure::{
    closure_spectrum, linear_stability_scan, spectrum_to_weights, ClosureWeights, PnClosure, SourceJacobian,
    Spectrum,
};
use hypclosure::data::benchmark_ic;
use hypclosure::kinetic::{extract_moments, kinetic_solve};
use hypclosure::momsolver::{solve, SolverConfig};
use hypclosure::polyalg::gauss_legendre;
use hypclosure::{Error, Result};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest grid the page may request; keeps a solve under a second or so.
pub const MAX_NX: usize = 512;

fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("not a number: {s:?}")))
        })
        .collect()
}

fn complex_pairs(spec: &hypclosure::linalg::ComplexSpectrum) -> Vec<[f64; 2]> {
    let mut v: Vec<[f64; 2]> = spec.values.iter().map(|z| [z.re, z.im]).collect();
    v.sort_by(|a, b| a[0].total_cmp(&b[0]));
    v
}

/// Closure weights that put the closure matrix spectrum at the given speeds,
/// and the spectrum recovered from those weights.
pub fn speeds_to_closure(speeds: &str) -> Result<Value> {
    let r = parse_list(speeds)?;
    if r.len() < 2 {
        return Err(Error::Usage("give at least two speeds".into()));
    }
    let spectrum = Spectrum::new(r);
    let w = spectrum_to_weights(&spectrum)?;
    let eig = closure_spectrum(&w)?;
    let pairs = complex_pairs(&eig);
    let error = pairs
        .iter()
        .zip(spectrum.values())
        .map(|(z, s)| (z[0] - s).abs().max(z[1].abs()))
        .fold(0.0, f64::max);
    Ok(json!({
        "order": w.order(),
        "speeds": spectrum.values(),
        "weights": w.0,
        "eigenvalues": pairs,
        "max_error": error,
    }))
}

/// P_N spectrum, Gauss nodes and the linear-stability curve `max Re` over
/// integer wavenumbers in `[-xi_max, xi_max]`.
pub fn pn_stability(order: usize, sigma_s: f64, sigma_a: f64, xi_max: i64) -> Result<Value> {
    if !(1..=16).contains(&order) {
        return Err(Error::Usage("order must be between 1 and 16".into()));
    }
    let w = ClosureWeights(vec![0.0; order + 1]);
    let eig = closure_spectrum(&w)?;
    let nodes = gauss_legendre(order + 1)?.nodes;
    let src = SourceJacobian::new(sigma_s, sigma_a)?;
    let xi_max = xi_max.clamp(0, 200);
    let scan = linear_stability_scan(&w, &src, -xi_max, xi_max)?;
    Ok(json!({
        "order": order,
        "eigenvalues": complex_pairs(&eig),
        "gauss_nodes": nodes,
        "xi": scan.xi,
        "max_real": scan.max_real,
        "unstable_count": scan.unstable_count,
    }))
}

/// Runs a P_N closure and the kinetic reference on a named benchmark and
/// returns both densities at `t_end`.
pub fn solve_pn(benchmark: &str, order: usize, nx: usize, t_end: f64) -> Result<Value> {
    if !(1..=16).contains(&order) {
        return Err(Error::Usage("order must be between 1 and 16".into()));
    }
    if !(16..=MAX_NX).contains(&nx) {
        return Err(Error::Usage(format!("nx must be between 16 and {MAX_NX}")));
    }
    if !(t_end > 0.0 && t_end <= 5.0) {
        return Err(Error::Usage("t_end must be in (0, 5]".into()));
    }
    let bench = benchmark_ic(benchmark)?;
    let nv = 32.max(2 * order + 4);
    let kin_ic = bench.kinetic_ic(nx, nv)?;
    let med = bench.medium(nx)?;
    let reference = kinetic_solve(&kin_ic, &med, &[t_end], 0.8)?;
    let ref_m = extract_moments(&reference[0], 0)?;
    let cfg = SolverConfig {
        t_end,
        stability_every: 0,
        ..SolverConfig::default()
    };
    let traj = solve(&extract_moments(&kin_ic, order)?, &PnClosure { order }, &med, &cfg)?;
    let m = traj
        .final_state()
        .ok_or_else(|| Error::Numeric("solver produced no output".into()))?;
    let x: Vec<f64> = (0..nx).map(|j| m.x(j)).collect();
    Ok(json!({
        "benchmark": benchmark,
        "order": order,
        "t": t_end,
        "steps": traj.steps,
        "x": x,
        "m0": m.component(0),
        "m0_kinetic": ref_m.component(0),
        "relative_l2": relative_l2(m.component(0), ref_m.component(0))?,
    }))
}

fn to_js(v: Result<Value>) -> std::result::Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = speedsToClosure)]
pub fn speeds_to_closure_js(speeds: &str) -> std::result::Result<String, JsError> {
    to_js(speeds_to_closure(speeds))
}

#[wasm_bindgen(js_name = pnStability)]
pub fn pn_stability_js(order: usize, sigma_s: f64, sigma_a: f64, xi_max: i32) -> std::result::Result<String, JsError> {
    to_js(pn_stability(order, sigma_s, sigma_a, xi_max as i64))
}

#[wasm_bindgen(js_name = solvePn)]
pub fn solve_pn_js(benchmark: &str, order: usize, nx: usize, t_end: f64) -> std::result::Result<String, JsError> {
    to_js(solve_pn(benchmark, order, nx, t_end))
}
