//! Benchmark runs against the kinetic reference, error metrics, diagnostics
//! reports and the architecture grid search.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::closure::{
    hyperbolicity_check, linear_stability_scan, threshold_key, weights_to_matrix, Closure, PnClosure, SourceJacobian,
    UNSTABLE_TOL,
};
use crate::data::{benchmark_ic, fmt_f64, Benchmark, Dataset};
use crate::error::{Error, Result};
use crate::kinetic::{extract_moments, kinetic_solve};
use crate::linalg::eigenvalues;
use crate::momsolver::{solve, MomentField, SolverConfig, Trajectory};
use crate::nn::{e2_error, load_model, prepare_model, train, Activation, Head, MlpModel, ModelSpec, TrainConfig};

/// `sqrt(sum (a - b)^2 / sum b^2)`; `b` is the reference.
pub fn relative_l2(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: b.len(),
            got: a.len(),
        });
    }
    let den: f64 = b.iter().map(|v| v * v).sum();
    if !(den > 0.0) {
        return Err(Error::Degenerate("reference field has zero norm".into()));
    }
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    Ok((num / den).sqrt())
}

/// Which closure a benchmark run uses.
#[derive(Clone, Debug)]
pub enum ClosureChoice {
    Pn,
    Model {
        model: MlpModel,
        /// Where the model was loaded from, kept in the report.
        source: Option<String>,
    },
}

impl ClosureChoice {
    pub fn from_model_file(path: &Path) -> Result<Self> {
        Ok(ClosureChoice::Model {
            model: load_model(path)?,
            source: Some(path.display().to_string()),
        })
    }

    pub fn tag(&self, order: usize) -> String {
        match self {
            ClosureChoice::Pn => format!("P{order}"),
            ClosureChoice::Model { model, .. } => format!("ML-{}-N{}", model.head.as_str(), model.order),
        }
    }

    fn source(&self) -> String {
        match self {
            ClosureChoice::Pn => "pn".into(),
            ClosureChoice::Model { source, .. } => source.clone().unwrap_or_else(|| "in-memory".into()),
        }
    }

    pub fn closure(&self, order: usize) -> Result<Box<dyn Closure + '_>> {
        match self {
            ClosureChoice::Pn => {
                if order == 0 {
                    return Err(Error::UnsupportedOrder(0));
                }
                Ok(Box::new(PnClosure { order }))
            }
            ClosureChoice::Model { model, .. } => {
                if model.order != order {
                    return Err(Error::Usage(format!(
                        "model has order {}, run asked for N = {order}",
                        model.order
                    )));
                }
                Ok(Box::new(model))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub nx: usize,
    pub nv: usize,
    pub cfl: f64,
    /// Overrides the benchmark's final time; report times beyond it are dropped.
    pub t_end: Option<f64>,
    pub solver: SolverConfig,
    /// Where to write the report, diagnostics and solution files.
    pub out_dir: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            nx: 256,
            nv: 64,
            cfl: 0.8,
            t_end: None,
            solver: SolverConfig {
                stability_every: 0,
                ..SolverConfig::default()
            },
            out_dir: None,
        }
    }
}

/// Report times of `bench`, cut at the configured final time.
pub fn report_times(bench: &Benchmark, cfg: &BenchConfig) -> Result<Vec<f64>> {
    let t_end = cfg.t_end.unwrap_or_else(|| bench.t_end());
    if !(t_end > 0.0) {
        return Err(Error::Usage(format!("final time must be positive, got {t_end}")));
    }
    let mut times: Vec<f64> = bench.report_times.iter().copied().filter(|&t| t < t_end).collect();
    times.push(t_end);
    Ok(times)
}

/// Moments `m_0, m_1` of the kinetic solution at the report times.
#[derive(Clone, Debug)]
pub struct KineticReference {
    pub times: Vec<f64>,
    pub moments: Vec<MomentField>,
}

impl KineticReference {
    pub fn at(&self, t: f64) -> Option<&MomentField> {
        self.times.iter().position(|&s| s == t).map(|i| &self.moments[i])
    }
}

pub fn kinetic_reference(bench: &Benchmark, cfg: &BenchConfig) -> Result<KineticReference> {
    let times = report_times(bench, cfg)?;
    let ic = bench.kinetic_ic(cfg.nx, cfg.nv)?;
    let snaps = kinetic_solve(&ic, &bench.medium(cfg.nx)?, &times, cfg.cfl)?;
    let moments = snaps.iter().map(|f| extract_moments(f, 1)).collect::<Result<_>>()?;
    Ok(KineticReference { times, moments })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeErrors {
    pub t: f64,
    /// `None` once the run has blown up.
    pub m0: Option<f64>,
    pub m1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub max_abs_eig: f64,
    /// `None` when no finite gap was recorded.
    pub min_gap: Option<f64>,
    pub all_real: bool,
    pub blow_up_time: Option<f64>,
    pub blow_up_detail: Option<String>,
    pub max_unstable_xi_count: Option<usize>,
    /// Largest number of grid points with a close eigenvalue pair, per threshold.
    pub max_close_pairs: BTreeMap<String, usize>,
    /// Time series file, relative to the report.
    pub series: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub closure: String,
    /// `pn` or the model file.
    pub closure_source: String,
    #[serde(rename = "N")]
    pub order: usize,
    pub nx: usize,
    pub nv: usize,
    pub t_end: f64,
    pub completed: bool,
    pub steps: usize,
    pub errors: Vec<TimeErrors>,
    pub diagnostics: DiagnosticsSummary,
    /// Solution files, relative to the report.
    pub files: Vec<String>,
}

impl RunReport {
    pub fn error_at(&self, t: f64) -> Option<&TimeErrors> {
        self.errors.iter().find(|e| e.t == t)
    }
}

fn summarize(traj: &Trajectory) -> DiagnosticsSummary {
    let d = &traj.diagnostics;
    let mut max_close_pairs = BTreeMap::new();
    for r in d {
        for (k, &v) in &r.close_pair_counts {
            let e = max_close_pairs.entry(k.clone()).or_insert(0);
            *e = (*e).max(v);
        }
    }
    DiagnosticsSummary {
        max_abs_eig: d.iter().map(|r| r.max_abs_eig).fold(0.0, f64::max),
        min_gap: Some(d.iter().map(|r| r.min_gap).fold(f64::INFINITY, f64::min)).filter(|g| g.is_finite()),
        all_real: d.iter().all(|r| r.all_real),
        blow_up_time: traj.blow_up.as_ref().map(|b| b.t),
        blow_up_detail: traj.blow_up.as_ref().map(|b| b.detail.clone()),
        max_unstable_xi_count: d.iter().filter_map(|r| r.unstable_xi_count).max(),
        max_close_pairs,
        series: None,
    }
}

fn csv_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

/// Diagnostics time series as CSV. A blown-up run ends with a row at the
/// blow-up time whose `flag` column reads `blow-up`.
pub fn diagnostics_report(traj: &Trajectory, thresholds: &[f64]) -> String {
    let keys: Vec<String> = thresholds.iter().map(|&e| threshold_key(e)).collect();
    let mut out = String::from("t,max_abs_eig,min_gap");
    for k in &keys {
        write!(out, ",count_eps_{k}").unwrap();
    }
    out.push_str(",unstable_xi_count,Linf_m0,flag\n");
    for r in &traj.diagnostics {
        write!(out, "{},{},{}", csv_value(r.t), csv_value(r.max_abs_eig), csv_value(r.min_gap)).unwrap();
        for k in &keys {
            write!(out, ",{}", r.close_pair_counts.get(k).copied().unwrap_or(0)).unwrap();
        }
        let unstable = r.unstable_xi_count.map(|c| c.to_string()).unwrap_or_default();
        let flag = if r.linf_m0.is_finite() { "" } else { "non-finite" };
        writeln!(out, ",{unstable},{},{flag}", csv_value(r.linf_m0)).unwrap();
    }
    if let Some(b) = &traj.blow_up {
        let linf = b.linf_history.last().map_or(f64::NAN, |h| h.1);
        write!(out, "{},nan,nan", csv_value(b.t)).unwrap();
        for _ in &keys {
            out.push_str(",");
        }
        writeln!(out, ",,{},blow-up", csv_value(linf)).unwrap();
    }
    out
}

fn solution_csv(x: impl Fn(usize) -> f64, reference: &MomentField, m: &MomentField) -> String {
    let mut out = String::from("x,m0_ref,m1_ref,m0,m1\n");
    for j in 0..m.nx() {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(x(j)),
            fmt_f64(reference.component(0)[j]),
            fmt_f64(reference.component(1)[j]),
            fmt_f64(m.component(0)[j]),
            fmt_f64(m.component(1)[j])
        )
        .unwrap();
    }
    out
}

/// Full moment state as CSV `x,m0..mN`.
pub fn state_csv(m: &MomentField) -> String {
    let mut out = String::from("x");
    for k in 0..=m.order() {
        write!(out, ",m{k}").unwrap();
    }
    out.push('\n');
    for j in 0..m.nx() {
        out.push_str(&fmt_f64(m.x(j)));
        for k in 0..=m.order() {
            out.push(',');
            out.push_str(&fmt_f64(m.component(k)[j]));
        }
        out.push('\n');
    }
    out
}

pub fn read_state_csv(path: &Path) -> Result<MomentField> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse(format!("{}: empty file", path.display())))?;
    let order = header.split(',').count().checked_sub(2).ok_or_else(|| Error::Parse("state file needs x,m0,m1,...".into()))?;
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(str::parse).collect::<std::result::Result<Vec<f64>, _>>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let nx = rows.len();
    let mut values = vec![0.0; (order + 1) * nx];
    for (j, r) in rows.iter().enumerate() {
        if r.len() != order + 2 {
            return Err(Error::Parse(format!("{}: row {} has {} columns", path.display(), j + 1, r.len())));
        }
        for k in 0..=order {
            values[k * nx + j] = r[k + 1];
        }
    }
    MomentField::new(order, nx, values)
}

/// Solves `bench` with `choice` and compares against `reference`.
pub fn run_against(
    bench: &Benchmark,
    reference: &KineticReference,
    choice: &ClosureChoice,
    order: usize,
    cfg: &BenchConfig,
) -> Result<(RunReport, Trajectory)> {
    let times = report_times(bench, cfg)?;
    let t_end = *times.last().unwrap();
    let closure = choice.closure(order)?;
    let ic = bench.moment_ic(order, cfg.nx, cfg.nv)?;
    let solver = SolverConfig {
        t_end,
        snapshot_times: times[..times.len() - 1].to_vec(),
        ..cfg.solver.clone()
    };
    let traj = solve(&ic, closure.as_ref(), &bench.medium(cfg.nx)?, &solver)?;

    let mut errors = Vec::new();
    for &t in &times {
        let reference = reference
            .at(t)
            .ok_or_else(|| Error::Usage(format!("kinetic reference lacks t = {t}")))?;
        let (m0, m1) = match traj.snapshot_at(t) {
            Some(m) => (
                Some(relative_l2(m.component(0), reference.component(0))?),
                // m1 vanishes for isotropic data at t = 0 only; later it is nonzero
                relative_l2(m.component(1), reference.component(1)).ok(),
            ),
            None => (None, None),
        };
        errors.push(TimeErrors { t, m0, m1 });
    }

    let tag = choice.tag(order);
    let stem = format!("{}_{}", bench.name, tag);
    let mut report = RunReport {
        scenario: bench.name.clone(),
        closure: tag,
        closure_source: choice.source(),
        order,
        nx: cfg.nx,
        nv: cfg.nv,
        t_end,
        completed: traj.completed(),
        steps: traj.steps,
        errors,
        diagnostics: summarize(&traj),
        files: Vec::new(),
    };

    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        let series = format!("{stem}_diagnostics.csv");
        std::fs::write(dir.join(&series), diagnostics_report(&traj, &solver.thresholds))?;
        report.diagnostics.series = Some(series);
        for (t, m) in &traj.snapshots {
            let name = format!("{stem}_t{t}.csv");
            let r = reference.at(*t).expect("checked above");
            std::fs::write(dir.join(&name), solution_csv(|j| m.x(j), r, m))?;
            report.files.push(name);
        }
        if let Some(m) = traj.final_state().filter(|_| traj.completed()) {
            let name = format!("{stem}_state.csv");
            std::fs::write(dir.join(&name), state_csv(m))?;
            report.files.push(name);
        }
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(dir.join(format!("{stem}_report.json")), json + "\n")?;
    }
    Ok((report, traj))
}

/// Kinetic reference plus one moment solve.
pub fn run_benchmark(name: &str, choice: &ClosureChoice, order: usize, cfg: &BenchConfig) -> Result<RunReport> {
    let bench = benchmark_ic(name)?;
    let reference = kinetic_reference(&bench, cfg)?;
    Ok(run_against(&bench, &reference, choice, order, cfg)?.0)
}

/// Per-point hyperbolicity and stability of a saved state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointDiagnostics {
    pub x: f64,
    pub max_abs_eig: f64,
    pub min_gap: f64,
    pub all_real: bool,
    pub max_real_part: f64,
    pub unstable_xi: usize,
}

/// Eigensolver-based diagnostics of the final state of a saved run.
pub fn diagnose_run(report_path: &Path, xi_range: (i64, i64)) -> Result<Vec<PointDiagnostics>> {
    let text = std::fs::read_to_string(report_path)?;
    let report: RunReport =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", report_path.display())))?;
    let dir = report_path.parent().unwrap_or(Path::new("."));
    let state_file = report
        .files
        .iter()
        .find(|f| f.ends_with("_state.csv"))
        .ok_or_else(|| Error::Usage("run has no final state (did it blow up?)".into()))?;
    let m = read_state_csv(&dir.join(state_file))?;
    let choice = if report.closure_source == "pn" {
        ClosureChoice::Pn
    } else {
        ClosureChoice::from_model_file(Path::new(&report.closure_source))?
    };
    let closure = choice.closure(report.order)?;
    let med = benchmark_ic(&report.scenario)?.medium(m.nx())?;
    if xi_range.0 > xi_range.1 {
        return Err(Error::Usage("empty xi range".into()));
    }
    (0..m.nx())
        .map(|j| {
            let w = closure.weights(&m.point(j))?;
            let spec = eigenvalues(&weights_to_matrix(&w)?.matrix)?;
            let h = hyperbolicity_check(&spec, &[]);
            let scan = linear_stability_scan(&w, &SourceJacobian::new(med.sigma_s[j], med.sigma_a[j])?, xi_range.0, xi_range.1)?;
            Ok(PointDiagnostics {
                x: m.x(j),
                max_abs_eig: h.max_abs_eig,
                min_gap: h.min_gap,
                all_real: h.all_real,
                max_real_part: scan.max_real.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                unstable_xi: scan.max_real.iter().filter(|&&v| v > UNSTABLE_TOL).count(),
            })
        })
        .collect()
}

pub fn point_diagnostics_csv(rows: &[PointDiagnostics]) -> String {
    let mut out = String::from("x,max_abs_eig,min_gap,all_real,max_real_part,unstable_xi\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(r.x),
            csv_value(r.max_abs_eig),
            csv_value(r.min_gap),
            r.all_real,
            csv_value(r.max_real_part),
            r.unstable_xi
        )
        .unwrap();
    }
    out
}

/// Architectures to sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub layers: Vec<usize>,
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub heads: Vec<Head>,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            layers: vec![2, 4, 6],
            widths: vec![16, 32, 64],
            activations: vec![Activation::Relu, Activation::Tanh],
            heads: vec![Head::Bound, Head::Distinct],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub layers: usize,
    pub width: usize,
    pub activation: String,
    pub head: String,
    pub params: usize,
    pub best_epoch: usize,
    pub train_e2: f64,
    pub val_e2: f64,
}

/// Trains every architecture in `grid` on `data` and reports its errors.
pub fn grid_search(data: &Dataset, grid: &GridSpec, cfg: &TrainConfig) -> Result<Vec<GridResult>> {
    let mut out = Vec::new();
    for &head in &grid.heads {
        for &activation in &grid.activations {
            for &layers in &grid.layers {
                for &width in &grid.widths {
                    let spec = ModelSpec {
                        order: data.order,
                        hidden: vec![width; layers],
                        activation,
                        head,
                        gamma: crate::closure::DEFAULT_GAMMA,
                    };
                    let model = prepare_model(&spec, &data.train, grid.seed, true)?;
                    let params = model.param_count();
                    let res = train(model, &data.train, &data.val, cfg)?;
                    let r = GridResult {
                        layers,
                        width,
                        activation: activation.as_str().into(),
                        head: head.as_str().into(),
                        params,
                        best_epoch: res.best_epoch,
                        train_e2: e2_error(&res.model, &data.train)?,
                        val_e2: res.best_val_e2(),
                    };
                    log::info!("{r:?}");
                    out.push(r);
                }
            }
        }
    }
    Ok(out)
}

pub fn grid_csv(rows: &[GridResult]) -> String {
    let mut out = String::from("layers,width,activation,head,params,best_epoch,train_E2,val_E2\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{:e},{:e}",
            r.layers, r.width, r.activation, r.head, r.params, r.best_epoch, r.train_e2, r.val_e2
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closure::ConstantClosure;
    use crate::kinetic::MediumCoeffs;
    use crate::nn::ModelSpec;

    #[test]
    fn relative_l2_examples() {
        let b = [1.0, -2.0, 3.0];
        assert_eq!(relative_l2(&b, &b).unwrap(), 0.0);
        assert_eq!(relative_l2(&[0.0; 3], &b).unwrap(), 1.0);
        let a: Vec<f64> = b.iter().map(|v| 1.1 * v).collect();
        assert!((relative_l2(&a, &b).unwrap() - 0.1).abs() < 1e-14);
        assert!(matches!(relative_l2(&b, &[0.0; 3]), Err(Error::Degenerate(_))));
        assert!(matches!(relative_l2(&b, &[1.0; 2]), Err(Error::Shape { .. })));
        // the reference is always the second argument
        assert_ne!(relative_l2(&[2.0], &[1.0]).unwrap(), relative_l2(&[1.0], &[2.0]).unwrap());
    }

    fn quick() -> BenchConfig {
        BenchConfig {
            nx: 64,
            nv: 16,
            t_end: Some(0.2),
            ..BenchConfig::default()
        }
    }

    #[test]
    fn report_times_follow_the_benchmark() {
        let b = benchmark_ic("two-material").unwrap();
        assert_eq!(report_times(&b, &BenchConfig::default()).unwrap(), vec![0.5, 1.0, 2.0]);
        let cut = BenchConfig {
            t_end: Some(1.5),
            ..BenchConfig::default()
        };
        assert_eq!(report_times(&b, &cut).unwrap(), vec![0.5, 1.0, 1.5]);
        assert_eq!(report_times(&benchmark_ic("gaussian").unwrap(), &BenchConfig::default()).unwrap(), vec![1.0]);
    }

    #[test]
    fn a_closure_against_itself_has_zero_error() {
        // use the P_N solve as its own reference
        let bench = benchmark_ic("gaussian").unwrap();
        let cfg = quick();
        let (rep, traj) = run_against(
            &bench,
            &KineticReference {
                times: vec![0.2],
                moments: vec![MomentField::new(1, 64, vec![1.0; 128]).unwrap()],
            },
            &ClosureChoice::Pn,
            3,
            &cfg,
        )
        .unwrap();
        let m = traj.final_state().unwrap().truncate(1).unwrap();
        let own = KineticReference {
            times: vec![0.2],
            moments: vec![m],
        };
        let (again, _) = run_against(&bench, &own, &ClosureChoice::Pn, 3, &cfg).unwrap();
        assert_eq!(again.errors[0].m0, Some(0.0));
        assert_eq!(again.errors[0].m1, Some(0.0));
        assert!(rep.errors[0].m0.unwrap() > 0.0);
    }

    #[test]
    fn run_writes_deterministic_files() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        for d in [&d1, &d2] {
            let cfg = BenchConfig {
                out_dir: Some(d.path().to_path_buf()),
                ..quick()
            };
            let rep = run_benchmark("constant", &ClosureChoice::Pn, 4, &cfg).unwrap();
            assert!(rep.completed);
            assert_eq!(rep.closure, "P4");
            assert!(rep.errors[0].m0.unwrap() < 0.05);
        }
        let mut names: Vec<_> = std::fs::read_dir(d1.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert_eq!(names.len(), 4);
        for n in names {
            assert_eq!(std::fs::read(d1.path().join(&n)).unwrap(), std::fs::read(d2.path().join(&n)).unwrap());
        }
        let rows = diagnose_run(&d1.path().join("constant_P4_report.json"), (-5, 5)).unwrap();
        assert_eq!(rows.len(), 64);
        assert!(rows.iter().all(|r| r.all_real && r.unstable_xi == 0));
    }

    #[test]
    fn pn_diagnostics_are_constant_in_time() {
        let cfg = quick();
        let bench = benchmark_ic("constant").unwrap();
        let reference = kinetic_reference(&bench, &cfg).unwrap();
        let (rep, traj) = run_against(&bench, &reference, &ClosureChoice::Pn, 6, &cfg).unwrap();
        let first = traj.diagnostics[0].max_abs_eig;
        assert!(traj.diagnostics.iter().all(|r| r.max_abs_eig == first));
        let csv = diagnostics_report(&traj, &cfg.solver.thresholds);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,max_abs_eig,min_gap,count_eps_1e-3,count_eps_1e-4,count_eps_1e-5,count_eps_1e-6,unstable_xi_count,Linf_m0,flag"
        );
        assert_eq!(lines.count(), traj.diagnostics.len());
        assert!(rep.diagnostics.all_real);
    }

    #[test]
    fn bound_head_rows_stay_within_light_speed() {
        let spec = ModelSpec::default_for(4, Head::Bound);
        let model = MlpModel::init(
            &ModelSpec {
                hidden: vec![8, 8],
                ..spec
            },
            3,
        )
        .unwrap();
        let cfg = quick();
        let bench = benchmark_ic("constant").unwrap();
        let reference = kinetic_reference(&bench, &cfg).unwrap();
        let choice = ClosureChoice::Model { model, source: None };
        let (_, traj) = run_against(&bench, &reference, &choice, 4, &cfg).unwrap();
        assert!(traj.diagnostics.iter().all(|r| r.max_abs_eig <= 1.0 + 1e-12));
        assert!(matches!(choice.closure(5), Err(Error::Usage(_))));
    }

    #[test]
    fn blow_up_rows_are_flagged() {
        // a complex pair in A makes the system ill-posed
        let mut w = crate::closure::spectrum_to_weights(&crate::closure::Spectrum::new(vec![-0.5, 0.0, 0.5])).unwrap();
        w.0[0] += 3.0;
        let closure = ConstantClosure { weights: w };
        let ic = MomentField::from_fn(2, 64, |k, x| if k == 0 { 1.0 + 1e-3 * (14.0 * std::f64::consts::PI * x).sin() } else { 0.0 }).unwrap();
        let med = MediumCoeffs::uniform(64, 0.0, 0.0).unwrap();
        let cfg = SolverConfig {
            t_end: 200.0,
            stability_every: 0,
            blowup_factor: 1e3,
            ..SolverConfig::default()
        };
        let traj = solve(&ic, &closure, &med, &cfg).unwrap();
        assert!(traj.blow_up.is_some());
        let csv = diagnostics_report(&traj, &cfg.thresholds);
        assert!(csv.lines().last().unwrap().ends_with(",blow-up"));
    }

    #[test]
    fn state_csv_round_trip() {
        let m = MomentField::from_fn(3, 16, |k, x| (k as f64 + 1.0) * x.sin() + 0.1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, state_csv(&m)).unwrap();
        assert_eq!(read_state_csv(&p).unwrap(), m);
    }
}
