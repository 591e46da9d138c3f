//! Scenarios, benchmark problems and on-disk training data.
//!
//! A dataset directory holds one CSV per scenario plus `manifest.json`.
//! CSV rows are `x,t,m0..mN,dm0..dm{N+1}` with 17 significant digits.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kinetic::{extract_moments, kinetic_solve, spatial_derivative, KineticField, MediumCoeffs};
use crate::momsolver::MomentField;
use crate::nn::TrainingSample;
use crate::polyalg::legendre_eval;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Lower clamp of the sampled Fourier initial data.
pub const DENSITY_FLOOR: f64 = 1e-4;

/// Initial intensity `f_0(x, v)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum IcSpec {
    /// `max(floor, a0 + sum_k a_k cos(2 pi k x) + b_k sin(2 pi k x))`, isotropic.
    Fourier { a0: f64, a: Vec<f64>, b: Vec<f64>, floor: f64 },
    /// `c1 / sqrt(2 pi theta) exp(-(x - x0)^2 / (2 theta)) + c2`, isotropic and
    /// summed over the nearest periodic images.
    Gaussian { c1: f64, c2: f64, x0: f64, theta: f64 },
    /// `base + amplitude sin(2 pi wavenumber x) P_degree(v)`.
    LegendreMode {
        base: f64,
        amplitude: f64,
        degree: usize,
        wavenumber: u32,
    },
}

impl IcSpec {
    pub fn eval(&self, x: f64, v: f64) -> f64 {
        match self {
            IcSpec::Fourier { a0, a, b, floor } => {
                let mut s = *a0;
                for (k, (ak, bk)) in a.iter().zip(b).enumerate() {
                    let arg = 2.0 * PI * (k + 1) as f64 * x;
                    s += ak * arg.cos() + bk * arg.sin();
                }
                s.max(*floor)
            }
            IcSpec::Gaussian { c1, c2, x0, theta } => {
                let bump: f64 = (-1..=1)
                    .map(|s| (-(x - x0 + s as f64).powi(2) / (2.0 * theta)).exp())
                    .sum();
                c1 / (2.0 * PI * theta).sqrt() * bump + c2
            }
            IcSpec::LegendreMode {
                base,
                amplitude,
                degree,
                wavenumber,
            } => base + amplitude * (2.0 * PI * *wavenumber as f64 * x).sin() * legendre_eval(*degree, v),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            IcSpec::Fourier { a0, a, b, floor } => {
                a.len() == b.len() && *floor > 0.0 && a0.is_finite() && a.iter().chain(b).all(|c| c.is_finite())
            }
            IcSpec::Gaussian { c1, c2, theta, x0 } => *c1 >= 0.0 && *c2 >= 0.0 && *theta > 0.0 && x0.is_finite(),
            IcSpec::LegendreMode { base, amplitude, .. } => *base >= amplitude.abs(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Usage(format!("initial condition {self:?} is not a valid non-negative density")))
        }
    }
}

/// Cross section over the periodic unit interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SigmaSpec {
    Constant { value: f64 },
    /// `inside` on `(x1, x2)`, `outside` elsewhere.
    TwoMaterial { x1: f64, x2: f64, inside: f64, outside: f64 },
}

impl SigmaSpec {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            SigmaSpec::Constant { value } => value,
            SigmaSpec::TwoMaterial { x1, x2, inside, outside } => {
                if x > x1 && x < x2 {
                    inside
                } else {
                    outside
                }
            }
        }
    }

    pub fn sample(&self, nx: usize) -> Vec<f64> {
        (0..nx).map(|j| self.eval(j as f64 / nx as f64)).collect()
    }
}

fn medium(sigma_s: &SigmaSpec, sigma_a: &SigmaSpec, nx: usize) -> Result<MediumCoeffs> {
    MediumCoeffs::new(sigma_s.sample(nx), sigma_a.sample(nx))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: usize,
    pub ic: IcSpec,
    pub sigma_s: SigmaSpec,
    pub sigma_a: SigmaSpec,
    pub t_end: f64,
    pub sample_times: Vec<f64>,
}

impl Scenario {
    pub fn kinetic_ic(&self, nx: usize, nv: usize) -> Result<KineticField> {
        self.ic.validate()?;
        KineticField::from_fn(nx, nv, |x, v| self.ic.eval(x, v))
    }

    pub fn medium(&self, nx: usize) -> Result<MediumCoeffs> {
        medium(&self.sigma_s, &self.sigma_a, nx)
    }
}

/// `{0.05, 0.10, ..., 1.0}`.
pub fn default_sample_times() -> Vec<f64> {
    (1..=20).map(|k| k as f64 / 20.0).collect()
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Random Fourier initial data and cross sections, reproducible from `seed`.
pub fn sample_scenarios(seed: u64, count: usize) -> Result<Vec<Scenario>> {
    if count == 0 {
        return Err(Error::Usage("scenario count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenarios = (0..count)
        .map(|id| {
            let a0 = rng.gen_range(1.0..3.0);
            let mut a = Vec::with_capacity(3);
            let mut b = Vec::with_capacity(3);
            for _ in 0..3 {
                a.push(rng.gen_range(-1.0..1.0));
                b.push(rng.gen_range(-1.0..1.0));
            }
            let sigma_s = log_uniform(&mut rng, 0.1, 100.0);
            let sigma_a = if rng.gen_bool(0.5) {
                0.0
            } else {
                log_uniform(&mut rng, 0.1, 10.0)
            };
            Scenario {
                id,
                ic: IcSpec::Fourier {
                    a0,
                    a,
                    b,
                    floor: DENSITY_FLOOR,
                },
                sigma_s: SigmaSpec::Constant { value: sigma_s },
                sigma_a: SigmaSpec::Constant { value: sigma_a },
                t_end: 1.0,
                sample_times: default_sample_times(),
            }
        })
        .collect();
    Ok(scenarios)
}

/// One of the named benchmark problems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub name: String,
    pub ic: IcSpec,
    pub sigma_s: SigmaSpec,
    pub sigma_a: SigmaSpec,
    /// Times at which errors are reported; the last one is the final time.
    pub report_times: Vec<f64>,
}

pub const BENCHMARK_NAMES: [&str; 3] = ["constant", "gaussian", "two-material"];

/// Smooth positive data shared by the constant and two-material problems.
fn benchmark_fourier() -> IcSpec {
    IcSpec::Fourier {
        a0: 2.0,
        a: vec![0.5, 0.2, -0.1],
        b: vec![0.7, -0.3, 0.1],
        floor: DENSITY_FLOOR,
    }
}

pub fn benchmark_ic(name: &str) -> Result<Benchmark> {
    let (ic, sigma_s, sigma_a, report_times) = match name {
        "constant" => (
            benchmark_fourier(),
            SigmaSpec::Constant { value: 1.0 },
            SigmaSpec::Constant { value: 1.0 },
            vec![0.5, 1.0],
        ),
        "gaussian" => (
            IcSpec::Gaussian {
                c1: 0.5,
                c2: 2.5,
                x0: 0.5,
                theta: 0.01,
            },
            SigmaSpec::Constant { value: 1.0 },
            SigmaSpec::Constant { value: 0.0 },
            vec![1.0],
        ),
        "two-material" => (
            benchmark_fourier(),
            SigmaSpec::TwoMaterial {
                x1: 0.3,
                x2: 0.7,
                inside: 1.0,
                outside: 10.0,
            },
            SigmaSpec::Constant { value: 0.0 },
            vec![0.5, 1.0, 2.0],
        ),
        other => {
            return Err(Error::Usage(format!(
                "unknown benchmark '{other}', expected one of {}",
                BENCHMARK_NAMES.join(", ")
            )))
        }
    };
    Ok(Benchmark {
        name: name.to_string(),
        ic,
        sigma_s,
        sigma_a,
        report_times,
    })
}

impl Benchmark {
    pub fn t_end(&self) -> f64 {
        *self.report_times.last().unwrap()
    }

    pub fn kinetic_ic(&self, nx: usize, nv: usize) -> Result<KineticField> {
        self.ic.validate()?;
        KineticField::from_fn(nx, nv, |x, v| self.ic.eval(x, v))
    }

    /// Moments of the kinetic initial data, so both solvers start from the
    /// same state.
    pub fn moment_ic(&self, order: usize, nx: usize, nv: usize) -> Result<MomentField> {
        extract_moments(&self.kinetic_ic(nx, nv)?, order)
    }

    pub fn medium(&self, nx: usize) -> Result<MediumCoeffs> {
        medium(&self.sigma_s, &self.sigma_a, nx)
    }
}

/// Kinetic solver settings used for data generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub order: usize,
    pub nx: usize,
    pub nv: usize,
    pub cfl: f64,
    /// Seed the scenarios were drawn with, kept for the manifest.
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            order: 6,
            nx: 256,
            nv: 64,
            cfl: 0.8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub scenario: usize,
    pub path: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub scenario: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    #[serde(rename = "N")]
    pub order: usize,
    #[serde(rename = "Nx")]
    pub nx: usize,
    pub nv: usize,
    pub cfl: f64,
    pub seed: u64,
    pub scenarios: Vec<Scenario>,
    pub files: Vec<FileEntry>,
    #[serde(default)]
    pub failures: Vec<FailureEntry>,
}

pub fn csv_header(order: usize) -> String {
    let mut h = String::from("x,t");
    for k in 0..=order {
        write!(h, ",m{k}").unwrap();
    }
    for k in 0..=order + 1 {
        write!(h, ",dm{k}").unwrap();
    }
    h
}

/// Decimal with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn scenario_csv(scenario: &Scenario, cfg: &GenConfig) -> Result<(String, usize)> {
    let ic = scenario.kinetic_ic(cfg.nx, cfg.nv)?;
    let med = scenario.medium(cfg.nx)?;
    let snaps = kinetic_solve(&ic, &med, &scenario.sample_times, cfg.cfl)?;

    let n = cfg.order;
    let mut out = csv_header(n);
    out.push('\n');
    let mut rows = 0;
    let mut unrealizable = 0;
    for (&t, f) in scenario.sample_times.iter().zip(&snaps) {
        let m = extract_moments(f, n + 1)?;
        let dm: Vec<Vec<f64>> = (0..=n + 1).map(|k| spatial_derivative(m.component(k))).collect();
        for j in 0..cfg.nx {
            let (m0, m1) = (m.component(0)[j], m.component(1)[j]);
            if !(m0 > 0.0) || m1.abs() > m0 + 1e-10 {
                unrealizable += 1;
            }
            out.push_str(&fmt_f64(m.x(j)));
            out.push(',');
            out.push_str(&fmt_f64(t));
            for k in 0..=n {
                out.push(',');
                out.push_str(&fmt_f64(m.component(k)[j]));
            }
            for d in &dm {
                out.push(',');
                out.push_str(&fmt_f64(d[j]));
            }
            out.push('\n');
            rows += 1;
        }
    }
    if unrealizable > 0 {
        log::warn!(
            "scenario {}: {unrealizable} samples violate m0 > 0, |m1| <= m0",
            scenario.id
        );
    }
    Ok((out, rows))
}

/// Runs the kinetic solver for every scenario and writes the CSV files and
/// manifest into `out_dir`. A scenario whose solve fails is listed under
/// `failures` instead of aborting the whole run.
pub fn generate_dataset(scenarios: &[Scenario], cfg: &GenConfig, out_dir: &Path) -> Result<DatasetManifest> {
    if cfg.order + 1 >= cfg.nv {
        return Err(Error::Usage(format!(
            "moments up to order {} need more than {} ordinates",
            cfg.order + 1,
            cfg.nv
        )));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let mut failures = Vec::new();
    for s in scenarios {
        match scenario_csv(s, cfg) {
            Ok((text, rows)) => {
                let name = format!("scenario_{:04}.csv", s.id);
                std::fs::write(out_dir.join(&name), &text)?;
                files.push(FileEntry {
                    scenario: s.id,
                    path: name,
                    rows,
                    sha256: sha256_hex(text.as_bytes()),
                });
                log::info!("scenario {} done ({rows} rows)", s.id);
            }
            Err(e @ (Error::Io(_) | Error::Usage(_))) => return Err(e),
            Err(e) => {
                log::warn!("scenario {} failed: {e}", s.id);
                failures.push(FailureEntry {
                    scenario: s.id,
                    error: e.to_string(),
                });
            }
        }
    }
    let manifest = DatasetManifest {
        version: FORMAT_VERSION,
        order: cfg.order,
        nx: cfg.nx,
        nv: cfg.nv,
        cfl: cfg.cfl,
        seed: cfg.seed,
        scenarios: scenarios.to_vec(),
        files,
        failures,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(out_dir.join(MANIFEST_FILE), text + "\n")?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => return Err(Error::Version(format!("dataset format {v}, expected {FORMAT_VERSION}"))),
        None => return Err(Error::Parse(format!("{}: missing version", path.display()))),
    }
    serde_json::from_value(value).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// How to turn a dataset into training and validation samples.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    /// Fraction of scenarios held out for validation.
    pub val_fraction: f64,
    pub seed: u64,
    /// Closure order to train for; any order up to the stored one works.
    pub order: Option<usize>,
    /// Keep every `x_stride`-th grid point.
    pub x_stride: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            val_fraction: 0.1,
            seed: 0,
            order: None,
            x_stride: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub order: usize,
    pub train: Vec<TrainingSample>,
    pub val: Vec<TrainingSample>,
    pub train_scenarios: Vec<usize>,
    pub val_scenarios: Vec<usize>,
}

/// Scenario-level split of `ids`, reproducible from `seed`.
pub fn split_scenarios(ids: &[usize], val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Usage(format!("validation fraction {val_fraction} must lie in [0, 1)")));
    }
    let mut ids = ids.to_vec();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let mut n_val = (val_fraction * n as f64).round() as usize;
    if val_fraction > 0.0 && n >= 2 {
        n_val = n_val.clamp(1, n - 1);
    }
    let mut train = ids.split_off(n_val);
    let mut val = ids;
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

fn parse_rows(text: &str, entry: &FileEntry, stored: usize, order: usize, stride: usize) -> Result<Vec<TrainingSample>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != csv_header(stored) {
        return Err(Error::Integrity(format!("{}: unexpected header", entry.path)));
    }
    let width = 2 + (stored + 1) + (stored + 2);
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        if i % stride != 0 {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("{} row {}: {e}", entry.path, i + 1)))?;
        if vals.len() != width {
            return Err(Error::Integrity(format!(
                "{} row {}: {} columns, expected {width}",
                entry.path,
                i + 1,
                vals.len()
            )));
        }
        let m = &vals[2..3 + stored];
        let dm = &vals[3 + stored..];
        samples.push(TrainingSample {
            moments: m[..=order].to_vec(),
            gradients: dm[..=order].to_vec(),
            target: dm[order + 1],
        });
    }
    Ok(samples)
}

/// Reads the dataset behind `manifest_path`, verifying every file, and
/// splits it by scenario.
pub fn load_dataset(manifest_path: &Path, split: &SplitSpec) -> Result<Dataset> {
    let manifest = read_manifest(manifest_path)?;
    let dir: PathBuf = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let order = split.order.unwrap_or(manifest.order);
    if order == 0 || order > manifest.order {
        return Err(Error::Usage(format!(
            "order {order} not available from a dataset of order {}",
            manifest.order
        )));
    }
    if split.x_stride == 0 {
        return Err(Error::Usage("x stride must be positive".into()));
    }
    let ids: Vec<usize> = manifest.files.iter().map(|f| f.scenario).collect();
    let (train_ids, val_ids) = split_scenarios(&ids, split.val_fraction, split.seed)?;

    let mut train = Vec::new();
    let mut val = Vec::new();
    for entry in &manifest.files {
        let bytes = std::fs::read(dir.join(&entry.path))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::Integrity(format!("{}: checksum mismatch", entry.path)));
        }
        let text = String::from_utf8(bytes).map_err(|_| Error::Integrity(format!("{}: not UTF-8", entry.path)))?;
        let rows = text.lines().count().saturating_sub(1);
        if rows != entry.rows {
            return Err(Error::Integrity(format!(
                "{}: {rows} rows, manifest says {}",
                entry.path, entry.rows
            )));
        }
        let samples = parse_rows(&text, entry, manifest.order, order, split.x_stride)?;
        if val_ids.binary_search(&entry.scenario).is_ok() {
            val.extend(samples);
        } else {
            train.extend(samples);
        }
    }
    Ok(Dataset {
        manifest,
        order,
        train,
        val,
        train_scenarios: train_ids,
        val_scenarios: val_ids,
    })
}
