use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hypclosure::bench::{
    diagnose_run, grid_csv, grid_search, kinetic_reference, point_diagnostics_csv, run_against, BenchConfig,
    ClosureChoice, GridSpec, RunReport,
};
use hypclosure::data::{benchmark_ic, generate_dataset, load_dataset, sample_scenarios, GenConfig, SplitSpec};
use hypclosure::nn::{prepare_model, save_model, train, Activation, Head, ModelSpec, TrainConfig};
use hypclosure::{Error, Result};

#[derive(Parser)]
#[command(name = "hypclosure", version, about = "Hyperbolicity-preserving learned moment closures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate training data with the kinetic solver.
    GenData(GenArgs),
    /// Train a closure network on a generated dataset.
    Train(TrainArgs),
    /// Solve one benchmark with a P_N or learned closure.
    Solve(SolveArgs),
    /// Compare P_N and learned closures on a benchmark for several orders.
    Bench(BenchArgs),
    /// Eigensolver and linear-stability check of a saved run.
    Diagnose(DiagnoseArgs),
    /// Train a sweep of network architectures.
    GridSearch(GridArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long = "N", default_value_t = 6)]
    order: usize,
    #[arg(long, default_value_t = 256)]
    nx: usize,
    #[arg(long, default_value_t = 64)]
    nv: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest or the directory holding it.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "bound")]
    head: String,
    #[arg(long, default_value_t = 6)]
    layers: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value = "relu")]
    activation: String,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1e-7)]
    l2: f64,
    #[arg(long, default_value_t = 1024)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Closure order; defaults to the dataset's.
    #[arg(long = "N")]
    order: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    /// Keep every n-th sample row.
    #[arg(long, default_value_t = 1)]
    x_stride: usize,
    #[arg(long, default_value_t = hypclosure::closure::DEFAULT_GAMMA)]
    gamma: f64,
    /// Feed raw moments instead of m / m0 to the network.
    #[arg(long)]
    no_normalize: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 256)]
    nx: usize,
    #[arg(long, default_value_t = 64)]
    nv: usize,
    #[arg(long, default_value_t = 0.8)]
    cfl: f64,
    /// Linear-stability scan every this many steps; 0 disables it.
    #[arg(long, default_value_t = 0)]
    stability_every: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, conflicts_with = "pn", required_unless_present = "pn")]
    model: Option<PathBuf>,
    #[arg(long)]
    pn: bool,
    #[arg(long)]
    benchmark: String,
    #[arg(long = "N")]
    order: Option<usize>,
    #[arg(long)]
    t_end: Option<f64>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Model file; `{N}` is replaced by each order.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    benchmark: String,
    #[arg(long = "N-list", value_delimiter = ',', default_value = "6")]
    orders: Vec<usize>,
    #[arg(long)]
    t_end: Option<f64>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Report JSON written by `solve` or `bench`.
    #[arg(long)]
    run: PathBuf,
    /// Integer wavenumbers `lo:hi`.
    #[arg(long, default_value = "-100:100", allow_hyphen_values = true)]
    xi_range: String,
    /// CSV destination; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2,4,6")]
    layers: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
    widths: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "relu,tanh")]
    activations: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "bound,distinct")]
    heads: Vec<String>,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1024)]
    batch: usize,
    #[arg(long = "N")]
    order: Option<usize>,
    #[arg(long, default_value_t = 1)]
    x_stride: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(hypclosure::data::MANIFEST_FILE)
    } else {
        p.to_path_buf()
    }
}

fn gen_data(a: GenArgs) -> Result<()> {
    let scenarios = sample_scenarios(a.seed, a.count)?;
    let cfg = GenConfig {
        order: a.order,
        nx: a.nx,
        nv: a.nv,
        cfl: 0.8,
        seed: a.seed,
    };
    let man = generate_dataset(&scenarios, &cfg, &a.out)?;
    println!(
        "wrote {} scenario files ({} failed) to {}",
        man.files.len(),
        man.failures.len(),
        a.out.display()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let split = SplitSpec {
        val_fraction: a.val_fraction,
        seed: a.seed,
        order: a.order,
        x_stride: a.x_stride,
    };
    let data = load_dataset(&manifest_path(&a.data), &split)?;
    let spec = ModelSpec {
        order: data.order,
        hidden: vec![a.width; a.layers],
        activation: Activation::parse(&a.activation).map_err(|e| Error::Usage(e.to_string()))?,
        head: Head::parse(&a.head).map_err(|e| Error::Usage(e.to_string()))?,
        gamma: a.gamma,
    };
    let model = prepare_model(&spec, &data.train, a.seed, !a.no_normalize)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        lr: a.lr,
        l2: a.l2,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let res = train(model, &data.train, &data.val, &cfg)?;
    save_model(&res.model, &a.out)?;
    res.write_history_csv(&a.out.with_extension("history.csv"))?;
    let first = &res.history[0];
    println!(
        "N={} {} samples: val E2 {:.4e} -> {:.4e} (best epoch {}), model written to {}",
        data.order,
        data.train.len(),
        first.val_e2,
        res.best_val_e2(),
        res.best_epoch,
        a.out.display()
    );
    Ok(())
}

fn bench_config(run: &RunArgs, t_end: Option<f64>) -> BenchConfig {
    let mut cfg = BenchConfig {
        nx: run.nx,
        nv: run.nv,
        cfl: run.cfl,
        t_end,
        out_dir: Some(run.out.clone()),
        ..BenchConfig::default()
    };
    cfg.solver.cfl = run.cfl;
    cfg.solver.stability_every = run.stability_every;
    cfg
}

fn print_report(r: &RunReport) {
    for e in &r.errors {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3e}"));
        println!("{} {} t={}: m0 {} m1 {}", r.scenario, r.closure, e.t, f(e.m0), f(e.m1));
    }
    if let Some(t) = r.diagnostics.blow_up_time {
        println!(
            "{} {} blew up at t = {t:.4}: {}",
            r.scenario,
            r.closure,
            r.diagnostics.blow_up_detail.as_deref().unwrap_or("")
        );
    }
}

/// Returns whether the run completed.
fn solve_cmd(a: SolveArgs) -> Result<bool> {
    let choice = match &a.model {
        Some(p) => ClosureChoice::from_model_file(p)?,
        None => ClosureChoice::Pn,
    };
    let order = match (&choice, a.order) {
        (ClosureChoice::Model { model, .. }, None) => model.order,
        (_, Some(n)) => n,
        (ClosureChoice::Pn, None) => return Err(Error::Usage("--pn needs --N".into())),
    };
    let bench = benchmark_ic(&a.benchmark)?;
    let cfg = bench_config(&a.run, a.t_end);
    let reference = kinetic_reference(&bench, &cfg)?;
    let (report, _) = run_against(&bench, &reference, &choice, order, &cfg)?;
    print_report(&report);
    Ok(report.completed)
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let bench = benchmark_ic(&a.benchmark)?;
    let cfg = bench_config(&a.run, a.t_end);
    let reference = kinetic_reference(&bench, &cfg)?;
    for &n in &a.orders {
        let mut choices = vec![ClosureChoice::Pn];
        if let Some(m) = &a.model {
            choices.push(ClosureChoice::from_model_file(Path::new(&m.replace("{N}", &n.to_string())))?);
        }
        for c in &choices {
            let (report, _) = run_against(&bench, &reference, c, n, &cfg)?;
            print_report(&report);
        }
    }
    Ok(())
}

fn diagnose_cmd(a: DiagnoseArgs) -> Result<()> {
    let range = a
        .xi_range
        .split_once(':')
        .and_then(|(l, h)| Some((l.trim().parse().ok()?, h.trim().parse().ok()?)))
        .ok_or_else(|| Error::Usage(format!("--xi-range expects lo:hi, got '{}'", a.xi_range)))?;
    let rows = diagnose_run(&a.run, range)?;
    let csv = point_diagnostics_csv(&rows);
    match &a.out {
        Some(p) => std::fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    let unstable = rows.iter().filter(|r| r.unstable_xi > 0).count();
    let complex = rows.iter().filter(|r| !r.all_real).count();
    let max_eig = rows.iter().map(|r| r.max_abs_eig).fold(0.0, f64::max);
    eprintln!("{} points: max |eig| {max_eig:.6}, {complex} with complex spectra, {unstable} linearly unstable", rows.len());
    Ok(())
}

fn grid_cmd(a: GridArgs) -> Result<()> {
    let split = SplitSpec {
        order: a.order,
        x_stride: a.x_stride,
        seed: a.seed,
        ..SplitSpec::default()
    };
    let data = load_dataset(&manifest_path(&a.data), &split)?;
    let usage = |e: Error| Error::Usage(e.to_string());
    let grid = GridSpec {
        layers: a.layers,
        widths: a.widths,
        activations: a.activations.iter().map(|s| Activation::parse(s).map_err(usage)).collect::<Result<_>>()?,
        heads: a.heads.iter().map(|s| Head::parse(s).map_err(usage)).collect::<Result<_>>()?,
        seed: a.seed,
    };
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        batch_size: a.batch,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let rows = grid_search(&data, &grid, &cfg)?;
    std::fs::write(&a.out, grid_csv(&rows))?;
    println!("{} architectures written to {}", rows.len(), a.out.display());
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::Parse(_) | Error::Version(_) | Error::Io(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Solve(a) => match solve_cmd(a) {
            Ok(false) => return ExitCode::from(3),
            other => other.map(|_| ()),
        },
        Command::Bench(a) => bench_cmd(a),
        Command::Diagnose(a) => diagnose_cmd(a),
        Command::GridSearch(a) => grid_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
