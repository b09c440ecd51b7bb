use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use paramconvex::bench::{export_run, report_csv, run_benchmark, target_function, Dims, ExperimentConfig};
use paramconvex::networks::{Kind, ModelDocument};
use paramconvex::numerics::{sample_uniform_box, BoxDomain, Rng};
use paramconvex::solver::{minimize, SolveOptions};
use paramconvex::training::{init_network, train, Architecture, Dataset, TrainConfig};
use paramconvex::verification::{run_suite, Suite};

#[derive(Parser)]
#[command(name = "paramconvex", version, about = "Parameterized convex approximators: train, solve, verify")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize a saved model over u in [-1, 1]^m at a fixed condition x.
    Solve(SolveArgs),
    /// Run property checks and print their reports as JSON.
    Check(CheckArgs),
    /// Train every kind on the saddle target and tabulate solve quality.
    Benchmark(BenchArgs),
    /// Fit a model to a CSV dataset.
    Train(TrainArgs),
    /// Sample a CSV dataset from the saddle target.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated condition vector.
    #[arg(long, allow_hyphen_values = true)]
    x: String,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value = "all")]
    suite: Suite,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// key = value experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the full data size and epoch count for every dims.
    #[arg(long)]
    full: bool,
    /// e.g. plse,pma
    #[arg(long)]
    kinds: Option<String>,
    /// e.g. 1x1,61x20
    #[arg(long)]
    dims: Option<String>,
    /// e.g. 0,1,2
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    kind: Kind,
    /// key = value training configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    planes: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Hidden widths, e.g. 64,64
    #[arg(long)]
    hidden: Option<String>,
    /// Where to write the model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Where to write the training report JSON (stdout otherwise).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 5000)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| anyhow::anyhow!("`{s}`: {e}")))
        .collect()
}

fn solve(args: SolveArgs) -> Result<()> {
    let net = ModelDocument::load(&args.model)
        .and_then(ModelDocument::into_network)
        .with_context(|| format!("loading {}", args.model.display()))?;
    let x: Vec<f64> = parse_list(&args.x).context("parsing --x")?;
    let mut opts = SolveOptions::default();
    if let Some(v) = args.tol {
        opts.grad_tolerance = v;
    }
    if let Some(v) = args.max_iters {
        opts.max_iters = v;
    }
    if let Some(v) = args.restarts {
        opts.restarts = v;
    }
    if let Some(v) = args.seed {
        opts.seed = v;
    }
    let (_, m) = net.dims();
    let result = minimize(&net, &x, &BoxDomain::symmetric_unit(m), &opts)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}

fn check(args: CheckArgs) -> Result<bool> {
    let reports = run_suite(args.suite, args.seed)?;
    println!("{}", serde_json::to_string_pretty(&reports)?);
    for r in reports.iter().filter(|r| !r.passed) {
        eprintln!("FAILED {}: max violation {:e} > slack {:e}", r.name, r.max_violation, r.slack);
    }
    Ok(reports.iter().all(|r| r.passed))
}

fn benchmark(args: BenchArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if args.full {
        cfg.full = true;
    }
    if let Some(k) = &args.kinds {
        cfg.kinds = parse_list::<Kind>(k)?;
    }
    if let Some(d) = &args.dims {
        cfg.dims = parse_list::<Dims>(d)?;
    }
    if let Some(s) = &args.seeds {
        cfg.seeds = parse_list::<u64>(s)?;
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    let run = run_benchmark(&cfg)?;
    export_run(&run, &cfg.output_dir, cfg.surface_resolution)?;
    for cell in &run.report.cells {
        for t in cell.training.iter().filter(|t| t.error.is_some()) {
            eprintln!("{} {} seed {}: {}", cell.kind, cell.dims, t.seed, t.error.as_deref().unwrap_or(""));
        }
    }
    print!("{}", report_csv(&run.report));
    eprintln!("wrote {}", cfg.output_dir.display());
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let ds = Dataset::read_csv(fs::File::open(&args.data).with_context(|| format!("opening {}", args.data.display()))?)?;
    let cfg = match &args.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    let mut arch = Architecture::default();
    if let Some(v) = args.planes {
        arch.planes = v;
    }
    if let Some(v) = args.temperature {
        arch.temperature = v;
    }
    if let Some(h) = &args.hidden {
        arch.hidden = parse_list(h)?;
    }
    let mut rng = Rng::new(Rng::derive_seed(cfg.seed, 7));
    let net = init_network(args.kind, ds.n(), ds.m(), &arch, &mut rng)?;
    let (net, report) = train(net, &ds, &cfg)?;
    ModelDocument::from_network(&net, Some(cfg.seed)).save(&args.model)?;
    let json = serde_json::to_string_pretty(&report)?;
    match args.report {
        Some(p) => fs::write(p, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    if args.n == 0 || args.m == 0 {
        bail!("--n and --m must be >= 1");
    }
    let mut rng = Rng::new(args.seed);
    let pts = sample_uniform_box(&BoxDomain::symmetric_unit(args.n + args.m), args.points, &mut rng);
    let pairs = pts.into_iter().map(|mut z| {
        let u = z.split_off(args.n);
        (z, u)
    });
    let ds = Dataset::from_fn(args.n, args.m, pairs, target_function)?;
    let mut file = io::BufWriter::new(fs::File::create(&args.out)?);
    ds.write_csv(&mut file)?;
    file.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(a) => solve(a).map(|_| true),
        Command::Check(a) => check(a),
        Command::Benchmark(a) => benchmark(a).map(|_| true),
        Command::Train(a) => train_cmd(a).map(|_| true),
        Command::Generate(a) => generate(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
