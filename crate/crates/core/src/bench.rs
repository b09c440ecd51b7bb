//! End-to-end experiment: sample a saddle-shaped target, train every kind,
//! minimize over `u` at each held-out condition and tabulate errors and
//! solve times.
//!
//! The target `f(x, u) = −xᵀx/(2n) + uᵀu/(2m)` is concave in `x` and convex
//! in `u`, with minimizer `u* = 0` on `[-1, 1]^m` for every `x`.
//!
//! Training of independent cells fans out over threads; the solve phase then
//! runs sequentially so that per-solve wall times are not skewed by
//! contention.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kv::KeyValues;
use crate::networks::{Kind, ModelDocument, Network};
use crate::numerics::{dist2, dot, grid_axis, sample_uniform_box, BoxDomain, Rng};
use crate::solver::{minimize, SolveOptions};
use crate::training::{fit, init_network, split_indices, Architecture, Dataset, TrainConfig};
use crate::verification::check_convexity;
use crate::{Error, Result};

pub fn target_function(x: &[f64], u: &[f64]) -> f64 {
    -dot(x, x) / (2.0 * x.len() as f64) + dot(u, u) / (2.0 * u.len() as f64)
}

/// Exact minimizer and minimum of [`target_function`] over `[-1, 1]^m`.
pub fn true_solution(x: &[f64], n: usize, m: usize) -> (Vec<f64>, f64) {
    debug_assert_eq!(x.len(), n);
    (vec![0.0; m], -dot(x, x) / (2.0 * n as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
}

impl Dims {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidConfig(format!("dims must be >= 1, got {n}x{m}")));
        }
        Ok(Dims { n, m })
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.n, self.m)
    }
}

impl FromStr for Dims {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (n, m) = s
            .split_once('x')
            .ok_or_else(|| Error::Parse(format!("dims `{s}` must look like NxM")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad dims `{s}`")))
        };
        Dims::new(parse(n)?, parse(m)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dims: Vec<Dims>,
    /// Samples drawn per cell before the train/test split.
    pub data_points: usize,
    pub kinds: Vec<Kind>,
    pub arch: Architecture,
    pub train: TrainConfig,
    pub solve: SolveOptions,
    /// Independent repetitions; results are pooled per (kind, dims).
    pub seeds: Vec<u64>,
    /// Use `data_points` and `train.epochs` for every cell. Otherwise cells
    /// other than 1x1 use the reduced values below.
    pub full: bool,
    pub reduced_data_points: usize,
    pub reduced_epochs: usize,
    pub surface_resolution: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dims: vec![Dims { n: 1, m: 1 }, Dims { n: 61, m: 20 }, Dims { n: 376, m: 17 }],
            data_points: 5000,
            kinds: Kind::ALL.to_vec(),
            arch: Architecture::default(),
            train: TrainConfig::default(),
            solve: SolveOptions::default(),
            seeds: vec![0],
            full: false,
            reduced_data_points: 2000,
            reduced_epochs: 30,
            surface_resolution: 41,
            output_dir: PathBuf::from("bench-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.data_points < 10 || self.reduced_data_points < 10 {
            return Err(Error::InvalidConfig("data_points must be >= 10".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if self.reduced_epochs == 0 {
            return Err(Error::InvalidConfig("reduced_epochs must be >= 1".into()));
        }
        if self.surface_resolution < 2 {
            return Err(Error::InvalidConfig("surface_resolution must be >= 2".into()));
        }
        if self.arch.planes == 0 || !(self.arch.temperature > 0.0) {
            return Err(Error::InvalidConfig("planes must be >= 1 and temperature > 0".into()));
        }
        self.train.validate()?;
        self.solve.validate()
    }

    /// Data size and training schedule actually used for `dims`.
    pub fn cell_budget(&self, dims: Dims) -> (usize, usize) {
        if self.full || dims == (Dims { n: 1, m: 1 }) {
            (self.data_points, self.train.epochs)
        } else {
            (self.reduced_data_points, self.reduced_epochs)
        }
    }

    /// Parses `key = value` lines on top of the defaults.
    ///
    /// Keys: `dims`, `kinds`, `seeds`, `data_points`, `full`,
    /// `reduced_data_points`, `reduced_epochs`, `surface_resolution`,
    /// `output_dir`, `hidden`, `planes`, `temperature`, `max_iters`,
    /// `grad_tolerance`, `restarts`, `schedule`, plus every training key.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let mut cfg = ExperimentConfig::default();
        if let Some(v) = kv.take_list("dims")? {
            cfg.dims = v;
        }
        if let Some(v) = kv.take_list("kinds")? {
            cfg.kinds = v;
        }
        if let Some(v) = kv.take_list("seeds")? {
            cfg.seeds = v;
        }
        if let Some(v) = kv.take("data_points")? {
            cfg.data_points = v;
        }
        if let Some(v) = kv.take("full")? {
            cfg.full = v;
        }
        if let Some(v) = kv.take("reduced_data_points")? {
            cfg.reduced_data_points = v;
        }
        if let Some(v) = kv.take("reduced_epochs")? {
            cfg.reduced_epochs = v;
        }
        if let Some(v) = kv.take("surface_resolution")? {
            cfg.surface_resolution = v;
        }
        if let Some(v) = kv.take::<String>("output_dir")? {
            cfg.output_dir = PathBuf::from(v);
        }
        if let Some(v) = kv.take_list("hidden")? {
            cfg.arch.hidden = v;
        }
        if let Some(v) = kv.take("planes")? {
            cfg.arch.planes = v;
        }
        if let Some(v) = kv.take("temperature")? {
            cfg.arch.temperature = v;
        }
        if let Some(v) = kv.take("max_iters")? {
            cfg.solve.max_iters = v;
        }
        if let Some(v) = kv.take("grad_tolerance")? {
            cfg.solve.grad_tolerance = v;
        }
        if let Some(v) = kv.take("restarts")? {
            cfg.solve.restarts = v;
        }
        if let Some(v) = kv.take_list("schedule")? {
            cfg.solve.schedule = v;
        }
        cfg.train.apply(&mut kv)?;
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// One solved test condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSample {
    pub seed: u64,
    pub x: Vec<f64>,
    pub u_hat: Vec<f64>,
    /// `‖û − u*‖₂`.
    pub minimizer_error: f64,
    /// `|f̂(x, û) − f(x, u*)|`: the model's optimum against the true optimum.
    pub value_error: f64,
    /// `|f(x, û) − f(x, u*)|`: the true cost of acting on `û`.
    pub true_value_error: f64,
    pub solve_time_s: f64,
    /// `null` when the solve is uncertified.
    pub certificate: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub final_train_loss: f64,
    pub final_test_mse: f64,
    pub wall_time_s: f64,
    /// Post-training convexity check in `u`; `None` for FNN.
    pub convexity_passed: Option<bool>,
    /// Divergence or other training failure; the seed is then not solved.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub kind: Kind,
    pub dims: Dims,
    pub data_points: usize,
    pub epochs: usize,
    pub training: Vec<TrainSummary>,
    /// Means over every valid solved test condition of every seed.
    pub mean_solve_time_s: Option<f64>,
    pub mean_minimizer_error: Option<f64>,
    pub mean_value_error: Option<f64>,
    pub mean_true_value_error: Option<f64>,
    /// Solver calls that returned an error.
    pub solver_failures: usize,
    /// Solves whose value was infinite or NaN.
    pub invalid_values: usize,
    pub samples: Vec<ConditionSample>,
}

impl CellReport {
    fn finish(mut self) -> Self {
        let mean = |f: fn(&ConditionSample) -> f64, s: &[ConditionSample]| {
            if s.is_empty() {
                None
            } else {
                Some(s.iter().map(f).sum::<f64>() / s.len() as f64)
            }
        };
        self.mean_solve_time_s = mean(|s| s.solve_time_s, &self.samples);
        self.mean_minimizer_error = mean(|s| s.minimizer_error, &self.samples);
        self.mean_value_error = mean(|s| s.value_error, &self.samples);
        self.mean_true_value_error = mean(|s| s.true_value_error, &self.samples);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub kinds: Vec<Kind>,
    pub dims: Vec<Dims>,
    pub seeds: Vec<u64>,
    /// Definitions of the metrics and of the pooling over seeds.
    pub notes: Vec<String>,
    pub cells: Vec<CellReport>,
}

impl BenchmarkReport {
    pub fn cell(&self, kind: Kind, dims: Dims) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.kind == kind && c.dims == dims)
    }
}

/// A trained network kept for export.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub kind: Kind,
    pub dims: Dims,
    pub seed: u64,
    pub network: Network,
}

#[derive(Clone, Debug)]
pub struct BenchmarkRun {
    pub report: BenchmarkReport,
    /// First-seed model of every cell that trained successfully.
    pub models: Vec<TrainedModel>,
}

/// The sampled dataset of one (seed, dims) pair, shared by all kinds.
pub struct CellData {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn cell_data(seed: u64, dims: Dims, data_points: usize, split_ratio: f64) -> Result<CellData> {
    let data_seed = Rng::derive_seed(Rng::derive_seed(seed, dims.n as u64), dims.m as u64);
    let mut rng = Rng::new(data_seed);
    let (n, m) = (dims.n, dims.m);
    let inputs = sample_uniform_box(&BoxDomain::symmetric_unit(n + m), data_points, &mut rng);
    let pairs = inputs.into_iter().map(|mut z| {
        let u = z.split_off(n);
        (z, u)
    });
    let full = Dataset::from_fn(n, m, pairs, target_function)?;
    let (train_idx, test_idx) = split_indices(full.len(), split_ratio, &mut rng)?;
    let mut seen = vec![false; full.len()];
    for &i in &train_idx {
        seen[i] = true;
    }
    assert!(
        test_idx.iter().all(|&i| !seen[i]),
        "train and test splits overlap"
    );
    Ok(CellData {
        train: full.subset(&train_idx),
        test: full.subset(&test_idx),
    })
}

fn kind_tag(kind: Kind) -> u64 {
    Kind::ALL.iter().position(|k| *k == kind).expect("known kind") as u64
}

struct Trained {
    kind: Kind,
    dims: Dims,
    seed: u64,
    data: usize,
    summary: TrainSummary,
    network: Option<Network>,
}

fn train_cell(cfg: &ExperimentConfig, data: &CellData, kind: Kind, dims: Dims, seed: u64, epochs: usize) -> Trained {
    let mut tcfg = cfg.train.clone();
    tcfg.epochs = epochs;
    tcfg.seed = Rng::derive_seed(seed, 1000 + kind_tag(kind));
    let mut init_rng = Rng::new(Rng::derive_seed(tcfg.seed, 7));
    let mut summary = TrainSummary {
        seed,
        train_size: data.train.len(),
        test_size: data.test.len(),
        final_train_loss: f64::NAN,
        final_test_mse: f64::NAN,
        wall_time_s: 0.0,
        convexity_passed: None,
        error: None,
    };
    let outcome = init_network(kind, dims.n, dims.m, &cfg.arch, &mut init_rng)
        .and_then(|net| fit(net, &data.train, &data.test, &tcfg));
    let network = match outcome {
        Ok((net, rep)) => {
            summary.final_train_loss = *rep.train_loss.last().expect("epochs >= 1");
            summary.final_test_mse = rep.final_test_mse;
            summary.wall_time_s = rep.wall_time_s;
            if kind.is_parameterized_convex() {
                let mut rng = Rng::new(Rng::derive_seed(tcfg.seed, 8));
                summary.convexity_passed = check_convexity(&net, 20, 20, &mut rng).ok().map(|r| r.passed);
            }
            Some(net)
        }
        Err(e) => {
            summary.error = Some(e.to_string());
            None
        }
    };
    Trained {
        kind,
        dims,
        seed,
        data: data.train.len() + data.test.len(),
        summary,
        network,
    }
}

fn solve_cell(net: &Network, test: &Dataset, seed: u64, opts: &SolveOptions, cell: &mut CellReport) {
    let domain = BoxDomain::symmetric_unit(test.m());
    for s in test.points() {
        let started = Instant::now();
        let outcome = minimize(net, &s.x, &domain, opts);
        let elapsed = started.elapsed().as_secs_f64();
        let res = match outcome {
            Ok(r) => r,
            Err(Error::NumericOverflow(_)) => {
                cell.invalid_values += 1;
                continue;
            }
            Err(_) => {
                cell.solver_failures += 1;
                continue;
            }
        };
        if !res.value.is_finite() {
            cell.invalid_values += 1;
            continue;
        }
        let (u_star, best) = true_solution(&s.x, test.n(), test.m());
        cell.samples.push(ConditionSample {
            seed,
            minimizer_error: dist2(&res.u_star, &u_star),
            value_error: (res.value - best).abs(),
            true_value_error: (target_function(&s.x, &res.u_star) - best).abs(),
            solve_time_s: elapsed,
            certificate: res.certified.then_some(res.certificate),
            iterations: res.iterations,
            converged: res.converged,
            x: s.x.clone(),
            u_hat: res.u_star,
        });
    }
}

pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkRun> {
    cfg.validate()?;
    let mut datasets = BTreeMap::new();
    for &seed in &cfg.seeds {
        for &dims in &cfg.dims {
            let (points, _) = cfg.cell_budget(dims);
            datasets.insert((seed, dims), cell_data(seed, dims, points, cfg.train.split_ratio)?);
        }
    }
    let mut jobs = Vec::new();
    for &dims in &cfg.dims {
        for &kind in &cfg.kinds {
            for &seed in &cfg.seeds {
                jobs.push((kind, dims, seed));
            }
        }
    }
    let trained: Vec<Trained> = jobs
        .par_iter()
        .map(|&(kind, dims, seed)| {
            let (_, epochs) = cfg.cell_budget(dims);
            train_cell(cfg, &datasets[&(seed, dims)], kind, dims, seed, epochs)
        })
        .collect();

    let mut cells = Vec::new();
    let mut models = Vec::new();
    for &kind in &cfg.kinds {
        for &dims in &cfg.dims {
            let (_, epochs) = cfg.cell_budget(dims);
            let mut cell = CellReport {
                kind,
                dims,
                data_points: 0,
                epochs,
                training: Vec::new(),
                mean_solve_time_s: None,
                mean_minimizer_error: None,
                mean_value_error: None,
                mean_true_value_error: None,
                solver_failures: 0,
                invalid_values: 0,
                samples: Vec::new(),
            };
            for t in trained.iter().filter(|t| t.kind == kind && t.dims == dims) {
                cell.data_points = t.data;
                cell.training.push(t.summary.clone());
                if let Some(net) = &t.network {
                    solve_cell(net, &datasets[&(t.seed, dims)].test, t.seed, &cfg.solve, &mut cell);
                    if !models.iter().any(|m: &TrainedModel| m.kind == kind && m.dims == dims) {
                        models.push(TrainedModel {
                            kind,
                            dims,
                            seed: t.seed,
                            network: net.clone(),
                        });
                    }
                }
            }
            cells.push(cell.finish());
        }
    }
    let notes = vec![
        "minimizer_error = ||u_hat - u*||_2 with u* = 0".to_string(),
        "value_error = |f_model(x, u_hat) - f(x, u*)|; true_value_error = |f(x, u_hat) - f(x, u*)|".to_string(),
        format!(
            "means pool every test condition of seeds {:?}; each seed draws its own dataset shared by all kinds",
            cfg.seeds
        ),
        format!(
            "full = {}: cells other than 1x1 use {} points and {} epochs unless full",
            cfg.full, cfg.reduced_data_points, cfg.reduced_epochs
        ),
    ];
    Ok(BenchmarkRun {
        report: BenchmarkReport {
            kinds: cfg.kinds.clone(),
            dims: cfg.dims.clone(),
            seeds: cfg.seeds.clone(),
            notes,
            cells,
        },
        models,
    })
}

/// Writes `x,u,value` rows over a `resolution × resolution` grid of `[-1, 1]²`.
pub fn surface_dump_fn<F, W>(f: F, resolution: usize, mut out: W) -> Result<()>
where
    F: Fn(f64, f64) -> Result<f64>,
    W: Write,
{
    if resolution < 2 {
        return Err(Error::InvalidArgument("resolution must be >= 2".into()));
    }
    let axis = grid_axis(-1.0, 1.0, resolution);
    writeln!(out, "x,u,value")?;
    for &x in &axis {
        for &u in &axis {
            writeln!(out, "{x:?},{u:?},{:?}", f(x, u)?)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// [`surface_dump_fn`] for a trained `n = m = 1` network.
pub fn surface_dump(net: &Network, resolution: usize, path: impl AsRef<Path>) -> Result<()> {
    let (n, m) = net.dims();
    if (n, m) != (1, 1) {
        return Err(Error::InvalidArgument(format!(
            "surfaces need n = m = 1, got {n}x{m}"
        )));
    }
    let file = std::io::BufWriter::new(fs::File::create(path)?);
    surface_dump_fn(|x, u| net.forward(&[x], &[u]), resolution, file)
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map(|v| format!("{v:?}")).unwrap_or_default()
}

/// Table with one row per kind and `time`, `minimizer_error`, `value_error`
/// columns per dims.
pub fn report_csv(report: &BenchmarkReport) -> String {
    let mut header = vec!["kind".to_string()];
    for d in &report.dims {
        for col in ["time", "minimizer_error", "value_error"] {
            header.push(format!("{d}_{col}"));
        }
    }
    let mut text = header.join(",");
    text.push('\n');
    for &kind in &report.kinds {
        let mut row = vec![kind.to_string()];
        for &d in &report.dims {
            let cell = report.cell(kind, d);
            row.push(fmt_metric(cell.and_then(|c| c.mean_solve_time_s)));
            row.push(fmt_metric(cell.and_then(|c| c.mean_minimizer_error)));
            row.push(fmt_metric(cell.and_then(|c| c.mean_value_error)));
        }
        text.push_str(&row.join(","));
        text.push('\n');
    }
    text
}

/// Writes `report.csv` and `samples.json` into `dir`.
pub fn export_report(report: &BenchmarkReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.csv"), report_csv(report))?;
    fs::write(dir.join("samples.json"), serde_json::to_string_pretty(report)?)?;
    Ok(())
}

pub fn load_report(path: impl AsRef<Path>) -> Result<BenchmarkReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// [`export_report`] plus `models/<kind>_<dims>.json`, `surface_<kind>.csv`
/// for 1x1 models and `surface_target.csv`.
pub fn export_run(run: &BenchmarkRun, dir: impl AsRef<Path>, resolution: usize) -> Result<()> {
    let dir = dir.as_ref();
    export_report(&run.report, dir)?;
    let models = dir.join("models");
    fs::create_dir_all(&models)?;
    for m in &run.models {
        ModelDocument::from_network(&m.network, Some(m.seed)).save(models.join(format!("{}_{}.json", m.kind, m.dims)))?;
        if m.dims == (Dims { n: 1, m: 1 }) {
            surface_dump(&m.network, resolution, dir.join(format!("surface_{}.csv", m.kind)))?;
        }
    }
    let file = std::io::BufWriter::new(fs::File::create(dir.join("surface_target.csv"))?);
    surface_dump_fn(|x, u| Ok(target_function(&[x], &[u])), resolution, file)
}
