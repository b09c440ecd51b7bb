//! Executable checks of the mathematical properties the networks rely on.
//!
//! Each check returns a [`CheckReport`] whose `passed` flag is exactly
//! `max_violation <= slack`. Negative controls invert that: they pass when a
//! planted violation is detected, which guards against checks that can never
//! fail.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::networks::{Kind, Network};
use crate::numerics::{grid_axis, sample_uniform_box, BoxDomain, Rng};
use crate::training::{init_network, loss_and_gradients, mse_loss, xavier_mlp, Architecture, Sample};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub samples: usize,
    pub max_violation: f64,
    pub slack: f64,
    pub passed: bool,
    pub notes: String,
}

impl CheckReport {
    fn new(name: impl Into<String>, samples: usize, max_violation: f64, slack: f64, notes: String) -> Self {
        CheckReport {
            name: name.into(),
            samples,
            max_violation,
            slack,
            passed: max_violation <= slack,
            notes,
        }
    }

    /// A negative control: passes only when the planted defect shows up.
    fn control(name: impl Into<String>, samples: usize, max_violation: f64, slack: f64, notes: String) -> Self {
        CheckReport {
            name: name.into(),
            samples,
            max_violation,
            slack,
            passed: max_violation > slack,
            notes,
        }
    }
}

pub const SANDWICH_SLACK: f64 = 1e-9;
pub const CONVEXITY_SLACK: f64 = 1e-9;
pub const ENVELOPE_SLACK: f64 = 1e-9;
/// Central-difference step for `u`-gradients.
pub const GRAD_U_STEP: f64 = 1e-4;
pub const GRAD_U_TOLERANCE: f64 = 1e-5;
/// Central-difference step for weight gradients.
pub const WEIGHT_STEP: f64 = 1e-5;
pub const WEIGHT_TOLERANCE: f64 = 1e-4;
/// Magnitude below which errors are measured absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-3;

/// `|a − b| / max(|a|, |b|, RELATIVE_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

/// Per-sample sandwich gaps `(PLSE − PMA)` for a smooth network and its twin.
pub fn sandwich_gap(plse: &Network, x: &[f64], u: &[f64]) -> Result<f64> {
    let pma = plse.max_affine_twin()?;
    Ok(plse.forward(x, u)? - pma.forward(x, u)?)
}

/// Random PLSE networks with `n ≤ max_dims.0`, `m ≤ max_dims.1` compared with
/// their weight-identical PMA twins: `0 ≤ PLSE − PMA ≤ T log I`.
pub fn check_sandwich(
    trials: usize,
    max_dims: (usize, usize),
    planes: usize,
    temperature: f64,
    rng: &mut Rng,
) -> Result<CheckReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    const SAMPLES_PER_NET: usize = 10;
    let bound = temperature * (planes as f64).ln();
    let mut worst: f64 = 0.0;
    let mut largest_gap: f64 = 0.0;
    for _ in 0..trials {
        let n = 1 + rng.below(max_dims.0.max(1));
        let m = 1 + rng.below(max_dims.1.max(1));
        let embed = xavier_mlp(&[n, 16, 16, (m + 1) * planes], rng)?;
        let plse = Network::plse(n, m, planes, embed, temperature)?;
        let pma = plse.max_affine_twin()?;
        let xs = sample_uniform_box(&BoxDomain::symmetric_unit(n), SAMPLES_PER_NET, rng);
        let us = sample_uniform_box(&BoxDomain::symmetric_unit(m), SAMPLES_PER_NET, rng);
        for (x, u) in xs.iter().zip(&us) {
            let gap = plse.forward(x, u)? - pma.forward(x, u)?;
            largest_gap = largest_gap.max(gap);
            worst = worst.max(-gap).max(gap - bound);
        }
    }
    Ok(CheckReport::new(
        "sandwich",
        trials * SAMPLES_PER_NET,
        worst,
        SANDWICH_SLACK,
        format!(
            "I = {planes}, T = {temperature}, bound T log I = {bound:.6e}, largest gap seen = {largest_gap:.6e}"
        ),
    ))
}

const LAMBDAS: [f64; 3] = [0.25, 0.5, 0.75];

/// Convexity in `u` of an arbitrary `f(x, u)` on `[-1, 1]^{n+m}`.
pub fn check_convexity_fn<F>(
    name: &str,
    f: F,
    n: usize,
    m: usize,
    x_samples: usize,
    u_pairs: usize,
    rng: &mut Rng,
) -> Result<CheckReport>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    let xs = sample_uniform_box(&BoxDomain::symmetric_unit(n.max(1)), x_samples, rng);
    let udom = BoxDomain::symmetric_unit(m);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for x in &xs {
        let x = &x[..n];
        let firsts = sample_uniform_box(&udom, u_pairs, rng);
        let seconds = sample_uniform_box(&udom, u_pairs, rng);
        for (u1, u2) in firsts.iter().zip(&seconds) {
            let (f1, f2) = (f(x, u1)?, f(x, u2)?);
            for lam in LAMBDAS {
                let mid: Vec<f64> = u1.iter().zip(u2).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
                let chord = lam * f1 + (1.0 - lam) * f2;
                worst = worst.max(f(x, &mid)? - chord);
                count += 1;
            }
        }
    }
    Ok(CheckReport::new(
        name,
        count,
        worst,
        CONVEXITY_SLACK,
        format!("{x_samples} conditions × {u_pairs} pairs × λ ∈ {{0.25, 0.5, 0.75}}"),
    ))
}

/// Convexity in `u` of an MA/LSE/PMA/PLSE network.
pub fn check_convexity(net: &Network, x_samples: usize, u_pairs: usize, rng: &mut Rng) -> Result<CheckReport> {
    if !net.kind().is_parameterized_convex() {
        return Err(Error::Unsupported(format!(
            "{} makes no convexity claim",
            net.kind()
        )));
    }
    let (n, m) = net.dims();
    check_convexity_fn(
        &format!("convexity_{}", net.kind()),
        |x, u| net.forward(x, u),
        n,
        m,
        x_samples,
        u_pairs,
        rng,
    )
}

/// Moreau envelope of `f` sampled on a uniform grid over the box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeTable {
    pub eta: f64,
    pub resolution: usize,
    /// Grid nodes in lexicographic order (last axis fastest).
    pub points: Vec<Vec<f64>>,
    pub source: Vec<f64>,
    pub values: Vec<f64>,
    /// Index of the grid node attaining each envelope value (prox point).
    pub prox_index: Vec<usize>,
}

fn grid_points(domain: &BoxDomain, resolution: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = (0..domain.dim())
        .map(|j| grid_axis(domain.lower()[j], domain.upper()[j], resolution))
        .collect();
    let mut pts = vec![Vec::new()];
    for axis in &axes {
        pts = pts
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    pts
}

/// `f̃_η(u) = min_{u'} ‖u − u'‖² / (2η) + f(u')` with both `u` and `u'`
/// ranging over a `resolution`-per-axis grid. Boxes of dimension 1 or 2 only.
pub fn moreau_envelope<F>(f: F, domain: &BoxDomain, eta: f64, resolution: usize) -> Result<EnvelopeTable>
where
    F: Fn(&[f64]) -> f64,
{
    if domain.dim() > 2 {
        return Err(Error::DimensionTooLarge {
            dim: domain.dim(),
            max: 2,
        });
    }
    if resolution < 2 {
        return Err(Error::InvalidArgument("resolution must be >= 2".into()));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    let points = grid_points(domain, resolution);
    let source: Vec<f64> = points.iter().map(|p| f(p)).collect();
    let inv = 1.0 / (2.0 * eta);
    let (values, prox_index): (Vec<f64>, Vec<usize>) = points
        .par_iter()
        .map(|u| {
            let mut best = (f64::INFINITY, 0usize);
            for (k, (q, fq)) in points.iter().zip(&source).enumerate() {
                let d2: f64 = u.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                let v = inv * d2 + fq;
                if v < best.0 {
                    best = (v, k);
                }
            }
            best
        })
        .unzip();
    Ok(EnvelopeTable {
        eta,
        resolution,
        points,
        source,
        values,
        prox_index,
    })
}

/// Checks, for strictly decreasing `etas`:
/// (i) `f̃_η ≤ f` at every node, (ii) `η' ≥ η ⇒ f̃_{η'} ≤ f̃_η` pointwise,
/// (iii) `max |f̃_η − f|` does not increase as `η` decreases.
pub fn check_envelope_properties<F>(
    name: &str,
    f: F,
    domain: &BoxDomain,
    etas: &[f64],
    resolution: usize,
) -> Result<CheckReport>
where
    F: Fn(&[f64]) -> f64,
{
    if etas.is_empty() || etas.windows(2).any(|w| w[1] >= w[0]) || etas.iter().any(|e| *e <= 0.0) {
        return Err(Error::InvalidArgument("etas must be positive and strictly decreasing".into()));
    }
    let tables = etas
        .iter()
        .map(|&eta| moreau_envelope(&f, domain, eta, resolution))
        .collect::<Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    let mut gaps = Vec::with_capacity(tables.len());
    for t in &tables {
        let mut gap: f64 = 0.0;
        for (v, s) in t.values.iter().zip(&t.source) {
            worst = worst.max(v - s);
            gap = gap.max((s - v).abs());
        }
        gaps.push(gap);
    }
    for pair in tables.windows(2) {
        // pair[0] has the larger eta
        for (big, small) in pair[0].values.iter().zip(&pair[1].values) {
            worst = worst.max(big - small);
        }
    }
    for w in gaps.windows(2) {
        worst = worst.max(w[1] - w[0]);
    }
    let samples = tables.len() * tables[0].values.len();
    let notes = if tables.len() == 1 {
        format!("single eta: only f̃ ≤ f checked; sup gap = {:.6e}", gaps[0])
    } else {
        let seq: Vec<String> = etas
            .iter()
            .zip(&gaps)
            .map(|(e, g)| format!("eta {e}: {g:.6e}"))
            .collect();
        format!("sup gaps {}", seq.join(", "))
    };
    Ok(CheckReport::new(name, samples, worst, ENVELOPE_SLACK, notes))
}

/// Compares `grad(x, u)` with central differences of `f` in `u`.
/// Inputs where `pattern` changes within one step are kinks and skipped.
pub fn check_gradient_fn<F, G, P>(
    name: &str,
    f: F,
    grad: G,
    pattern: P,
    points: &[(Vec<f64>, Vec<f64>)],
) -> Result<CheckReport>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
    G: Fn(&[f64], &[f64]) -> Result<Vec<f64>>,
    P: Fn(&[f64], &[f64]) -> Result<Vec<u32>>,
{
    let h = GRAD_U_STEP;
    let mut worst: f64 = 0.0;
    let mut tested = 0;
    let mut skipped = 0;
    'points: for (x, u) in points {
        let here = pattern(x, u)?;
        let g = grad(x, u)?;
        let mut fd = Vec::with_capacity(u.len());
        for j in 0..u.len() {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[j] += h;
            dn[j] -= h;
            if pattern(x, &up)? != here || pattern(x, &dn)? != here {
                skipped += 1;
                continue 'points;
            }
            fd.push((f(x, &up)? - f(x, &dn)?) / (2.0 * h));
        }
        for (a, b) in g.iter().zip(&fd) {
            worst = worst.max(relative_error(*a, *b));
        }
        tested += 1;
    }
    Ok(CheckReport::new(
        name,
        tested,
        worst,
        GRAD_U_TOLERANCE,
        format!("central differences, h = {h}; {skipped} kink points skipped"),
    ))
}

fn random_point(n: usize, m: usize, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let x = sample_uniform_box(&BoxDomain::symmetric_unit(n.max(1)), 1, rng).remove(0);
    let u = sample_uniform_box(&BoxDomain::symmetric_unit(m), 1, rng).remove(0);
    (x[..n].to_vec(), u)
}

fn small_arch(rng: &mut Rng) -> Architecture {
    Architecture {
        hidden: vec![4 + rng.below(8), 4 + rng.below(8)],
        planes: 1 + rng.below(8),
        temperature: 0.1,
    }
}

/// Analytic `u`-gradients of random FNN/LSE/PLSE networks against central
/// differences.
pub fn check_gradients(kinds: &[Kind], trials: usize, rng: &mut Rng) -> Result<CheckReport> {
    let mut reports = Vec::new();
    for &kind in kinds {
        if matches!(kind, Kind::Ma | Kind::Pma) {
            return Err(Error::Unsupported(format!("{kind} has no u-gradient")));
        }
        for _ in 0..trials {
            let (n, m) = (1 + rng.below(4), 1 + rng.below(3));
            let arch = small_arch(rng);
            let net = init_network(kind, n, m, &arch, rng)?;
            let pt = random_point(n, m, rng);
            reports.push(check_gradient_fn(
                "",
                |x, u| net.forward(x, u),
                |x, u| net.grad_u(x, u),
                |x, u| net.active_pattern(x, u),
                std::slice::from_ref(&pt),
            )?);
        }
    }
    let kinds_txt: Vec<&str> = kinds.iter().map(|k| k.as_str()).collect();
    Ok(merge("grad_u", &reports, GRAD_U_TOLERANCE, format!("kinds {}", kinds_txt.join(","))))
}

fn merge(name: &str, parts: &[CheckReport], slack: f64, notes: String) -> CheckReport {
    let samples = parts.iter().map(|r| r.samples).sum();
    let worst = parts.iter().map(|r| r.max_violation).fold(0.0, f64::max);
    let skipped: usize = parts
        .iter()
        .filter_map(|r| r.notes.split("; ").nth(1))
        .filter_map(|s| s.split_whitespace().next()?.parse::<usize>().ok())
        .sum();
    CheckReport::new(name, samples, worst, slack, format!("{notes}; {skipped} kink points skipped"))
}

/// Weight gradients of `net` on `batch` against central differences of the
/// MSE. Parameters whose perturbation changes an activation pattern or the
/// active plane are skipped.
pub fn weight_gradient_error(net: &Network, batch: &[Sample]) -> Result<(f64, usize, usize)> {
    let (_, grad) = loss_and_gradients(net, batch)?;
    let theta = net.params();
    let patterns = |net: &Network| -> Result<Vec<Vec<u32>>> {
        batch.iter().map(|s| net.active_pattern(&s.x, &s.u)).collect()
    };
    let base = patterns(net)?;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    let (mut tested, mut skipped) = (0, 0);
    for k in 0..theta.len() {
        let mut th = theta.clone();
        th[k] = theta[k] + WEIGHT_STEP;
        probe.set_params(&th)?;
        let (lp, pp) = (mse_loss(&probe, batch)?, patterns(&probe)?);
        th[k] = theta[k] - WEIGHT_STEP;
        probe.set_params(&th)?;
        let (lm, pm) = (mse_loss(&probe, batch)?, patterns(&probe)?);
        if pp != base || pm != base {
            skipped += 1;
            continue;
        }
        let fd = (lp - lm) / (2.0 * WEIGHT_STEP);
        worst = worst.max(relative_error(grad[k], fd));
        tested += 1;
    }
    Ok((worst, tested, skipped))
}

/// Weight gradients of random networks of every requested kind.
pub fn check_weight_gradients(kinds: &[Kind], trials: usize, rng: &mut Rng) -> Result<CheckReport> {
    let mut worst: f64 = 0.0;
    let (mut tested, mut skipped) = (0, 0);
    for &kind in kinds {
        for _ in 0..trials {
            let (n, m) = (1 + rng.below(3), 1 + rng.below(3));
            let arch = small_arch(rng);
            let net = init_network(kind, n, m, &arch, rng)?;
            let batch: Vec<Sample> = (0..4)
                .map(|_| {
                    let (x, u) = random_point(n, m, rng);
                    Sample { x, u, y: rng.uniform(-1.0, 1.0) }
                })
                .collect();
            let (w, t, s) = weight_gradient_error(&net, &batch)?;
            worst = worst.max(w);
            tested += t;
            skipped += s;
        }
    }
    let kinds_txt: Vec<&str> = kinds.iter().map(|k| k.as_str()).collect();
    Ok(CheckReport::new(
        "weight_gradients",
        tested,
        worst,
        WEIGHT_TOLERANCE,
        format!(
            "kinds {}, {trials} nets each, h = {WEIGHT_STEP}; {skipped} kink parameters skipped",
            kinds_txt.join(",")
        ),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Sandwich,
    Convexity,
    Gradients,
    Envelope,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sandwich" => Ok(Suite::Sandwich),
            "convexity" => Ok(Suite::Convexity),
            "gradients" => Ok(Suite::Gradients),
            "envelope" => Ok(Suite::Envelope),
            "all" => Ok(Suite::All),
            other => Err(Error::Parse(format!("unknown suite `{other}`"))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Sandwich => "sandwich",
            Suite::Convexity => "convexity",
            Suite::Gradients => "gradients",
            Suite::Envelope => "envelope",
            Suite::All => "all",
        })
    }
}

type Job = fn(u64) -> Result<Vec<CheckReport>>;

fn sandwich_job(seed: u64) -> Result<Vec<CheckReport>> {
    let mut rng = Rng::new(Rng::derive_seed(seed, 101));
    Ok(vec![check_sandwich(1000, (8, 4), 30, 0.1, &mut rng)?])
}

fn convexity_job(seed: u64) -> Result<Vec<CheckReport>> {
    let mut rng = Rng::new(Rng::derive_seed(seed, 102));
    let arch = Architecture {
        hidden: vec![16, 16],
        planes: 10,
        temperature: 0.1,
    };
    let mut out = Vec::new();
    for kind in [Kind::Ma, Kind::Lse, Kind::Pma, Kind::Plse] {
        let net = init_network(kind, 2, 2, &arch, &mut rng)?;
        out.push(check_convexity(&net, 100, 100, &mut rng)?);
    }
    let concave = concave_fnn();
    let planted = check_convexity_fn("", |x, u| concave.forward(x, u), 1, 1, 20, 20, &mut rng)?;
    out.push(CheckReport::control(
        "convexity_negative_control",
        planted.samples,
        planted.max_violation,
        CONVEXITY_SLACK,
        "concave FNN -0.99|u| must violate convexity".into(),
    ));
    Ok(out)
}

fn gradients_job(seed: u64) -> Result<Vec<CheckReport>> {
    let mut rng = Rng::new(Rng::derive_seed(seed, 103));
    let smooth = [Kind::Fnn, Kind::Lse, Kind::Plse];
    let mut out = vec![
        check_gradients(&smooth, 100, &mut rng)?,
        check_weight_gradients(&Kind::ALL, 20, &mut rng)?,
    ];
    let net = init_network(Kind::Plse, 2, 2, &small_arch(&mut rng), &mut rng)?;
    let pts: Vec<_> = (0..10).map(|_| random_point(2, 2, &mut rng)).collect();
    let planted = check_gradient_fn(
        "",
        |x, u| net.forward(x, u),
        |x, u| Ok(net.grad_u(x, u)?.into_iter().map(|g| -g).collect()),
        |x, u| net.active_pattern(x, u),
        &pts,
    )?;
    out.push(CheckReport::control(
        "gradients_negative_control",
        planted.samples,
        planted.max_violation,
        GRAD_U_TOLERANCE,
        "negated PLSE gradient must be rejected".into(),
    ));
    Ok(out)
}

fn envelope_job(_seed: u64) -> Result<Vec<CheckReport>> {
    let dom = BoxDomain::symmetric_unit(1);
    let etas = [1.0, 0.1, 0.01];
    let huber = moreau_envelope(|u| u[0].abs(), &dom, 0.5, 4001)?;
    let at_one = *huber.values.last().expect("grid is non-empty");
    Ok(vec![
        check_envelope_properties("envelope_square", |u| u[0] * u[0], &dom, &etas, 4001)?,
        check_envelope_properties("envelope_abs", |u| u[0].abs(), &dom, &etas, 4001)?,
        CheckReport::new(
            "envelope_huber_value",
            1,
            (at_one - 0.75).abs(),
            1e-3,
            format!("envelope of |u| at u = 1 with eta = 0.5: {at_one:.9} (closed form 0.75)"),
        ),
    ])
}

/// `-0.99 |u|` written as a LeakyReLU network on `[x; u]`, `n = m = 1`.
pub fn concave_fnn() -> Network {
    use crate::networks::{Dense, Mlp};
    use crate::numerics::Mat;
    let l1 = Dense::new(
        Mat::from_row_major(2, 2, vec![0.0, 1.0, 0.0, -1.0]).expect("2x2"),
        vec![0.0; 2],
    )
    .expect("consistent");
    let l2 = Dense::new(Mat::from_row_major(1, 2, vec![-1.0, -1.0]).expect("1x2"), vec![0.0]).expect("consistent");
    Network::fnn(1, 1, Mlp::new(vec![l1, l2]).expect("consistent")).expect("valid")
}

/// Runs the requested checks; reports come back in a fixed order.
pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<CheckReport>> {
    let jobs: Vec<Job> = match suite {
        Suite::Sandwich => vec![sandwich_job],
        Suite::Convexity => vec![convexity_job],
        Suite::Gradients => vec![gradients_job],
        Suite::Envelope => vec![envelope_job],
        Suite::All => vec![sandwich_job, convexity_job, gradients_job, envelope_job],
    };
    let parts = jobs
        .par_iter()
        .map(|job| job(seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}
