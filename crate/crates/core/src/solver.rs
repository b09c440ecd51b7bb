//! Box-constrained minimization over `u` at a fixed condition `x`.
//!
//! * LSE/PLSE: projected gradient with Armijo backtracking along the
//!   projection arc and Barzilai–Borwein trial steps. The certificate is the
//!   linearization (Frank–Wolfe) gap `⟨∇f(u), u⟩ − min_{v ∈ box} ⟨∇f(u), v⟩`,
//!   an upper bound on `f(u) − min f` for any convex differentiable `f`.
//! * MA/PMA: the same solver on the smooth twin for a decreasing temperature
//!   schedule, warm-started. Since `PMA ≤ PLSE_T ≤ PMA + T log I` the final
//!   certificate is the smooth gap plus `T_final · log I`.
//! * FNN: best of several projected-gradient runs from uniform random starts;
//!   no certificate (reported as `+∞`).
//!
//! An epigraph linear program (one slack `t` with `⟨a_i, u⟩ + b_i ≤ t`) would
//! solve MA/PMA exactly, but the homotopy reuses the smooth solver and comes
//! with an a priori gap.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::networks::{softmax_in_place, AffineBank, Kind, Network};
use crate::numerics::{norm2, sample_uniform_box, BoxDomain, Rng};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Iteration cap for each projected-gradient run.
    pub max_iters: usize,
    /// Stop once `‖u − P(u − ∇f)‖ ≤ grad_tolerance · max(1, |f|)`.
    pub grad_tolerance: f64,
    pub initial_step: f64,
    pub backtrack: f64,
    pub armijo: f64,
    /// Temperatures for the MA/PMA homotopy, strictly decreasing.
    pub schedule: Vec<f64>,
    /// Random starts for FNN.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 5000,
            grad_tolerance: 1e-6,
            initial_step: 1.0,
            backtrack: 0.5,
            armijo: 1e-4,
            schedule: vec![0.1, 0.01, 1e-3, 1e-4],
            restarts: 16,
            seed: 0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        if !(self.grad_tolerance > 0.0) || !(self.initial_step > 0.0) {
            return bad("tolerance and initial step must be positive");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) || !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("backtracking factor and Armijo constant must lie in (0, 1)");
        }
        if self.schedule.is_empty()
            || self.schedule.iter().any(|t| !(*t > 0.0 && t.is_finite()))
            || self.schedule.windows(2).any(|w| w[1] >= w[0])
        {
            return bad("schedule must be positive and strictly decreasing");
        }
        if self.restarts == 0 {
            return bad("restarts must be >= 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub u_star: Vec<f64>,
    /// `forward(net, x, u_star)`.
    pub value: f64,
    /// Guaranteed bound on `value − min`; `+∞` (JSON `null`) when none exists.
    pub certificate: f64,
    /// `false` for heuristic (nonconvex) solves.
    pub certified: bool,
    /// Projected-gradient iterations summed over stages or restarts.
    pub iterations: usize,
    /// Whether the final run met the stationarity tolerance.
    pub converged: bool,
    pub wall_time_s: f64,
}

/// Componentwise clamp into the box.
pub fn project_box(u: &[f64], domain: &BoxDomain) -> Result<Vec<f64>> {
    if u.len() != domain.dim() {
        return Err(Error::DimensionMismatch {
            what: "point to project",
            expected: domain.dim(),
            got: u.len(),
        });
    }
    Ok(clamp(u, domain))
}

fn clamp(u: &[f64], domain: &BoxDomain) -> Vec<f64> {
    u.iter()
        .zip(domain.lower().iter().zip(domain.upper()))
        .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
        .collect()
}

/// `⟨g, u⟩ − min_{v ∈ box} ⟨g, v⟩`, always non-negative.
pub fn linearization_gap(u: &[f64], grad: &[f64], domain: &BoxDomain) -> f64 {
    u.iter()
        .zip(grad)
        .zip(domain.lower().iter().zip(domain.upper()))
        .map(|((ui, gi), (lo, hi))| {
            let v = if *gi > 0.0 { *lo } else { *hi };
            (gi * (ui - v)).max(0.0)
        })
        .sum()
}

/// Smooth objective in `u` only. `grad_into` returns the gradient at the
/// point passed to the most recent `eval`.
trait Objective {
    fn eval(&mut self, u: &[f64]) -> Result<f64>;
    fn grad_into(&mut self, out: &mut [f64]) -> Result<()>;
}

/// Log-sum-exp of a fixed bank. Softmax weights of the last evaluation are
/// kept, so an accepted line-search trial needs no second pass over the planes.
struct SmoothBank<'a> {
    bank: &'a AffineBank,
    temperature: f64,
    weights: Vec<f64>,
}

impl<'a> SmoothBank<'a> {
    fn new(bank: &'a AffineBank, temperature: f64) -> Self {
        SmoothBank {
            bank,
            temperature,
            weights: vec![0.0; bank.planes()],
        }
    }
}

impl Objective for SmoothBank<'_> {
    fn eval(&mut self, u: &[f64]) -> Result<f64> {
        self.bank.plane_values_into(u, &mut self.weights);
        finite(softmax_in_place(&mut self.weights, self.temperature))
    }

    fn grad_into(&mut self, out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        for (i, w) in self.weights.iter().enumerate() {
            for (g, a) in out.iter_mut().zip(self.bank.a.row(i)) {
                *g += w * a;
            }
        }
        Ok(())
    }
}

struct Conditioned<'a> {
    net: &'a Network,
    x: &'a [f64],
    last: Vec<f64>,
}

impl Objective for Conditioned<'_> {
    fn eval(&mut self, u: &[f64]) -> Result<f64> {
        self.last.clear();
        self.last.extend_from_slice(u);
        self.net.forward(self.x, u)
    }

    fn grad_into(&mut self, out: &mut [f64]) -> Result<()> {
        let (_, g) = self.net.value_and_grad_u(self.x, &self.last)?;
        out.copy_from_slice(&g);
        Ok(())
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NumericOverflow(format!("objective evaluated to {v}")))
    }
}

pub(crate) struct Descent {
    pub u: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `out = clamp(u − s·g)` and returns `‖out − u‖`.
fn projected_step(u: &[f64], s: f64, g: &[f64], domain: &BoxDomain, out: &mut [f64]) -> f64 {
    let mut sq = 0.0;
    for j in 0..u.len() {
        let v = (u[j] - s * g[j]).clamp(domain.lower()[j], domain.upper()[j]);
        out[j] = v;
        sq += (v - u[j]) * (v - u[j]);
    }
    sq.sqrt()
}

fn projected_gradient(
    obj: &mut dyn Objective,
    domain: &BoxDomain,
    start: &[f64],
    opts: &SolveOptions,
    mut history: Option<&mut Vec<f64>>,
) -> Result<Descent> {
    let m = domain.dim();
    let mut u = clamp(start, domain);
    let mut f = obj.eval(&u)?;
    let mut g = vec![0.0; m];
    obj.grad_into(&mut g)?;
    if let Some(h) = history.as_deref_mut() {
        h.push(f);
    }
    let mut trial = vec![0.0; m];
    let mut g_next = vec![0.0; m];
    let mut step = opts.initial_step;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let residual = projected_step(&u, 1.0, &g, domain, &mut trial);
        if residual <= opts.grad_tolerance * f.abs().max(1.0) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iters {
            break;
        }
        iterations += 1;

        let mut s = step;
        let stall = 1e-15 * (1.0 + norm2(&u));
        let accepted = loop {
            let moved = projected_step(&u, s, &g, domain, &mut trial);
            if moved <= stall {
                break None;
            }
            let decrease: f64 = g.iter().zip(trial.iter().zip(&u)).map(|(gj, (t, uj))| gj * (t - uj)).sum();
            let ft = obj.eval(&trial)?;
            if ft <= f + opts.armijo * decrease {
                break Some(ft);
            }
            s *= opts.backtrack;
        };
        let Some(f_next) = accepted else {
            // no representable descent step left
            break;
        };
        obj.grad_into(&mut g_next)?;
        let (mut ss, mut sy, mut yy) = (0.0, 0.0, 0.0);
        for j in 0..m {
            let (sk, yk) = (trial[j] - u[j], g_next[j] - g[j]);
            ss += sk * sk;
            sy += sk * yk;
            yy += yk * yk;
        }
        // alternate the long (sᵀs/sᵀy) and short (sᵀy/yᵀy) Barzilai–Borwein steps
        step = if sy > 0.0 {
            let bb = if iterations % 2 == 1 { ss / sy } else { sy / yy };
            bb.clamp(1e-10, 1e10)
        } else {
            (2.0 * s).min(1e10)
        };
        std::mem::swap(&mut u, &mut trial);
        std::mem::swap(&mut g, &mut g_next);
        f = f_next;
        if let Some(h) = history.as_deref_mut() {
            h.push(f);
        }
    }
    Ok(Descent {
        u,
        value: f,
        grad: g,
        iterations,
        converged,
    })
}

fn check_problem(net: &Network, x: &[f64], domain: &BoxDomain, opts: &SolveOptions) -> Result<()> {
    opts.validate()?;
    let (n, m) = net.dims();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            what: "condition x",
            expected: n,
            got: x.len(),
        });
    }
    if domain.dim() != m {
        return Err(Error::DimensionMismatch {
            what: "decision box",
            expected: m,
            got: domain.dim(),
        });
    }
    Ok(())
}

/// Smooth solve of a fixed bank from `start`, returning the descent and its gap.
pub(crate) fn minimize_bank_smooth(
    bank: &AffineBank,
    temperature: f64,
    domain: &BoxDomain,
    start: &[f64],
    opts: &SolveOptions,
    history: Option<&mut Vec<f64>>,
) -> Result<(Descent, f64)> {
    let mut obj = SmoothBank::new(bank, temperature);
    let d = projected_gradient(&mut obj, domain, start, opts, history)?;
    let gap = linearization_gap(&d.u, &d.grad, domain);
    Ok((d, gap))
}

pub fn minimize_smooth_convex(
    net: &Network,
    x: &[f64],
    domain: &BoxDomain,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let start = Instant::now();
    check_problem(net, x, domain, opts)?;
    let temperature = match net.kind() {
        Kind::Lse | Kind::Plse => net.temperature().expect("smooth kinds carry T"),
        other => {
            return Err(Error::Unsupported(format!(
                "minimize_smooth_convex needs LSE or PLSE, got {other}"
            )))
        }
    };
    let bank = net.bank_at(x)?;
    let (d, gap) = minimize_bank_smooth(&bank, temperature, domain, &domain.center(), opts, None)?;
    Ok(SolveResult {
        value: net.forward(x, &d.u)?,
        u_star: d.u,
        certificate: gap,
        certified: true,
        iterations: d.iterations,
        converged: d.converged,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Temperature homotopy on the smooth twin of an MA/PMA network.
pub fn minimize_pma(net: &Network, x: &[f64], domain: &BoxDomain, opts: &SolveOptions) -> Result<SolveResult> {
    let start = Instant::now();
    check_problem(net, x, domain, opts)?;
    if !matches!(net.kind(), Kind::Ma | Kind::Pma) {
        return Err(Error::Unsupported(format!(
            "minimize_pma needs MA or PMA, got {}",
            net.kind()
        )));
    }
    let bank = net.bank_at(x)?;
    let log_planes = (bank.planes() as f64).ln();
    let mut u = domain.center();
    let mut iterations = 0;
    let mut last = None;
    for &t in &opts.schedule {
        let (d, gap) = minimize_bank_smooth(&bank, t, domain, &u, opts, None)?;
        iterations += d.iterations;
        u = d.u.clone();
        last = Some((t, d.converged, gap));
    }
    let (t_final, converged, gap) = last.expect("schedule is non-empty");
    Ok(SolveResult {
        value: net.forward(x, &u)?,
        u_star: u,
        certificate: gap + t_final * log_planes,
        certified: true,
        iterations,
        converged,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Multi-start projected gradient for the nonconvex FNN objective.
pub fn minimize_fnn(net: &Network, x: &[f64], domain: &BoxDomain, opts: &SolveOptions) -> Result<SolveResult> {
    let start = Instant::now();
    check_problem(net, x, domain, opts)?;
    if net.kind() != Kind::Fnn {
        return Err(Error::Unsupported(format!(
            "minimize_fnn needs FNN, got {}",
            net.kind()
        )));
    }
    let mut obj = Conditioned { net, x, last: Vec::new() };
    let mut rng = Rng::new(opts.seed);
    let starts = sample_uniform_box(domain, opts.restarts, &mut rng);
    let mut iterations = 0;
    let mut best: Option<Descent> = None;
    for s in &starts {
        let d = projected_gradient(&mut obj, domain, s, opts, None)?;
        iterations += d.iterations;
        if best.as_ref().is_none_or(|b| d.value < b.value) {
            best = Some(d);
        }
    }
    let best = best.expect("restarts >= 1");
    Ok(SolveResult {
        value: net.forward(x, &best.u)?,
        u_star: best.u,
        certificate: f64::INFINITY,
        certified: false,
        iterations,
        converged: best.converged,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Dispatches on the network kind.
pub fn minimize(net: &Network, x: &[f64], domain: &BoxDomain, opts: &SolveOptions) -> Result<SolveResult> {
    match net.kind() {
        Kind::Lse | Kind::Plse => minimize_smooth_convex(net, x, domain, opts),
        Kind::Ma | Kind::Pma => minimize_pma(net, x, domain, opts),
        Kind::Fnn => minimize_fnn(net, x, domain, opts),
    }
}
