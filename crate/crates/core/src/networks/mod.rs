//! Function approximators over a condition `x ∈ R^n` and a decision `u ∈ R^m`.
//!
//! Five families share one [`Network`] type:
//!
//! | kind | value at `(x, u)` | convex in `u` |
//! |------|-------------------|---------------|
//! | FNN  | feedforward network on `[x; u]` | no |
//! | MA   | `max_i ⟨a_i, z⟩ + b_i` over `z = [x; u]` | yes (jointly) |
//! | LSE  | `T log Σ exp((⟨a_i, z⟩ + b_i) / T)` | yes (jointly) |
//! | PMA  | `max_i ⟨a_i(x), u⟩ + b_i(x)` | for every fixed `x` |
//! | PLSE | `T log Σ exp((⟨a_i(x), u⟩ + b_i(x)) / T)` | for every fixed `x` |
//!
//! PMA and PLSE obtain `a_i(x), b_i(x)` from an embedded feedforward network
//! with `n` inputs and `(m + 1)·I` affine outputs, split by
//! [`AffineBank::from_flat`].

mod bank;
mod format;
mod mlp;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bank::{argmax, log_sum_exp, softmax_in_place, AffineBank, CoeffMatrices};
pub use format::{ModelDocument, FORMAT_VERSION};
pub use mlp::{leaky_relu, Dense, Mlp, LEAKY_SLOPE};

use crate::numerics::Mat;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Fnn,
    Ma,
    Lse,
    Pma,
    Plse,
}

impl Kind {
    pub const ALL: [Kind; 5] = [Kind::Fnn, Kind::Ma, Kind::Lse, Kind::Pma, Kind::Plse];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Fnn => "fnn",
            Kind::Ma => "ma",
            Kind::Lse => "lse",
            Kind::Pma => "pma",
            Kind::Plse => "plse",
        }
    }

    /// Convex in `u` for every fixed `x`.
    pub fn is_parameterized_convex(self) -> bool {
        !matches!(self, Kind::Fnn)
    }

    pub fn has_temperature(self) -> bool {
        matches!(self, Kind::Lse | Kind::Plse)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fnn" => Ok(Kind::Fnn),
            "ma" => Ok(Kind::Ma),
            "lse" => Ok(Kind::Lse),
            "pma" => Ok(Kind::Pma),
            "plse" => Ok(Kind::Plse),
            other => Err(Error::Parse(format!("unknown network kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Network {
    Fnn {
        n: usize,
        m: usize,
        mlp: Mlp,
    },
    Ma {
        n: usize,
        m: usize,
        bank: AffineBank,
    },
    Lse {
        n: usize,
        m: usize,
        bank: AffineBank,
        temperature: f64,
    },
    Pma {
        n: usize,
        m: usize,
        planes: usize,
        embed: Mlp,
    },
    Plse {
        n: usize,
        m: usize,
        planes: usize,
        embed: Mlp,
        temperature: f64,
    },
}

fn check_temperature(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("temperature must be positive, got {t}")))
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, got })
    }
}

impl Network {
    pub fn fnn(n: usize, m: usize, mlp: Mlp) -> Result<Self> {
        let net = Network::Fnn { n, m, mlp };
        net.validate()?;
        Ok(net)
    }

    pub fn ma(n: usize, m: usize, bank: AffineBank) -> Result<Self> {
        let net = Network::Ma { n, m, bank };
        net.validate()?;
        Ok(net)
    }

    pub fn lse(n: usize, m: usize, bank: AffineBank, temperature: f64) -> Result<Self> {
        let net = Network::Lse {
            n,
            m,
            bank,
            temperature,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn pma(n: usize, m: usize, planes: usize, embed: Mlp) -> Result<Self> {
        let net = Network::Pma {
            n,
            m,
            planes,
            embed,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn plse(n: usize, m: usize, planes: usize, embed: Mlp, temperature: f64) -> Result<Self> {
        let net = Network::Plse {
            n,
            m,
            planes,
            embed,
            temperature,
        };
        net.validate()?;
        Ok(net)
    }

    /// Checks the structural invariants of each family.
    pub fn validate(&self) -> Result<()> {
        let (n, m) = self.dims();
        if m == 0 {
            return Err(Error::InvalidArgument("decision dimension m must be >= 1".into()));
        }
        match self {
            Network::Fnn { mlp, .. } => {
                check_len("FNN input", n + m, mlp.input_dim())?;
                check_len("FNN output", 1, mlp.output_dim())
            }
            Network::Ma { bank, .. } => check_len("MA bank width", n + m, bank.dim()),
            Network::Lse {
                bank, temperature, ..
            } => {
                check_temperature(*temperature)?;
                check_len("LSE bank width", n + m, bank.dim())
            }
            Network::Pma { planes, embed, .. } | Network::Plse { planes, embed, .. } => {
                if *planes == 0 {
                    return Err(Error::InvalidArgument("I must be >= 1".into()));
                }
                if n == 0 {
                    return Err(Error::InvalidArgument(
                        "parameterized networks need n >= 1".into(),
                    ));
                }
                if let Network::Plse { temperature, .. } = self {
                    check_temperature(*temperature)?;
                }
                check_len("embedded network input", n, embed.input_dim())?;
                check_len("embedded network output", (m + 1) * planes, embed.output_dim())
            }
        }
    }

    pub fn kind(&self) -> Kind {
        match self {
            Network::Fnn { .. } => Kind::Fnn,
            Network::Ma { .. } => Kind::Ma,
            Network::Lse { .. } => Kind::Lse,
            Network::Pma { .. } => Kind::Pma,
            Network::Plse { .. } => Kind::Plse,
        }
    }

    /// `(n, m)`: condition and decision dimensions.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Network::Fnn { n, m, .. }
            | Network::Ma { n, m, .. }
            | Network::Lse { n, m, .. }
            | Network::Pma { n, m, .. }
            | Network::Plse { n, m, .. } => (*n, *m),
        }
    }

    /// Number of affine pieces `I`, absent for FNN.
    pub fn planes(&self) -> Option<usize> {
        match self {
            Network::Fnn { .. } => None,
            Network::Ma { bank, .. } | Network::Lse { bank, .. } => Some(bank.planes()),
            Network::Pma { planes, .. } | Network::Plse { planes, .. } => Some(*planes),
        }
    }

    pub fn temperature(&self) -> Option<f64> {
        match self {
            Network::Lse { temperature, .. } | Network::Plse { temperature, .. } => {
                Some(*temperature)
            }
            _ => None,
        }
    }

    /// The nonsmooth twin with identical coefficients: PLSE → PMA, LSE → MA.
    /// Max-affine networks are returned unchanged.
    pub fn max_affine_twin(&self) -> Result<Network> {
        match self {
            Network::Plse {
                n,
                m,
                planes,
                embed,
                ..
            } => Ok(Network::Pma {
                n: *n,
                m: *m,
                planes: *planes,
                embed: embed.clone(),
            }),
            Network::Lse { n, m, bank, .. } => Ok(Network::Ma {
                n: *n,
                m: *m,
                bank: bank.clone(),
            }),
            Network::Pma { .. } | Network::Ma { .. } => Ok(self.clone()),
            Network::Fnn { .. } => Err(Error::Unsupported("FNN has no max-affine twin".into())),
        }
    }

    /// The smooth twin at `temperature`: PMA → PLSE, MA → LSE. Smooth
    /// networks get their temperature replaced.
    pub fn smooth_twin(&self, temperature: f64) -> Result<Network> {
        check_temperature(temperature)?;
        match self {
            Network::Pma {
                n,
                m,
                planes,
                embed,
            }
            | Network::Plse {
                n,
                m,
                planes,
                embed,
                ..
            } => Ok(Network::Plse {
                n: *n,
                m: *m,
                planes: *planes,
                embed: embed.clone(),
                temperature,
            }),
            Network::Ma { n, m, bank } | Network::Lse { n, m, bank, .. } => Ok(Network::Lse {
                n: *n,
                m: *m,
                bank: bank.clone(),
                temperature,
            }),
            Network::Fnn { .. } => Err(Error::Unsupported("FNN has no smooth twin".into())),
        }
    }

    fn check_condition(&self, x: &[f64]) -> Result<()> {
        check_len("condition x", self.dims().0, x.len())
    }

    fn check_inputs(&self, x: &[f64], u: &[f64]) -> Result<()> {
        self.check_condition(x)?;
        check_len("decision u", self.dims().1, u.len())
    }

    /// Coefficients `A(x)` (`I × m`) and `b(x)` produced by the embedded network.
    pub fn embedded_coeffs(&self, x: &[f64]) -> Result<CoeffMatrices> {
        match self {
            Network::Pma {
                m, planes, embed, ..
            }
            | Network::Plse {
                m, planes, embed, ..
            } => {
                self.check_condition(x)?;
                let out = embed.forward_unchecked(x);
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NumericOverflow("embedded network output".into()));
                }
                AffineBank::from_flat(&out, *planes, *m)
            }
            _ => Err(Error::Unsupported(format!(
                "embedded_coeffs needs a PMA or PLSE network, got {}",
                self.kind()
            ))),
        }
    }

    /// The planes in `u` for a fixed condition `x`.
    ///
    /// For MA/LSE the `x`-columns are folded into the offsets:
    /// `b_i + ⟨a_i^x, x⟩`.
    pub fn bank_at(&self, x: &[f64]) -> Result<AffineBank> {
        match self {
            Network::Pma { .. } | Network::Plse { .. } => self.embedded_coeffs(x),
            Network::Ma { n, m, bank } | Network::Lse { n, m, bank, .. } => {
                self.check_condition(x)?;
                let (n, m) = (*n, *m);
                let planes = bank.planes();
                let mut a = Mat::zeros(planes, m);
                let mut b = bank.b.clone();
                for i in 0..planes {
                    let row = bank.a.row(i);
                    b[i] += row[..n].iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
                    for j in 0..m {
                        a.set(i, j, row[n + j]);
                    }
                }
                Ok(AffineBank { a, b })
            }
            Network::Fnn { .. } => Err(Error::Unsupported("FNN has no affine planes".into())),
        }
    }

    pub fn forward(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        self.check_inputs(x, u)?;
        let value = match self {
            Network::Fnn { mlp, .. } => mlp.forward_unchecked(&concat(x, u))[0],
            Network::Ma { bank, .. } => bank.max_affine(&concat(x, u)),
            Network::Lse {
                bank, temperature, ..
            } => bank.log_sum_exp(&concat(x, u), *temperature),
            Network::Pma { .. } => self.embedded_coeffs(x)?.max_affine(u),
            Network::Plse { temperature, .. } => {
                self.embedded_coeffs(x)?.log_sum_exp(u, *temperature)
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NumericOverflow(format!(
                "{} forward produced {value}",
                self.kind()
            )))
        }
    }

    /// Gradient in `u` of the smooth families (LSE, PLSE, FNN).
    pub fn grad_u(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(x, u)?;
        let (n, _) = self.dims();
        match self {
            Network::Fnn { mlp, .. } => {
                let trace = mlp.trace(&concat(x, u));
                let d_in = mlp.backward(&trace, &[1.0], None);
                Ok(d_in[n..].to_vec())
            }
            Network::Lse {
                bank, temperature, ..
            } => {
                let (_, g) = bank.log_sum_exp_grad(&concat(x, u), *temperature);
                Ok(g[n..].to_vec())
            }
            Network::Plse { temperature, .. } => {
                Ok(self.embedded_coeffs(x)?.log_sum_exp_grad(u, *temperature).1)
            }
            Network::Ma { .. } | Network::Pma { .. } => Err(Error::Unsupported(format!(
                "{} is not differentiable in u; use subgrad_u",
                self.kind()
            ))),
        }
    }

    /// Value and `u`-gradient in one pass, for the smooth families.
    pub fn value_and_grad_u(&self, x: &[f64], u: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_inputs(x, u)?;
        let (n, _) = self.dims();
        let (value, grad) = match self {
            Network::Fnn { mlp, .. } => {
                let trace = mlp.trace(&concat(x, u));
                let value = trace.output()[0];
                let d_in = mlp.backward(&trace, &[1.0], None);
                (value, d_in[n..].to_vec())
            }
            Network::Lse {
                bank, temperature, ..
            } => {
                let (v, g) = bank.log_sum_exp_grad(&concat(x, u), *temperature);
                (v, g[n..].to_vec())
            }
            Network::Plse { temperature, .. } => {
                self.embedded_coeffs(x)?.log_sum_exp_grad(u, *temperature)
            }
            Network::Ma { .. } | Network::Pma { .. } => {
                return Err(Error::Unsupported(format!(
                    "{} is not differentiable in u; use subgrad_u",
                    self.kind()
                )))
            }
        };
        if value.is_finite() && grad.iter().all(|g| g.is_finite()) {
            Ok((value, grad))
        } else {
            Err(Error::NumericOverflow(format!("{} value/gradient", self.kind())))
        }
    }

    /// A subgradient in `u` of MA/PMA: the slope of the lowest-index active plane.
    pub fn subgrad_u(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(x, u)?;
        match self {
            Network::Ma { n, bank, .. } => {
                let (i, _) = bank.max_plane(&concat(x, u));
                Ok(bank.a.row(i)[*n..].to_vec())
            }
            Network::Pma { .. } => {
                let bank = self.embedded_coeffs(x)?;
                let (i, _) = bank.max_plane(u);
                Ok(bank.a.row(i).to_vec())
            }
            _ => Err(Error::Unsupported(format!(
                "subgrad_u needs an MA or PMA network, got {}",
                self.kind()
            ))),
        }
    }

    /// Identifies the smooth piece containing `(x, u)`: LeakyReLU signs of
    /// every hidden unit, followed by the active plane index for MA/PMA.
    /// Two points with equal patterns lie in a region where the network is
    /// smooth in both inputs and weights.
    pub fn active_pattern(&self, x: &[f64], u: &[f64]) -> Result<Vec<u32>> {
        self.check_inputs(x, u)?;
        let signs = |mlp: &Mlp, input: &[f64]| -> Vec<u32> {
            mlp.activation_pattern(input)
                .into_iter()
                .map(u32::from)
                .collect()
        };
        Ok(match self {
            Network::Fnn { mlp, .. } => signs(mlp, &concat(x, u)),
            Network::Ma { bank, .. } => vec![bank.max_plane(&concat(x, u)).0 as u32],
            Network::Lse { .. } => Vec::new(),
            Network::Pma { embed, .. } => {
                let mut p = signs(embed, x);
                p.push(self.embedded_coeffs(x)?.max_plane(u).0 as u32);
                p
            }
            Network::Plse { embed, .. } => signs(embed, x),
        })
    }

    pub fn param_count(&self) -> usize {
        match self {
            Network::Fnn { mlp, .. } => mlp.param_count(),
            Network::Ma { bank, .. } | Network::Lse { bank, .. } => {
                bank.a.as_slice().len() + bank.b.len()
            }
            Network::Pma { embed, .. } | Network::Plse { embed, .. } => embed.param_count(),
        }
    }

    /// All trainable parameters in a fixed order: network layers as
    /// (weight row-major, bias) pairs; banks as `A` row-major then `b`.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        match self {
            Network::Fnn { mlp, .. } => mlp.write_params(&mut out),
            Network::Ma { bank, .. } | Network::Lse { bank, .. } => {
                out.extend_from_slice(bank.a.as_slice());
                out.extend_from_slice(&bank.b);
            }
            Network::Pma { embed, .. } | Network::Plse { embed, .. } => {
                embed.write_params(&mut out)
            }
        }
        out
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        check_len("parameter vector", self.param_count(), values.len())?;
        match self {
            Network::Fnn { mlp, .. } => {
                mlp.read_params(values);
            }
            Network::Ma { bank, .. } | Network::Lse { bank, .. } => {
                let na = bank.a.as_slice().len();
                bank.a.as_mut_slice().copy_from_slice(&values[..na]);
                bank.b.copy_from_slice(&values[na..]);
            }
            Network::Pma { embed, .. } | Network::Plse { embed, .. } => {
                embed.read_params(values);
            }
        }
        Ok(())
    }

    /// Evaluates the network at `(x, u)` and adds `upstream(value) · ∂value/∂θ`
    /// into `grad` (layout of [`Network::params`]). Returns the value.
    ///
    /// For MA/PMA the derivative flows only through the lowest-index active
    /// plane.
    pub fn accumulate_param_grad(
        &self,
        x: &[f64],
        u: &[f64],
        grad: &mut [f64],
        upstream: impl FnOnce(f64) -> f64,
    ) -> Result<f64> {
        self.check_inputs(x, u)?;
        check_len("gradient buffer", self.param_count(), grad.len())?;
        match self {
            Network::Fnn { mlp, .. } => {
                let trace = mlp.trace(&concat(x, u));
                let value = trace.output()[0];
                let g = upstream(value);
                mlp.backward(&trace, &[g], Some(grad));
                Ok(value)
            }
            Network::Ma { bank, .. } | Network::Lse { bank, .. } => {
                let z = concat(x, u);
                let mut w = bank.plane_values(&z);
                let value = plane_weights(&mut w, self.temperature());
                let g = upstream(value);
                let cols = bank.dim();
                let (ga, gb) = grad.split_at_mut(bank.planes() * cols);
                for (i, wi) in w.iter().enumerate() {
                    let s = g * wi;
                    if s != 0.0 {
                        for (dst, zj) in ga[i * cols..(i + 1) * cols].iter_mut().zip(&z) {
                            *dst += s * zj;
                        }
                        gb[i] += s;
                    }
                }
                Ok(value)
            }
            Network::Pma {
                m, planes, embed, ..
            }
            | Network::Plse {
                m, planes, embed, ..
            } => {
                let (m, planes) = (*m, *planes);
                let trace = embed.trace(x);
                let bank = AffineBank::from_flat(trace.output(), planes, m)?;
                let mut w = bank.plane_values(u);
                let value = plane_weights(&mut w, self.temperature());
                let g = upstream(value);
                let mut d_out = vec![0.0; (m + 1) * planes];
                let (da, db) = d_out.split_at_mut(planes * m);
                for (i, wi) in w.iter().enumerate() {
                    let s = g * wi;
                    for (dst, uj) in da[i * m..(i + 1) * m].iter_mut().zip(u) {
                        *dst = s * uj;
                    }
                    db[i] = s;
                }
                embed.backward(&trace, &d_out, Some(grad));
                Ok(value)
            }
        }
    }
}

/// Replaces plane values by their weights in the output: softmax for a
/// temperature, one-hot on the lowest-index maximum otherwise. Returns the
/// network value.
fn plane_weights(values: &mut [f64], temperature: Option<f64>) -> f64 {
    match temperature {
        Some(t) => softmax_in_place(values, t),
        None => {
            let (i, v) = argmax(values);
            values.iter_mut().for_each(|w| *w = 0.0);
            values[i] = 1.0;
            v
        }
    }
}

pub(crate) fn concat(x: &[f64], u: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(x.len() + u.len());
    z.extend_from_slice(x);
    z.extend_from_slice(u);
    z
}
