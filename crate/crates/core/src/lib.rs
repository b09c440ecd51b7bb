//! Parameterized convex function approximators for decision-making.
//!
//! A *parameterized convex* function `f(x, u)` is convex in the decision `u`
//! for every fixed condition `x`. This crate implements two networks with
//! that property by construction, parameterized max-affine (PMA) and
//! parameterized log-sum-exp (PLSE), next to the baselines FNN, MA and LSE:
//!
//! * [`networks`]: evaluation, `u`-gradients and the JSON model format.
//! * [`training`]: Xavier initialization, mini-batch Adam on mean squared error.
//! * [`solver`]: box-constrained minimization over `u` with certified gaps.
//! * [`verification`]: executable checks of the sandwich bound, convexity,
//!   gradients and Moreau envelope properties.
//! * [`bench`]: the end-to-end experiment producing error and timing tables.
//!
//! ```
//! use paramconvex::networks::Kind;
//! use paramconvex::numerics::{BoxDomain, Rng};
//! use paramconvex::solver::{minimize, SolveOptions};
//! use paramconvex::training::{init_network, Architecture};
//!
//! let net = init_network(Kind::Plse, 2, 1, &Architecture::default(), &mut Rng::new(0))?;
//! let result = minimize(&net, &[0.1, -0.3], &BoxDomain::symmetric_unit(1), &SolveOptions::default())?;
//! assert!(result.certificate < 1e-4);
//! # Ok::<(), paramconvex::Error>(())
//! ```

pub mod bench;
mod error;
pub mod kv;
pub mod networks;
pub mod numerics;
pub mod solver;
pub mod training;
pub mod verification;

pub use error::{Error, Result};

/// Compiles and runs the code listings of the guide in `book/`.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/networks.md")]
    pub mod networks {}
    #[doc = include_str!("../../../book/src/sandwich.md")]
    pub mod sandwich {}
    #[doc = include_str!("../../../book/src/training.md")]
    pub mod training {}
    #[doc = include_str!("../../../book/src/solving.md")]
    pub mod solving {}
    #[doc = include_str!("../../../book/src/envelope.md")]
    pub mod envelope {}
    #[doc = include_str!("../../../book/src/benchmark.md")]
    pub mod benchmark {}
}
