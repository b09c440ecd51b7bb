use serde::{Deserialize, Serialize};

use crate::networks::{AffineBank, Dense, Kind, Mlp, Network};
use crate::numerics::{Mat, Rng};
use crate::Result;

/// Half-width of the Xavier (Glorot) uniform distribution.
pub fn xavier_bound(n_in: usize, n_out: usize) -> f64 {
    6f64.sqrt() / ((n_in + n_out) as f64).sqrt()
}

/// `n_out × n_in` matrix with entries i.i.d. uniform in `±√6/√(n_in+n_out)`,
/// drawn in row-major order.
pub fn xavier_init(n_in: usize, n_out: usize, rng: &mut Rng) -> Mat {
    let bound = xavier_bound(n_in, n_out);
    let data = (0..n_in * n_out).map(|_| rng.uniform(-bound, bound)).collect();
    Mat::from_row_major(n_out, n_in, data).expect("shape is consistent")
}

/// Xavier weights and zero biases for every layer.
pub fn xavier_mlp(widths: &[usize], rng: &mut Rng) -> Result<Mlp> {
    Mlp::zeros(widths)?;
    Mlp::new(
        widths
            .windows(2)
            .map(|w| Dense::new(xavier_init(w[0], w[1], rng), vec![0.0; w[1]]))
            .collect::<Result<Vec<_>>>()?,
    )
}

/// Shape hyperparameters shared by all kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Hidden widths of the FNN and of the PMA/PLSE embedded network.
    pub hidden: Vec<usize>,
    /// Number of affine pieces `I` for MA, LSE, PMA, PLSE.
    pub planes: usize,
    /// Temperature of LSE and PLSE.
    pub temperature: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            hidden: vec![64, 64],
            planes: 30,
            temperature: 0.1,
        }
    }
}

/// A freshly initialized network of the requested kind.
///
/// Layered networks use [`xavier_init`] with zero biases. The flat MA/LSE
/// banks treat each slope `a_i ∈ R^{n+m}` and the offset vector `b ∈ R^I`
/// as vectors with fan-in 1.
pub fn init_network(kind: Kind, n: usize, m: usize, arch: &Architecture, rng: &mut Rng) -> Result<Network> {
    let widths = |n_in: usize, n_out: usize| -> Vec<usize> {
        std::iter::once(n_in)
            .chain(arch.hidden.iter().copied())
            .chain(std::iter::once(n_out))
            .collect()
    };
    let planes = arch.planes;
    match kind {
        Kind::Fnn => Network::fnn(n, m, xavier_mlp(&widths(n + m, 1), rng)?),
        Kind::Ma | Kind::Lse => {
            let a_bound = xavier_bound(1, n + m);
            let a = (0..planes * (n + m))
                .map(|_| rng.uniform(-a_bound, a_bound))
                .collect();
            let b_bound = xavier_bound(1, planes);
            let b = (0..planes).map(|_| rng.uniform(-b_bound, b_bound)).collect();
            let bank = AffineBank::new(Mat::from_row_major(planes, n + m, a)?, b)?;
            if kind == Kind::Ma {
                Network::ma(n, m, bank)
            } else {
                Network::lse(n, m, bank, arch.temperature)
            }
        }
        Kind::Pma => Network::pma(n, m, planes, xavier_mlp(&widths(n, (m + 1) * planes), rng)?),
        Kind::Plse => Network::plse(
            n,
            m,
            planes,
            xavier_mlp(&widths(n, (m + 1) * planes), rng)?,
            arch.temperature,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xavier_bounds() {
        let w = xavier_init(1, 1, &mut Rng::new(5));
        let b = 3f64.sqrt();
        assert!((xavier_bound(1, 1) - 1.732_050_8).abs() < 1e-7);
        assert!(w.as_slice().iter().all(|v| v.abs() <= b));

        assert!((xavier_bound(64, 64) - 0.216_506_3).abs() < 1e-7);
        let w = xavier_init(64, 64, &mut Rng::new(5));
        assert_eq!((w.rows(), w.cols()), (64, 64));
        assert!(w.as_slice().iter().all(|v| v.abs() <= xavier_bound(64, 64)));
        // the draw actually spreads over the interval
        let max = w.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(max > 0.9 * xavier_bound(64, 64));
    }

    #[test]
    fn xavier_is_deterministic() {
        assert_eq!(xavier_init(3, 7, &mut Rng::new(9)), xavier_init(3, 7, &mut Rng::new(9)));
    }

    #[test]
    fn init_shapes() {
        let arch = Architecture::default();
        let plse = init_network(Kind::Plse, 1, 1, &arch, &mut Rng::new(0)).unwrap();
        assert_eq!(plse.param_count(), (1 * 64 + 64) + (64 * 64 + 64) + (64 * 60 + 60));
        let fnn = init_network(Kind::Fnn, 3, 2, &arch, &mut Rng::new(0)).unwrap();
        if let Network::Fnn { mlp, .. } = &fnn {
            assert_eq!(mlp.widths(), vec![5, 64, 64, 1]);
            assert!(mlp.layers().iter().all(|l| l.bias.iter().all(|b| *b == 0.0)));
        }
        let ma = init_network(Kind::Ma, 3, 2, &arch, &mut Rng::new(0)).unwrap();
        assert_eq!(ma.param_count(), 30 * 5 + 30);
    }
}
