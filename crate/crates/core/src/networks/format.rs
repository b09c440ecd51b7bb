//! JSON model documents.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "kind": "plse",
//!   "n": 1, "m": 1, "I": 30, "T": 0.1,
//!   "layer_widths": [1, 64, 64, 60],
//!   "weights": [{"rows": 64, "cols": 1, "weight": [...], "bias": [...]}, ...],
//!   "seed": 7
//! }
//! ```
//!
//! `weights` lists one entry per layer with `weight` stored row-major
//! (`rows` = outputs, `cols` = inputs). MA and LSE store their single bank as
//! one entry with `A` (`I × (n+m)`) in `weight` and the offsets in `bias`;
//! their `layer_widths` is `[n + m, I]`. `I` is `null` for FNN and `T` is
//! `null` for kinds without a temperature.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AffineBank, Dense, Kind, Mlp, Network};
use crate::numerics::Mat;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDocument {
    pub rows: usize,
    pub cols: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub kind: Kind,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "I")]
    pub planes: Option<usize>,
    #[serde(rename = "T")]
    pub temperature: Option<f64>,
    pub layer_widths: Vec<usize>,
    pub weights: Vec<LayerDocument>,
    pub seed: Option<u64>,
}

fn layers_of(mlp: &Mlp) -> Vec<LayerDocument> {
    mlp.layers()
        .iter()
        .map(|l| LayerDocument {
            rows: l.weight.rows(),
            cols: l.weight.cols(),
            weight: l.weight.as_slice().to_vec(),
            bias: l.bias.clone(),
        })
        .collect()
}

fn mlp_of(layers: &[LayerDocument]) -> Result<Mlp> {
    let dense = layers
        .iter()
        .map(|l| Dense::new(Mat::from_row_major(l.rows, l.cols, l.weight.clone())?, l.bias.clone()))
        .collect::<Result<Vec<_>>>()?;
    Mlp::new(dense)
}

fn bank_of(layers: &[LayerDocument]) -> Result<AffineBank> {
    match layers {
        [l] => AffineBank::new(Mat::from_row_major(l.rows, l.cols, l.weight.clone())?, l.bias.clone()),
        _ => Err(Error::Parse(format!(
            "a bank model stores exactly one weight entry, found {}",
            layers.len()
        ))),
    }
}

impl ModelDocument {
    pub fn from_network(net: &Network, seed: Option<u64>) -> Self {
        let (n, m) = net.dims();
        let (layer_widths, weights) = match net {
            Network::Fnn { mlp, .. } => (mlp.widths(), layers_of(mlp)),
            Network::Pma { embed, .. } | Network::Plse { embed, .. } => {
                (embed.widths(), layers_of(embed))
            }
            Network::Ma { bank, .. } | Network::Lse { bank, .. } => (
                vec![bank.dim(), bank.planes()],
                vec![LayerDocument {
                    rows: bank.a.rows(),
                    cols: bank.a.cols(),
                    weight: bank.a.as_slice().to_vec(),
                    bias: bank.b.clone(),
                }],
            ),
        };
        ModelDocument {
            format_version: FORMAT_VERSION,
            kind: net.kind(),
            n,
            m,
            planes: net.planes(),
            temperature: net.temperature(),
            layer_widths,
            weights,
            seed,
        }
    }

    pub fn into_network(self) -> Result<Network> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let temperature = |kind: Kind| {
            self.temperature
                .ok_or_else(|| Error::Parse(format!("{kind} model requires T")))
        };
        let planes = |kind: Kind| {
            self.planes
                .ok_or_else(|| Error::Parse(format!("{kind} model requires I")))
        };
        let (n, m) = (self.n, self.m);
        let net = match self.kind {
            Kind::Fnn => Network::fnn(n, m, mlp_of(&self.weights)?)?,
            Kind::Ma => Network::ma(n, m, bank_of(&self.weights)?)?,
            Kind::Lse => Network::lse(n, m, bank_of(&self.weights)?, temperature(Kind::Lse)?)?,
            Kind::Pma => Network::pma(n, m, planes(Kind::Pma)?, mlp_of(&self.weights)?)?,
            Kind::Plse => Network::plse(
                n,
                m,
                planes(Kind::Plse)?,
                mlp_of(&self.weights)?,
                temperature(Kind::Plse)?,
            )?,
        };
        if let Some(i) = self.planes {
            if net.planes() != Some(i) {
                return Err(Error::Parse(format!("I = {i} disagrees with stored weights")));
            }
        }
        let widths = ModelDocument::from_network(&net, None).layer_widths;
        if widths != self.layer_widths {
            return Err(Error::Parse(format!(
                "layer_widths {:?} disagree with stored weights {widths:?}",
                self.layer_widths
            )));
        }
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ModelDocument::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use crate::training::{init_network, Architecture};

    #[test]
    fn every_kind_survives_json() {
        let arch = Architecture {
            hidden: vec![4, 3],
            planes: 5,
            temperature: 0.1,
        };
        for kind in Kind::ALL {
            let net = init_network(kind, 2, 3, &arch, &mut Rng::new(11)).unwrap();
            let text = ModelDocument::from_network(&net, Some(11)).to_json().unwrap();
            let doc = ModelDocument::from_json(&text).unwrap();
            assert_eq!(doc.seed, Some(11));
            assert_eq!(doc.kind, kind);
            let back = doc.into_network().unwrap();
            assert_eq!(back, net, "{kind}");
        }
    }

    #[test]
    fn field_names_are_frozen() {
        let arch = Architecture {
            hidden: vec![2],
            planes: 2,
            temperature: 0.5,
        };
        let net = init_network(Kind::Plse, 1, 1, &arch, &mut Rng::new(0)).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&ModelDocument::from_network(&net, None).to_json().unwrap()).unwrap();
        for key in ["format_version", "kind", "n", "m", "I", "T", "layer_widths", "weights", "seed"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["kind"], "plse");
        assert_eq!(v["layer_widths"], serde_json::json!([1, 2, 4]));
    }

    #[test]
    fn rejects_inconsistent_documents() {
        let arch = Architecture {
            hidden: vec![2],
            planes: 2,
            temperature: 0.5,
        };
        let net = init_network(Kind::Plse, 1, 1, &arch, &mut Rng::new(0)).unwrap();
        let good = ModelDocument::from_network(&net, None);

        let mut bad = good.clone();
        bad.format_version = 2;
        assert!(bad.into_network().is_err());

        let mut bad = good.clone();
        bad.temperature = None;
        assert!(bad.into_network().is_err());

        let mut bad = good.clone();
        bad.planes = Some(3);
        assert!(bad.into_network().is_err());

        let mut bad = good;
        bad.layer_widths = vec![1, 3, 4];
        assert!(bad.into_network().is_err());
    }
}
