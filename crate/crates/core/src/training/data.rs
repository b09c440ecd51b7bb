use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::numerics::Rng;
use crate::{Error, Result};

/// One labeled observation `(x, u, y = f(x, u))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    m: usize,
    points: Vec<Sample>,
}

impl Dataset {
    pub fn new(n: usize, m: usize, points: Vec<Sample>) -> Result<Self> {
        for (k, p) in points.iter().enumerate() {
            if p.x.len() != n || p.u.len() != m {
                return Err(Error::DimensionMismatch {
                    what: "dataset row",
                    expected: n + m,
                    got: p.x.len() + p.u.len(),
                });
            }
            if !p.y.is_finite() || p.x.iter().chain(&p.u).any(|v| !v.is_finite()) {
                return Err(Error::Parse(format!("row {k} has a non-finite entry")));
            }
        }
        Ok(Dataset { n, m, points })
    }

    /// Labels every `(x, u)` pair with `f`.
    pub fn from_fn(
        n: usize,
        m: usize,
        inputs: impl IntoIterator<Item = (Vec<f64>, Vec<f64>)>,
        f: impl Fn(&[f64], &[f64]) -> f64,
    ) -> Result<Self> {
        let points = inputs
            .into_iter()
            .map(|(x, u)| {
                let y = f(&x, &u);
                Sample { x, u, y }
            })
            .collect();
        Dataset::new(n, m, points)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Sample] {
        &self.points
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            n: self.n,
            m: self.m,
            points: indices.iter().map(|&i| self.points[i].clone()).collect(),
        }
    }

    /// CSV with header `x_1..x_n,u_1..u_m,y`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (1..=self.n)
            .map(|i| format!("x_{i}"))
            .chain((1..=self.m).map(|j| format!("u_{j}")))
            .chain(std::iter::once("y".to_string()))
            .collect();
        w.write_record(&header)?;
        for p in &self.points {
            let row: Vec<String> = p
                .x
                .iter()
                .chain(&p.u)
                .chain(std::iter::once(&p.y))
                .map(|v| format!("{v:?}"))
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format of [`Dataset::write_csv`]; `n` and `m` come from the header.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let cols: Vec<&str> = header.iter().map(str::trim).collect();
        let n = cols.iter().take_while(|c| c.starts_with("x_")).count();
        let m = cols[n..].iter().take_while(|c| c.starts_with("u_")).count();
        let expected: Vec<String> = (1..=n)
            .map(|i| format!("x_{i}"))
            .chain((1..=m).map(|j| format!("u_{j}")))
            .chain(std::iter::once("y".to_string()))
            .collect();
        if cols != expected {
            return Err(Error::Parse(format!(
                "dataset header must be `x_1..x_n,u_1..u_m,y`, got `{}`",
                cols.join(",")
            )));
        }
        let mut points = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", k + 1)))?;
            if vals.len() != n + m + 1 {
                return Err(Error::Parse(format!("row {}: wrong column count", k + 1)));
            }
            points.push(Sample {
                x: vals[..n].to_vec(),
                u: vals[n..n + m].to_vec(),
                y: vals[n + m],
            });
        }
        Dataset::new(n, m, points)
    }
}

/// Random permutation of `0..len` split into a prefix of `⌊ratio·len⌋`
/// indices and the remainder.
pub fn split_indices(len: usize, ratio: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if len == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let mut idx: Vec<usize> = (0..len).collect();
    rng.shuffle(&mut idx);
    // the small offset keeps decimal ratios such as 0.29·100 from flooring low
    let head = ((ratio * len as f64) + 1e-9).floor() as usize;
    let tail = idx.split_off(head.min(len));
    Ok((idx, tail))
}

pub fn split_dataset(ds: &Dataset, ratio: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
    let (a, b) = split_indices(ds.len(), ratio, rng)?;
    Ok((ds.subset(&a), ds.subset(&b)))
}
