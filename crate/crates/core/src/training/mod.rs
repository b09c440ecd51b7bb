//! Supervised regression of every network kind on `(x, u, y)` data.
//!
//! Loss is the mean squared error; optimization is mini-batch Adam over
//! shuffled batches of fixed size (the trailing partial batch of each epoch
//! is dropped). Weight gradients come from a hand-written reverse pass, see
//! [`Network::accumulate_param_grad`].

mod adam;
mod data;
mod init;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use adam::{AdamParams, AdamState};
pub use data::{split_dataset, split_indices, Dataset, Sample};
pub use init::{init_network, xavier_bound, xavier_init, xavier_mlp, Architecture};

use crate::kv::KeyValues;
use crate::networks::Network;
use crate::numerics::Rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub adam: AdamParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 64,
            split_ratio: 0.9,
            seed: 0,
            adam: AdamParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::InvalidConfig("split_ratio must be in (0, 1)".into()));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.epsilon <= 0.0 {
            return Err(Error::InvalidConfig("adam needs beta in [0, 1) and epsilon > 0".into()));
        }
        Ok(())
    }

    /// Overrides fields with any keys present in `kv`, consuming them.
    pub(crate) fn apply(&mut self, kv: &mut KeyValues) -> Result<()> {
        if let Some(v) = kv.take("epochs")? {
            self.epochs = v;
        }
        if let Some(v) = kv.take("learning_rate")? {
            self.learning_rate = v;
        }
        if let Some(v) = kv.take("batch_size")? {
            self.batch_size = v;
        }
        if let Some(v) = kv.take("split_ratio")? {
            self.split_ratio = v;
        }
        if let Some(v) = kv.take("seed")? {
            self.seed = v;
        }
        if let Some(v) = kv.take("beta1")? {
            self.adam.beta1 = v;
        }
        if let Some(v) = kv.take("beta2")? {
            self.adam.beta2 = v;
        }
        if let Some(v) = kv.take("epsilon")? {
            self.adam.epsilon = v;
        }
        Ok(())
    }

    /// Parses a `key = value` file. Keys: `epochs`, `learning_rate`,
    /// `batch_size`, `split_ratio`, `seed`, `beta1`, `beta2`, `epsilon`;
    /// missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let mut cfg = TrainConfig::default();
        cfg.apply(&mut kv)?;
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        TrainConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_key_values(&self) -> String {
        format!(
            "epochs = {}\nlearning_rate = {:?}\nbatch_size = {}\nsplit_ratio = {:?}\nseed = {}\nbeta1 = {:?}\nbeta2 = {:?}\nepsilon = {:?}\n",
            self.epochs,
            self.learning_rate,
            self.batch_size,
            self.split_ratio,
            self.seed,
            self.adam.beta1,
            self.adam.beta2,
            self.adam.epsilon
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Mean of the mini-batch losses seen during each epoch.
    pub train_loss: Vec<f64>,
    /// Full test-split MSE after each epoch.
    pub test_loss: Vec<f64>,
    pub final_test_mse: f64,
    pub wall_time_s: f64,
}

pub fn mse_loss(net: &Network, batch: &[Sample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for s in batch {
        let r = net.forward(&s.x, &s.u)? - s.y;
        total += r * r;
    }
    Ok(total / batch.len() as f64)
}

/// MSE of `batch` and its gradient with respect to [`Network::params`].
pub fn loss_and_gradients(net: &Network, batch: &[Sample]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let scale = 2.0 / batch.len() as f64;
    let mut grad = vec![0.0; net.param_count()];
    let mut total = 0.0;
    for s in batch {
        let mut residual = 0.0;
        net.accumulate_param_grad(&s.x, &s.u, &mut grad, |value| {
            residual = value - s.y;
            scale * residual
        })?;
        total += residual * residual;
    }
    Ok((total / batch.len() as f64, grad))
}

pub fn weight_gradients(net: &Network, batch: &[Sample]) -> Result<Vec<f64>> {
    loss_and_gradients(net, batch).map(|(_, g)| g)
}

fn check_dims(net: &Network, ds: &Dataset) -> Result<()> {
    let (n, m) = net.dims();
    if (ds.n(), ds.m()) != (n, m) {
        return Err(Error::DimensionMismatch {
            what: "dataset dimensions (n + m)",
            expected: n + m,
            got: ds.n() + ds.m(),
        });
    }
    Ok(())
}

/// Splits `ds` by `cfg.split_ratio` and trains on the first part.
pub fn train(net: Network, ds: &Dataset, cfg: &TrainConfig) -> Result<(Network, TrainReport)> {
    cfg.validate()?;
    check_dims(&net, ds)?;
    let mut rng = Rng::new(Rng::derive_seed(cfg.seed, 1));
    let (train_set, test_set) = split_dataset(ds, cfg.split_ratio, &mut rng)?;
    fit(net, &train_set, &test_set, cfg)
}

/// Trains on `train_set`, evaluating `test_set` after every epoch.
pub fn fit(
    mut net: Network,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    cfg.validate()?;
    check_dims(&net, train_set)?;
    check_dims(&net, test_set)?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "both splits must be non-empty (train {}, test {})",
            train_set.len(),
            test_set.len()
        )));
    }
    let start = Instant::now();
    let mut rng = Rng::new(Rng::derive_seed(cfg.seed, 2));
    let mut adam = AdamState::new(net.param_count(), cfg.adam);
    let mut theta = net.params();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let batch = cfg.batch_size.min(train_set.len());
    let mut batch_buf: Vec<Sample> = Vec::with_capacity(batch);

    let mut train_loss = Vec::with_capacity(cfg.epochs);
    let mut test_loss = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks_exact(batch) {
            batch_buf.clear();
            batch_buf.extend(chunk.iter().map(|&i| train_set.points()[i].clone()));
            let (loss, grad) = loss_and_gradients(&net, &batch_buf).or_else(|e| match e {
                Error::NumericOverflow(_) => Ok((f64::NAN, Vec::new())),
                other => Err(other),
            })?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            adam.step(&mut theta, &grad, cfg.learning_rate)?;
            net.set_params(&theta)?;
            sum += loss;
            batches += 1;
        }
        let epoch_train = sum / batches as f64;
        let epoch_test = mse_loss(&net, test_set.points()).unwrap_or(f64::NAN);
        if !epoch_test.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: epoch_test,
            });
        }
        train_loss.push(epoch_train);
        test_loss.push(epoch_test);
    }
    let final_test_mse = *test_loss.last().expect("epochs >= 1");
    Ok((
        net,
        TrainReport {
            epochs: cfg.epochs,
            train_size: train_set.len(),
            test_size: test_set.len(),
            train_loss,
            test_loss,
            final_test_mse,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    ))
}
