//! Training and evaluation drivers behind the `train` and `eval` commands.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cifar::{self, Variant};
use super::report::{EpochRow, RunReport};
use crate::batchnorm::Mode;
use crate::dataset::{synthetic_blobs, BlobSpec, Dataset};
use crate::error::{Error, Result};
use crate::network::layers::{argmax_rows, softmax_cross_entropy};
use crate::network::{evaluate, lr_at, Network, NetworkConfig, Sgd};
use crate::scalar::Scalar;

/// Training split plus an optional held-out split.
pub struct Splits<T> {
    pub train: Dataset<T>,
    pub held_out: Option<Dataset<T>>,
}

/// The 200-sample two-class blob set, with a 100-sample held-out set drawn
/// from a different seed.
pub fn bundled<T: Scalar>() -> Result<Splits<T>> {
    let spec = BlobSpec::bundled();
    Ok(Splits {
        train: synthetic_blobs(&spec)?,
        held_out: Some(synthetic_blobs(&BlobSpec {
            samples: 100,
            seed: spec.seed + 1,
            ..spec
        })?),
    })
}

/// CIFAR from a directory of batch files or a single batch file; the
/// bundled synthetic set when `root` is `None`.
pub fn load_splits(root: Option<&Path>, variant: Variant) -> Result<Splits<f64>> {
    match root {
        None => bundled(),
        Some(p) if p.is_dir() => {
            let (train, test) = cifar::load_cifar_dir(p, variant)?;
            Ok(Splits {
                train,
                held_out: Some(test),
            })
        }
        Some(p) => Ok(Splits {
            train: cifar::load_cifar(p, variant)?,
            held_out: None,
        }),
    }
}

impl<T: Scalar> Splits<T> {
    /// Standardizes every split per channel with training-set statistics.
    pub fn standardize(&mut self) -> Result<()> {
        let (mean, std) = self.train.channel_stats();
        self.train.standardize(&mean, &std)?;
        if let Some(h) = &mut self.held_out {
            h.standardize(&mean, &std)?;
        }
        Ok(())
    }
}

fn check_compatible<T: Scalar>(cfg: &NetworkConfig, data: &Dataset<T>) -> Result<()> {
    let (c, _, _) = data.image_shape();
    if c != cfg.input_channels {
        return Err(Error::Config(format!(
            "config expects {} input channels, data has {c}",
            cfg.input_channels
        )));
    }
    if data.classes() > cfg.classes {
        return Err(Error::Config(format!(
            "config has {} classes, data has {}",
            cfg.classes,
            data.classes()
        )));
    }
    Ok(())
}

/// Trains for `cfg.epochs` epochs of shuffled mini-batches. Batches of one
/// example are dropped since batch statistics need two. `on_epoch` sees
/// every row as it is produced.
pub fn train<T: Scalar>(
    cfg: &NetworkConfig,
    data: &Splits<T>,
    on_epoch: &mut dyn FnMut(&EpochRow),
) -> Result<(Network<T>, RunReport)> {
    cfg.validate()?;
    check_compatible(cfg, &data.train)?;
    let schedule = cfg.schedule()?;
    let mut net = Network::<T>::build(cfg)?;
    let mut opt = Sgd::for_config(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut report = RunReport::new("train", cfg.algebra_dim, cfg.seed, cfg.config_hash());
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let lr = lr_at(&schedule, epoch)?;
        order.shuffle(&mut rng);
        let (mut loss_sum, mut wrong, mut seen) = (0.0, 0usize, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            if idx.len() < 2 {
                continue;
            }
            let (x, y) = data.train.batch(idx)?;
            net.zero_grad();
            let logits = net.forward(&x, Mode::Train)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &y)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    step: opt.steps() as usize,
                    loss: loss.as_f64(),
                    detail: format!("epoch {epoch}, lr {lr}"),
                });
            }
            net.backward(&grad)?;
            opt.step(&mut net, T::lit(lr));
            loss_sum += loss.as_f64() * idx.len() as f64;
            wrong += argmax_rows(&logits).iter().zip(&y).filter(|(p, t)| p != t).count();
            seen += idx.len();
        }
        if seen == 0 {
            return Err(Error::Data("training set yields no batch of at least two examples".into()));
        }
        let val_error = match &data.held_out {
            Some(h) => Some(evaluate(&mut net, h, cfg.batch_size)?),
            None => None,
        };
        let row = EpochRow {
            epoch,
            lr,
            train_loss: loss_sum / seen as f64,
            train_error: wrong as f64 / seen as f64,
            val_error,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        on_epoch(&row);
        report.push(row)?;
    }
    report.steps = opt.steps();
    Ok((net, report))
}

/// Inference-mode top-1 error on `data`, as a report without epoch rows.
pub fn eval<T: Scalar>(net: &mut Network<T>, data: &Dataset<T>) -> Result<RunReport> {
    let cfg = net.config().clone();
    check_compatible(&cfg, data)?;
    let mut report = RunReport::new("eval", cfg.algebra_dim, cfg.seed, cfg.config_hash());
    report.final_metrics.test_error = Some(evaluate(net, data, cfg.batch_size)?);
    Ok(report)
}
