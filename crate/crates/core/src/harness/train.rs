//! Training loop with OUI instrumentation.

use std::time::Instant;

use crate::data::{batches, Dataset};
use crate::error::{Error, Result};
use crate::network::{accuracy, backward, cross_entropy, forward, Network};
use crate::optim::{lr_at, sgd_step, SgdState};
use crate::oui::{oui_network, should_compute, EpochOuiAccumulator, PairSamplePolicy};
use crate::pattern::ActivationRecord;
use crate::tensor::RngStream;

use super::config::{Timing, TrainConfig};

/// One completed epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    /// Running mean of the batch-level network OUI values of the epoch.
    pub oui: f64,
    pub oui_layers: Vec<f64>,
    pub lr: f64,
    pub epoch_seconds: f64,
    pub oui_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTrace {
    pub weight_decay: f64,
    pub epochs: Vec<EpochMetrics>,
    /// `2·η_peak·λ ≥ 1`: pure decay alone would not contract the weights
    /// monotonically at the peak learning rate.
    pub decay_unstable: bool,
}

impl MetricTrace {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Maximum validation accuracy over epochs.
    pub fn mva(&self) -> Option<f64> {
        self.epochs.iter().map(|e| e.val_acc).reduce(f64::max)
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }

    /// Metrics of 1-based epoch `epoch`.
    pub fn at_epoch(&self, epoch: usize) -> Option<&EpochMetrics> {
        epoch.checked_sub(1).and_then(|i| self.epochs.get(i))
    }

    pub fn num_layers(&self) -> usize {
        self.epochs.first().map_or(0, |e| e.oui_layers.len())
    }
}

/// Owns the network, optimizer and data of one training run and advances it
/// epoch by epoch.
pub struct Trainer {
    config: TrainConfig,
    dataset: Dataset,
    net: Network,
    sgd: SgdState,
    oui_rng: RngStream,
    epoch: usize,
    seen_samples: Vec<usize>,
}

impl Trainer {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let dataset = config.build_dataset()?;
        Self::with_dataset(config, dataset)
    }

    /// Trainer over a caller-built dataset (its input shape must match the
    /// network).
    pub fn with_dataset(config: &TrainConfig, dataset: Dataset) -> Result<Self> {
        config.validate()?;
        let net = Network::init(config.network.clone(), &mut RngStream::new(config.seeds.init))?;
        let lr0 = lr_at(&config.schedule, 0, config.epochs)?;
        let sgd = SgdState::new(net.params(), config.optimizer.momentum, lr0.max(f64::MIN_POSITIVE))?;
        Ok(Self {
            config: config.clone(),
            dataset,
            net,
            sgd,
            oui_rng: RngStream::new(config.seeds.oui),
            epoch: 0,
            seen_samples: Vec::new(),
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Sorted, deduplicated indices of every sample that reached a gradient
    /// step or OUI capture so far.
    pub fn seen_samples(&self) -> &[usize] {
        &self.seen_samples
    }

    /// Runs the next epoch of the `config.epochs`-long schedule.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let total = self.config.epochs;
        let t = self.epoch;
        let lr = lr_at(&self.config.schedule, t, total)?;
        self.sgd.lr = lr;
        let lambda = self.config.weight_decay;
        let policy = self.config.oui;
        let timing = self.config.timing == Timing::Wall;

        let epoch_start = Instant::now();
        let mut oui_seconds = 0.0;
        let mut acc = EpochOuiAccumulator::new();
        let (mut loss_sum, mut correct, mut count) = (0.0, 0.0, 0usize);

        let plan = batches(&self.dataset, self.config.batch_size, self.config.seeds.shuffle, t)?;
        for (b, idx) in plan.iter().enumerate() {
            self.seen_samples.extend_from_slice(idx);
            let (x, y) = self.dataset.gather(idx);
            let fwd = forward(&self.net, &x, false)?;
            let g = backward(&self.net, &fwd, &y, lambda)?;
            if !g.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: t + 1 });
            }
            let m = idx.len();
            loss_sum += g.data_loss * m as f64;
            correct += accuracy(&fwd.logits, &y)? * m as f64;
            count += m;

            if m >= 2 && should_compute(b, &policy) {
                let start = Instant::now();
                let record = fwd.capture_record();
                let effective = PairSamplePolicy {
                    pairs: policy.effective_mode(m),
                    ..policy
                };
                let est = oui_network(&record, &effective, &mut self.oui_rng)?.at_batch(b);
                acc.update(&est);
                if timing {
                    oui_seconds += start.elapsed().as_secs_f64();
                }
            }
            sgd_step(self.net.params_mut(), &g.grads, &mut self.sgd)?;
        }
        let epoch_seconds = if timing {
            epoch_start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        self.seen_samples.sort_unstable();
        self.seen_samples.dedup();

        let oui = acc.value().ok_or(Error::InsufficientSamples(0))?;
        let (val_loss, val_acc) = self.evaluate(&self.dataset.val)?;
        if !val_loss.is_finite() || !loss_sum.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: t + 1 });
        }
        self.epoch += 1;
        Ok(EpochMetrics {
            epoch: self.epoch,
            train_loss: loss_sum / count as f64,
            val_loss,
            train_acc: correct / count as f64,
            val_acc,
            oui,
            oui_layers: acc.per_layer(),
            lr,
            epoch_seconds,
            oui_seconds: oui_seconds.min(epoch_seconds),
        })
    }

    /// Mean cross-entropy and accuracy on the given samples, no capture.
    pub fn evaluate(&self, indices: &[usize]) -> Result<(f64, f64)> {
        if indices.is_empty() {
            return Ok((f64::NAN, f64::NAN));
        }
        let (mut loss, mut correct) = (0.0, 0.0);
        for chunk in indices.chunks(self.config.batch_size.max(1)) {
            let (x, y) = self.dataset.gather(chunk);
            let fwd = forward(&self.net, &x, false)?;
            loss += cross_entropy(&fwd.logits, &y)? * chunk.len() as f64;
            correct += accuracy(&fwd.logits, &y)? * chunk.len() as f64;
        }
        let n = indices.len() as f64;
        Ok((loss / n, correct / n))
    }

    /// Activation records of the current network on full training batches
    /// of `batch_size` (the ragged tail is dropped), shuffled with the
    /// config's shuffle seed for the current epoch.
    pub fn record_patterns(&self, batch_size: usize) -> Result<Vec<ActivationRecord>> {
        let plan = batches(&self.dataset, batch_size, self.config.seeds.shuffle, self.epoch)?;
        plan.iter()
            .filter(|idx| idx.len() == batch_size)
            .map(|idx| {
                let (x, _) = self.dataset.gather(idx);
                Ok(forward(&self.net, &x, true)?.record)
            })
            .collect()
    }
}

/// Runs the first `epochs` epochs of the configured schedule.
pub fn train_epochs(config: &TrainConfig, epochs: usize) -> Result<MetricTrace> {
    let mut trainer = Trainer::new(config)?;
    run_trainer(&mut trainer, config, epochs)
}

pub(crate) fn run_trainer(trainer: &mut Trainer, config: &TrainConfig, epochs: usize) -> Result<MetricTrace> {
    let mut trace = MetricTrace {
        weight_decay: config.weight_decay,
        epochs: Vec::with_capacity(epochs),
        decay_unstable: 2.0 * config.schedule.peak() * config.weight_decay >= 1.0,
    };
    for _ in 0..epochs.min(config.epochs) {
        trace.epochs.push(trainer.run_epoch()?);
    }
    Ok(trace)
}

/// Full training run of `config.epochs` epochs.
pub fn train(config: &TrainConfig) -> Result<MetricTrace> {
    train_epochs(config, config.epochs)
}
