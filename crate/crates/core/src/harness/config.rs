//! Experiment configuration.

use serde::{Deserialize, Serialize};

use crate::data::{corrupt_labels, gen_blobs, Dataset};
use crate::error::{Error, Result};
use crate::network::{Activation, NetworkSpec};
use crate::optim::Schedule;
use crate::oui::{Band, PairSamplePolicy};

/// Synthetic blob dataset description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub spread: f64,
    /// Fraction of training labels resampled to a wrong class.
    pub label_noise: f64,
    /// Reshape each `dim`-vector to `[C, H, W]` for convolutional inputs.
    pub image_shape: Option<[usize; 3]>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            num_classes: 4,
            per_class: 100,
            dim: 16,
            spread: 1.0,
            label_noise: 0.0,
            image_shape: None,
        }
    }
}

impl DatasetSpec {
    /// Per-sample input shape the network must accept.
    pub fn input_shape(&self) -> Vec<usize> {
        match self.image_shape {
            Some(chw) => chw.to_vec(),
            None => vec![self.dim],
        }
    }

    pub fn build(&self, seed: u64) -> Result<Dataset> {
        let mut ds = gen_blobs(self.num_classes, self.per_class, self.dim, self.spread, seed)?;
        if self.label_noise > 0.0 {
            ds = corrupt_labels(&ds, self.label_noise, seed.wrapping_add(1))?;
        }
        if let Some(chw) = self.image_shape {
            ds = ds.with_image_shape(chw)?;
        }
        Ok(ds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSpec {
    pub momentum: f64,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self { momentum: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Dataset layout, split and label corruption.
    pub data: u64,
    pub init: u64,
    pub shuffle: u64,
    /// Pair sampling for the OUI estimator.
    pub oui: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            data: 1,
            init: 2,
            shuffle: 3,
            oui: 4,
        }
    }
}

impl Seeds {
    /// Every seed shifted by `offset`, for independent repetitions.
    pub fn offset(self, offset: u64) -> Self {
        Self {
            data: self.data.wrapping_add(offset),
            init: self.init.wrapping_add(offset),
            shuffle: self.shuffle.wrapping_add(offset),
            oui: self.oui.wrapping_add(offset),
        }
    }
}

/// Weight-decay values for a sweep: an explicit list, or a log grid from
/// `start` to `stop` with `per_decade` points per decade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepGrid {
    List { lambdas: Vec<f64> },
    Log { start: f64, stop: f64, per_decade: usize },
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid::Log {
            start: 1e-5,
            stop: 1e-2,
            per_decade: 2,
        }
    }
}

impl SweepGrid {
    pub fn lambdas(&self) -> Vec<f64> {
        match self {
            SweepGrid::List { lambdas } => lambdas.clone(),
            SweepGrid::Log {
                start,
                stop,
                per_decade,
            } => log_grid(*start, *stop, *per_decade),
        }
    }
}

/// `start · 10^(i / per_decade)` up to and including `stop` (within a
/// relative 1e-9).
pub fn log_grid(start: f64, stop: f64, per_decade: usize) -> Vec<f64> {
    if !(start > 0.0) || !(stop >= start) || per_decade == 0 {
        return Vec::new();
    }
    let (a, b) = (start.log10(), stop.log10());
    let steps = ((b - a) * per_decade as f64 + 1e-9).floor() as usize;
    (0..=steps)
        .map(|i| 10f64.powf(a + i as f64 / per_decade as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    /// Wall-clock seconds per epoch and for OUI work.
    #[default]
    Wall,
    /// Record zero for both timings, so traces are byte-reproducible.
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub network: NetworkSpec,
    pub dataset: DatasetSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerSpec,
    pub schedule: Schedule,
    pub weight_decay: f64,
    pub oui: PairSamplePolicy,
    pub seeds: Seeds,
    pub oui_band: Band,
    pub early_fraction: f64,
    pub sweep: SweepGrid,
    pub timing: Timing,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let dataset = DatasetSpec::default();
        Self {
            network: NetworkSpec::mlp(dataset.dim, &[128, 128], dataset.num_classes, Activation::Relu),
            dataset,
            epochs: 40,
            batch_size: 64,
            optimizer: OptimizerSpec::default(),
            schedule: Schedule::Cosine {
                lr_start: 0.05,
                lr_end: 0.0,
            },
            weight_decay: 1e-4,
            oui: PairSamplePolicy::default(),
            seeds: Seeds::default(),
            oui_band: Band::default(),
            early_fraction: 0.15,
            sweep: SweepGrid::default(),
            timing: Timing::Wall,
        }
    }
}

impl TrainConfig {
    /// Every violated invariant, keyed by config path.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(p) = self.network.output_shapes() {
            out.extend(p.into_iter().map(|s| format!("network: {s}")));
        }
        let ds = &self.dataset;
        if ds.num_classes < 1 || ds.per_class < 1 || ds.dim < 1 {
            out.push("dataset: num_classes, per_class and dim must be >= 1".into());
        }
        if !(ds.spread >= 0.0 && ds.spread.is_finite()) {
            out.push(format!("dataset.spread must be >= 0, got {}", ds.spread));
        }
        if !(0.0..=1.0).contains(&ds.label_noise) {
            out.push(format!("dataset.label_noise must be in [0, 1], got {}", ds.label_noise));
        }
        if let Some(chw) = ds.image_shape {
            if chw.iter().product::<usize>() != ds.dim {
                out.push(format!("dataset.image_shape {chw:?} does not hold dim {}", ds.dim));
            }
        }
        if self.network.input_shape != ds.input_shape() {
            out.push(format!(
                "network.input_shape {:?} does not match dataset input {:?}",
                self.network.input_shape,
                ds.input_shape()
            ));
        }
        if self.network.num_classes() != ds.num_classes {
            out.push(format!(
                "network output size {} does not match dataset.num_classes {}",
                self.network.num_classes(),
                ds.num_classes
            ));
        }
        if self.batch_size < 2 {
            out.push(format!(
                "batch_size must be >= 2 so OUI has sample pairs, got {}",
                self.batch_size
            ));
        }
        let n_train = ds.num_classes * ds.per_class * 4 / 5;
        if n_train < 2 {
            out.push("dataset: training split needs at least 2 samples".into());
        }
        if !(0.0..1.0).contains(&self.optimizer.momentum) {
            out.push(format!(
                "optimizer.momentum must be in [0, 1), got {}",
                self.optimizer.momentum
            ));
        }
        out.extend(self.schedule.problems(self.epochs));
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            out.push(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        out.extend(self.oui.problems());
        if self.oui_band.validate().is_err() {
            out.push(format!(
                "oui_band must satisfy 0 <= low < high <= 1, got [{}, {}]",
                self.oui_band.low, self.oui_band.high
            ));
        }
        if !(self.early_fraction > 0.0 && self.early_fraction <= 1.0) {
            out.push(format!("early_fraction must be in (0, 1], got {}", self.early_fraction));
        }
        let lambdas = self.sweep.lambdas();
        if lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            out.push("sweep: weight-decay values must be finite and >= 0".into());
        }
        if lambdas.windows(2).any(|w| w[1] <= w[0]) {
            out.push("sweep: weight-decay values must be strictly increasing".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(p))
        }
    }

    /// Epoch (1-based) at which early OUI is read: `ceil(early_fraction · T)`.
    pub fn early_epoch(&self) -> usize {
        early_epoch(self.epochs, self.early_fraction)
    }

    pub fn build_dataset(&self) -> Result<Dataset> {
        self.dataset.build(self.seeds.data)
    }

    pub fn with_weight_decay(&self, lambda: f64) -> Self {
        Self {
            weight_decay: lambda,
            ..self.clone()
        }
    }
}

/// `ceil(fraction · total)`, at least 1 and at most `total`.
pub fn early_epoch(total: usize, fraction: f64) -> usize {
    // the small slack keeps products like 0.15 · 20 = 3.0000000000000004 at 3
    let e = (fraction * total as f64 - 1e-9).ceil().max(1.0) as usize;
    e.min(total.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.problems(), Vec::<String>::new());
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.optimizer.momentum, 0.9);
        assert_eq!(cfg.oui, PairSamplePolicy::sampled(28, 10));
        assert_eq!(cfg.oui_band, Band { low: 0.6, high: 0.8 });
        assert_eq!(cfg.early_fraction, 0.15);
    }

    #[test]
    fn half_decade_grid_has_seven_points() {
        let g = log_grid(1e-5, 1e-2, 2);
        assert_eq!(g.len(), 7);
        assert!((g[0] - 1e-5).abs() < 1e-20);
        assert!((g[1] - 10f64.powf(-4.5)).abs() < 1e-18);
        assert!((g[6] - 1e-2).abs() < 1e-15);
    }

    #[test]
    fn early_epoch_rounding() {
        assert_eq!(early_epoch(40, 0.15), 6);
        assert_eq!(early_epoch(20, 0.15), 3);
        assert_eq!(early_epoch(30, 0.15), 5);
        assert_eq!(early_epoch(3, 0.15), 1);
        assert_eq!(early_epoch(10, 1.0), 10);
    }

    #[test]
    fn problems_are_collected() {
        let cfg = TrainConfig {
            batch_size: 1,
            oui_band: Band { low: 0.8, high: 0.6 },
            early_fraction: 0.0,
            ..TrainConfig::default()
        };
        let p = cfg.problems();
        assert_eq!(p.len(), 3, "{p:?}");
        assert!(p[0].contains("batch_size"));
    }

    #[test]
    fn mismatched_network_is_reported() {
        let cfg = TrainConfig {
            dataset: DatasetSpec {
                dim: 8,
                ..DatasetSpec::default()
            },
            ..TrainConfig::default()
        };
        assert!(cfg.problems().iter().any(|p| p.contains("input_shape")));
    }
}
