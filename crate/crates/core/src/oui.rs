//! Overfitting-Underfitting Indicator.
//!
//! For one hidden layer with patterns `P(x_1) … P(x_m)` the layer value is
//! twice the mean, over sample pairs, of the normalized Hamming distance
//! truncated at 0.5. The network value is the unweighted mean over hidden
//! layers. 0 means every sample shares one pattern (linear behaviour on the
//! batch); 1 means every pair disagrees on at least half the neurons of every
//! layer.
//!
//! The sampled estimator draws one set of distinct unordered pairs per batch
//! and reuses it for every layer.

use std::fmt;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::{ActivationRecord, PatternMatrix};
use crate::tensor::RngStream;

/// Fraction of positions where `p` and `q` differ.
pub fn hamming_normalized(p: &[u8], q: &[u8]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    if p.is_empty() {
        return Err(Error::EmptyPattern);
    }
    let diff = p.iter().zip(q).filter(|(a, b)| (**a != 0) != (**b != 0)).count();
    Ok(diff as f64 / p.len() as f64)
}

/// `min(d_H(p, q), 0.5)`.
pub fn truncated_distance(p: &[u8], q: &[u8]) -> Result<f64> {
    Ok(hamming_normalized(p, q)?.min(0.5))
}

#[inline]
fn pair_term(m: &PatternMatrix, i: usize, j: usize) -> f64 {
    (m.hamming_count(i, j) as f64 / m.cols() as f64).min(0.5)
}

/// Number of unordered pairs among `m` samples.
pub fn pair_count(m: usize) -> usize {
    m * m.saturating_sub(1) / 2
}

/// Lexicographic rank → `(i, j)` with `i < j`.
fn unrank_pair(mut rank: usize, m: usize) -> (usize, usize) {
    let mut i = 0;
    while rank >= m - 1 - i {
        rank -= m - 1 - i;
        i += 1;
    }
    (i, i + 1 + rank)
}

fn all_pairs(m: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(pair_count(m));
    for i in 0..m {
        for j in i + 1..m {
            pairs.push((i, j));
        }
    }
    pairs
}

/// `num_pairs` distinct unordered pairs drawn uniformly without replacement,
/// returned in lexicographic order.
pub fn sample_pairs(m: usize, num_pairs: usize, rng: &mut RngStream) -> Result<Vec<(usize, usize)>> {
    if m < 2 {
        return Err(Error::InsufficientSamples(m));
    }
    let total = pair_count(m);
    if num_pairs > total {
        return Err(Error::NumPairsTooLarge {
            requested: num_pairs,
            available: total,
        });
    }
    let mut ranks = index::sample(rng, total, num_pairs).into_vec();
    ranks.sort_unstable();
    Ok(ranks.into_iter().map(|r| unrank_pair(r, m)).collect())
}

fn layer_value(m: &PatternMatrix, pairs: &[(usize, usize)]) -> Result<f64> {
    if m.cols() == 0 {
        return Err(Error::EmptyPattern);
    }
    let sum: f64 = pairs.iter().map(|&(i, j)| pair_term(m, i, j)).sum();
    Ok(2.0 * sum / pairs.len() as f64)
}

/// Layer OUI over all `C(m, 2)` pairs.
pub fn oui_layer_exhaustive(patterns: &PatternMatrix) -> Result<f64> {
    if patterns.rows() < 2 {
        return Err(Error::InsufficientSamples(patterns.rows()));
    }
    layer_value(patterns, &all_pairs(patterns.rows()))
}

/// Per-pair values `2·min(d_H, 0.5)` of one layer over all pairs; their
/// spread is the σ used for pair-count planning.
pub fn pair_values(patterns: &PatternMatrix) -> Vec<f64> {
    all_pairs(patterns.rows())
        .into_iter()
        .map(|(i, j)| 2.0 * pair_term(patterns, i, j))
        .collect()
}

/// Per-pair network values (mean over layers of `2·min(d_H, 0.5)`).
pub fn network_pair_values(record: &ActivationRecord) -> Vec<f64> {
    let layers = record.num_layers() as f64;
    all_pairs(record.batch_size())
        .into_iter()
        .map(|(i, j)| {
            record
                .layers
                .iter()
                .map(|l| 2.0 * pair_term(l, i, j))
                .sum::<f64>()
                / layers
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    Exhaustive,
    Sampled(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSamplePolicy {
    #[serde(default = "PairSamplePolicy::default_mode")]
    pub pairs: PairMode,
    /// Compute OUI on batches whose index is a multiple of this.
    #[serde(default = "PairSamplePolicy::default_interval")]
    pub batch_interval: usize,
}

impl Default for PairSamplePolicy {
    fn default() -> Self {
        Self {
            pairs: Self::default_mode(),
            batch_interval: Self::default_interval(),
        }
    }
}

impl PairSamplePolicy {
    fn default_mode() -> PairMode {
        PairMode::Sampled(28)
    }

    fn default_interval() -> usize {
        10
    }

    pub fn exhaustive(batch_interval: usize) -> Self {
        Self {
            pairs: PairMode::Exhaustive,
            batch_interval,
        }
    }

    pub fn sampled(num_pairs: usize, batch_interval: usize) -> Self {
        Self {
            pairs: PairMode::Sampled(num_pairs),
            batch_interval,
        }
    }

    /// Mode for a batch of `m` samples: a sampled policy that asks for more
    /// pairs than the batch has falls back to exhaustive.
    pub fn effective_mode(&self, m: usize) -> PairMode {
        match self.pairs {
            PairMode::Sampled(n) if n > pair_count(m) => PairMode::Exhaustive,
            mode => mode,
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.batch_interval == 0 {
            out.push("oui.batch_interval must be >= 1".to_string());
        }
        if self.pairs == PairMode::Sampled(0) {
            out.push("oui.pairs.sampled must be >= 1".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuiEstimate {
    pub per_layer: Vec<f64>,
    pub network: f64,
    pub pairs_used: usize,
    pub exhaustive: bool,
    pub batch_index: usize,
}

impl OuiEstimate {
    pub fn at_batch(mut self, batch_index: usize) -> Self {
        self.batch_index = batch_index;
        self
    }
}

/// Network OUI of a batch record under `policy`. The pair set is drawn once
/// and shared by all layers.
pub fn oui_network(record: &ActivationRecord, policy: &PairSamplePolicy, rng: &mut RngStream) -> Result<OuiEstimate> {
    if record.is_empty() {
        return Err(Error::EmptyPattern);
    }
    let m = record.batch_size();
    if m < 2 {
        return Err(Error::InsufficientSamples(m));
    }
    if record.layers.iter().any(|l| l.rows() != m) {
        return Err(Error::ShapeMismatch("layers disagree on batch size".into()));
    }
    let (pairs, exhaustive) = match policy.pairs {
        PairMode::Exhaustive => (all_pairs(m), true),
        PairMode::Sampled(n) => {
            if n == 0 {
                return Err(Error::InvalidParams("num_pairs must be >= 1".into()));
            }
            (sample_pairs(m, n, rng)?, false)
        }
    };
    let per_layer = record
        .layers
        .iter()
        .map(|l| layer_value(l, &pairs))
        .collect::<Result<Vec<_>>>()?;
    let network = per_layer.iter().sum::<f64>() / per_layer.len() as f64;
    Ok(OuiEstimate {
        per_layer,
        network,
        pairs_used: pairs.len(),
        exhaustive,
        batch_index: 0,
    })
}

/// Whether OUI is computed on batch `batch_index`.
pub fn should_compute(batch_index: usize, policy: &PairSamplePolicy) -> bool {
    batch_index % policy.batch_interval.max(1) == 0
}

/// Running mean of batch-level estimates over one epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochOuiAccumulator {
    sum: f64,
    layer_sums: Vec<f64>,
    count: usize,
}

impl EpochOuiAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, est: &OuiEstimate) {
        if self.layer_sums.is_empty() {
            self.layer_sums = vec![0.0; est.per_layer.len()];
        }
        self.sum += est.network;
        for (s, v) in self.layer_sums.iter_mut().zip(&est.per_layer) {
            *s += v;
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Epoch OUI, `None` before the first update.
    pub fn value(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }

    pub fn per_layer(&self) -> Vec<f64> {
        self.layer_sums
            .iter()
            .map(|s| s / self.count.max(1) as f64)
            .collect()
    }
}

/// `acc` with `est` folded in.
pub fn epoch_update(mut acc: EpochOuiAccumulator, est: &OuiEstimate) -> EpochOuiAccumulator {
    acc.update(est);
    acc
}

/// Closed OUI interval associated with balanced fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Band {
    pub low: f64,
    pub high: f64,
}

impl Default for Band {
    fn default() -> Self {
        Self { low: 0.6, high: 0.8 }
    }
}

impl From<[f64; 2]> for Band {
    fn from([low, high]: [f64; 2]) -> Self {
        Self { low, high }
    }
}

impl From<Band> for [f64; 2] {
    fn from(b: Band) -> Self {
        [b.low, b.high]
    }
}

impl Band {
    pub fn validate(&self) -> Result<()> {
        if self.low < self.high && self.low >= 0.0 && self.high <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidBand {
                low: self.low,
                high: self.high,
            })
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.low && v <= self.high
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.low + self.high)
    }

    /// Distance to the nearest band edge, 0 inside.
    pub fn distance(&self, v: f64) -> f64 {
        if v < self.low {
            self.low - v
        } else if v > self.high {
            v - self.high
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Underfit,
    Balanced,
    Overfit,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Underfit => "underfit",
            Regime::Balanced => "balanced",
            Regime::Overfit => "overfit",
        })
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "underfit" => Ok(Regime::Underfit),
            "balanced" => Ok(Regime::Balanced),
            "overfit" => Ok(Regime::Overfit),
            other => Err(Error::Format(format!("unknown regime `{other}`"))),
        }
    }
}

pub fn classify_regime(epoch_oui: f64, band: Band) -> Result<Regime> {
    band.validate()?;
    if !(0.0..=1.0).contains(&epoch_oui) {
        return Err(Error::InvalidParams(format!("OUI {epoch_oui} outside [0, 1]")));
    }
    Ok(if epoch_oui < band.low {
        Regime::Underfit
    } else if epoch_oui > band.high {
        Regime::Overfit
    } else {
        Regime::Balanced
    })
}
