//! Sampled-versus-exhaustive estimator study on recorded patterns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oui::{oui_network, pair_values, PairSamplePolicy};
use crate::pattern::ActivationRecord;
use crate::stats::{mean_std, quantile_sorted, sample_size};
use crate::tensor::RngStream;

/// Quantiles of `|estimate − exhaustive|` reported by the study.
pub const ERROR_QUANTILES: [f64; 5] = [0.5, 0.9, 0.95, 0.99, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStudy {
    pub trials: usize,
    pub num_pairs: usize,
    pub margin: f64,
    /// Fraction of trials with `|error| ≤ margin`.
    pub within_margin: f64,
    pub mean_bias: f64,
    /// Standard error of `mean_bias`.
    pub bias_std_error: f64,
    /// `(q, |error| quantile)` for each of [`ERROR_QUANTILES`].
    pub abs_error_quantiles: Vec<(f64, f64)>,
    /// Population σ of per-pair layer values, pooled over records.
    pub layer_sigma: Vec<f64>,
    /// Pairs needed per layer for the margin at 95% confidence.
    pub layer_sample_size: Vec<u64>,
}

/// Runs `trials` sampled estimates (record `t mod records.len()` for trial
/// `t`) and compares each with the exhaustive value of the same record.
pub fn estimator_study(
    records: &[ActivationRecord],
    num_pairs: usize,
    trials: usize,
    margin: f64,
    seed: u64,
) -> Result<EstimatorStudy> {
    if records.is_empty() || trials == 0 {
        return Err(Error::InsufficientSamples(0));
    }
    let exhaustive_policy = PairSamplePolicy::exhaustive(1);
    let sampled_policy = PairSamplePolicy::sampled(num_pairs, 1);
    let mut scratch = RngStream::new(seed);
    let truth = records
        .iter()
        .map(|r| oui_network(r, &exhaustive_policy, &mut scratch).map(|e| e.network))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = RngStream::new(seed).fork(1);
    let errors = (0..trials)
        .map(|t| {
            let i = t % records.len();
            oui_network(&records[i], &sampled_policy, &mut rng).map(|e| e.network - truth[i])
        })
        .collect::<Result<Vec<_>>>()?;

    let (mean_bias, sd) = mean_std(&errors);
    let n = errors.len() as f64;
    let bias_std_error = if n > 1.0 { sd * (n / (n - 1.0)).sqrt() / n.sqrt() } else { f64::NAN };
    let mut abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let within = abs.iter().filter(|&&e| e <= margin).count() as f64 / n;

    let layers = records[0].num_layers();
    let mut layer_sigma = Vec::with_capacity(layers);
    let mut layer_sample_size = Vec::with_capacity(layers);
    for l in 0..layers {
        let pooled: Vec<f64> = records.iter().flat_map(|r| pair_values(&r.layers[l])).collect();
        let sigma = mean_std(&pooled).1;
        layer_sigma.push(sigma);
        layer_sample_size.push(sample_size(sigma, margin, 0.95)?);
    }

    Ok(EstimatorStudy {
        trials,
        num_pairs,
        margin,
        within_margin: within,
        mean_bias,
        bias_std_error,
        abs_error_quantiles: ERROR_QUANTILES.iter().map(|&q| (q, quantile_sorted(&abs, q))).collect(),
        layer_sigma,
        layer_sample_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::PatternMatrix;

    fn random_record(rng: &mut RngStream, m: usize, widths: &[usize], p_on: f64) -> ActivationRecord {
        use rand::Rng;
        ActivationRecord::new(
            widths
                .iter()
                .map(|&w| {
                    let rows: Vec<Vec<u8>> = (0..m)
                        .map(|_| (0..w).map(|_| rng.random_bool(p_on) as u8).collect())
                        .collect();
                    PatternMatrix::from_rows(&rows).unwrap()
                })
                .collect(),
        )
    }

    #[test]
    fn all_pairs_sampled_is_exact() {
        let mut rng = RngStream::new(5);
        let rec = random_record(&mut rng, 8, &[10, 6], 0.3);
        let s = estimator_study(&[rec], 28, 20, 0.05, 1).unwrap();
        assert_eq!(s.within_margin, 1.0);
        assert!(s.mean_bias.abs() < 1e-12);
    }

    #[test]
    fn identical_patterns_have_zero_sigma() {
        let row = vec![1u8, 0, 1, 1];
        let layer = PatternMatrix::from_rows(&vec![row; 10]).unwrap();
        let s = estimator_study(&[ActivationRecord::new(vec![layer])], 5, 10, 0.05, 0).unwrap();
        assert_eq!(s.layer_sigma, vec![0.0]);
        assert_eq!(s.layer_sample_size, vec![0]);
        assert_eq!(s.abs_error_quantiles.last().unwrap().1, 0.0);
    }

    #[test]
    fn sampled_estimate_is_unbiased() {
        let mut rng = RngStream::new(9);
        let recs: Vec<_> = (0..4).map(|_| random_record(&mut rng, 64, &[32, 16], 0.2)).collect();
        let s = estimator_study(&recs, 28, 1000, 0.05, 3).unwrap();
        assert!(s.mean_bias.abs() <= 3.0 * s.bias_std_error, "{s:?}");
    }

    #[test]
    fn rejects_empty_input() {
        assert!(estimator_study(&[], 28, 10, 0.05, 0).is_err());
    }
}
