//! Normal-distribution helpers for pair-count planning.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.024_25;

/// Standard normal quantile `Φ⁻¹(p)` for `p ∈ (0, 1)`.
///
/// Acklam's rational approximation (relative error ~1.2e-9) followed by one
/// Halley step against `erfc`, which brings it to near machine precision.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = 0.5 * libm::erfc(-x * FRAC_1_SQRT_2) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Two-sided critical value `Z_{α/2}` for the given confidence `1 − α`.
pub fn z_critical(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidConfidence(confidence));
    }
    Ok(inverse_normal_cdf(1.0 - (1.0 - confidence) / 2.0))
}

/// Pairs needed to estimate a mean with margin `margin` at the given
/// confidence: `ceil((Z·σ / E)²)`.
pub fn sample_size(sigma: f64, margin: f64, confidence: f64) -> Result<u64> {
    let z = z_critical(confidence)?;
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParams(format!("sigma must be >= 0, got {sigma}")));
    }
    if !(margin > 0.0) {
        return Err(Error::InvalidParams(format!("margin must be > 0, got {margin}")));
    }
    Ok((z * sigma / margin).powi(2).ceil() as u64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Linear-interpolated quantile of already sorted data, `q ∈ [0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Quantiles computed with mpmath at 40 digits (root of ncdf(x) = p).
    const ORACLE: [(f64, f64); 12] = [
        (1e-10, -6.361_340_902_404_056),
        (1e-6, -4.753_424_308_822_899),
        (0.001, -3.090_232_306_167_813_5),
        (0.01, -2.326_347_874_040_841),
        (0.024_25, -1.972_961_051_311_884_9),
        (0.1, -1.281_551_565_544_600_5),
        (0.3, -0.524_400_512_708_040_8),
        (0.5, 0.0),
        (0.8, 0.841_621_233_572_914_2),
        (0.975, 1.959_963_984_540_054_2),
        (0.995, 2.575_829_303_548_900_8),
        (0.9999, 3.719_016_485_455_680_6),
    ];

    #[test]
    fn quantile_matches_high_precision_oracle() {
        for (p, want) in ORACLE {
            let got = inverse_normal_cdf(p);
            assert!((got - want).abs() <= 1e-6, "p={p}: {got} vs {want}");
        }
    }

    #[test]
    fn z_at_95_percent() {
        assert!((z_critical(0.95).unwrap() - 1.959_963_984_540_054).abs() < 1e-9);
        assert!(matches!(z_critical(1.0), Err(Error::InvalidConfidence(_))));
        assert!(matches!(z_critical(0.0), Err(Error::InvalidConfidence(_))));
    }

    #[test]
    fn sample_size_cases() {
        // (1.95996 · 0.05 / 0.05)² = 3.8415
        assert_eq!(sample_size(0.05, 0.05, 0.95).unwrap(), 4);
        assert_eq!(sample_size(0.0, 0.05, 0.95).unwrap(), 0);
        // (1.95996 · 0.111 / 0.05)² = 18.932
        assert_eq!(sample_size(0.111, 0.05, 0.95).unwrap(), 19);
        assert!(sample_size(0.1, 0.0, 0.95).is_err());
        assert!(sample_size(-0.1, 0.05, 0.95).is_err());
    }

    #[test]
    fn quantiles() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.0);
        assert_eq!(quantile_sorted(&v, 0.95), 3.8);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
    }
}
