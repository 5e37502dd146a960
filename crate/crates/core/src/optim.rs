//! SGD with momentum and per-epoch learning-rate schedules.
//!
//! Weight decay is not applied here: the `2λω` term already arrives through
//! the gradient of the penalized loss.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct SgdState {
    pub momentum: f64,
    pub lr: f64,
    velocity: Vec<Tensor>,
}

impl SgdState {
    pub fn new(params: &[Tensor], momentum: f64, lr: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidParams(format!("momentum must be in [0, 1), got {momentum}")));
        }
        if !(lr > 0.0) {
            return Err(Error::InvalidParams(format!("learning rate must be > 0, got {lr}")));
        }
        Ok(Self {
            momentum,
            lr,
            velocity: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        })
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }
}

/// `v ← μ·v + g; w ← w − η·v` for every parameter.
pub fn sgd_step(params: &mut [Tensor], grads: &[Tensor], state: &mut SgdState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} params, {} grads, {} velocities",
            params.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    for ((p, g), v) in params.iter().zip(grads).zip(&state.velocity) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(Error::ShapeMismatch(format!(
                "param {:?} vs grad {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    let (mu, lr) = (state.momentum, state.lr);
    for ((p, g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        for ((w, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vi = mu * *vi + gi;
            *w -= lr * *vi;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Constant {
        lr: f64,
    },
    Cosine {
        lr_start: f64,
        lr_end: f64,
    },
    /// Linear ramp `lr_start → lr_peak` over `warmup_epochs`, then cosine
    /// `lr_peak → lr_end` over the remaining epochs.
    WarmupCosine {
        lr_start: f64,
        lr_peak: f64,
        warmup_epochs: usize,
        lr_end: f64,
    },
}

impl Schedule {
    /// Problems with this schedule for a run of `total` epochs.
    pub fn problems(&self, total: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("schedule.{name} must be > 0, got {v}"));
            }
        };
        match *self {
            Schedule::Constant { lr } => positive("lr", lr),
            Schedule::Cosine { lr_start, lr_end } => {
                positive("lr_start", lr_start);
                if !(lr_end >= 0.0) {
                    out.push(format!("schedule.lr_end must be >= 0, got {lr_end}"));
                }
            }
            Schedule::WarmupCosine {
                lr_start,
                lr_peak,
                warmup_epochs,
                lr_end,
            } => {
                positive("lr_start", lr_start);
                positive("lr_peak", lr_peak);
                if !(lr_end >= 0.0) {
                    out.push(format!("schedule.lr_end must be >= 0, got {lr_end}"));
                }
                if total > 0 && warmup_epochs >= total {
                    out.push(format!(
                        "schedule.warmup_epochs ({warmup_epochs}) must be < epochs ({total})"
                    ));
                }
            }
        }
        out
    }

    /// Largest learning rate the schedule ever reaches.
    pub fn peak(&self) -> f64 {
        match *self {
            Schedule::Constant { lr } => lr,
            Schedule::Cosine { lr_start, lr_end } => lr_start.max(lr_end),
            Schedule::WarmupCosine {
                lr_start,
                lr_peak,
                lr_end,
                ..
            } => lr_start.max(lr_peak).max(lr_end),
        }
    }
}

fn cosine(start: f64, end: f64, t: f64, span: f64) -> f64 {
    end + 0.5 * (start - end) * (1.0 + (PI * t / span).cos())
}

/// Learning rate at epoch `t` of `total`.
pub fn lr_at(schedule: &Schedule, t: usize, total: usize) -> Result<f64> {
    if t > total {
        return Err(Error::EpochOutOfRange { epoch: t, total });
    }
    Ok(match *schedule {
        Schedule::Constant { lr } => lr,
        Schedule::Cosine { lr_start, lr_end } => {
            if total == 0 {
                lr_start
            } else {
                cosine(lr_start, lr_end, t as f64, total as f64)
            }
        }
        Schedule::WarmupCosine {
            lr_start,
            lr_peak,
            warmup_epochs,
            lr_end,
        } => {
            if t < warmup_epochs {
                lr_start + (lr_peak - lr_start) * t as f64 / warmup_epochs as f64
            } else if total <= warmup_epochs {
                lr_peak
            } else {
                cosine(
                    lr_peak,
                    lr_end,
                    (t - warmup_epochs) as f64,
                    (total - warmup_epochs) as f64,
                )
            }
        }
    })
}

/// Weights after `steps` plain-SGD updates driven only by the penalty
/// gradient `2λw`: `w·(1 − 2ηλ)^steps`.
///
/// Fails with [`Error::Divergence`] when the contraction factor is at or
/// below −1, where the iterates oscillate without decaying or blow up.
pub fn decay_only_dynamics(w: &Tensor, lambda: f64, lr: f64, steps: u32) -> Result<Tensor> {
    if !(lambda >= 0.0) || !(lr > 0.0) {
        return Err(Error::InvalidParams(format!("need lambda >= 0 and lr > 0, got {lambda}, {lr}")));
    }
    let factor = 1.0 - 2.0 * lr * lambda;
    if factor <= -1.0 {
        return Err(Error::Divergence { factor });
    }
    let scale = factor.powi(steps as i32);
    Ok(w.map(|v| v * scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::new(vec![1], vec![v]).unwrap()
    }

    #[test]
    fn momentum_recurrence() {
        let mut params = vec![scalar(1.0)];
        let grads = vec![scalar(1.0)];
        let mut st = SgdState::new(&params, 0.9, 0.1).unwrap();
        sgd_step(&mut params, &grads, &mut st).unwrap();
        assert!((st.velocity()[0].data()[0] - 1.0).abs() < 1e-15);
        assert!((params[0].data()[0] - 0.9).abs() < 1e-15);
        sgd_step(&mut params, &grads, &mut st).unwrap();
        assert!((st.velocity()[0].data()[0] - 1.9).abs() < 1e-15);
        assert!((params[0].data()[0] - 0.71).abs() < 1e-15);
    }

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut params = vec![Tensor::new(vec![2], vec![1.0, -2.0]).unwrap()];
        let grads = vec![Tensor::new(vec![2], vec![0.5, 4.0]).unwrap()];
        let mut st = SgdState::new(&params, 0.0, 0.1).unwrap();
        for _ in 0..2 {
            sgd_step(&mut params, &grads, &mut st).unwrap();
        }
        assert!((params[0].data()[0] - 0.9).abs() < 1e-15);
        assert!((params[0].data()[1] - (-2.8)).abs() < 1e-15);
    }

    #[test]
    fn step_rejects_mismatched_shapes() {
        let mut params = vec![scalar(1.0)];
        let mut st = SgdState::new(&params, 0.9, 0.1).unwrap();
        let bad = vec![Tensor::zeros(&[2])];
        assert!(sgd_step(&mut params, &bad, &mut st).is_err());
        assert!(sgd_step(&mut params, &[], &mut st).is_err());
    }

    #[test]
    fn cosine_boundaries_and_midpoint() {
        let s = Schedule::Cosine {
            lr_start: 0.1,
            lr_end: 0.0,
        };
        assert_eq!(lr_at(&s, 0, 40).unwrap(), 0.1);
        assert!(lr_at(&s, 40, 40).unwrap().abs() < 1e-17);
        assert!((lr_at(&s, 20, 40).unwrap() - 0.05).abs() < 1e-15);
        assert!(matches!(
            lr_at(&s, 41, 40),
            Err(Error::EpochOutOfRange { epoch: 41, total: 40 })
        ));
    }

    #[test]
    fn warmup_is_linear_then_continuous() {
        let s = Schedule::WarmupCosine {
            lr_start: 0.01,
            lr_peak: 0.1,
            warmup_epochs: 5,
            lr_end: 0.0,
        };
        assert_eq!(lr_at(&s, 0, 90).unwrap(), 0.01);
        assert!((lr_at(&s, 2, 90).unwrap() - 0.046).abs() < 1e-15);
        // left limit of the ramp and the cosine start both equal the peak
        let ramp_end = 0.01 + (0.1 - 0.01) * 5.0 / 5.0;
        assert!((ramp_end - 0.1f64).abs() < 1e-15);
        assert_eq!(lr_at(&s, 5, 90).unwrap(), 0.1);
        assert!(lr_at(&s, 90, 90).unwrap().abs() < 1e-17);
        assert!(!s.problems(5).is_empty());
    }

    #[test]
    fn decay_only_cases() {
        let w = scalar(1.0);
        assert_eq!(decay_only_dynamics(&w, 0.0, 0.1, 10).unwrap(), w);
        let one = decay_only_dynamics(&w, 0.5, 0.1, 1).unwrap();
        assert!((one.data()[0] - 0.9).abs() < 1e-15);
        // 2ηλ = 2 gives factor -1
        assert!(matches!(
            decay_only_dynamics(&w, 1.0, 1.0, 3),
            Err(Error::Divergence { factor }) if factor == -1.0
        ));
    }

    #[test]
    fn decay_only_matches_sgd_iterates() {
        let (lambda, lr) = (0.3, 0.5);
        let mut params = vec![Tensor::new(vec![3], vec![1.0, -0.5, 2.0]).unwrap()];
        let start = params[0].clone();
        let mut st = SgdState::new(&params, 0.0, lr).unwrap();
        let mut prev_norm = crate::tensor::l2_norm_sq(&params);
        for _ in 0..6 {
            let g = vec![params[0].map(|w| 2.0 * lambda * w)];
            sgd_step(&mut params, &g, &mut st).unwrap();
            let norm = crate::tensor::l2_norm_sq(&params);
            assert!(norm < prev_norm);
            prev_norm = norm;
        }
        let closed = decay_only_dynamics(&start, lambda, lr, 6).unwrap();
        for (a, b) in closed.data().iter().zip(params[0].data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
