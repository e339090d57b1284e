//! Class-weighted binary cross-entropy over 2-channel log-probabilities.
//!
//! `loss = -(1/S) Σ [ w·y·log h + (1-y)·log(1-h) ]`, with `h` the lane-channel
//! probability and `S = n·H·W`. For normalised input `log(1-h)` is the background
//! channel itself, so both logs are read directly from the tensor and floored at
//! `ln 1e-7`.

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::{Scalar, Tensor};

/// Lower bound applied to both log-probabilities.
pub const LOG_FLOOR: f64 = -16.118_095_650_958_32; // ln(1e-7)

/// Allowed deviation of `exp(l0) + exp(l1)` from 1.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Multiplier on lane-pixel terms.
    pub weight: f64,
}

impl LossConfig {
    pub fn new(weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::config(format!("class weight must be > 0, got {weight}")));
        }
        Ok(LossConfig { weight })
    }
}

fn validate<T: Scalar>(logp: &Tensor<T>, target: &[u8], weight: f64) -> Result<()> {
    let s = logp.shape();
    if s.c != 2 {
        return Err(Error::usage(format!("loss expects 2 channels, got {}", s.c)));
    }
    if target.len() != s.n * s.plane() {
        return Err(Error::usage(format!(
            "target has {} pixels, prediction has {}",
            target.len(),
            s.n * s.plane()
        )));
    }
    if !(weight > 0.0) {
        return Err(Error::usage("class weight must be positive"));
    }
    if target.iter().any(|&y| y > 1) {
        return Err(Error::usage("targets must be 0 or 1"));
    }
    let plane = s.plane();
    for n in 0..s.n {
        let d = logp.sample(n);
        for p in 0..plane {
            let total = d[p].to_f64_lossy().exp() + d[plane + p].to_f64_lossy().exp();
            if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(Error::usage(format!(
                    "log-probabilities not normalised at sample {n}, pixel {p} (sum of probabilities {total})"
                )));
            }
        }
    }
    Ok(())
}

pub fn weighted_bce_forward<T: Scalar>(logp: &Tensor<T>, target: &[u8], weight: f64) -> Result<T> {
    validate(logp, target, weight)?;
    let s = logp.shape();
    let plane = s.plane();
    let mut acc = 0.0f64;
    for n in 0..s.n {
        let d = logp.sample(n);
        for p in 0..plane {
            acc += if target[n * plane + p] == 1 {
                weight * d[plane + p].to_f64_lossy().max(LOG_FLOOR)
            } else {
                d[p].to_f64_lossy().max(LOG_FLOOR)
            };
        }
    }
    Ok(T::from_f64_lossy(-acc / (s.n * plane) as f64))
}

pub fn weighted_bce_backward<T: Scalar>(logp: &Tensor<T>, target: &[u8], weight: f64, seed: T) -> Tensor<T> {
    let s = logp.shape();
    let plane = s.plane();
    let scale = -seed.to_f64_lossy() / (s.n * plane) as f64;
    let lane = T::from_f64_lossy(scale * weight);
    let background = T::from_f64_lossy(scale);
    let floor = T::from_f64_lossy(LOG_FLOOR);
    let mut g = Tensor::zeros(s);
    for n in 0..s.n {
        let d = logp.sample(n).to_vec();
        let gs = g.sample_mut(n);
        for p in 0..plane {
            if target[n * plane + p] == 1 {
                if d[plane + p] > floor {
                    gs[plane + p] = lane;
                }
            } else if d[p] > floor {
                gs[p] = background;
            }
        }
    }
    g
}

/// Convenience evaluation without a tape.
pub fn weighted_bce_loss<T: Scalar>(logp: &Tensor<T>, target: &[u8], cfg: &LossConfig) -> Result<T> {
    weighted_bce_forward(logp, target, cfg.weight)
}

/// Per-pixel argmax over the two channels, one mask per sample. Exact ties go
/// to background.
pub fn predict_mask<T: Scalar>(logp: &Tensor<T>) -> Result<Vec<Mask>> {
    let s = logp.shape();
    if s.c != 2 {
        return Err(Error::usage(format!("prediction expects 2 channels, got {}", s.c)));
    }
    let plane = s.plane();
    Ok((0..s.n)
        .map(|n| {
            let d = logp.sample(n);
            Mask {
                h: s.h,
                w: s.w,
                data: (0..plane).map(|p| (d[plane + p] > d[p]) as u8).collect(),
            }
        })
        .collect())
}

/// `non-lane pixels / lane pixels`, pooled over every mask.
pub fn class_weight<'a>(masks: impl IntoIterator<Item = &'a Mask>) -> Result<f64> {
    let (mut lane, mut total) = (0u64, 0u64);
    for m in masks {
        lane += m.lane_pixels() as u64;
        total += m.len() as u64;
    }
    if lane == 0 {
        return Err(Error::usage("class weight undefined: no lane pixels in the training masks"));
    }
    Ok((total - lane) as f64 / lane as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::log_softmax_channels;
    use crate::tensor::Shape;

    fn probs(h: f64) -> Tensor<f64> {
        Tensor::from_vec(Shape::new(1, 2, 1, 1), vec![(1.0 - h).ln(), h.ln()]).unwrap()
    }

    #[test]
    fn single_pixel_hand_value() {
        let l = weighted_bce_forward(&probs(0.5), &[1], 2.0).unwrap();
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((l - 1.38629).abs() < 1e-5);
    }

    #[test]
    fn confident_prediction_has_zero_loss() {
        let sure_lane = Tensor::from_vec(Shape::new(1, 2, 1, 1), vec![f64::NEG_INFINITY, 0.0]).unwrap();
        assert_eq!(weighted_bce_forward(&sure_lane, &[1], 3.0).unwrap(), 0.0);
        let sure_bg = Tensor::from_vec(Shape::new(1, 2, 1, 1), vec![0.0, -1e9]).unwrap();
        assert_eq!(weighted_bce_forward(&sure_bg, &[0], 3.0).unwrap(), 0.0);
    }

    #[test]
    fn unit_weight_is_plain_bce() {
        let logits = Tensor::from_fn(Shape::new(2, 2, 3, 3), |n, c, y, x| ((n + 3 * c + y * x) % 5) as f64 * 0.7 - 1.2);
        let logp = log_softmax_channels(&logits).unwrap();
        let target: Vec<u8> = (0..18).map(|i| (i % 3 == 0) as u8).collect();
        let ours = weighted_bce_forward(&logp, &target, 1.0).unwrap();
        let mut plain = 0.0;
        for (i, &y) in target.iter().enumerate() {
            let (n, p) = (i / 9, i % 9);
            let h = logp.sample(n)[9 + p].exp();
            plain -= y as f64 * h.ln() + (1.0 - y as f64) * (1.0 - h).ln();
        }
        plain /= 18.0;
        assert!((ours - plain).abs() < 1e-7);
    }

    #[test]
    fn rejects_unnormalised_input() {
        let bad = Tensor::from_vec(Shape::new(1, 2, 1, 1), vec![0.0f64, 0.0]).unwrap();
        assert!(matches!(weighted_bce_forward(&bad, &[1], 1.0), Err(Error::Usage(_))));
    }

    #[test]
    fn loss_decreases_toward_target() {
        let mut last = f64::INFINITY;
        for h in [0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
            let l = weighted_bce_forward(&probs(h), &[1], 4.0).unwrap();
            assert!(l >= 0.0 && l < last);
            last = l;
        }
    }

    #[test]
    fn argmax_tie_is_background() {
        let half = 0.5f64.ln();
        let tie = Tensor::full(Shape::new(2, 2, 3, 4), half);
        let masks = predict_mask(&tie).unwrap();
        assert_eq!(masks.len(), 2);
        assert!(masks.iter().all(|m| m.lane_pixels() == 0 && m.h == 3 && m.w == 4));
        let lane = predict_mask(&probs(0.51)).unwrap();
        assert_eq!(lane[0].data, vec![1]);
    }

    #[test]
    fn argmax_ignores_logit_shift() {
        let logits = Tensor::from_fn(Shape::new(1, 2, 4, 4), |_, c, y, x| ((c * 7 + y * 3 + x) % 6) as f64 - 2.5);
        let shifted = Tensor::from_fn(logits.shape(), |n, c, y, x| logits.at(n, c, y, x) + (y * 4 + x) as f64 * 1.75);
        let a = predict_mask(&log_softmax_channels(&logits).unwrap()).unwrap();
        let b = predict_mask(&log_softmax_channels(&shifted).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn class_weight_pooled_counts() {
        let quarter = Mask::new(2, 2, vec![1, 0, 0, 0]).unwrap();
        assert_eq!(class_weight([&quarter]).unwrap(), 3.0);
        let half = Mask::new(1, 2, vec![1, 0]).unwrap();
        assert_eq!(class_weight([&half]).unwrap(), 1.0);
        let mut ten = Mask::zeros(1, 10);
        ten.set(0, 0, true);
        let mut thirty = Mask::zeros(1, 10);
        for x in 0..3 {
            thirty.set(0, x, true);
        }
        assert!((class_weight([&ten, &thirty]).unwrap() - 4.0).abs() < 1e-12);
        assert!(matches!(class_weight([&Mask::zeros(2, 2)]), Err(Error::Usage(_))));
    }
}
