//! Geometric resampling of frames and masks, and the ×4 augmentation.
//!
//! Everything here uses only `+ − × ÷` and `floor`, so results are bit-identical
//! across platforms (no libm transcendental calls).

use rand::Rng;

use super::sample::SequenceSample;
use crate::error::Result;
use crate::mask::Mask;
use crate::tensor::{Shape, Tensor};

pub const MAX_ROTATION_DEG: f64 = 5.0;
/// Fraction of the image area kept by the random crop.
pub const CROP_AREA: f64 = 0.9;

/// Bilinear sample of one channel plane at `(sy, sx)` (pixel-centre
/// coordinates), clamping to the border.
fn bilinear(plane: &[f32], h: usize, w: usize, sy: f64, sx: f64) -> f64 {
    let sy = sy.clamp(0.0, (h - 1) as f64);
    let sx = sx.clamp(0.0, (w - 1) as f64);
    let y0 = sy.floor() as usize;
    let x0 = sx.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = sy - y0 as f64;
    let fx = sx - x0 as f64;
    let at = |y: usize, x: usize| plane[y * w + x] as f64;
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
    let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Resamples a `1×3×H×W` frame onto `out_h × out_w`; `map` gives the source
/// coordinate of each output pixel.
pub fn warp_frame(frame: &Tensor<f32>, out_h: usize, out_w: usize, map: impl Fn(f64, f64) -> (f64, f64)) -> Tensor<f32> {
    let s = frame.shape();
    let mut out = Tensor::zeros(Shape::new(1, s.c, out_h, out_w));
    let plane = s.plane();
    for c in 0..s.c {
        let src = &frame.data()[c * plane..(c + 1) * plane];
        for y in 0..out_h {
            for x in 0..out_w {
                let (sy, sx) = map(y as f64, x as f64);
                let v = bilinear(src, s.h, s.w, sy, sx).clamp(0.0, 1.0);
                out.set(0, c, y, x, v as f32);
            }
        }
    }
    out
}

/// Nearest-neighbour counterpart of [`warp_frame`]; sources outside the mask
/// read as background.
pub fn warp_mask(mask: &Mask, out_h: usize, out_w: usize, map: impl Fn(f64, f64) -> (f64, f64)) -> Mask {
    let mut out = Mask::zeros(out_h, out_w);
    for y in 0..out_h {
        for x in 0..out_w {
            let (sy, sx) = map(y as f64, x as f64);
            let (ny, nx) = ((sy + 0.5).floor(), (sx + 0.5).floor());
            if ny >= 0.0 && nx >= 0.0 && (ny as usize) < mask.h && (nx as usize) < mask.w {
                out.set(y, x, mask.get(ny as usize, nx as usize) == 1);
            }
        }
    }
    out
}

fn scale_map(src: (usize, usize), dst: (usize, usize), origin: (f64, f64)) -> impl Fn(f64, f64) -> (f64, f64) {
    let ry = src.0 as f64 / dst.0 as f64;
    let rx = src.1 as f64 / dst.1 as f64;
    move |y, x| (origin.0 + (y + 0.5) * ry - 0.5, origin.1 + (x + 0.5) * rx - 0.5)
}

/// Bilinear resize with pixel-centre alignment.
pub fn resize_frame(frame: &Tensor<f32>, h: usize, w: usize) -> Tensor<f32> {
    let s = frame.shape();
    if (s.h, s.w) == (h, w) {
        return frame.clone();
    }
    warp_frame(frame, h, w, scale_map((s.h, s.w), (h, w), (0.0, 0.0)))
}

pub fn resize_mask(mask: &Mask, h: usize, w: usize) -> Mask {
    if (mask.h, mask.w) == (h, w) {
        return mask.clone();
    }
    warp_mask(mask, h, w, scale_map((mask.h, mask.w), (h, w), (0.0, 0.0)))
}

pub fn flip_frame(frame: &Tensor<f32>) -> Tensor<f32> {
    let s = frame.shape();
    Tensor::from_fn(s, |n, c, y, x| frame.at(n, c, y, s.w - 1 - x))
}

pub fn flip_mask(mask: &Mask) -> Mask {
    let mut out = Mask::zeros(mask.h, mask.w);
    for y in 0..mask.h {
        for x in 0..mask.w {
            out.set(y, x, mask.get(y, mask.w - 1 - x) == 1);
        }
    }
    out
}

/// `(sin θ, cos θ)` by Taylor series; exact to double precision for |θ| ≤ 0.2.
pub fn sin_cos_small(theta: f64) -> (f64, f64) {
    let t2 = theta * theta;
    let sin = theta * (1.0 - t2 / 6.0 * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0 * (1.0 - t2 / 72.0 * (1.0 - t2 / 110.0)))));
    let cos = 1.0 - t2 / 2.0 * (1.0 - t2 / 12.0 * (1.0 - t2 / 30.0 * (1.0 - t2 / 56.0 * (1.0 - t2 / 90.0))));
    (sin, cos)
}

fn rotation_map(h: usize, w: usize, degrees: f64) -> impl Fn(f64, f64) -> (f64, f64) {
    let (s, c) = sin_cos_small(degrees * std::f64::consts::PI / 180.0);
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    // Inverse rotation: where in the source does each output pixel come from.
    move |y, x| {
        let (dy, dx) = (y - cy, x - cx);
        (cy + c * dy - s * dx, cx + s * dy + c * dx)
    }
}

fn map_sample(
    sample: &SequenceSample,
    frame_fn: impl Fn(&Tensor<f32>) -> Tensor<f32>,
    mask_fn: impl Fn(&Mask) -> Mask,
) -> SequenceSample {
    SequenceSample {
        frames: sample.frames.iter().map(frame_fn).collect(),
        mask: mask_fn(&sample.mask),
        meta: sample.meta.clone(),
    }
}

pub fn flip(sample: &SequenceSample) -> SequenceSample {
    map_sample(sample, flip_frame, flip_mask)
}

pub fn rotate(sample: &SequenceSample, degrees: f64) -> SequenceSample {
    let (h, w) = sample.hw();
    map_sample(
        sample,
        |f| warp_frame(f, h, w, rotation_map(h, w, degrees)),
        |m| warp_mask(m, h, w, rotation_map(h, w, degrees)),
    )
}

/// Crops `ch × cw` at `(y0, x0)` and rescales back to the full size.
pub fn crop(sample: &SequenceSample, y0: usize, x0: usize, ch: usize, cw: usize) -> SequenceSample {
    let (h, w) = sample.hw();
    let origin = (y0 as f64, x0 as f64);
    map_sample(
        sample,
        |f| warp_frame(f, h, w, scale_map((ch, cw), (h, w), origin)),
        |m| warp_mask(m, h, w, scale_map((ch, cw), (h, w), origin)),
    )
}

/// The original followed by a horizontal flip, a rotation drawn from
/// U(±5°), and a random 90%-area crop rescaled to full size. Each transform is
/// applied identically to every frame and the mask.
pub fn augment<R: Rng>(sample: &SequenceSample, rng: &mut R) -> Result<[SequenceSample; 4]> {
    sample.validate()?;
    let (h, w) = sample.hw();
    let degrees = rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG);
    let side = CROP_AREA.sqrt();
    let ch = ((h as f64 * side + 0.5).floor() as usize).clamp(1, h);
    let cw = ((w as f64 * side + 0.5).floor() as usize).clamp(1, w);
    let y0 = rng.random_range(0..=h - ch);
    let x0 = rng.random_range(0..=w - cw);
    Ok([sample.clone(), flip(sample), rotate(sample, degrees), crop(sample, y0, x0, ch, cw)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sample::SampleMeta;
    use crate::SeededRng;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_sample(seed: u64, k: usize, h: usize, w: usize) -> SequenceSample {
        let mut rng = SeededRng::seed_from_u64(seed);
        let frames = (0..k)
            .map(|_| Tensor::from_fn(Shape::new(1, 3, h, w), |_, _, _, _| rng.random_range(0..=255u8) as f32 / 255.0))
            .collect();
        let mask = Mask::new(h, w, (0..h * w).map(|_| rng.random_range(0..2u8)).collect()).unwrap();
        let meta = SampleMeta {
            clip: "c".into(),
            frames: (1..=k).collect(),
            stride: 1,
        };
        SequenceSample::new(frames, mask, meta).unwrap()
    }

    #[test]
    fn taylor_sin_cos_matches_std() {
        for i in -100..=100 {
            let t = i as f64 * 0.002;
            let (s, c) = sin_cos_small(t);
            assert!((s - t.sin()).abs() < 1e-15, "{t}");
            assert!((c - t.cos()).abs() < 1e-15, "{t}");
        }
    }

    #[test]
    fn zero_rotation_and_full_crop_are_identity() {
        let s = random_sample(1, 2, 6, 10);
        assert_eq!(rotate(&s, 0.0), s);
        assert_eq!(crop(&s, 0, 0, 6, 10), s);
    }

    #[test]
    fn resize_identity_and_upscale_of_constant() {
        let f = Tensor::<f32>::full(Shape::new(1, 3, 4, 8), 0.25);
        let up = resize_frame(&f, 8, 16);
        assert!(up.data().iter().all(|&v| v == 0.25));
        let m = Mask::new(2, 2, vec![1, 0, 0, 1]).unwrap();
        let big = resize_mask(&m, 4, 4);
        assert_eq!(big.data, vec![1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1]);
    }

    #[test]
    fn augment_emits_four_valid_samples() {
        let s = random_sample(2, 5, 16, 32);
        let mut rng = SeededRng::seed_from_u64(0);
        let out = augment(&s, &mut rng).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(out[0], s);
        for a in &out {
            a.validate().unwrap();
            assert_eq!(a.k(), 5);
        }
    }

    proptest! {
        #[test]
        fn flip_is_an_involution(seed in 0u64..1000, h in 1usize..9, w in 1usize..9) {
            let s = random_sample(seed, 2, h, w);
            prop_assert_eq!(flip(&flip(&s)), s);
        }

        #[test]
        fn rotation_keeps_masks_binary(seed in 0u64..1000, deg in -5.0f64..5.0) {
            let s = random_sample(seed, 1, 12, 20);
            let r = rotate(&s, deg);
            prop_assert!(r.mask.data.iter().all(|&v| v <= 1));
            r.validate().unwrap();
        }
    }
}
