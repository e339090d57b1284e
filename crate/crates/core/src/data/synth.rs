//! Parametric road scenes with exact lane ground truth.
//!
//! Lanes are quadratics in the distance `u` from the bottom row:
//! `x(u, t) = offset + drift·(t − t_K) + slope·u + curvature·u²`, drawn with a
//! fixed stroke. The mask is computed from the curves of the last frame and
//! ignores occluders, so a lane hidden in frame K is still labelled.
//! Rendering uses only `+ − × ÷ sqrt floor`, keeping samples bit-identical
//! across platforms.

use rand::{Rng, SeedableRng};

use super::sample::{sample_windows, SampleMeta, SequenceSample};
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::{Shape, Tensor};
use crate::SeededRng;

/// Reference width at which the stroke is 2 px wide.
const REFERENCE_WIDTH: f64 = 64.0;

#[derive(Clone, Debug, PartialEq)]
pub struct LaneSpec {
    /// x at the bottom row in the last frame, pixels.
    pub offset: f64,
    pub slope: f64,
    pub curvature: f64,
    /// Painted `(on, off)` lengths along the lane in pixels; `None` is solid.
    pub dash: Option<(f64, f64)>,
    pub color: [f64; 3],
}

impl LaneSpec {
    pub fn x_at(&self, u: f64, shift: f64) -> f64 {
        self.offset + shift + self.slope * u + self.curvature * u * u
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Occluder {
    /// Top-left corner and size in the last frame, pixels.
    pub y: f64,
    pub x: f64,
    pub h: f64,
    pub w: f64,
    /// Motion per frame number, pixels.
    pub vy: f64,
    pub vx: f64,
    /// Visibility for each of the K frames.
    pub visible: Vec<bool>,
    pub color: [f64; 3],
}

impl Occluder {
    fn covers(&self, y: f64, x: f64, dt: f64) -> bool {
        let top = self.y + self.vy * dt;
        let left = self.x + self.vx * dt;
        y >= top && y < top + self.h && x >= left && x < left + self.w
    }
}

/// Bright glare blob: adds `amplitude / (1 + d²/r²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dazzle {
    pub y: f64,
    pub x: f64,
    pub radius: f64,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub hw: (usize, usize),
    pub clip: String,
    /// Frame numbers of the K rendered frames; the last one is labelled.
    pub frames: Vec<usize>,
    pub stride: usize,
    pub lanes: Vec<LaneSpec>,
    /// Lateral ego drift per frame number, pixels.
    pub drift: f64,
    /// Dash pattern advance per frame number, pixels.
    pub dash_speed: f64,
    pub occluders: Vec<Occluder>,
    pub road: [f64; 3],
    /// Relative brightness change from the bottom to the top row.
    pub gradient: f64,
    pub dazzle: Option<Dazzle>,
    pub noise: f64,
    pub seed: u64,
}

/// Which test condition a random scene reproduces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Zero to two vehicles visible in every frame.
    Normal,
    /// Two or three large occluders over lanes in the last frame only.
    OccludedLast,
}

impl SynthSpec {
    pub fn half_stroke(&self) -> f64 {
        self.hw.1 as f64 / REFERENCE_WIDTH
    }

    fn last(&self) -> f64 {
        *self.frames.last().unwrap_or(&0) as f64
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.hw;
        if h < 4 || w < 4 {
            return Err(Error::usage(format!("scene {h}x{w} is too small")));
        }
        if !(2..=5).contains(&self.lanes.len()) {
            return Err(Error::usage(format!("scenes have 2 to 5 lanes, got {}", self.lanes.len())));
        }
        if self.frames.is_empty() || self.frames.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::usage("frame numbers must be non-empty and increasing"));
        }
        if self.occluders.iter().any(|o| o.visible.len() != self.frames.len() || o.h <= 0.0 || o.w <= 0.0) {
            return Err(Error::usage("each occluder needs a positive size and one visibility flag per frame"));
        }
        if !(self.noise >= 0.0) || self.lanes.iter().any(|l| matches!(l.dash, Some((on, off)) if on <= 0.0 || off < 0.0)) {
            return Err(Error::usage("noise and dash lengths must be non-negative"));
        }
        let half = self.half_stroke();
        for &t in &self.frames {
            let shift = self.drift * (t as f64 - self.last());
            for lane in &self.lanes {
                for y in 0..h {
                    let x = lane.x_at(h as f64 - 0.5 - y as f64 - 0.5, shift);
                    if x < half || x > w as f64 - half {
                        return Err(Error::usage(format!("lane leaves the image at row {y} of frame {t}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Draws a random scene whose lanes stay inside the image in every frame.
    pub fn random<R: Rng>(rng: &mut R, hw: (usize, usize), labeled: usize, stride: usize, k: usize, scenario: Scenario) -> Result<Self> {
        let frames = sample_windows(labeled, stride, k)?;
        for _ in 0..1000 {
            let spec = Self::draw(rng, hw, frames.clone(), stride, scenario);
            if spec.validate().is_ok() {
                return Ok(spec);
            }
        }
        Err(Error::usage(format!("could not place lanes in a {}x{} scene", hw.0, hw.1)))
    }

    fn draw<R: Rng>(rng: &mut R, hw: (usize, usize), frames: Vec<usize>, stride: usize, scenario: Scenario) -> Self {
        let (h, w) = (hw.0 as f64, hw.1 as f64);
        let s = w / REFERENCE_WIDTH;
        let n = rng.random_range(2..=5usize);
        let vanish = w * (0.5 + rng.random_range(-0.1..0.1));
        let bend = w * rng.random_range(-0.08..0.08);
        let top = h - 1.0;
        let curvature = bend / (top * top);
        let lanes = (0..n)
            .map(|i| {
                let bottom = w * (0.1 + 0.8 * (i as f64 + 0.5) / n as f64) + w * rng.random_range(-0.03..0.03);
                let at_top = vanish + (bottom - vanish) * rng.random_range(0.2..0.35);
                let dash = rng
                    .random_bool(0.5)
                    .then(|| (s * rng.random_range(4.0..8.0), s * rng.random_range(3.0..6.0)));
                let color = if i == 0 && rng.random_bool(0.3) {
                    [0.95, 0.8, 0.2]
                } else {
                    let g = rng.random_range(0.85..1.0);
                    [g, g, g]
                };
                LaneSpec {
                    offset: bottom,
                    slope: (at_top - bottom - bend) / top,
                    curvature,
                    dash,
                    color,
                }
            })
            .collect::<Vec<_>>();
        let g = rng.random_range(0.25..0.45);
        let road = [g, g * rng.random_range(0.95..1.05), g * rng.random_range(0.95..1.1)];
        let dazzle = rng.random_bool(0.3).then(|| Dazzle {
            y: h * rng.random_range(0.0..0.6),
            x: w * rng.random_range(0.0..1.0),
            radius: w * rng.random_range(0.1..0.3),
            amplitude: rng.random_range(0.1..0.35),
        });
        let k = frames.len();
        let dark = |rng: &mut R| {
            let v = rng.random_range(0.05..0.25);
            [v, v * rng.random_range(0.8..1.2), v * rng.random_range(0.8..1.2)]
        };
        let mut occluders = Vec::new();
        match scenario {
            Scenario::Normal => {
                for _ in 0..rng.random_range(0..=2) {
                    let (oh, ow) = (h * rng.random_range(0.15..0.3), w * rng.random_range(0.12..0.25));
                    occluders.push(Occluder {
                        y: rng.random_range(0.3 * h..h - oh),
                        x: rng.random_range(0.0..w - ow),
                        h: oh,
                        w: ow,
                        vy: s * rng.random_range(-0.3..0.3),
                        vx: s * rng.random_range(-1.0..1.0),
                        visible: vec![true; k],
                        color: dark(rng),
                    });
                }
            }
            Scenario::OccludedLast => {
                for _ in 0..rng.random_range(2..=3) {
                    let lane = &lanes[rng.random_range(0..n)];
                    let yc = h * rng.random_range(0.35..0.8);
                    let xc = lane.x_at(h - 0.5 - yc, 0.0);
                    let (oh, ow) = (h * rng.random_range(0.45..0.7), w * rng.random_range(0.25..0.4));
                    let mut visible = vec![false; k];
                    visible[k - 1] = true;
                    occluders.push(Occluder {
                        y: yc - oh * rng.random_range(0.3..0.7),
                        x: xc - ow * rng.random_range(0.3..0.7),
                        h: oh,
                        w: ow,
                        vy: 0.0,
                        vx: 0.0,
                        visible,
                        color: dark(rng),
                    });
                }
            }
        }
        SynthSpec {
            hw,
            clip: String::new(),
            frames,
            stride,
            lanes,
            drift: s * rng.random_range(-0.3..0.3),
            dash_speed: s * rng.random_range(1.0..3.0),
            occluders,
            road,
            gradient: rng.random_range(-0.3..0.3),
            dazzle,
            noise: rng.random_range(0.0..0.04),
            seed: rng.random(),
        }
    }

    /// Whether any occluder visible in the last frame covers a lane pixel.
    pub fn last_frame_occludes_lane(&self) -> bool {
        let mask = render_mask(self);
        let k = self.frames.len() - 1;
        self.occluders.iter().filter(|o| o.visible[k]).any(|o| {
            (0..mask.h).any(|y| (0..mask.w).any(|x| mask.get(y, x) == 1 && o.covers(y as f64 + 0.5, x as f64 + 0.5, 0.0)))
        })
    }
}

fn on_stroke(lane: &LaneSpec, y: usize, x: usize, h: usize, shift: f64, half: f64) -> bool {
    let u = h as f64 - 0.5 - (y as f64 + 0.5);
    let d = x as f64 + 0.5 - lane.x_at(u, shift);
    d * d <= half * half
}

pub fn render_mask(spec: &SynthSpec) -> Mask {
    let (h, w) = spec.hw;
    let half = spec.half_stroke();
    let mut mask = Mask::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            if spec.lanes.iter().any(|l| on_stroke(l, y, x, h, 0.0, half)) {
                mask.set(y, x, true);
            }
        }
    }
    mask
}

fn render_frame<R: Rng>(spec: &SynthSpec, index: usize, rng: &mut R) -> Tensor<f32> {
    let (h, w) = spec.hw;
    let t = spec.frames[index] as f64;
    let dt = t - spec.last();
    let shift = spec.drift * dt;
    let half = spec.half_stroke();
    let mut frame = Tensor::zeros(Shape::new(1, 3, h, w));
    for y in 0..h {
        let light = 1.0 + spec.gradient * (0.5 - (y as f64 + 0.5) / h as f64);
        for x in 0..w {
            let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
            let mut rgb = spec.road.map(|c| c * light);
            for lane in &spec.lanes {
                if !on_stroke(lane, y, x, h, shift, half) {
                    continue;
                }
                let painted = match lane.dash {
                    None => true,
                    Some((on, off)) => {
                        let along = h as f64 - py + spec.dash_speed * t;
                        let period = on + off;
                        along - (along / period).floor() * period < on
                    }
                };
                if painted {
                    rgb = lane.color;
                }
            }
            for o in &spec.occluders {
                if o.visible[index] && o.covers(py, px, dt) {
                    rgb = o.color;
                }
            }
            if let Some(d) = &spec.dazzle {
                let (dy, dx) = (py - d.y, px - d.x);
                let glare = d.amplitude / (1.0 + (dy * dy + dx * dx) / (d.radius * d.radius));
                rgb = rgb.map(|c| c + glare);
            }
            for (c, v) in rgb.into_iter().enumerate() {
                let noisy = if spec.noise > 0.0 { v + rng.random_range(-spec.noise..spec.noise) } else { v };
                let q = (noisy.clamp(0.0, 1.0) * 255.0 + 0.5).floor();
                frame.set(0, c, y, x, q as f32 / 255.0);
            }
        }
    }
    frame
}

/// Renders all K frames and the last frame's mask. Frame values are 8-bit
/// quantised so a PNG round trip is exact.
pub fn synth_scene(spec: &SynthSpec) -> Result<SequenceSample> {
    spec.validate()?;
    let mut rng = SeededRng::seed_from_u64(spec.seed);
    let frames = (0..spec.frames.len()).map(|i| render_frame(spec, i, &mut rng)).collect();
    let meta = SampleMeta {
        clip: spec.clip.clone(),
        frames: spec.frames.clone(),
        stride: spec.stride,
    };
    SequenceSample::new(frames, render_mask(spec), meta)
}
