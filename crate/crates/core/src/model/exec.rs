use super::plan::{Plan, RnnPlan, Step};
use crate::error::{Error, Result};
use crate::nn::{Direction, ScnnBlock, StRnn};
use crate::ops::{pooled_shape, ConvSpec};
use crate::tensor::Shape;

/// One way of evaluating a [`Plan`]: symbolically (shapes and MACs) or on a tape.
pub trait Exec {
    type V: Clone;
    type Idx: Clone;

    /// Called before the encoder runs on frame `k`, and once with `None` before
    /// the ST-RNN and decoder.
    fn stage(&mut self, _frame: Option<usize>) {}
    fn conv(&mut self, name: &str, spec: &ConvSpec, relu: bool, x: Self::V) -> Result<Self::V>;
    fn pool(&mut self, name: &str, x: Self::V) -> Result<(Self::V, Self::Idx)>;
    fn unpool(&mut self, name: &str, x: Self::V, idx: &Self::Idx) -> Result<Self::V>;
    fn upsample(&mut self, name: &str, x: Self::V) -> Result<Self::V>;
    fn scnn(&mut self, channels: usize, kernel: usize, x: Self::V) -> Result<Self::V>;
    fn concat(&mut self, skip: Self::V, x: Self::V) -> Result<Self::V>;
    fn rnn(&mut self, plan: &RnnPlan, seq: &[Self::V]) -> Result<Self::V>;
    fn head(&mut self, x: Self::V) -> Result<Self::V>;
}

/// Runs the encoder on every frame with shared weights, fuses the per-frame
/// features with the ST-RNN (or takes the single frame), then decodes once.
/// Skips and pooling indices come from the last frame.
pub fn run<E: Exec>(plan: &Plan, exec: &mut E, frames: &[E::V]) -> Result<E::V> {
    if frames.len() != plan.frames {
        return Err(Error::usage(format!(
            "model consumes {} frames, got {}",
            plan.frames,
            frames.len()
        )));
    }
    let mut features = Vec::with_capacity(frames.len());
    let mut skips = Vec::new();
    let mut indices = Vec::new();
    for (k, frame) in frames.iter().enumerate() {
        exec.stage(Some(k));
        let last = k + 1 == frames.len();
        let mut x = frame.clone();
        for step in &plan.encoder {
            x = match step {
                Step::Conv { name, spec, relu } => exec.conv(name, spec, *relu, x)?,
                Step::Pool { name } => {
                    let (y, idx) = exec.pool(name, x)?;
                    if last {
                        indices.push(idx);
                    }
                    y
                }
                Step::Scnn { channels, kernel } => exec.scnn(*channels, *kernel, x)?,
                Step::SaveSkip => {
                    if last {
                        skips.push(x.clone());
                    }
                    x
                }
                other => return Err(Error::Internal(format!("{other:?} in encoder"))),
            };
        }
        features.push(x);
    }

    exec.stage(None);
    let mut x = match &plan.rnn {
        Some(r) => exec.rnn(r, &features)?,
        None => features.pop().expect("one frame"),
    };
    for step in &plan.decoder {
        x = match step {
            Step::Conv { name, spec, relu } => exec.conv(name, spec, *relu, x)?,
            Step::Unpool { name } => {
                let idx = indices
                    .pop()
                    .ok_or_else(|| Error::Internal(format!("{name} has no pooling indices")))?;
                exec.unpool(name, x, &idx)?
            }
            Step::Upsample { name } => exec.upsample(name, x)?,
            Step::ConcatSkip => {
                let skip = skips
                    .pop()
                    .ok_or_else(|| Error::Internal("skip connection without a saved activation".into()))?;
                exec.concat(skip, x)?
            }
            other => return Err(Error::Internal(format!("{other:?} in decoder"))),
        };
    }
    exec.head(x)
}

/// One row of the shape trace: a named layer with its input and output dims
/// (`c × h × w`). SCNN rows report the slice dims each pass operates on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRow {
    /// Encoder frame index, `None` for the ST-RNN and decoder.
    pub frame: Option<usize>,
    pub layer: String,
    pub input: (usize, usize, usize),
    pub output: (usize, usize, usize),
}

/// Symbolic executor: propagates shapes, counts MACs, records a trace.
#[derive(Default)]
pub struct ShapeExec {
    pub macs: u64,
    pub trace: Vec<TraceRow>,
    frame: Option<usize>,
}

impl ShapeExec {
    fn row(&mut self, layer: impl Into<String>, input: Shape, output: Shape) {
        self.trace.push(TraceRow {
            frame: self.frame,
            layer: layer.into(),
            input: input.chw(),
            output: output.chw(),
        });
    }
}

impl Exec for ShapeExec {
    type V = Shape;
    type Idx = Shape;

    fn stage(&mut self, frame: Option<usize>) {
        self.frame = frame;
    }

    fn conv(&mut self, name: &str, spec: &ConvSpec, _relu: bool, x: Shape) -> Result<Shape> {
        let y = spec.output_shape(x)?;
        self.macs += spec.macs(x.h, x.w)?;
        self.row(name, x, y);
        Ok(y)
    }

    fn pool(&mut self, name: &str, x: Shape) -> Result<(Shape, Shape)> {
        let y = pooled_shape(x)?;
        self.row(name, x, y);
        Ok((y, x))
    }

    fn unpool(&mut self, name: &str, x: Shape, idx: &Shape) -> Result<Shape> {
        if pooled_shape(*idx)? != x {
            return Err(Error::config(format!("{name}: input {x} does not match pooled {idx}")));
        }
        self.row(name, x, *idx);
        Ok(*idx)
    }

    fn upsample(&mut self, name: &str, x: Shape) -> Result<Shape> {
        let y = x.with_hw(x.h * 2, x.w * 2);
        self.row(name, x, y);
        Ok(y)
    }

    fn scnn(&mut self, channels: usize, kernel: usize, x: Shape) -> Result<Shape> {
        if x.c != channels {
            return Err(Error::config(format!("SCNN built for {channels} channels, got {x}")));
        }
        for dir in Direction::ORDER {
            let slice = if dir.slices_rows() { x.with_hw(1, x.w) } else { x.with_hw(x.h, 1) };
            let name = match dir {
                Direction::Down => "SCNN_Down",
                Direction::Up => "SCNN_Up",
                Direction::Right => "SCNN_Right",
                Direction::Left => "SCNN_Left",
            };
            self.row(name, slice, slice);
        }
        self.macs += ScnnBlock::macs(channels, kernel, x.h, x.w);
        Ok(x)
    }

    fn concat(&mut self, skip: Shape, x: Shape) -> Result<Shape> {
        if skip.n != x.n || skip.h != x.h || skip.w != x.w {
            return Err(Error::config(format!("skip {skip} cannot join {x}")));
        }
        Ok(x.with_c(skip.c + x.c))
    }

    fn rnn(&mut self, plan: &RnnPlan, seq: &[Shape]) -> Result<Shape> {
        let x = seq[0];
        if x.c != plan.input_ch {
            return Err(Error::config(format!("ST-RNN expects {} channels, got {x}", plan.input_ch)));
        }
        self.macs += StRnn::macs(plan.kind, plan.layers, plan.input_ch, plan.hidden, x.h, x.w, seq.len());
        let mut input = x;
        for l in 0..plan.layers {
            let out = x.with_c(plan.hidden);
            self.row(format!("ST-RNN Layer{}", l + 1), input, out);
            input = out;
        }
        Ok(input)
    }

    fn head(&mut self, x: Shape) -> Result<Shape> {
        if x.c != 2 {
            return Err(Error::Internal(format!("head expects 2 channels, got {x}")));
        }
        Ok(x)
    }
}

/// Shape trace and MAC count for one sample at the plan's input size.
pub fn analyse(plan: &Plan) -> Result<ShapeExec> {
    let (h, w) = plan.input_hw;
    let frames = vec![Shape::new(1, 3, h, w); plan.frames];
    let mut exec = ShapeExec::default();
    let out = run(plan, &mut exec, &frames)?;
    if out != Shape::new(1, 2, h, w) {
        return Err(Error::Internal(format!("model output {out} for {h}x{w} input")));
    }
    Ok(exec)
}
