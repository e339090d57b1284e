use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SampleMeta {
    pub clip: String,
    /// 1-based frame numbers within the clip, oldest first.
    pub frames: Vec<usize>,
    pub stride: usize,
}

/// K ordered RGB frames (`1×3×H×W`, values in `[0, 1]`) and the lane mask of
/// the last one.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSample {
    pub frames: Vec<Tensor<f32>>,
    pub mask: Mask,
    pub meta: SampleMeta,
}

impl SequenceSample {
    pub fn new(frames: Vec<Tensor<f32>>, mask: Mask, meta: SampleMeta) -> Result<Self> {
        let s = SequenceSample { frames, mask, meta };
        s.validate()?;
        Ok(s)
    }

    pub fn k(&self) -> usize {
        self.frames.len()
    }

    pub fn hw(&self) -> (usize, usize) {
        (self.mask.h, self.mask.w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::usage("a sequence needs at least one frame"));
        }
        let want = Shape::new(1, 3, self.mask.h, self.mask.w);
        for (i, f) in self.frames.iter().enumerate() {
            if f.shape() != want {
                return Err(Error::usage(format!("frame {i} is {}, mask needs {want}", f.shape())));
            }
            if f.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::usage(format!("frame {i} has values outside [0, 1]")));
            }
        }
        if self.mask.data.iter().any(|&v| v > 1) {
            return Err(Error::usage("mask is not binary"));
        }
        if !self.meta.frames.is_empty() && self.meta.frames.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::usage("frame numbers must increase"));
        }
        Ok(())
    }

    /// The same sample restricted to its last `k` frames.
    pub fn last_frames(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k() {
            return Err(Error::usage(format!("cannot take {k} of {} frames", self.k())));
        }
        let skip = self.k() - k;
        let mut meta = self.meta.clone();
        if meta.frames.len() == self.k() {
            meta.frames.drain(..skip);
        }
        Ok(SequenceSample {
            frames: self.frames[skip..].to_vec(),
            mask: self.mask.clone(),
            meta,
        })
    }
}

/// Frame numbers `[l − (k−1)·s, …, l − s, l]` ending at the labelled frame.
pub fn sample_windows(labeled_index: usize, stride: usize, k: usize) -> Result<Vec<usize>> {
    if stride == 0 || k == 0 {
        return Err(Error::usage("stride and k must be positive"));
    }
    let span = (k - 1) * stride;
    if labeled_index < span + 1 {
        return Err(Error::usage(format!(
            "window of {k} frames at stride {stride} ending at {labeled_index} starts before frame 1"
        )));
    }
    Ok((0..k).map(|i| labeled_index - span + i * stride).collect())
}

/// A mini-batch laid out for the model: one `n×3×H×W` tensor per time step and
/// the flattened `n×H×W` target.
#[derive(Clone, Debug)]
pub struct Batch {
    pub frames: Vec<Tensor<f32>>,
    pub target: Vec<u8>,
    pub masks: Vec<Mask>,
}

pub fn make_batch(samples: &[&SequenceSample]) -> Result<Batch> {
    let first = samples.first().ok_or_else(|| Error::usage("empty batch"))?;
    let (k, hw) = (first.k(), first.hw());
    if samples.iter().any(|s| s.k() != k || s.hw() != hw) {
        return Err(Error::usage("batch samples disagree on frame count or geometry"));
    }
    let frames = (0..k)
        .map(|t| Tensor::stack(&samples.iter().map(|s| s.frames[t].clone()).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let target = samples.iter().flat_map(|s| s.mask.data.iter().copied()).collect();
    let masks = samples.iter().map(|s| s.mask.clone()).collect();
    Ok(Batch { frames, target, masks })
}
