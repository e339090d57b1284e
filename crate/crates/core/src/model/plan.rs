//! Backend-independent layer sequence for each backbone.
//!
//! The same plan drives the shape/MAC analyser and the differentiable forward
//! pass, so the complexity report and the shape audit describe exactly the
//! network that trains.

use super::config::{Backbone, ModelConfig, ScnnLocation};
use crate::error::Result;
use crate::nn::{CellKind, ScnnBlock, StRnn};
use crate::ops::ConvSpec;

#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Conv { name: String, spec: ConvSpec, relu: bool },
    /// 2×2 max-pool; the indices are kept for a later [`Step::Unpool`].
    Pool { name: String },
    Unpool { name: String },
    Upsample { name: String },
    Scnn { channels: usize, kernel: usize },
    /// Remember the current activation for a later [`Step::ConcatSkip`].
    SaveSkip,
    /// `concat(skip, x)`, skip channels first.
    ConcatSkip,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RnnPlan {
    pub kind: CellKind,
    pub layers: usize,
    pub input_ch: usize,
    pub hidden: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub encoder: Vec<Step>,
    pub rnn: Option<RnnPlan>,
    pub decoder: Vec<Step>,
    pub frames: usize,
    pub input_hw: (usize, usize),
}

fn conv(name: impl Into<String>, in_ch: usize, out_ch: usize, relu: bool) -> Step {
    Step::Conv {
        name: name.into(),
        spec: ConvSpec::same(in_ch, out_ch, 3),
        relu,
    }
}

impl Plan {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.widths()?;
        let scnn = |ch: usize| Step::Scnn {
            channels: ch,
            kernel: cfg.scnn_kernel,
        };
        let mut enc = Vec::new();
        let mut dec = Vec::new();
        if cfg.scnn_location == ScnnLocation::Input {
            enc.push(scnn(3));
        }
        let after_first = cfg.scnn_location == ScnnLocation::AfterFirstBlock;

        match cfg.backbone {
            Backbone::SegNet => {
                // Down blocks: (convs per block, output width).
                let blocks = [(2, c[0]), (2, c[1]), (3, c[2]), (3, c[3]), (3, c[4])];
                let mut in_ch = 3;
                for (b, &(n, out)) in blocks.iter().enumerate() {
                    for j in 0..n {
                        enc.push(conv(format!("Conv_{}_{}", b + 1, j + 1), if j == 0 { in_ch } else { out }, out, true));
                    }
                    enc.push(Step::Pool {
                        name: format!("Maxpool{}", b + 1),
                    });
                    if b == 0 && after_first {
                        enc.push(scnn(out));
                    }
                    in_ch = out;
                }
                // Up blocks mirror the encoder; the last conv of each narrows to
                // the next stage's width.
                let ups = [(5, 3, c[4], c[3]), (4, 3, c[3], c[2]), (3, 3, c[2], c[1]), (2, 2, c[1], c[0]), (1, 2, c[0], 2)];
                for (u, &(stage, n, width, out)) in ups.iter().enumerate() {
                    dec.push(Step::Unpool {
                        name: format!("MaxUnpool{}", u + 1),
                    });
                    for j in 0..n {
                        let last = j + 1 == n;
                        let to = if last { out } else { width };
                        dec.push(conv(format!("Up_Conv_{stage}_{}", j + 1), width, to, !(last && stage == 1)));
                    }
                }
            }
            Backbone::UNet | Backbone::UNetLight => {
                enc.push(conv("In_Conv_1", 3, c[0], true));
                enc.push(conv("In_Conv_2", c[0], c[0], true));
                if after_first {
                    enc.push(scnn(c[0]));
                }
                enc.push(Step::SaveSkip);
                for d in 1..=4 {
                    let (from, to) = (c[d - 1], c[d]);
                    enc.push(Step::Pool {
                        name: format!("Maxpool{d}"),
                    });
                    enc.push(conv(format!("Conv_{d}_1"), from, to, true));
                    enc.push(conv(format!("Conv_{d}_2"), to, to, true));
                    if d < 4 {
                        enc.push(Step::SaveSkip);
                    }
                }
                // Up_ConvBlock_s concatenates the skip of width c[s-1] with the
                // upsampled output of the block below it.
                for (u, s) in (1..=4).rev().enumerate() {
                    let up_in = if s == 4 { c[4] } else { c[s - 1] };
                    let skip = c[s - 1];
                    let out = if s == 1 { c[0] } else { c[s - 2] };
                    dec.push(Step::Upsample {
                        name: format!("UpsamplingBilinear2D_{}", u + 1),
                    });
                    dec.push(Step::ConcatSkip);
                    dec.push(conv(format!("Up_Conv_{s}_1"), skip + up_in, out, true));
                    dec.push(conv(format!("Up_Conv_{s}_2"), out, out, true));
                }
                dec.push(Step::Conv {
                    name: "Out_Conv".into(),
                    spec: ConvSpec {
                        in_ch: c[0],
                        out_ch: 2,
                        kernel: (1, 1),
                        padding: (0, 0),
                        stride: 1,
                        has_bias: true,
                    },
                    relu: false,
                });
            }
        }

        let rnn = match cfg.rnn {
            Some(kind) => Some(RnnPlan {
                kind,
                layers: cfg.rnn_layers,
                input_ch: c[4],
                hidden: cfg.hidden()?,
            }),
            None => None,
        };
        Ok(Plan {
            encoder: enc,
            rnn,
            decoder: dec,
            frames: cfg.frames(),
            input_hw: cfg.input_hw,
        })
    }

    pub fn steps(&self) -> impl Iterator<Item = &Step> {
        self.encoder.iter().chain(&self.decoder)
    }

    /// Exact learnable-parameter count.
    pub fn param_count(&self) -> usize {
        let layers: usize = self
            .steps()
            .map(|s| match s {
                Step::Conv { spec, .. } => spec.param_count(),
                Step::Scnn { channels, kernel } => ScnnBlock::param_count(*channels, *kernel),
                _ => 0,
            })
            .sum();
        let rnn = self
            .rnn
            .map_or(0, |r| StRnn::param_count(r.kind, r.layers, r.input_ch, r.hidden));
        layers + rnn
    }
}
