use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::CellKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Backbone {
    SegNet,
    UNet,
    /// UNet with every ConvBlock width halved.
    UNetLight,
}

impl Backbone {
    /// Number of 2×2 pooling stages, hence the input divisibility requirement.
    pub fn pool_depth(self) -> u32 {
        match self {
            Backbone::SegNet => 5,
            Backbone::UNet | Backbone::UNetLight => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Backbone::SegNet => "SegNet",
            Backbone::UNet => "UNet",
            Backbone::UNetLight => "UNetLight",
        }
    }
}

impl FromStr for Backbone {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "segnet" => Ok(Backbone::SegNet),
            "unet" => Ok(Backbone::UNet),
            "unetlight" => Ok(Backbone::UNetLight),
            _ => Err(Error::config(format!("unknown backbone {s:?} (segnet, unet, unetlight)"))),
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backbone::SegNet => "segnet",
            Backbone::UNet => "unet",
            Backbone::UNetLight => "unetlight",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScnnLocation {
    None,
    /// Before the first convolution, on the raw 3-channel frame.
    Input,
    /// After the first encoder block (SegNet: after Maxpool1; UNet: after In_ConvBlock).
    AfterFirstBlock,
}

impl FromStr for ScnnLocation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ScnnLocation::None),
            "input" => Ok(ScnnLocation::Input),
            "after_first_block" => Ok(ScnnLocation::AfterFirstBlock),
            _ => Err(Error::config(format!(
                "unknown scnn_location {s:?} (none, input, after_first_block)"
            ))),
        }
    }
}

impl fmt::Display for ScnnLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScnnLocation::None => "none",
            ScnnLocation::Input => "input",
            ScnnLocation::AfterFirstBlock => "after_first_block",
        })
    }
}

fn parse_rnn(s: &str) -> Result<Option<CellKind>> {
    match s {
        "none" => Ok(None),
        "convlstm" => Ok(Some(CellKind::ConvLstm)),
        "convgru" => Ok(Some(CellKind::ConvGru)),
        _ => Err(Error::config(format!("unknown rnn {s:?} (convlstm, convgru, none)"))),
    }
}

fn rnn_name(r: Option<CellKind>) -> &'static str {
    match r {
        None => "none",
        Some(CellKind::ConvLstm) => "convlstm",
        Some(CellKind::ConvGru) => "convgru",
    }
}

/// Channel width multiplier `num/den`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Ratio {
    pub num: usize,
    pub den: usize,
}

impl Ratio {
    pub const ONE: Ratio = Ratio { num: 1, den: 1 };

    pub fn new(num: usize, den: usize) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::config(format!("width scale {num}/{den} must be positive")));
        }
        Ok(Ratio { num, den })
    }

    /// Scales a channel count; the result must be a positive integer.
    pub fn apply(self, channels: usize) -> Result<usize> {
        let scaled = channels * self.num;
        if scaled % self.den != 0 || scaled == 0 {
            return Err(Error::config(format!(
                "width scale {self} turns {channels} channels into a non-integer count"
            )));
        }
        Ok(scaled / self.den)
    }
}

impl FromStr for Ratio {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("width_scale {s:?} is not of the form p or p/q"));
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        Ratio::new(n.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Declarative description of one architecture variant.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub backbone: Backbone,
    pub scnn_location: ScnnLocation,
    pub rnn: Option<CellKind>,
    pub rnn_layers: usize,
    pub k_frames: usize,
    pub input_hw: (usize, usize),
    pub width_scale: Ratio,
    /// ST-RNN hidden width. `None` means the scaled bottleneck width.
    pub hidden_dim: Option<usize>,
    pub scnn_kernel: usize,
    pub seed: u64,
}

pub const FULL_HW: (usize, usize) = (128, 256);
pub const DEFAULT_K: usize = 5;

impl ModelConfig {
    pub fn full_size(backbone: Backbone, scnn_location: ScnnLocation, rnn: Option<CellKind>, rnn_layers: usize) -> Self {
        ModelConfig {
            backbone,
            scnn_location,
            rnn,
            rnn_layers,
            k_frames: if rnn.is_some() { DEFAULT_K } else { 1 },
            input_hw: FULL_HW,
            width_scale: Ratio::ONE,
            hidden_dim: None,
            scnn_kernel: 9,
            seed: 0,
        }
    }

    /// Laptop-sized SCNN + UNet + ConvLSTM×2.
    pub fn desk() -> Self {
        ModelConfig {
            backbone: Backbone::UNet,
            scnn_location: ScnnLocation::AfterFirstBlock,
            rnn: Some(CellKind::ConvLstm),
            rnn_layers: 2,
            k_frames: DEFAULT_K,
            input_hw: (32, 64),
            width_scale: Ratio { num: 1, den: 8 },
            hidden_dim: Some(64),
            scnn_kernel: 9,
            seed: 0,
        }
    }

    /// Encoder stage widths before scaling.
    fn base_widths(&self) -> [usize; 5] {
        match self.backbone {
            Backbone::SegNet | Backbone::UNet => [64, 128, 256, 512, 512],
            Backbone::UNetLight => [32, 64, 128, 256, 256],
        }
    }

    /// Scaled encoder stage widths.
    pub fn widths(&self) -> Result<[usize; 5]> {
        let mut out = [0; 5];
        for (o, c) in out.iter_mut().zip(self.base_widths()) {
            *o = self.width_scale.apply(c)?;
        }
        Ok(out)
    }

    pub fn bottleneck(&self) -> Result<usize> {
        Ok(self.widths()?[4])
    }

    /// Number of frames the model consumes (1 without an ST-RNN).
    pub fn frames(&self) -> usize {
        if self.rnn.is_some() {
            self.k_frames
        } else {
            1
        }
    }

    pub fn hidden(&self) -> Result<usize> {
        let b = self.bottleneck()?;
        match self.hidden_dim {
            None => Ok(b),
            Some(h) if h == b => Ok(h),
            Some(h) => Err(Error::config(format!(
                "hidden_dim {h} must equal the bottleneck width {b}: the decoder consumes the ST-RNN output directly"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.input_hw;
        let div = 1usize << self.backbone.pool_depth();
        if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
            return Err(Error::config(format!(
                "{} input {h}x{w} must be a positive multiple of {div} in both dims",
                self.backbone
            )));
        }
        self.widths()?;
        if self.rnn.is_some() {
            if !(1..=2).contains(&self.rnn_layers) {
                return Err(Error::config(format!("rnn_layers must be 1 or 2, got {}", self.rnn_layers)));
            }
            if self.k_frames == 0 {
                return Err(Error::config("k_frames must be at least 1"));
            }
            self.hidden()?;
        }
        if self.scnn_kernel % 2 == 0 {
            return Err(Error::config(format!("scnn_kernel must be odd, got {}", self.scnn_kernel)));
        }
        Ok(())
    }

    /// Applies one `key = value` setting. Returns `Ok(false)` for keys this type
    /// does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let num = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::config(format!("{key} expects a non-negative integer, got {v:?}")))
        };
        match key {
            "backbone" => self.backbone = value.parse()?,
            "scnn_location" => self.scnn_location = value.parse()?,
            "rnn" => self.rnn = parse_rnn(value)?,
            "rnn_layers" => self.rnn_layers = num(value)?,
            "k_frames" => self.k_frames = num(value)?,
            "input_hw" => {
                let (h, w) = value
                    .split_once('x')
                    .ok_or_else(|| Error::config(format!("input_hw expects HxW, got {value:?}")))?;
                self.input_hw = (num(h.trim())?, num(w.trim())?);
            }
            "width_scale" => self.width_scale = value.parse()?,
            "hidden_dim" => {
                self.hidden_dim = if value == "auto" { None } else { Some(num(value)?) };
            }
            "scnn_kernel" => self.scnn_kernel = num(value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::config(format!("seed expects an unsigned integer, got {value:?}")))?
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_kv(&self) -> String {
        format!(
            "backbone = {}\nscnn_location = {}\nrnn = {}\nrnn_layers = {}\nk_frames = {}\ninput_hw = {}x{}\nwidth_scale = {}\nhidden_dim = {}\nscnn_kernel = {}\nseed = {}\n",
            self.backbone,
            self.scnn_location,
            rnn_name(self.rnn),
            self.rnn_layers,
            self.k_frames,
            self.input_hw.0,
            self.input_hw.1,
            self.width_scale,
            self.hidden_dim.map_or("auto".to_string(), |h| h.to_string()),
            self.scnn_kernel,
            self.seed
        )
    }

    /// Variant label such as `SCNN_UNet_ConvLSTM2`.
    pub fn label(&self) -> String {
        let mut s = String::new();
        if self.scnn_location != ScnnLocation::None {
            s.push_str("SCNN_");
        }
        s.push_str(self.backbone.label());
        if let Some(kind) = self.rnn {
            s.push_str(match kind {
                CellKind::ConvLstm => "_ConvLSTM",
                CellKind::ConvGru => "_ConvGRU",
            });
            s.push_str(&self.rnn_layers.to_string());
        }
        s
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk()
    }
}

/// The sixteen published architecture variants at full size.
pub fn named_variants() -> Vec<(&'static str, ModelConfig)> {
    use Backbone::*;
    use CellKind::*;
    let none = ScnnLocation::None;
    let scnn = ScnnLocation::AfterFirstBlock;
    vec![
        ("U-Net", ModelConfig::full_size(UNet, none, None, 1)),
        ("SegNet", ModelConfig::full_size(SegNet, none, None, 1)),
        ("SegNet_ConvLSTM", ModelConfig::full_size(SegNet, none, Some(ConvLstm), 2)),
        ("UNet_ConvLSTM", ModelConfig::full_size(UNet, none, Some(ConvLstm), 2)),
        ("SCNN_SegNet_ConvGRU1", ModelConfig::full_size(SegNet, scnn, Some(ConvGru), 1)),
        ("SCNN_SegNet_ConvGRU2", ModelConfig::full_size(SegNet, scnn, Some(ConvGru), 2)),
        ("SCNN_SegNet_ConvLSTM1", ModelConfig::full_size(SegNet, scnn, Some(ConvLstm), 1)),
        ("SCNN_SegNet_ConvLSTM2", ModelConfig::full_size(SegNet, scnn, Some(ConvLstm), 2)),
        ("SCNN_UNet_ConvGRU1", ModelConfig::full_size(UNet, scnn, Some(ConvGru), 1)),
        ("SCNN_UNet_ConvGRU2", ModelConfig::full_size(UNet, scnn, Some(ConvGru), 2)),
        ("SCNN_UNet_ConvLSTM1", ModelConfig::full_size(UNet, scnn, Some(ConvLstm), 1)),
        ("SCNN_UNet_ConvLSTM2", ModelConfig::full_size(UNet, scnn, Some(ConvLstm), 2)),
        ("SCNN_UNetLight_ConvGRU1", ModelConfig::full_size(UNetLight, scnn, Some(ConvGru), 1)),
        ("SCNN_UNetLight_ConvGRU2", ModelConfig::full_size(UNetLight, scnn, Some(ConvGru), 2)),
        ("SCNN_UNetLight_ConvLSTM1", ModelConfig::full_size(UNetLight, scnn, Some(ConvLstm), 1)),
        ("SCNN_UNetLight_ConvLSTM2", ModelConfig::full_size(UNetLight, scnn, Some(ConvLstm), 2)),
    ]
}
