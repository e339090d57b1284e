//! Binary checkpoint: `STLN`, version byte, length-prefixed UTF-8 metadata,
//! then named f32 tensors. Everything is little-endian.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::kv::parse_kv;
use crate::model::{Model, ModelConfig};
use crate::params::ParamStore;
use crate::tensor::{Shape, Tensor};
use crate::SeededRng;

pub const MAGIC: &[u8; 4] = b"STLN";
pub const VERSION: u8 = 1;
/// Name prefix of the optimizer velocity tensors.
pub const VELOCITY_PREFIX: &str = "velocity/";

/// Position of a ChaCha stream: enough to rebuild the generator exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &SeededRng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> SeededRng {
        let mut rng = SeededRng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub step: usize,
    pub rng: RngState,
    pub params: Vec<(String, Tensor<f32>)>,
    /// Momentum buffers in parameter order; empty when not saved.
    pub velocity: Vec<Tensor<f32>>,
}

impl Checkpoint {
    pub fn new(model: &Model<f32>, step: usize, rng: &SeededRng, velocity: Option<&[Tensor<f32>]>) -> Self {
        Checkpoint {
            model: model.config.clone(),
            step,
            rng: RngState::capture(rng),
            params: model.store.iter().map(|p| (p.name.clone(), p.value.clone())).collect(),
            velocity: velocity.map(<[_]>::to_vec).unwrap_or_default(),
        }
    }

    /// Builds the model described by the metadata and loads the weights.
    pub fn to_model(&self) -> Result<Model<f32>> {
        let mut model = Model::build(&self.model)?;
        let mut store = ParamStore::new();
        for (name, t) in &self.params {
            store.add(name.clone(), t.clone())?;
        }
        model.load_store(&store)?;
        Ok(model)
    }

    fn metadata(&self) -> String {
        let mut s = String::new();
        for line in self.model.to_kv().lines() {
            let _ = writeln!(s, "model.{line}");
        }
        let _ = writeln!(s, "step = {}", self.step);
        let seed: String = self.rng.seed.iter().map(|b| format!("{b:02x}")).collect();
        let _ = writeln!(s, "rng.seed = {seed}");
        let _ = writeln!(s, "rng.stream = {}", self.rng.stream);
        let _ = writeln!(s, "rng.word_pos = {}", self.rng.word_pos);
        let _ = writeln!(s, "tensors = {}", self.params.len() + self.velocity.len());
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = self.metadata();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        let velocity_names = self
            .params
            .iter()
            .zip(&self.velocity)
            .map(|((name, _), v)| (format!("{VELOCITY_PREFIX}{name}"), v));
        let all = self.params.iter().map(|(n, t)| (n.clone(), t)).chain(velocity_names);
        for (name, t) in all {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            let s = t.shape();
            for d in [s.n, s.c, s.h, s.w] {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad magic, not a checkpoint".into(),
            });
        }
        let version = r.take(1)?[0];
        if version != VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported version {version}"),
            });
        }
        let meta_len = r.u32()? as usize;
        let meta_at = r.pos;
        let meta = std::str::from_utf8(r.take(meta_len)?).map_err(|e| r.error_at(meta_at, e.to_string()))?;
        let meta_err = |e: Error| Error::Format {
            offset: meta_at,
            message: e.to_string(),
        };

        let mut model = ModelConfig::default();
        let (mut step, mut seed, mut stream, mut word_pos, mut count) = (None, None, None, None, None);
        for (k, v) in parse_kv(meta).map_err(meta_err)? {
            let bad = || Error::config(format!("bad value {v:?} for {k}"));
            if let Some(key) = k.strip_prefix("model.") {
                if !model.set(key, &v).map_err(meta_err)? {
                    return Err(meta_err(Error::config(format!("unknown model key {key}"))));
                }
                continue;
            }
            match k.as_str() {
                "step" => step = Some(v.parse().map_err(|_| meta_err(bad()))?),
                "rng.seed" => seed = Some(parse_seed(&v).ok_or_else(|| meta_err(bad()))?),
                "rng.stream" => stream = Some(v.parse().map_err(|_| meta_err(bad()))?),
                "rng.word_pos" => word_pos = Some(v.parse().map_err(|_| meta_err(bad()))?),
                "tensors" => count = Some(v.parse::<usize>().map_err(|_| meta_err(bad()))?),
                _ => return Err(meta_err(Error::config(format!("unknown metadata key {k}")))),
            }
        }
        let missing = |what: &str| Error::Format {
            offset: meta_at,
            message: format!("metadata lacks {what}"),
        };
        let rng = RngState {
            seed: seed.ok_or_else(|| missing("rng.seed"))?,
            stream: stream.ok_or_else(|| missing("rng.stream"))?,
            word_pos: word_pos.ok_or_else(|| missing("rng.word_pos"))?,
        };
        let step = step.ok_or_else(|| missing("step"))?;
        let count = count.ok_or_else(|| missing("tensors"))?;

        let mut params = Vec::new();
        let mut velocity = Vec::new();
        for _ in 0..count {
            let at = r.pos;
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|e| r.error_at(at, e.to_string()))?
                .to_string();
            let dims_at = r.pos;
            let mut dims = [0usize; 4];
            for d in &mut dims {
                *d = r.u32()? as usize;
            }
            if dims.contains(&0) {
                return Err(r.error_at(dims_at, format!("tensor {name} has a zero dimension")));
            }
            let bytes_len = dims
                .iter()
                .try_fold(4usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| r.error_at(dims_at, format!("tensor {name} is too large")))?;
            let raw = r.take(bytes_len)?;
            let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
            let data: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            let t = Tensor::from_vec(shape, data)?;
            match name.strip_prefix(VELOCITY_PREFIX) {
                Some(of) => {
                    let expected = params.get(velocity.len()).map(|(n, _): &(String, _)| n.as_str());
                    if expected != Some(of) {
                        return Err(r.error_at(at, format!("velocity {of} out of parameter order")));
                    }
                    velocity.push(t);
                }
                None => {
                    if !velocity.is_empty() {
                        return Err(r.error_at(at, format!("parameter {name} after velocity buffers")));
                    }
                    params.push((name, t));
                }
            }
        }
        if r.pos != bytes.len() {
            return Err(r.error_at(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        if !velocity.is_empty() && velocity.len() != params.len() {
            return Err(r.error_at(r.pos, "velocity buffers do not cover every parameter".into()));
        }
        Ok(Checkpoint {
            model,
            step,
            rng,
            params,
            velocity,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

fn parse_seed(hex: &str) -> Option<[u8; 32]> {
    if hex.len() != 64 || !hex.is_ascii() {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, b) in out.iter_mut().enumerate() {
        *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).ok()?;
    }
    Some(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Format {
            offset: self.pos,
            message: format!("truncated: need {n} bytes, {} left", self.bytes.len() - self.pos),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn error_at(&self, offset: usize, message: String) -> Error {
        Error::Format { offset, message }
    }
}
