use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use stlane::kv::{parse_kv, parse_override};
use stlane::model::{ModelConfig, DEFAULT_K};
use stlane::train::TrainConfig;
use stlane::{Error, Result};

pub const THREADS_ENV: &str = "STLANE_THREADS";

/// Every knob a command may read, after config files, `--set` and `--seed`.
#[derive(Clone, Debug)]
pub struct Settings {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Frame paths per index line of a dataset.
    pub sequence_frames: usize,
    /// Seed for data generation and checks.
    pub seed: u64,
    /// Evaluation workers; 1 is the determinism reference.
    pub threads: usize,
}

impl Settings {
    pub fn resolve(configs: &[PathBuf], overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut s = Settings {
            model: ModelConfig::desk(),
            train: TrainConfig::desk(),
            sequence_frames: DEFAULT_K,
            seed: 0,
            threads: threads_from_env()?,
        };
        for path in configs {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            for (k, v) in parse_kv(&text)? {
                s.apply(&k, &v)
                    .map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
            }
        }
        for o in overrides {
            let (k, v) = parse_override(o)?;
            s.apply(&k, &v)?;
        }
        s.seed = s.model.seed;
        if let Some(seed) = seed {
            s.seed = seed;
            s.model.seed = seed;
            s.train.seed = seed;
        }
        s.model.validate()?;
        s.train.validate()?;
        Ok(s)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        if key == "sequence_frames" {
            self.sequence_frames = value
                .parse()
                .ok()
                .filter(|&k| k >= 1)
                .ok_or_else(|| Error::Config(format!("sequence_frames expects a positive integer, got {value:?}")))?;
            return Ok(());
        }
        if self.model.set(key, value)? || self.train.set(key, value)? {
            return Ok(());
        }
        Err(Error::Usage(format!("unknown setting {key:?}")))
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::from("# model\n");
        s.push_str(&self.model.to_kv());
        s.push_str("# training\n");
        s.push_str(&self.train.to_kv());
        s.push_str("# data\n");
        let _ = writeln!(s, "sequence_frames = {}", self.sequence_frames);
        s
    }

    /// Prints the fully resolved configuration to stderr.
    pub fn log(&self) {
        eprint!("{}", self.to_kv());
        eprintln!("# {THREADS_ENV} = {}", self.threads);
    }
}

fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
    }
}
