use std::path::Path;

use rand::{Rng, SeedableRng};

use super::augment::augment;
use super::io::write_dataset;
use super::sample::SequenceSample;
use super::synth::{synth_scene, Scenario, SynthSpec};
use crate::error::{Error, Result};
use crate::SeededRng;

pub const TRAIN_SPLIT: &str = "train";
pub const NORMAL_SPLIT: &str = "test_normal";
pub const OCCLUDED_SPLIT: &str = "test_occluded";

/// Share of training scenes drawn with last-frame occlusion.
pub const TRAIN_OCCLUDED_SHARE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    pub n_train: usize,
    pub n_test_normal: usize,
    pub n_test_occluded: usize,
    pub seed: u64,
    pub hw: (usize, usize),
    pub k: usize,
    /// Materialise the ×4 augmentation of the train split.
    pub augment: bool,
}

impl CorpusSpec {
    pub fn new(n_train: usize, n_test_normal: usize, n_test_occluded: usize, seed: u64) -> Self {
        CorpusSpec {
            n_train,
            n_test_normal,
            n_test_occluded,
            seed,
            hw: (32, 64),
            k: 5,
            augment: false,
        }
    }
}

fn scene<R: Rng>(rng: &mut R, spec: &CorpusSpec, scenario: Scenario, train: bool, clip: String) -> Result<SequenceSample> {
    // Train windows use every stride and both labelled frames; test windows
    // use stride 1.
    let labeled = if rng.random_bool(0.5) { 13 } else { 20 };
    let stride = if train { rng.random_range(1..=3) } else { 1 };
    loop {
        let mut s = SynthSpec::random(rng, spec.hw, labeled, stride, spec.k, scenario)?;
        if scenario == Scenario::OccludedLast && !s.last_frame_occludes_lane() {
            continue;
        }
        s.clip = clip;
        return synth_scene(&s);
    }
}

/// Generates one split in memory. Each split draws from its own stream of the
/// corpus seed, so split sizes do not influence each other.
pub fn generate_split(spec: &CorpusSpec, split: &str) -> Result<Vec<SequenceSample>> {
    let (n, stream) = match split {
        TRAIN_SPLIT => (spec.n_train, 1),
        NORMAL_SPLIT => (spec.n_test_normal, 2),
        OCCLUDED_SPLIT => (spec.n_test_occluded, 3),
        other => return Err(Error::usage(format!("unknown split {other}"))),
    };
    let mut rng = SeededRng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let mut out = Vec::new();
    for i in 0..n {
        let clip = format!("{i:04}");
        let s = match split {
            TRAIN_SPLIT => {
                let scenario = if rng.random_bool(TRAIN_OCCLUDED_SHARE) {
                    Scenario::OccludedLast
                } else {
                    Scenario::Normal
                };
                scene(&mut rng, spec, scenario, true, clip)?
            }
            NORMAL_SPLIT => scene(&mut rng, spec, Scenario::Normal, false, clip)?,
            _ => scene(&mut rng, spec, Scenario::OccludedLast, false, clip)?,
        };
        if split == TRAIN_SPLIT && spec.augment {
            let mut aug_rng = SeededRng::seed_from_u64(rng.random());
            for (tag, mut a) in ["", "_flip", "_rot", "_crop"].into_iter().zip(augment(&s, &mut aug_rng)?) {
                a.meta.clip = format!("{}{tag}", s.meta.clip);
                out.push(a);
            }
        } else {
            out.push(s);
        }
    }
    Ok(out)
}

/// Writes `train/`, `test_normal/` and `test_occluded/` under `root`, each in
/// the dataset layout. Returns the number of sequences per split.
pub fn gen_corpus(root: &Path, spec: &CorpusSpec) -> Result<Vec<(&'static str, usize)>> {
    let mut counts = Vec::new();
    for split in [TRAIN_SPLIT, NORMAL_SPLIT, OCCLUDED_SPLIT] {
        let samples = generate_split(spec, split)?;
        write_dataset(&root.join(split), &samples)?;
        counts.push((split, samples.len()));
    }
    Ok(counts)
}
