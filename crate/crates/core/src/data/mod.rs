//! Sequence samples, window sampling, augmentation, dataset I/O, and the
//! synthetic scene generator.

pub mod augment;
pub mod corpus;
pub mod io;
pub mod sample;
pub mod synth;

pub use augment::augment;
pub use corpus::{gen_corpus, generate_split, CorpusSpec, NORMAL_SPLIT, OCCLUDED_SPLIT, TRAIN_SPLIT};
pub use io::{load_all, load_dataset, write_dataset, INDEX_FILE};
pub use sample::{make_batch, sample_windows, Batch, SampleMeta, SequenceSample};
pub use synth::{synth_scene, Scenario, SynthSpec};
