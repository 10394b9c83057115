//! Sequences: synthetic generation and the on-disk layout
//! (`<name>/frames/%08d.ppm` plus `<name>/groundtruth.txt`).

pub mod ppm;
pub mod sequence;
pub mod synth;

pub use ppm::{read_ppm, write_ppm};
pub use sequence::{load_sequence, save_sequence, Sequence};
pub use synth::{synth_sequence, synth_suite, Motion, SuiteConfig, SynthConfig};
