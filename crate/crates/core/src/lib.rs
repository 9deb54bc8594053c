//! Music vocal/accompaniment separation from an ensemble of primitive
//! auditory cues.
//!
//! The pipeline runs four single-cue separators (harmonic/percussive
//! timbre, repetition, micro-modulation, melodic pitch proximity) on a
//! mixture spectrogram, stacks their soft masks into a per-bin embedding,
//! and softly clusters each bin against the fixed "all vocals" and
//! "all accompaniment" corners. The geometry of that embedding gives a
//! confidence score that needs no ground truth, which in turn drives a
//! dataset bootstrapper that filters and cross-remixes separated stems.
//!
//! Modules:
//! * [`audio`]: WAV I/O and mono downmix.
//! * [`tfr`]: STFT/ISTFT, masks, loudness ranking, MSK1 raster dumps.
//! * [`primitives`]: the four cue-specific mask estimators.
//! * [`ensemble`]: embedding and fixed-centroid soft clustering.
//! * [`confidence`]: silhouette and posterior-strength confidence.
//! * [`bootstrap`]: segmenting, filtering and remixing a corpus.
//! * [`eval`]: SD-SDR / SI-SDR and confidence/SDR regression.
//! * [`synth`]: synthetic melody + loop scenes for benchmarking.
//! * [`cli`]: batch command implementations behind the `primsep` binary.

pub mod audio;
pub mod bootstrap;
pub mod cli;
pub mod confidence;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod primitives;
pub mod synth;
pub mod tfr;

pub use audio::AudioClip;
pub use error::{Error, Result};

/// Canonical sample rate of the whole pipeline.
pub const SAMPLE_RATE: u32 = 44_100;
