//! Single-cue separators. Each turns a magnitude spectrogram into a
//! vocals-oriented [`SoftMask`].
//!
//! | primitive | cue | vocals side |
//! |-----------|-----|-------------|
//! | [`hpss_mask`] | harmonic/percussive timbre | frequency-median (percussive) |
//! | [`repetition_mask_2dft`] | repetition | non-repeating |
//! | [`micromodulation_mask_2dft`] | micro-modulation | temporally modulated |
//! | [`melodic_mask`] | time/pitch proximity | bins on the melody's harmonics |

mod config;
mod hpss;
mod melodic;
mod twodft;

pub use config::PrimitiveConfig;
pub use hpss::{hpss_mask, median_filter_freq, median_filter_time};
pub use melodic::{melodic_contour, melodic_mask, MelodicContour};
pub use twodft::{micromodulation_mask_2dft, patch_starts, repetition_mask_2dft};

use crate::error::Result;
use crate::tfr::{MagnitudeSpectrogram, SoftMask};

/// Identifies one primitive; the order of [`Primitive::ALL`] is the
/// embedding dimension order used by the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Primitive {
    #[serde(rename = "2dft-m")]
    MicroModulation,
    #[serde(rename = "2dft-r")]
    Repetition,
    Melodic,
    Hpss,
}

impl Primitive {
    pub const ALL: [Primitive; 4] = [
        Primitive::MicroModulation,
        Primitive::Repetition,
        Primitive::Melodic,
        Primitive::Hpss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::MicroModulation => "2dft-m",
            Primitive::Repetition => "2dft-r",
            Primitive::Melodic => "melodic",
            Primitive::Hpss => "hpss",
        }
    }

    pub fn run(self, mag: &MagnitudeSpectrogram, cfg: &PrimitiveConfig) -> Result<SoftMask> {
        match self {
            Primitive::MicroModulation => micromodulation_mask_2dft(mag, cfg),
            Primitive::Repetition => repetition_mask_2dft(mag, cfg),
            Primitive::Melodic => melodic_mask(mag, cfg),
            Primitive::Hpss => hpss_mask(mag, cfg),
        }
    }
}

impl std::fmt::Display for Primitive {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Primitive {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Primitive::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| crate::Error::invalid(format!("unknown primitive '{s}'")))
    }
}
