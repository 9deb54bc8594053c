//! WAV input/output and channel handling.
//!
//! Everything downstream works on mono 44100 Hz clips with `f64` samples.

use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::SAMPLE_RATE;

/// A sampled waveform. Samples are stored per channel and share one length.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::invalid("clip needs at least one channel"));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        let len = channels[0].len();
        if let Some(bad) = channels.iter().find(|c| c.len() != len) {
            return Err(Error::LengthMismatch(len, bad.len()));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            channels: vec![vec![0.0; len]],
            sample_rate,
        }
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Number of sample frames (per channel).
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, idx: usize) -> &[f64] {
        &self.channels[idx]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    /// Samples of a mono clip. Panics on multichannel clips.
    pub fn samples(&self) -> &[f64] {
        assert_eq!(self.channels.len(), 1, "samples() requires a mono clip");
        &self.channels[0]
    }

    pub fn into_samples(mut self) -> Vec<f64> {
        assert_eq!(self.channels.len(), 1, "into_samples() requires a mono clip");
        self.channels.pop().unwrap()
    }

    pub fn is_mono(&self) -> bool {
        self.channels.len() == 1
    }

    /// Sub-clip `[start, start + len)` of every channel.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::invalid(format!(
                "slice {}..{} out of range for clip of {} samples",
                start,
                start + len,
                self.len()
            )));
        }
        Ok(Self {
            channels: self
                .channels
                .iter()
                .map(|c| c[start..start + len].to_vec())
                .collect(),
            sample_rate: self.sample_rate,
        })
    }

    /// Root-mean-square level over all channels, in dBFS. Silence is `-inf`.
    pub fn rms_db(&self) -> f64 {
        let n = (self.len() * self.channels.len()) as f64;
        if n == 0.0 {
            return f64::NEG_INFINITY;
        }
        let power: f64 = self
            .channels
            .iter()
            .flat_map(|c| c.iter())
            .map(|x| x * x)
            .sum::<f64>()
            / n;
        10.0 * power.log10()
    }

    pub(crate) fn require_canonical_mono(&self) -> Result<()> {
        if !self.is_mono() {
            return Err(Error::invalid(format!(
                "expected a mono clip, got {} channels",
                self.num_channels()
            )));
        }
        if self.sample_rate != SAMPLE_RATE {
            return Err(Error::UnsupportedSampleRate(self.sample_rate));
        }
        Ok(())
    }
}

/// Sample encodings supported by [`save_audio`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BitDepth {
    #[serde(rename = "16")]
    Int16,
    #[serde(rename = "24")]
    Int24,
    #[serde(rename = "float32")]
    Float32,
}

/// Outcome of a save: how many samples had to be clipped into [-1, 1].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SaveReport {
    pub clipped: usize,
}

/// Reads a RIFF/WAVE file with 16-bit, 24-bit or 32-bit float samples.
///
/// Integer PCM is scaled by `2^-(bits-1)`. Files not at 44100 Hz are
/// rejected; there is no resampler.
pub fn load_audio(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| hound_err(path, e))?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::UnsupportedSampleRate(spec.sample_rate));
    }
    let n_ch = spec.channels as usize;
    if n_ch == 0 {
        return Err(Error::Decode {
            path: path.into(),
            message: "zero channels".into(),
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = 1.0 / (1i64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| hound_err(path, e))?
        }
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| hound_err(path, e))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedCodec(format!(
                "{bits}-bit {fmt:?} in {}",
                path.display()
            )))
        }
    };
    let frames = interleaved.len() / n_ch;
    let mut channels = vec![Vec::with_capacity(frames); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (ch, &v) in channels.iter_mut().zip(frame) {
            ch.push(v);
        }
    }
    AudioClip::new(channels, spec.sample_rate)
}

/// Mean across channels. Mono input is returned unchanged.
pub fn downmix(clip: &AudioClip) -> AudioClip {
    if clip.is_mono() {
        return clip.clone();
    }
    let n = clip.num_channels() as f64;
    let samples = (0..clip.len())
        .map(|i| clip.channels.iter().map(|c| c[i]).sum::<f64>() / n)
        .collect();
    AudioClip {
        channels: vec![samples],
        sample_rate: clip.sample_rate,
    }
}

/// Writes `clip` as a little-endian PCM WAV with only `fmt ` and `data` chunks.
///
/// Out-of-range samples are clamped and counted. Integer depths clamp to
/// the largest representable positive value, `1 - 2^-(bits-1)`.
pub fn save_audio(clip: &AudioClip, path: impl AsRef<Path>, depth: BitDepth) -> Result<SaveReport> {
    let path = path.as_ref();
    let (bits, format) = match depth {
        BitDepth::Int16 => (16, hound::SampleFormat::Int),
        BitDepth::Int24 => (24, hound::SampleFormat::Int),
        BitDepth::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: clip.num_channels() as u16,
        sample_rate: clip.sample_rate,
        bits_per_sample: bits,
        sample_format: format,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| hound_err(path, e))?;
    let mut report = SaveReport::default();
    for i in 0..clip.len() {
        for ch in &clip.channels {
            let mut x = ch[i];
            if !(-1.0..=1.0).contains(&x) || x.is_nan() {
                report.clipped += 1;
                x = if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
            }
            match depth {
                BitDepth::Float32 => writer.write_sample(x as f32),
                BitDepth::Int16 | BitDepth::Int24 => writer.write_sample(quantize(x, bits)),
            }
            .map_err(|e| hound_err(path, e))?;
        }
    }
    writer.finalize().map_err(|e| hound_err(path, e))?;
    if report.clipped > 0 {
        warn!("{}: clipped {} samples", path.display(), report.clipped);
    }
    Ok(report)
}

fn quantize(x: f64, bits: u16) -> i32 {
    let full = (1i64 << (bits - 1)) as f64;
    (x * full).round().clamp(-full, full - 1.0) as i32
}

fn hound_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => Error::UnsupportedCodec(path.display().to_string()),
        other => Error::Decode {
            path: path.into(),
            message: other.to_string(),
        },
    }
}
