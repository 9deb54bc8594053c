//! Time-frequency analysis/synthesis and mask arithmetic.
//!
//! Frames use a periodic square-root Hann window for both analysis and
//! synthesis. The signal is zero-padded by half a window on each side so
//! frame `t` is centred on sample `t * hop`, and a clip of `len` samples
//! yields `1 + len / hop` frames (integer division). Synthesis divides by
//! the accumulated squared window, so reconstruction is exact up to
//! rounding even at the clip edges.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

pub const WINDOW_LENGTH: usize = 2048;
pub const HOP_LENGTH: usize = 512;

/// Frame geometry shared by analysis and synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub window_length: usize,
    pub hop_length: usize,
    pub sample_rate: u32,
}

impl Geometry {
    pub const fn canonical() -> Self {
        Self {
            window_length: WINDOW_LENGTH,
            hop_length: HOP_LENGTH,
            sample_rate: crate::SAMPLE_RATE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length < 2 || !self.window_length.is_multiple_of(2) {
            return Err(Error::invalid("window length must be even and >= 2"));
        }
        if self.hop_length == 0 || self.hop_length > self.window_length {
            return Err(Error::invalid("hop must be in 1..=window_length"));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.window_length / 2 + 1
    }

    pub fn num_frames(&self, len: usize) -> usize {
        1 + len / self.hop_length
    }

    /// Centre frequency of bin `k` in Hz.
    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.window_length as f64
    }

    /// Fractional bin index of `hz`.
    pub fn hz_to_bin(&self, hz: f64) -> f64 {
        hz * self.window_length as f64 / self.sample_rate as f64
    }

    /// Frames per second.
    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop_length as f64
    }
}

impl Default for Geometry {
    fn default() -> Self {
        Self::canonical()
    }
}

/// T x F one-sided complex spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub values: Array2<Complex64>,
    pub geometry: Geometry,
}

impl ComplexSpectrogram {
    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn magnitude(&self) -> MagnitudeSpectrogram {
        MagnitudeSpectrogram {
            values: self.values.mapv(|c| c.norm()),
            geometry: self.geometry,
        }
    }
}

impl std::ops::Add for &ComplexSpectrogram {
    type Output = ComplexSpectrogram;

    fn add(self, rhs: Self) -> ComplexSpectrogram {
        ComplexSpectrogram {
            values: &self.values + &rhs.values,
            geometry: self.geometry,
        }
    }
}

/// T x F nonnegative magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    values: Array2<f64>,
    pub geometry: Geometry,
}

impl MagnitudeSpectrogram {
    pub fn new(values: Array2<f64>, geometry: Geometry) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("magnitude spectrogram"));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("magnitudes must be nonnegative"));
        }
        Ok(Self { values, geometry })
    }

    /// Wraps a raster with the canonical 2048/512 @ 44100 Hz geometry.
    pub fn from_raster(values: Array2<f64>) -> Result<Self> {
        Self::new(values, Geometry::canonical())
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn num_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_silent(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Soft vocals mask: 1 means vocals, 0 means accompaniment.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    values: Array2<f64>,
}

impl SoftMask {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            if v.is_finite() {
                return Err(Error::invalid(format!("mask value {v} outside [0, 1]")));
            }
            return Err(Error::NonFinite("soft mask"));
        }
        Ok(Self { values })
    }

    /// Clamps into [0, 1]; NaN becomes the uninformative 0.5.
    pub fn from_clamped(mut values: Array2<f64>) -> Self {
        values.mapv_inplace(|v| if v.is_nan() { 0.5 } else { v.clamp(0.0, 1.0) });
        Self { values }
    }

    pub fn filled(shape: (usize, usize), value: f64) -> Self {
        assert!((0.0..=1.0).contains(&value));
        Self {
            values: Array2::from_elem(shape, value),
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// `1 - m`, the accompaniment-oriented complement.
    pub fn complement(&self) -> SoftMask {
        SoftMask {
            values: self.values.mapv(|v| 1.0 - v),
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.mean().unwrap_or(0.5)
    }
}

fn sqrt_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (std::f64::consts::PI * i as f64 / n as f64).sin())
        .collect()
}

/// Forward STFT with the canonical 2048/512 geometry.
pub fn stft(clip: &AudioClip) -> Result<ComplexSpectrogram> {
    clip.require_canonical_mono()?;
    stft_with(clip.samples(), Geometry::canonical())
}

/// Forward STFT of raw mono samples with an arbitrary geometry.
pub fn stft_with(samples: &[f64], geometry: Geometry) -> Result<ComplexSpectrogram> {
    geometry.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty("clip has no samples"));
    }
    let n = geometry.window_length;
    let hop = geometry.hop_length;
    let frames = geometry.num_frames(samples.len());
    let bins = geometry.num_bins();

    let mut padded = vec![0.0; samples.len() + n];
    padded[n / 2..n / 2 + samples.len()].copy_from_slice(samples);
    let window = sqrt_hann(n);
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(n);

    let rows: Vec<Vec<Complex64>> = (0..frames)
        .into_par_iter()
        .map_init(
            || vec![Complex64::default(); fft.get_inplace_scratch_len()],
            |scratch, t| {
                let start = t * hop;
                let mut buf: Vec<Complex64> = padded[start..start + n]
                    .iter()
                    .zip(&window)
                    .map(|(x, w)| Complex64::new(x * w, 0.0))
                    .collect();
                fft.process_with_scratch(&mut buf, scratch);
                buf.truncate(bins);
                buf
            },
        )
        .collect();

    let mut values = Array2::zeros((frames, bins));
    for (mut dst, src) in values.axis_iter_mut(Axis(0)).zip(rows) {
        dst.iter_mut().zip(src).for_each(|(d, s)| *d = s);
    }
    Ok(ComplexSpectrogram { values, geometry })
}

/// Weighted overlap-add inverse of [`stft_with`], returning `length` samples.
pub fn istft(spec: &ComplexSpectrogram, length: usize) -> Result<AudioClip> {
    let samples = istft_samples(spec, length)?;
    AudioClip::mono(samples, spec.geometry.sample_rate)
}

pub fn istft_samples(spec: &ComplexSpectrogram, length: usize) -> Result<Vec<f64>> {
    let g = spec.geometry;
    g.validate()?;
    let (frames, bins) = spec.shape();
    if bins != g.num_bins() || frames != g.num_frames(length) {
        return Err(Error::ShapeMismatch {
            expected: (g.num_frames(length), g.num_bins()),
            actual: (frames, bins),
        });
    }
    let n = g.window_length;
    let hop = g.hop_length;
    let window = sqrt_hann(n);
    let ifft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_inverse(n);
    let norm = 1.0 / n as f64;

    let time_frames: Vec<Vec<f64>> = (0..frames)
        .into_par_iter()
        .map_init(
            || vec![Complex64::default(); ifft.get_inplace_scratch_len()],
            |scratch, t| {
                let row = spec.values.row(t);
                let mut buf = vec![Complex64::default(); n];
                buf[0] = Complex64::new(row[0].re, 0.0);
                buf[n / 2] = Complex64::new(row[n / 2].re, 0.0);
                for k in 1..n / 2 {
                    buf[k] = row[k];
                    buf[n - k] = row[k].conj();
                }
                ifft.process_with_scratch(&mut buf, scratch);
                buf.iter()
                    .zip(&window)
                    .map(|(c, w)| c.re * norm * w)
                    .collect()
            },
        )
        .collect();

    let mut acc = vec![0.0; length + n];
    let mut wsum = vec![0.0; length + n];
    for (t, frame) in time_frames.iter().enumerate() {
        let start = t * hop;
        for (i, (&x, &w)) in frame.iter().zip(&window).enumerate() {
            acc[start + i] += x;
            wsum[start + i] += w * w;
        }
    }
    Ok((0..length)
        .map(|i| {
            let w = wsum[i + n / 2];
            if w > 1e-12 {
                acc[i + n / 2] / w
            } else {
                0.0
            }
        })
        .collect())
}

/// Multiplies every complex bin by the mask value; phase is untouched.
pub fn apply_mask(spec: &ComplexSpectrogram, mask: &SoftMask) -> Result<ComplexSpectrogram> {
    if spec.shape() != mask.shape() {
        return Err(Error::ShapeMismatch {
            expected: spec.shape(),
            actual: mask.shape(),
        });
    }
    let mut values = spec.values.clone();
    values
        .iter_mut()
        .zip(mask.values.iter())
        .for_each(|(c, &m)| *c *= m);
    Ok(ComplexSpectrogram {
        values,
        geometry: spec.geometry,
    })
}

/// Indices of the `ceil(fraction * T * F)` loudest bins, loudest first.
///
/// Equal magnitudes are ordered by ascending `(t, f)`, so the selected set
/// is fully deterministic.
pub fn loudest_bins(mag: &MagnitudeSpectrogram, fraction: f64) -> Result<Vec<(usize, usize)>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} not in (0, 1]")));
    }
    let (t, f) = mag.shape();
    let total = t * f;
    if total == 0 {
        return Err(Error::Empty("spectrogram has no bins"));
    }
    // The epsilon keeps products like 0.07 * 100 from rounding up a whole bin.
    let k = ((fraction * total as f64 - 1e-9).ceil() as usize).clamp(1, total);
    let flat = mag
        .values
        .as_slice()
        .map(|s| s.to_vec())
        .unwrap_or_else(|| mag.values.iter().copied().collect());
    let cmp = |a: &usize, b: &usize| flat[*b].total_cmp(&flat[*a]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..total).collect();
    if k < total {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    Ok(idx.into_iter().map(|i| (i / f, i % f)).collect())
}

const MSK1_MAGIC: &[u8; 4] = b"MSK1";

/// Writes a raster in the MSK1 dump format: magic, u32 LE T, u32 LE F,
/// then T*F f32 LE values, time-major.
pub fn write_msk1(path: impl AsRef<Path>, raster: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(12 + raster.len() * 4);
    encode_msk1(raster, &mut out).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn encode_msk1(raster: &Array2<f64>, mut w: impl Write) -> std::io::Result<()> {
    let (t, f) = raster.dim();
    w.write_all(MSK1_MAGIC)?;
    w.write_all(&(t as u32).to_le_bytes())?;
    w.write_all(&(f as u32).to_le_bytes())?;
    for v in raster.iter() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_msk1(path: impl AsRef<Path>) -> Result<Array2<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_msk1(&bytes[..]).map_err(|message| Error::Decode {
        path: path.into(),
        message,
    })
}

pub fn decode_msk1(mut r: impl Read) -> std::result::Result<Array2<f32>, String> {
    let mut head = [0u8; 12];
    r.read_exact(&mut head).map_err(|e| e.to_string())?;
    if &head[..4] != MSK1_MAGIC {
        return Err("bad MSK1 magic".into());
    }
    let t = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let f = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let mut body = Vec::new();
    r.read_to_end(&mut body).map_err(|e| e.to_string())?;
    if body.len() != t * f * 4 {
        return Err(format!("expected {} value bytes, found {}", t * f * 4, body.len()));
    }
    let vals = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((t, f), vals).map_err(|e| e.to_string())
}
