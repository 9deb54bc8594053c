//! Primitive clustering: stack the primitive masks into a per-bin embedding
//! and softly assign every bin to the fixed corners `[0]^D` (accompaniment)
//! and `[1]^D` (vocals).

use ndarray::{Array2, Array3, Axis, Zip};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::primitives::{Primitive, PrimitiveConfig};
use crate::tfr::{self, ComplexSpectrogram, MagnitudeSpectrogram, SoftMask};

/// Default clustering hardness.
pub const DEFAULT_BETA: f64 = 5.0;

/// T x F x D stack of primitive masks.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTensor {
    values: Array3<f64>,
    names: Vec<String>,
}

impl EmbeddingTensor {
    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dims(&self) -> usize {
        self.values.len_of(Axis(2))
    }

    pub fn shape(&self) -> (usize, usize) {
        let (t, f, _) = self.values.dim();
        (t, f)
    }

    /// Embedding vector of bin `(t, f)`.
    pub fn point(&self, t: usize, f: usize) -> Vec<f64> {
        self.values.slice(ndarray::s![t, f, ..]).to_vec()
    }

    /// Mask for dimension `d`.
    pub fn slice(&self, d: usize) -> SoftMask {
        SoftMask::from_clamped(self.values.index_axis(Axis(2), d).to_owned())
    }
}

/// Soft memberships `gamma[t, f, k]` for k = 0 (accompaniment), 1 (vocals).
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub gamma: Array3<f64>,
    pub beta: f64,
}

impl ClusterAssignment {
    pub fn posterior(&self, t: usize, f: usize) -> [f64; 2] {
        [self.gamma[[t, f, 0]], self.gamma[[t, f, 1]]]
    }
}

#[derive(Debug, Clone)]
pub struct Clustering {
    pub assignment: ClusterAssignment,
    pub vocals: SoftMask,
    pub accompaniment: SoftMask,
}

/// Stacks masks in input order. Names default to `dim{i}` when not given.
pub fn embed(masks: &[SoftMask], names: Option<&[String]>) -> Result<EmbeddingTensor> {
    let first = masks.first().ok_or(Error::Empty("no masks to embed"))?;
    let shape = first.shape();
    if let Some(m) = masks.iter().find(|m| m.shape() != shape) {
        return Err(Error::ShapeMismatch {
            expected: shape,
            actual: m.shape(),
        });
    }
    let names = match names {
        Some(n) if n.len() == masks.len() => n.to_vec(),
        Some(n) => {
            return Err(Error::invalid(format!(
                "{} names for {} masks",
                n.len(),
                masks.len()
            )))
        }
        None => (0..masks.len()).map(|i| format!("dim{i}")).collect(),
    };
    let views: Vec<_> = masks.iter().map(|m| m.values().view()).collect();
    let values = ndarray::stack(Axis(2), &views).expect("shapes checked above");
    Ok(EmbeddingTensor { values, names })
}

/// Distances `(d0, d1)` from `x` to `[0]^D` and `[1]^D`.
pub fn corner_distances(x: &[f64]) -> (f64, f64) {
    let (mut s0, mut s1) = (0.0, 0.0);
    for &v in x {
        s0 += v * v;
        s1 += (1.0 - v) * (1.0 - v);
    }
    (s0.sqrt(), s1.sqrt())
}

/// Softmax of `-beta * d_k`, evaluated with the larger exponent subtracted.
/// Returns `(M0, M1)` with `M0 = 1 - M1`.
pub fn soft_assign(d0: f64, d1: f64, beta: f64) -> (f64, f64) {
    let (z0, z1) = (-beta * d0, -beta * d1);
    let m = z0.max(z1);
    let (e0, e1) = ((z0 - m).exp(), (z1 - m).exp());
    let m1 = e1 / (e0 + e1);
    (1.0 - m1, m1)
}

/// Fixed-centroid soft clustering of every bin.
pub fn primitive_cluster(emb: &EmbeddingTensor, beta: f64) -> Result<Clustering> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be positive and finite, got {beta}")));
    }
    if emb.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embedding"));
    }
    let (t, f) = emb.shape();
    let mut vocals = Array2::zeros((t, f));
    Zip::from(&mut vocals)
        .and(emb.values.lanes(Axis(2)))
        .par_for_each(|m, lane| {
            let (d0, d1) = match lane.as_slice() {
                Some(s) => corner_distances(s),
                None => corner_distances(&lane.to_vec()),
            };
            *m = soft_assign(d0, d1, beta).1;
        });
    let mut gamma = Array3::zeros((t, f, 2));
    Zip::from(gamma.lanes_mut(Axis(2)))
        .and(&vocals)
        .for_each(|mut g, &m1| {
            g[0] = 1.0 - m1;
            g[1] = m1;
        });
    let accompaniment = vocals.mapv(|m| 1.0 - m);
    Ok(Clustering {
        assignment: ClusterAssignment { gamma, beta },
        vocals: SoftMask::from_clamped(vocals),
        accompaniment: SoftMask::from_clamped(accompaniment),
    })
}

/// Label of the nearest corner for a single point; ties go to 0.
pub fn hard_label(x: &[f64]) -> u8 {
    let (d0, d1) = corner_distances(x);
    u8::from(d1 < d0)
}

/// Nearest-corner labels for every bin (1 = vocals). Ties go to accompaniment.
pub fn hard_assign(emb: &EmbeddingTensor) -> Array2<u8> {
    let (t, f) = emb.shape();
    let mut out = Array2::zeros((t, f));
    Zip::from(&mut out)
        .and(emb.values.lanes(Axis(2)))
        .for_each(|l, lane| *l = hard_label(&lane.to_vec()));
    out
}

/// Everything produced by one separation.
#[derive(Debug, Clone)]
pub struct SeparationResult {
    pub vocals: AudioClip,
    pub accompaniment: AudioClip,
    pub primitive_masks: Vec<(Primitive, SoftMask)>,
    pub embedding: EmbeddingTensor,
    pub clustering: Clustering,
    pub spectrogram: ComplexSpectrogram,
    pub magnitude: MagnitudeSpectrogram,
}

/// Runs all four primitives and primitive clustering on a mono 44100 Hz clip.
pub fn separate(clip: &AudioClip, cfg: &PrimitiveConfig, beta: f64) -> Result<SeparationResult> {
    separate_with(clip, cfg, beta, &Primitive::ALL)
}

/// [`separate`] restricted to a chosen subset of primitives.
pub fn separate_with(
    clip: &AudioClip,
    cfg: &PrimitiveConfig,
    beta: f64,
    primitives: &[Primitive],
) -> Result<SeparationResult> {
    cfg.validate()?;
    let spectrogram = tfr::stft(clip)?;
    let magnitude = spectrogram.magnitude();
    let primitive_masks = primitives
        .iter()
        .map(|&p| p.run(&magnitude, cfg).map(|m| (p, m)))
        .collect::<Result<Vec<_>>>()?;
    let masks: Vec<SoftMask> = primitive_masks.iter().map(|(_, m)| m.clone()).collect();
    let names: Vec<String> = primitives.iter().map(|p| p.name().to_string()).collect();
    let embedding = embed(&masks, Some(&names))?;
    let clustering = primitive_cluster(&embedding, beta)?;
    let (vocals, accompaniment) = resynthesize(&spectrogram, &clustering.vocals, clip.len())?;
    Ok(SeparationResult {
        vocals,
        accompaniment,
        primitive_masks,
        embedding,
        clustering,
        spectrogram,
        magnitude,
    })
}

/// Applies `vocals_mask` and its complement and inverts both.
pub fn resynthesize(
    spec: &ComplexSpectrogram,
    vocals_mask: &SoftMask,
    length: usize,
) -> Result<(AudioClip, AudioClip)> {
    let v = tfr::istft(&tfr::apply_mask(spec, vocals_mask)?, length)?;
    let a = tfr::istft(&tfr::apply_mask(spec, &vocals_mask.complement())?, length)?;
    Ok((v, a))
}
