//! Training-set bootstrapping: segment a corpus, separate every segment,
//! drop low-confidence estimates and remix the survivors across mixtures.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::{downmix, load_audio, save_audio, AudioClip, BitDepth};
use crate::confidence::{confidence_report, ConfidenceReport, DEFAULT_SAMPLES};
use crate::ensemble::{separate, DEFAULT_BETA};
use crate::error::{Error, Result};
use crate::primitives::PrimitiveConfig;

pub const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_DROP_FRACTION: f64 = 0.25;
pub const SNIPPET_S: f64 = 15.0;
pub const SNR_RANGE_DB: (f64, f64) = (-2.5, 2.5);
const MAX_REDRAWS: usize = 10;
const MAX_PAIR_ATTEMPTS: usize = 100;
/// Peak level the remixed mixture is scaled under.
const HEADROOM_PEAK: f64 = 0.99;

/// Derives an independent per-item seed from a master seed.
pub fn item_seed(master: u64, index: u64) -> u64 {
    let digest = Sha256::new()
        .chain_update(master.to_le_bytes())
        .chain_update(index.to_le_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentParams {
    pub length_s: f64,
    pub overlap_s: f64,
    pub quiet_threshold_db: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            length_s: 30.0,
            overlap_s: 15.0,
            quiet_threshold_db: -40.0,
        }
    }
}

impl SegmentParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.length_s.is_finite()
            && self.overlap_s.is_finite()
            && self.overlap_s >= 0.0
            && self.length_s > self.overlap_s;
        if !ok {
            return Err(Error::invalid(format!(
                "segment length {} s must exceed overlap {} s >= 0",
                self.length_s, self.overlap_s
            )));
        }
        if self.quiet_threshold_db.is_nan() {
            return Err(Error::invalid("quiet threshold is NaN"));
        }
        Ok(())
    }
}

/// A segmented slice of a clip and its start time in seconds.
#[derive(Debug, Clone)]
pub struct Segment {
    pub index: usize,
    pub offset_s: f64,
    pub clip: AudioClip,
}

/// Splits `clip` into full-length overlapping segments. The trailing
/// partial segment is dropped, as are segments quieter than the threshold.
/// Segment indices count every full segment, kept or not.
pub fn segment(clip: &AudioClip, params: &SegmentParams) -> Result<Vec<Segment>> {
    params.validate()?;
    let sr = clip.sample_rate() as f64;
    let len = (params.length_s * sr).round() as usize;
    let hop = ((params.length_s - params.overlap_s) * sr).round() as usize;
    if len == 0 || hop == 0 {
        return Err(Error::invalid("segment length or hop rounds to zero samples"));
    }
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut index = 0usize;
    while start + len <= clip.len() {
        let piece = clip.slice(start, len)?;
        if piece.rms_db() >= params.quiet_threshold_db {
            out.push(Segment {
                index,
                offset_s: start as f64 / sr,
                clip: piece,
            });
        }
        start += hop;
        index += 1;
    }
    Ok(out)
}

/// One separated segment: both stems on disk plus the segment confidence,
/// which is shared by the two stems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEstimate {
    pub id: String,
    pub origin: String,
    pub offset_s: f64,
    pub vocals_path: PathBuf,
    pub accompaniment_path: PathBuf,
    pub confidence: f64,
    pub report: ConfidenceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusOptions {
    pub primitives: PrimitiveConfig,
    pub beta: f64,
    pub confidence_samples: usize,
    pub seed: u64,
    pub segments: SegmentParams,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            primitives: PrimitiveConfig::default(),
            beta: DEFAULT_BETA,
            confidence_samples: DEFAULT_SAMPLES,
            seed: 0,
            segments: SegmentParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusFailure {
    pub path: PathBuf,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRun {
    pub estimates: Vec<SourceEstimate>,
    pub failures: Vec<CorpusFailure>,
}

impl CorpusRun {
    pub fn fingerprint(&self) -> String {
        pool_fingerprint(&self.estimates)
    }
}

/// Mixture identifiers: file stems, falling back to the full path when two
/// corpus files share a stem.
fn origin_ids(paths: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = paths
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.to_string_lossy().into_owned())
        })
        .collect();
    stems
        .iter()
        .zip(paths)
        .map(|(stem, p)| {
            if stems.iter().filter(|s| *s == stem).count() > 1 {
                p.to_string_lossy().replace(['/', '\\'], "_")
            } else {
                stem.clone()
            }
        })
        .collect()
}

fn separate_file(
    path: &Path,
    file_index: usize,
    origin: &str,
    opts: &CorpusOptions,
    out_dir: &Path,
) -> Result<Vec<SourceEstimate>> {
    let clip = downmix(&load_audio(path)?);
    let segments = segment(&clip, &opts.segments)?;
    let mut out = Vec::with_capacity(segments.len());
    for seg in segments {
        let result = separate(&seg.clip, &opts.primitives, opts.beta)?;
        let seed = item_seed(opts.seed, ((file_index as u64) << 32) | seg.index as u64);
        let report = confidence_report(
            &result.embedding,
            &result.clustering.assignment,
            &result.magnitude,
            opts.confidence_samples,
            seed,
        )?;
        let id = format!("{origin}#{:03}", seg.index);
        let stem = format!("{origin}_{:03}", seg.index);
        let vocals_path = out_dir.join(format!("{stem}_vocals.wav"));
        let accompaniment_path = out_dir.join(format!("{stem}_accompaniment.wav"));
        save_audio(&result.vocals, &vocals_path, BitDepth::Float32)?;
        save_audio(&result.accompaniment, &accompaniment_path, BitDepth::Float32)?;
        out.push(SourceEstimate {
            id,
            origin: origin.to_string(),
            offset_s: seg.offset_s,
            vocals_path,
            accompaniment_path,
            confidence: report.confidence,
            report,
        });
    }
    Ok(out)
}

/// Separates every retained segment of every corpus file, writing the
/// stems to `out_dir`. Files that fail are logged and reported, never fatal.
pub fn separate_corpus(paths: &[PathBuf], opts: &CorpusOptions, out_dir: &Path) -> Result<CorpusRun> {
    opts.primitives.validate()?;
    opts.segments.validate()?;
    if !(opts.beta > 0.0 && opts.beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be positive, got {}", opts.beta)));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let origins = origin_ids(paths);
    let results: Vec<Result<Vec<SourceEstimate>>> = paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| separate_file(p, i, &origins[i], opts, out_dir))
        .collect();
    let mut run = CorpusRun {
        estimates: Vec::new(),
        failures: Vec::new(),
    };
    for (path, r) in paths.iter().zip(results) {
        match r {
            Ok(mut est) => run.estimates.append(&mut est),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                run.failures.push(CorpusFailure {
                    path: path.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(run)
}

/// SHA-256 over the identities and confidences of a pool, in order.
pub fn pool_fingerprint(pool: &[SourceEstimate]) -> String {
    let mut h = Sha256::new();
    for e in pool {
        h.update(e.id.as_bytes());
        h.update([0]);
        h.update(e.origin.as_bytes());
        h.update([0]);
        h.update(e.offset_s.to_le_bytes());
        h.update(e.confidence.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn sorted_by_confidence(pool: &[SourceEstimate]) -> Vec<SourceEstimate> {
    let mut sorted = pool.to_vec();
    sorted.sort_by(|a, b| a.confidence.total_cmp(&b.confidence).then_with(|| a.id.cmp(&b.id)));
    sorted
}

/// Drops the `floor(drop_fraction * len)` least confident estimates and
/// returns the rest in ascending confidence order.
pub fn filter_by_confidence(pool: &[SourceEstimate], drop_fraction: f64) -> Result<Vec<SourceEstimate>> {
    if pool.is_empty() {
        return Err(Error::Empty("estimate pool"));
    }
    if !(0.0..1.0).contains(&drop_fraction) {
        return Err(Error::invalid(format!("drop fraction {drop_fraction} outside [0, 1)")));
    }
    let drop = (drop_fraction * pool.len() as f64).floor() as usize;
    Ok(sorted_by_confidence(pool).split_off(drop))
}

/// Confidence quartile `q` (1 = least confident) of the pool.
pub fn select_quartile(pool: &[SourceEstimate], q: u8) -> Result<Vec<SourceEstimate>> {
    if pool.is_empty() {
        return Err(Error::Empty("estimate pool"));
    }
    if !(1..=4).contains(&q) {
        return Err(Error::invalid(format!("quartile must be 1..=4, got {q}")));
    }
    let n = pool.len();
    let (lo, hi) = ((q as usize - 1) * n / 4, q as usize * n / 4);
    Ok(sorted_by_confidence(pool)[lo..hi].to_vec())
}

/// Confidence values at the 25th, 50th and 75th percentiles (linear
/// interpolation between order statistics).
pub fn quartile_boundaries(pool: &[SourceEstimate]) -> Option<[f64; 3]> {
    if pool.is_empty() {
        return None;
    }
    let mut c: Vec<f64> = pool.iter().map(|e| e.confidence).collect();
    c.sort_by(f64::total_cmp);
    let at = |p: f64| {
        let x = p * (c.len() - 1) as f64;
        let (i, frac) = (x.floor() as usize, x.fract());
        if i + 1 < c.len() {
            c[i] + frac * (c[i + 1] - c[i])
        } else {
            c[i]
        }
    };
    Some([at(0.25), at(0.5), at(0.75)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemixManifest {
    pub vocal_id: String,
    pub accomp_id: String,
    pub vocal_offset_s: f64,
    pub accomp_offset_s: f64,
    pub target_snr_db: f64,
    pub vocal_gain: f64,
    /// Common scale applied to both references to keep the mixture peak
    /// below full scale. It does not change the SNR.
    pub headroom_gain: f64,
    pub seed: u64,
    pub mixture_path: String,
    pub vocal_ref_path: String,
    pub accomp_ref_path: String,
}

#[derive(Debug, Clone)]
pub struct Remix {
    pub mixture: AudioClip,
    pub vocal_ref: AudioClip,
    pub accomp_ref: AudioClip,
    pub manifest: RemixManifest,
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `10 log10(|v|^2 / |a|^2)`, vocals as signal and accompaniment as noise.
pub fn snr_db(vocals: &[f64], accompaniment: &[f64]) -> f64 {
    10.0 * (power(vocals) / power(accompaniment)).log10()
}

/// Grid step `2^(e - 24)` where `2^e` bounds every value to be written:
/// multiples of it below `2^e` in magnitude are exact in float32, and so
/// is the sum of two such references when it stays below `2^e`.
fn float32_grid(bound: f64) -> f64 {
    let e = (bound * (1.0 + 1e-6)).log2().floor() + 1.0;
    2f64.powf(e - 24.0)
}

/// Scales `v` by `gain` and `a` by `headroom`, both rounded to `step`.
fn quantized_refs(v: &[f64], a: &[f64], gain: f64, headroom: f64, step: f64) -> (Vec<f64>, Vec<f64>) {
    let q = |x: f64| (x / step).round() * step;
    (
        v.iter().map(|x| q(headroom * gain * x)).collect(),
        a.iter().map(|y| q(headroom * y)).collect(),
    )
}

/// Mixes a `snippet_s` excerpt of `vocals` with one of `accompaniment` at
/// `target_snr_db`. Returns `Ok(None)` when no non-silent snippet pair is
/// found within the redraw budget.
pub fn remix(
    vocal: &SourceEstimate,
    vocals: &AudioClip,
    accomp: &SourceEstimate,
    accompaniment: &AudioClip,
    snippet_s: f64,
    target_snr_db: f64,
    seed: u64,
) -> Result<Option<Remix>> {
    if vocal.origin == accomp.origin {
        return Err(Error::invalid(format!(
            "vocal {} and accompaniment {} share origin {}",
            vocal.id, accomp.id, vocal.origin
        )));
    }
    if !target_snr_db.is_finite() {
        return Err(Error::NonFinite("target SNR"));
    }
    vocals.require_canonical_mono()?;
    accompaniment.require_canonical_mono()?;
    let sr = vocals.sample_rate() as f64;
    let len = (snippet_s * sr).round() as usize;
    if len == 0 || vocals.len() < len || accompaniment.len() < len {
        return Err(Error::invalid(format!(
            "sources of {} and {} samples are shorter than a {snippet_s} s snippet",
            vocals.len(),
            accompaniment.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_REDRAWS {
        let vo = rng.gen_range(0..=vocals.len() - len);
        let ao = rng.gen_range(0..=accompaniment.len() - len);
        let v = &vocals.samples()[vo..vo + len];
        let a = &accompaniment.samples()[ao..ao + len];
        let (pv, pa) = (power(v), power(a));
        if pv == 0.0 || pa == 0.0 {
            continue;
        }
        let current = 10.0 * (pv / pa).log10();
        let gain = 10f64.powf((target_snr_db - current) / 20.0);
        let peak = v
            .iter()
            .zip(a)
            .map(|(x, y)| (gain * x + y).abs())
            .fold(0.0, f64::max);
        let headroom = if peak > HEADROOM_PEAK { HEADROOM_PEAK / peak } else { 1.0 };
        let bound = v
            .iter()
            .zip(a)
            .map(|(x, y)| headroom * (gain * x).abs().max(y.abs()).max((gain * x + y).abs()))
            .fold(0.0, f64::max);
        let step = float32_grid(bound);
        // Rounding shifts the SNR slightly; one multiplicative correction of
        // the gain absorbs the bulk of it.
        let (mut vr, ar) = quantized_refs(v, a, gain, headroom, step);
        if power(&vr) == 0.0 || power(&ar) == 0.0 {
            continue;
        }
        let mut achieved = snr_db(&vr, &ar);
        let corrected = gain * 10f64.powf((target_snr_db - achieved) / 20.0);
        let (vr2, _) = quantized_refs(v, a, corrected, headroom, step);
        let achieved2 = snr_db(&vr2, &ar);
        let mut gain = gain;
        if (achieved2 - target_snr_db).abs() < (achieved - target_snr_db).abs() {
            (vr, achieved, gain) = (vr2, achieved2, corrected);
        }
        let mix: Vec<f64> = vr.iter().zip(&ar).map(|(x, y)| x + y).collect();
        if (achieved - target_snr_db).abs() > 1e-6 {
            return Err(Error::Degenerate(format!(
                "achieved SNR {achieved} dB misses target {target_snr_db} dB"
            )));
        }
        let clip = |s: Vec<f64>| AudioClip::mono(s, vocals.sample_rate());
        return Ok(Some(Remix {
            mixture: clip(mix)?,
            vocal_ref: clip(vr)?,
            accomp_ref: clip(ar)?,
            manifest: RemixManifest {
                vocal_id: vocal.id.clone(),
                accomp_id: accomp.id.clone(),
                vocal_offset_s: vo as f64 / sr,
                accomp_offset_s: ao as f64 / sr,
                target_snr_db,
                vocal_gain: gain,
                headroom_gain: headroom,
                seed,
                mixture_path: String::new(),
                vocal_ref_path: String::new(),
                accomp_ref_path: String::new(),
            },
        }));
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub drop_fraction: f64,
    /// Set when the pool was restricted to one confidence quartile.
    pub quartile: Option<u8>,
    pub corpus_fingerprint: String,
    pub entries: Vec<RemixManifest>,
}

impl DatasetManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetOptions {
    pub count: usize,
    pub snr_range_db: (f64, f64),
    pub snippet_s: f64,
    pub seed: u64,
    /// Recorded in the manifest; filtering happens before `build_dataset`.
    pub drop_fraction: f64,
    pub quartile: Option<u8>,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            count: 100,
            snr_range_db: SNR_RANGE_DB,
            snippet_s: SNIPPET_S,
            seed: 0,
            drop_fraction: DEFAULT_DROP_FRACTION,
            quartile: None,
        }
    }
}

fn render_item(pool: &[SourceEstimate], opts: &DatasetOptions, index: usize, out_dir: &Path) -> Result<RemixManifest> {
    let mut rng = ChaCha8Rng::seed_from_u64(item_seed(opts.seed, index as u64));
    let (lo, hi) = opts.snr_range_db;
    for _ in 0..MAX_PAIR_ATTEMPTS {
        let vi = rng.gen_range(0..pool.len());
        let partners: Vec<usize> = (0..pool.len()).filter(|&j| pool[j].origin != pool[vi].origin).collect();
        let ai = partners[rng.gen_range(0..partners.len())];
        let target = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let remix_seed: u64 = rng.gen();
        let (v, a) = (&pool[vi], &pool[ai]);
        let vocals = load_audio(&v.vocals_path)?;
        let accompaniment = load_audio(&a.accompaniment_path)?;
        let Some(mut r) = remix(v, &vocals, a, &accompaniment, opts.snippet_s, target, remix_seed)? else {
            log::warn!("silent snippets for pair {} / {}; redrawing", v.id, a.id);
            continue;
        };
        let names = [
            format!("{index:05}_mixture.wav"),
            format!("{index:05}_vocals.wav"),
            format!("{index:05}_accompaniment.wav"),
        ];
        for (clip, name) in [&r.mixture, &r.vocal_ref, &r.accomp_ref].into_iter().zip(&names) {
            save_audio(clip, out_dir.join(name), BitDepth::Float32)?;
        }
        let [m, vr, ar] = names;
        r.manifest.mixture_path = m;
        r.manifest.vocal_ref_path = vr;
        r.manifest.accomp_ref_path = ar;
        return Ok(r.manifest);
    }
    Err(Error::Degenerate(format!(
        "no non-silent cross-origin pair found for item {index}"
    )))
}

/// Renders `opts.count` cross-origin remixes into `out_dir` and returns the
/// manifest. Paths in the manifest are relative to `out_dir`.
pub fn build_dataset(pool: &[SourceEstimate], opts: &DatasetOptions, out_dir: &Path) -> Result<DatasetManifest> {
    let (lo, hi) = opts.snr_range_db;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::invalid(format!("bad SNR range [{lo}, {hi}]")));
    }
    if !(opts.snippet_s > 0.0 && opts.snippet_s.is_finite()) {
        return Err(Error::invalid(format!("snippet length {} s", opts.snippet_s)));
    }
    let origins: BTreeSet<&str> = pool.iter().map(|e| e.origin.as_str()).collect();
    if origins.len() < 2 {
        return Err(Error::PoolTooSmall(format!(
            "{} estimates from {} mixture(s); need at least two mixtures",
            pool.len(),
            origins.len()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let entries = (0..opts.count)
        .into_par_iter()
        .map(|i| render_item(pool, opts, i, out_dir))
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetManifest {
        version: MANIFEST_VERSION,
        seed: opts.seed,
        drop_fraction: opts.drop_fraction,
        quartile: opts.quartile,
        corpus_fingerprint: pool_fingerprint(pool),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(secs: f64, amp: f64) -> Vec<f64> {
        (0..(secs * 44100.0) as usize)
            .map(|n| amp * (n as f64 * 0.05).sin())
            .collect()
    }

    fn estimate(id: &str, origin: &str, confidence: f64) -> SourceEstimate {
        SourceEstimate {
            id: id.into(),
            origin: origin.into(),
            offset_s: 0.0,
            vocals_path: PathBuf::new(),
            accompaniment_path: PathBuf::new(),
            confidence,
            report: ConfidenceReport {
                silhouette_mean: confidence,
                posterior_strength_mean: 1.0,
                confidence,
                n_sampled: 0,
                seed: 0,
                degenerate: false,
            },
        }
    }

    #[test]
    fn segment_offsets() {
        let clip = AudioClip::mono(tone(60.0, 0.5), 44100).unwrap();
        let segs = segment(&clip, &SegmentParams::default()).unwrap();
        let offsets: Vec<f64> = segs.iter().map(|s| s.offset_s).collect();
        assert_eq!(offsets, vec![0.0, 15.0, 30.0]);
        assert!(segs.iter().all(|s| s.clip.len() == 30 * 44100));
        let short = AudioClip::mono(tone(29.0, 0.5), 44100).unwrap();
        assert!(segment(&short, &SegmentParams::default()).unwrap().is_empty());
    }

    #[test]
    fn quiet_segment_removed() {
        // Loud everywhere except 15..45 s, which is exactly the middle segment.
        let mut s = tone(60.0, 0.5);
        s[15 * 44100..45 * 44100].iter_mut().for_each(|v| *v = 0.0);
        let clip = AudioClip::mono(s, 44100).unwrap();
        let segs = segment(&clip, &SegmentParams::default()).unwrap();
        let offsets: Vec<f64> = segs.iter().map(|s| s.offset_s).collect();
        assert_eq!(offsets, vec![0.0, 30.0]);
        assert_eq!(segs[1].index, 2);
    }

    #[test]
    fn segment_params_checked() {
        let clip = AudioClip::mono(tone(1.0, 0.5), 44100).unwrap();
        let bad = SegmentParams {
            length_s: 10.0,
            overlap_s: 10.0,
            ..SegmentParams::default()
        };
        assert!(segment(&clip, &bad).is_err());
    }

    #[test]
    fn filter_drops_lowest() {
        let pool: Vec<_> = (1..=8)
            .rev()
            .map(|i| estimate(&format!("s{i}"), &format!("m{}", i % 2), i as f64 / 10.0))
            .collect();
        let kept = filter_by_confidence(&pool, 0.25).unwrap();
        let ids: Vec<&str> = kept.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["s3", "s4", "s5", "s6", "s7", "s8"]);
        assert_eq!(filter_by_confidence(&pool, 0.0).unwrap().len(), 8);
        assert!(filter_by_confidence(&pool, 1.0).is_err());
        assert!(filter_by_confidence(&[], 0.25).is_err());
    }

    #[test]
    fn quartiles_partition_pool() {
        let pool: Vec<_> = (1..=8).map(|i| estimate(&format!("s{i}"), "m", i as f64)).collect();
        let q1: Vec<f64> = select_quartile(&pool, 1).unwrap().iter().map(|e| e.confidence).collect();
        assert_eq!(q1, vec![1.0, 2.0]);
        let total: usize = (1..=4).map(|q| select_quartile(&pool, q).unwrap().len()).sum();
        assert_eq!(total, 8);
        assert!(select_quartile(&pool, 5).is_err());
        assert_eq!(quartile_boundaries(&pool).unwrap(), [2.75, 4.5, 6.25]);
    }

    #[test]
    fn ties_broken_by_id() {
        let pool = vec![estimate("b", "m", 0.5), estimate("a", "m", 0.5), estimate("c", "m", 0.1)];
        let kept = filter_by_confidence(&pool, 0.5).unwrap();
        let ids: Vec<&str> = kept.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
    }

    fn clip(secs: f64, amp: f64, seed: u64) -> AudioClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioClip::mono((0..(secs * 44100.0) as usize).map(|_| amp * rng.gen_range(-1.0..1.0)).collect(), 44100).unwrap()
    }

    #[test]
    fn remix_hits_target() {
        let (v, a) = (clip(2.0, 0.3, 1), clip(2.0, 0.2, 2));
        let (ev, ea) = (estimate("v", "A", 1.0), estimate("a", "B", 1.0));
        let r = remix(&ev, &v, &ea, &a, 1.0, 1.7, 3).unwrap().unwrap();
        assert!((snr_db(r.vocal_ref.samples(), r.accomp_ref.samples()) - 1.7).abs() < 1e-6);
        for ((m, x), y) in r.mixture.samples().iter().zip(r.vocal_ref.samples()).zip(r.accomp_ref.samples()) {
            assert_eq!(*m, x + y);
            assert_eq!(*m as f32 as f64, *m);
            assert_eq!(*x as f32 as f64, *x);
        }
        assert_eq!(r.mixture.len(), 44100);
    }

    #[test]
    fn remix_gain_oracle() {
        // Equal snippet power: 0 dB needs unit gain, +6.0206 dB needs gain 2.
        let s: Vec<f64> = (0..44100).map(|n| if n % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let v = AudioClip::mono(s.clone(), 44100).unwrap();
        let a = AudioClip::mono(s.iter().map(|x| -x).collect(), 44100).unwrap();
        let (ev, ea) = (estimate("v", "A", 1.0), estimate("a", "B", 1.0));
        let r = remix(&ev, &v, &ea, &a, 0.5, 0.0, 0).unwrap().unwrap();
        assert!((r.manifest.vocal_gain - 1.0).abs() < 1e-6);
        let target = 20.0 * 2f64.log10();
        let r = remix(&ev, &v, &ea, &a, 0.5, target, 0).unwrap().unwrap();
        assert!((r.manifest.vocal_gain - 2.0).abs() < 1e-6);
        assert!((snr_db(r.vocal_ref.samples(), r.accomp_ref.samples()) - target).abs() < 1e-6);
        assert_eq!(r.manifest.headroom_gain, 1.0);
    }

    #[test]
    fn remix_rejects_same_origin_and_short_sources() {
        let (v, a) = (clip(2.0, 0.3, 1), clip(2.0, 0.2, 2));
        let (ev, ea) = (estimate("v", "A", 1.0), estimate("a", "A", 1.0));
        assert!(remix(&ev, &v, &ea, &a, 1.0, 0.0, 0).is_err());
        let eb = estimate("b", "B", 1.0);
        assert!(remix(&ev, &v, &eb, &a, 3.0, 0.0, 0).is_err());
    }

    #[test]
    fn silent_source_is_skipped() {
        let v = AudioClip::silence(44100, 44100);
        let a = clip(1.0, 0.2, 2);
        let (ev, ea) = (estimate("v", "A", 1.0), estimate("a", "B", 1.0));
        assert!(remix(&ev, &v, &ea, &a, 0.5, 0.0, 0).unwrap().is_none());
    }

    #[test]
    fn loud_pairs_get_headroom() {
        let (v, a) = (clip(1.0, 0.9, 1), clip(1.0, 0.9, 2));
        let (ev, ea) = (estimate("v", "A", 1.0), estimate("a", "B", 1.0));
        let r = remix(&ev, &v, &ea, &a, 0.5, 2.5, 0).unwrap().unwrap();
        assert!(r.manifest.headroom_gain < 1.0);
        let peak = r.mixture.samples().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(peak <= HEADROOM_PEAK + 1e-6);
        assert!((snr_db(r.vocal_ref.samples(), r.accomp_ref.samples()) - 2.5).abs() < 1e-6);
    }

    #[test]
    fn item_seeds_differ() {
        assert_ne!(item_seed(1, 0), item_seed(1, 1));
        assert_ne!(item_seed(1, 0), item_seed(2, 0));
        assert_eq!(item_seed(7, 3), item_seed(7, 3));
    }

    #[test]
    fn pool_needs_two_origins() {
        let pool = vec![estimate("a", "m", 0.5), estimate("b", "m", 0.6)];
        let dir = tempfile::tempdir().unwrap();
        let err = build_dataset(&pool, &DatasetOptions::default(), dir.path()).unwrap_err();
        assert!(matches!(err, Error::PoolTooSmall(_)));
    }

    #[test]
    fn duplicate_stems_get_distinct_origins() {
        let ids = origin_ids(&[PathBuf::from("a/x.wav"), PathBuf::from("b/x.wav"), PathBuf::from("c/y.wav")]);
        assert_eq!(ids, ["a_x.wav", "b_x.wav", "y"]);
    }
}
