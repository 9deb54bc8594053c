//! Synthetic "melody over a loop" scenes with known stems.
//!
//! The vocals stand-in is a non-repeating harmonic melody with vibrato.
//! The accompaniment is a drum loop plus a sustained chord pad that repeats
//! every bar, with optional per-bar variation, plus broadband noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::SAMPLE_RATE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub duration_s: f64,
    /// Melody level relative to the accompaniment.
    pub melody_gain: f64,
    pub vibrato_cents: f64,
    pub vibrato_hz: f64,
    /// Note durations are drawn uniformly from this range (seconds).
    pub note_s: (f64, f64),
    /// Level of the breathy/sibilant noise riding on the melody, relative
    /// to its harmonic part.
    pub breath_gain: f64,
    /// 1.0 repeats the bar exactly; 0.0 redraws every bar.
    pub loop_regularity: f64,
    pub drums_gain: f64,
    pub pad_gain: f64,
    pub noise_gain: f64,
    pub bar_s: f64,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            duration_s: 6.0,
            melody_gain: 1.0,
            vibrato_cents: 40.0,
            vibrato_hz: 5.5,
            note_s: (0.22, 0.55),
            breath_gain: 0.0,
            loop_regularity: 1.0,
            drums_gain: 1.0,
            pad_gain: 1.0,
            noise_gain: 0.02,
            bar_s: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub mixture: AudioClip,
    pub vocals: AudioClip,
    pub accompaniment: AudioClip,
    pub params: SceneParams,
}

const SR: f64 = SAMPLE_RATE as f64;

fn semitone(base: f64, steps: i32) -> f64 {
    base * 2f64.powf(steps as f64 / 12.0)
}

/// Formant centres and bandwidths (Hz) for a few sung vowels.
const VOWELS: [[(f64, f64); 3]; 4] = [
    [(800.0, 120.0), (1200.0, 150.0), (2800.0, 300.0)],
    [(400.0, 100.0), (2000.0, 200.0), (2900.0, 300.0)],
    [(500.0, 100.0), (900.0, 120.0), (2700.0, 300.0)],
    [(300.0, 80.0), (2300.0, 200.0), (3000.0, 300.0)],
];

fn formant_gain(freq: f64, vowel: &[(f64, f64); 3]) -> f64 {
    let peaks: f64 = vowel
        .iter()
        .map(|&(c, b)| 1.0 / (1.0 + ((freq - c) / b).powi(2)))
        .sum();
    // Mild glottal tilt under the formant peaks.
    (0.15 + peaks) * (200.0 / freq.max(200.0)).sqrt()
}

fn melody(len: usize, p: &SceneParams, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Major-scale degrees around A3, wandering without a fixed period.
    const SCALE: [i32; 10] = [0, 2, 4, 5, 7, 9, 11, 12, 14, 16];
    const MAX_PARTIAL_HZ: f64 = 5000.0;
    let mut out = vec![0.0; len];
    let mut breath_rng = ChaCha8Rng::seed_from_u64(rng.gen());
    let mut prev_noise = 0.0;
    let mut pos = (0.05 * SR) as usize;
    let mut degree = 4usize;
    while pos < len {
        let dur = (rng.gen_range(p.note_s.0..p.note_s.1) * SR) as usize;
        let gap = (rng.gen_range(0.0..0.08) * SR) as usize;
        let step: i32 = rng.gen_range(-3..=3);
        degree = (degree as i32 + step).clamp(0, SCALE.len() as i32 - 1) as usize;
        let f0 = semitone(220.0, SCALE[degree]);
        let vowel = &VOWELS[rng.gen_range(0..VOWELS.len())];
        let partials: Vec<f64> = (1..)
            .map(|h| h as f64)
            .take_while(|h| h * f0 < MAX_PARTIAL_HZ)
            .map(|h| formant_gain(h * f0, vowel))
            .collect();
        let norm = partials.iter().map(|a| a * a).sum::<f64>().sqrt();
        let vib_phase = rng.gen_range(0.0..2.0 * PI);
        let end = (pos + dur).min(len);
        let mut phase = 0.0;
        let attack = (0.02 * SR) as usize;
        let release = (0.04 * SR) as usize;
        let consonant = (0.04 * SR) as usize;
        for (i, n) in (pos..end).enumerate() {
            let t = i as f64 / SR;
            let cents = p.vibrato_cents * (2.0 * PI * p.vibrato_hz * t + vib_phase).sin();
            let f = f0 * 2f64.powf(cents / 1200.0);
            phase += 2.0 * PI * f / SR;
            let env = (i as f64 / attack as f64).min(1.0) * ((end - n) as f64 / release as f64).min(1.0);
            let mut v = 0.0;
            for (k, a) in partials.iter().enumerate() {
                let h = (k + 1) as f64;
                if f * h >= SR / 2.0 {
                    break;
                }
                v += a * (h * phase).sin();
            }
            // Differenced white noise: a crude sibilant/breath spectrum.
            let w: f64 = breath_rng.gen_range(-1.0..1.0);
            let hiss = w - prev_noise;
            prev_noise = w;
            let burst = if i < consonant { 3.0 * (1.0 - i as f64 / consonant as f64) } else { 0.0 };
            out[n] += 0.35 * env * v / norm + 0.1 * p.breath_gain * (env + burst) * hiss;
        }
        pos = end + gap;
    }
    out
}

#[derive(Clone)]
struct Bar {
    kicks: Vec<f64>,
    hats: Vec<f64>,
    snares: Vec<f64>,
    chord: [f64; 3],
}

fn draw_bar(rng: &mut ChaCha8Rng, bar_s: f64) -> Bar {
    let grid = |n: usize, p: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n)
            .filter(|_| rng.gen_bool(p))
            .map(|i| i as f64 * bar_s / n as f64)
            .collect()
    };
    let mut kicks = grid(4, 0.5, rng);
    if kicks.is_empty() {
        kicks.push(0.0);
    }
    let roots = [-21, -19, -16, -14, -12];
    let root = semitone(220.0, roots[rng.gen_range(0..roots.len())]);
    Bar {
        kicks,
        hats: grid(8, 0.7, rng),
        snares: grid(4, 0.3, rng),
        chord: [root, semitone(root, 4), semitone(root, 7)],
    }
}

fn accompaniment(len: usize, p: &SceneParams, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let bar_len = (p.bar_s * SR) as usize;
    let base = draw_bar(rng, p.bar_s);
    let mut out = vec![0.0; len];
    let mut noise_rng = ChaCha8Rng::seed_from_u64(rng.gen());
    let hat: Vec<f64> = (0..(0.04 * SR) as usize)
        .map(|i| noise_rng.gen_range(-1.0..1.0) * (-(i as f64) / (0.008 * SR)).exp())
        .collect();
    let snare: Vec<f64> = (0..(0.12 * SR) as usize)
        .map(|i| noise_rng.gen_range(-1.0..1.0) * (-(i as f64) / (0.03 * SR)).exp())
        .collect();
    let kick: Vec<f64> = (0..(0.15 * SR) as usize)
        .map(|i| {
            let t = i as f64 / SR;
            let f = 50.0 + 90.0 * (-t / 0.03).exp();
            (2.0 * PI * f * t).sin() * (-t / 0.05).exp()
        })
        .collect();
    let mut add = |at: usize, sound: &[f64], gain: f64| {
        for (i, &v) in sound.iter().enumerate() {
            if at + i < len {
                out[at + i] += gain * v;
            }
        }
    };
    let mut start = 0usize;
    let mut pad_phase = [0.0f64; 4];
    while start < len {
        let bar = if rng.gen::<f64>() < p.loop_regularity {
            base.clone()
        } else {
            draw_bar(rng, p.bar_s)
        };
        let jitter = 1.0 - p.loop_regularity;
        let shift = |rng: &mut ChaCha8Rng, t: f64| {
            let j = rng.gen_range(-0.03..=0.03) * jitter;
            ((t + j).max(0.0) * SR) as usize + start
        };
        for &t in &bar.kicks {
            let at = shift(rng, t);
            add(at, &kick, 0.6 * p.drums_gain);
        }
        for &t in &bar.snares {
            let at = shift(rng, t);
            add(at, &snare, 0.25 * p.drums_gain);
        }
        for &t in &bar.hats {
            let at = shift(rng, t);
            add(at, &hat, 0.12 * p.drums_gain);
        }
        let end = (start + bar_len).min(len);
        let bass = bar.chord[0] / 2.0;
        for (k, &f) in bar.chord.iter().chain(std::iter::once(&bass)).enumerate() {
            let level = if k == 3 { 0.1 } else { 0.06 };
            for n in start..end {
                pad_phase[k] += 2.0 * PI * f / SR;
                let ph = pad_phase[k];
                let v = ph.sin() + 0.3 * (2.0 * ph).sin() + 0.1 * (3.0 * ph).sin();
                add(n, &[v * level * p.pad_gain], 1.0);
            }
        }
        start = end;
    }
    let noise: Vec<f64> = (0..len).map(|_| noise_rng.gen_range(-1.0..1.0)).collect();
    out.iter_mut().zip(noise).for_each(|(o, n)| *o += p.noise_gain * n);
    out
}

/// Renders a scene. Stems are scaled together so the mixture peaks at 0.8.
pub fn render(params: &SceneParams) -> Scene {
    let len = (params.duration_s * SR).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut vocals = melody(len, params, &mut rng);
    vocals.iter_mut().for_each(|v| *v *= params.melody_gain);
    let mut accomp = accompaniment(len, params, &mut rng);
    let peak = vocals
        .iter()
        .zip(&accomp)
        .map(|(v, a)| (v + a).abs())
        .fold(0.0, f64::max);
    let scale = if peak > 0.0 { 0.8 / peak } else { 1.0 };
    vocals.iter_mut().for_each(|v| *v *= scale);
    accomp.iter_mut().for_each(|v| *v *= scale);
    let mixture: Vec<f64> = vocals.iter().zip(&accomp).map(|(v, a)| v + a).collect();
    let mk = |s: Vec<f64>| AudioClip::mono(s, SAMPLE_RATE).expect("valid mono clip");
    Scene {
        mixture: mk(mixture),
        vocals: mk(vocals),
        accompaniment: mk(accomp),
        params: params.clone(),
    }
}

/// A deterministic suite of `count` scenes whose loop regularity, breath
/// noise and background noise sweep from easy to hard.
pub fn difficulty_suite(count: usize, seed: u64, duration_s: f64) -> Vec<SceneParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let u = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.0 };
            let note = rng.gen_range(0.06..0.2);
            SceneParams {
                duration_s,
                melody_gain: 10f64.powf(rng.gen_range(-4.0..4.0) / 20.0),
                vibrato_cents: rng.gen_range(30.0..80.0),
                vibrato_hz: rng.gen_range(4.5..6.5),
                note_s: (note, 2.5 * note),
                breath_gain: rng.gen_range(0.2..0.8),
                loop_regularity: (1.0 - u + rng.gen_range(-0.15..0.15)).clamp(0.0, 1.0),
                drums_gain: rng.gen_range(0.3..1.0),
                pad_gain: rng.gen_range(0.5..1.5),
                noise_gain: 0.005 + 0.06 * u * rng.gen_range(0.5..1.5),
                bar_s: rng.gen_range(0.4..0.6),
                seed: rng.gen(),
            }
        })
        .collect()
}
