//! Predominant-melody masking from harmonic salience.
//!
//! 1. Salience of each candidate f0 on a log grid is the 1/h-weighted sum
//!    of the (parabolically interpolated) magnitudes at its harmonics.
//! 2. A Viterbi pass picks the contour maximising total salience minus a
//!    linear penalty on pitch jumps, measured in cents.
//! 3. Frames whose contour salience falls below a fraction of the median
//!    frame salience are unvoiced.
//! 4. Voiced frames get a mask of 1 around every harmonic of the contour
//!    pitch, rolling off with a raised cosine.

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use super::PrimitiveConfig;
use crate::error::{Error, Result};
use crate::tfr::{MagnitudeSpectrogram, SoftMask};

/// Per-frame melody estimate. `f0_hz[t]` is `None` for unvoiced frames.
#[derive(Debug, Clone, PartialEq)]
pub struct MelodicContour {
    pub f0_hz: Vec<Option<f64>>,
    /// Salience of the contour pitch in each frame.
    pub salience: Vec<f64>,
}

fn f0_grid(cfg: &PrimitiveConfig) -> Vec<f64> {
    let span = 1200.0 * (cfg.melodic_f0_max / cfg.melodic_f0_min).log2();
    let n = (span / cfg.melodic_step_cents).floor() as usize + 1;
    (0..n)
        .map(|i| cfg.melodic_f0_min * 2f64.powf(i as f64 * cfg.melodic_step_cents / 1200.0))
        .collect()
}

/// Magnitude at a fractional bin via the parabola through the nearest three bins.
fn interp(row: &[f64], bin: f64) -> f64 {
    let last = row.len() - 1;
    let k = bin.round().clamp(1.0, (last - 1) as f64) as usize;
    let d = bin - k as f64;
    let (ym, y0, yp) = (row[k - 1], row[k], row[k + 1]);
    let v = y0 + 0.5 * d * (yp - ym) + 0.5 * d * d * (yp - 2.0 * y0 + ym);
    v.clamp(0.0, ym.max(y0).max(yp))
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn validate(mag: &MagnitudeSpectrogram, cfg: &PrimitiveConfig) -> Result<()> {
    cfg.validate()?;
    let (t, f) = mag.shape();
    if t == 0 || f < 3 {
        return Err(Error::Empty("melodic primitive needs a nonempty raster"));
    }
    let nyquist = mag.geometry.sample_rate as f64 / 2.0;
    if cfg.melodic_f0_max * cfg.melodic_harmonics as f64 > nyquist {
        return Err(Error::invalid(format!(
            "f0 max {} Hz x {} harmonics exceeds Nyquist {nyquist} Hz",
            cfg.melodic_f0_max, cfg.melodic_harmonics
        )));
    }
    Ok(())
}

/// Salience raster: frames x f0 candidates.
fn salience(mag: &MagnitudeSpectrogram, grid: &[f64], harmonics: usize) -> Array2<f64> {
    let g = mag.geometry;
    let taps: Vec<Vec<(f64, f64)>> = grid
        .iter()
        .map(|&f0| {
            (1..=harmonics)
                .map(|h| (g.hz_to_bin(h as f64 * f0), 1.0 / h as f64))
                .collect()
        })
        .collect();
    let mut out = Array2::zeros((mag.num_frames(), grid.len()));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(mag.values().axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut dst, row)| {
            let row = row.to_vec();
            for (d, tap) in dst.iter_mut().zip(&taps) {
                *d = tap.iter().map(|&(b, w)| w * interp(&row, b)).sum();
            }
        });
    out
}

/// Viterbi path maximising `sum salience - penalty * |jump in grid steps|`.
fn best_path(sal: &Array2<f64>, penalty: f64) -> Vec<usize> {
    let (frames, n) = sal.dim();
    let mut score: Vec<f64> = sal.row(0).to_vec();
    let mut back = vec![vec![0usize; n]; frames];
    let mut best = vec![0.0; n];
    let mut arg = vec![0usize; n];
    for t in 1..frames {
        // L1 distance transform: best[c] = max_j score[j] - penalty * |c - j|
        for c in 0..n {
            best[c] = score[c];
            arg[c] = c;
            if c > 0 && best[c - 1] - penalty > best[c] {
                best[c] = best[c - 1] - penalty;
                arg[c] = arg[c - 1];
            }
        }
        for c in (0..n.saturating_sub(1)).rev() {
            if best[c + 1] - penalty > best[c] {
                best[c] = best[c + 1] - penalty;
                arg[c] = arg[c + 1];
            }
        }
        let row = sal.row(t);
        for c in 0..n {
            score[c] = best[c] + row[c];
            back[t][c] = arg[c];
        }
    }
    let mut path = vec![0usize; frames];
    let mut cur = (0..n)
        .max_by(|&a, &b| score[a].total_cmp(&score[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    for t in (0..frames).rev() {
        path[t] = cur;
        cur = back[t][cur];
    }
    path
}

/// Tracks the predominant f0 contour and its voicing.
pub fn melodic_contour(mag: &MagnitudeSpectrogram, cfg: &PrimitiveConfig) -> Result<MelodicContour> {
    validate(mag, cfg)?;
    let grid = f0_grid(cfg);
    let sal = salience(mag, &grid, cfg.melodic_harmonics);
    let frame_max: Vec<f64> = sal
        .axis_iter(Axis(0))
        .map(|r| r.iter().copied().fold(0.0, f64::max))
        .collect();
    let med = median(&frame_max);
    let penalty = cfg.melodic_transition_weight * med * cfg.melodic_step_cents / 100.0;
    let path = best_path(&sal, penalty);
    let threshold = cfg.melodic_voicing_threshold * med;
    let mut f0_hz = Vec::with_capacity(path.len());
    let mut salience = Vec::with_capacity(path.len());
    for (t, &c) in path.iter().enumerate() {
        let s = sal[[t, c]];
        salience.push(s);
        f0_hz.push((s > 0.0 && s >= threshold).then_some(grid[c]));
    }
    Ok(MelodicContour { f0_hz, salience })
}

/// Mask of 1 within the tolerance of each harmonic of the voiced contour,
/// falling to 0 at twice the tolerance. The tolerance is never narrower
/// than one bin so a harmonic always claims its nearest bins.
pub fn melodic_mask(mag: &MagnitudeSpectrogram, cfg: &PrimitiveConfig) -> Result<SoftMask> {
    let contour = melodic_contour(mag, cfg)?;
    let (_, bins) = mag.shape();
    let g = mag.geometry;
    let bin_hz = g.bin_hz(1);
    let mut mask = Array2::zeros(mag.shape());
    for (mut row, f0) in mask.axis_iter_mut(Axis(0)).zip(&contour.f0_hz) {
        let Some(f0) = *f0 else { continue };
        for h in 1..=cfg.melodic_harmonics {
            let centre = h as f64 * f0;
            let bin_cents = 1200.0 * (1.0 + bin_hz / centre).log2();
            let tol = cfg.melodic_tolerance_cents.max(bin_cents);
            let lo_hz = centre * 2f64.powf(-2.0 * tol / 1200.0);
            let hi_hz = centre * 2f64.powf(2.0 * tol / 1200.0);
            let lo = (g.hz_to_bin(lo_hz).floor() as usize).max(1);
            let hi = (g.hz_to_bin(hi_hz).ceil() as usize).min(bins - 1);
            for k in lo..=hi {
                let d = (1200.0 * (g.bin_hz(k) / centre).log2()).abs();
                let w = if d <= tol {
                    1.0
                } else if d < 2.0 * tol {
                    0.5 * (1.0 + (std::f64::consts::PI * (d - tol) / tol).cos())
                } else {
                    0.0
                };
                if w > row[k] {
                    row[k] = w;
                }
            }
        }
    }
    Ok(SoftMask::from_clamped(mask))
}
