//! Repetition and micro-modulation cues from the 2D Fourier transform of
//! spectrogram patches.
//!
//! A patch is `patch_t` frames by `patch_f` bins. Its 2D transform has a
//! "rate" axis (temporal modulation, from the time axis) and a "scale" axis
//! (from the frequency axis). Repeating material concentrates in sharp peaks
//! along rate; stationary material sits on the zero-rate row. Patches
//! overlap by half and their masks are averaged with uniform weights.

use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::PrimitiveConfig;
use crate::error::{Error, Result};
use crate::tfr::{MagnitudeSpectrogram, SoftMask};

/// Patch start offsets along one axis: a half-patch hop, plus one patch
/// flush with the end when the hop grid does not reach it.
pub fn patch_starts(extent: usize, patch: usize) -> Vec<usize> {
    assert!(patch >= 1 && patch <= extent);
    let hop = (patch / 2).max(1);
    let mut starts: Vec<usize> = (0..=extent - patch).step_by(hop).collect();
    if *starts.last().unwrap() + patch < extent {
        starts.push(extent - patch);
    }
    starts
}

struct Fft2 {
    rows_fwd: Arc<dyn Fft<f64>>,
    cols_fwd: Arc<dyn Fft<f64>>,
    rows_inv: Arc<dyn Fft<f64>>,
    cols_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(t: usize, f: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            // "rows" transforms run along frequency (length f), "cols" along time
            rows_fwd: planner.plan_fft_forward(f),
            cols_fwd: planner.plan_fft_forward(t),
            rows_inv: planner.plan_fft_inverse(f),
            cols_inv: planner.plan_fft_inverse(t),
        }
    }

    fn run(&self, data: &mut Array2<Complex64>, inverse: bool) {
        let (rows, cols) = if inverse {
            (&self.rows_inv, &self.cols_inv)
        } else {
            (&self.rows_fwd, &self.cols_fwd)
        };
        for mut row in data.axis_iter_mut(Axis(0)) {
            let mut buf = row.to_vec();
            rows.process(&mut buf);
            row.iter_mut().zip(buf).for_each(|(d, s)| *d = s);
        }
        for mut col in data.axis_iter_mut(Axis(1)) {
            let mut buf = col.to_vec();
            cols.process(&mut buf);
            col.iter_mut().zip(buf).for_each(|(d, s)| *d = s);
        }
        if inverse {
            let norm = 1.0 / data.len() as f64;
            data.mapv_inplace(|c| c * norm);
        }
    }

    fn forward(&self, patch: ArrayView2<f64>) -> Array2<Complex64> {
        let mut d = patch.mapv(|v| Complex64::new(v, 0.0));
        self.run(&mut d, false);
        d
    }

    fn inverse_real(&self, mut spec: Array2<Complex64>) -> Array2<f64> {
        self.run(&mut spec, true);
        spec.mapv(|c| c.re)
    }
}

fn check_extent(mag: &MagnitudeSpectrogram, cfg: &PrimitiveConfig) -> Result<()> {
    cfg.validate()?;
    let (t, f) = mag.shape();
    if t < cfg.twodft_patch_t || f < cfg.twodft_patch_f {
        return Err(Error::invalid(format!(
            "2DFT patch {}x{} larger than raster {t}x{f}",
            cfg.twodft_patch_t, cfg.twodft_patch_f
        )));
    }
    Ok(())
}

/// Runs `per_patch` over the overlapping patch grid and averages the results.
fn patchwise<F>(mag: &MagnitudeSpectrogram, cfg: &PrimitiveConfig, per_patch: F) -> SoftMask
where
    F: Fn(&Fft2, ArrayView2<f64>) -> Array2<f64> + Sync,
{
    let (t, f) = mag.shape();
    let (pt, pf) = (cfg.twodft_patch_t, cfg.twodft_patch_f);
    let fft = Fft2::new(pt, pf);
    let grid: Vec<(usize, usize)> = patch_starts(t, pt)
        .into_iter()
        .flat_map(|a| patch_starts(f, pf).into_iter().map(move |b| (a, b)))
        .collect();
    let masks: Vec<Array2<f64>> = grid
        .par_iter()
        .map(|&(a, b)| per_patch(&fft, mag.values().slice(s![a..a + pt, b..b + pf])))
        .collect();

    let mut sum = Array2::<f64>::zeros((t, f));
    let mut count = Array2::<f64>::zeros((t, f));
    for (&(a, b), m) in grid.iter().zip(&masks) {
        let mut dst = sum.slice_mut(s![a..a + pt, b..b + pf]);
        dst += m;
        count.slice_mut(s![a..a + pt, b..b + pf]).mapv_inplace(|c| c + 1.0);
    }
    sum.zip_mut_with(&count, |s, &c| *s /= c);
    SoftMask::from_clamped(sum)
}

/// `numerator / patch` clamped to [0, 1]; zero-magnitude bins carry no
/// evidence and get 0.5.
fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

fn circular_distance(i: usize, j: usize, n: usize) -> usize {
    let d = i.abs_diff(j);
    d.min(n - d)
}

fn is_peak(mag2: &Array2<f64>, r: usize, c: usize, nb_rate: usize, nb_scale: usize) -> bool {
    let (nr, nc) = mag2.dim();
    let v = mag2[[r, c]];
    let nb_rate = nb_rate.min((nr - 1) / 2);
    let nb_scale = nb_scale.min((nc - 1) / 2);
    for dr in 0..=2 * nb_rate {
        let rr = (r + nr + dr - nb_rate) % nr;
        for dc in 0..=2 * nb_scale {
            let cc = (c + nc + dc - nb_scale) % nc;
            if mag2[[rr, cc]] > v {
                return false;
            }
        }
    }
    true
}

fn repetition_patch(fft: &Fft2, patch: ArrayView2<f64>, cfg: &PrimitiveConfig) -> Array2<f64> {
    let spec = fft.forward(patch);
    let amp = spec.mapv(|c| c.norm());
    let mut sorted: Vec<f64> = amp.iter().copied().collect();
    let mid = sorted.len() / 2;
    let (_, median, _) = sorted.select_nth_unstable_by(mid, f64::total_cmp);
    let threshold = cfg.twodft_peak_threshold * *median;
    let [nb_scale, nb_rate] = cfg.twodft_peak_neighborhood;

    let mut kept = Array2::<Complex64>::zeros(spec.dim());
    for ((r, c), &a) in amp.indexed_iter() {
        if a > threshold && is_peak(&amp, r, c, nb_rate, nb_scale) {
            kept[[r, c]] = spec[[r, c]];
        }
    }
    let repeating = fft.inverse_real(kept);
    let mut out = Array2::zeros(patch.dim());
    ndarray::Zip::from(&mut out)
        .and(&patch)
        .and(&repeating)
        .for_each(|o, &x, &rep| {
            *o = if x > 0.0 {
                1.0 - (rep.max(0.0) / x).min(1.0)
            } else {
                0.5
            };
        });
    out
}

fn micromodulation_patch(fft: &Fft2, patch: ArrayView2<f64>, cfg: &PrimitiveConfig) -> Array2<f64> {
    let mut spec = fft.forward(patch);
    let n_rate = spec.nrows();
    for (r, mut row) in spec.axis_iter_mut(Axis(0)).enumerate() {
        if circular_distance(r, 0, n_rate) <= cfg.twodft_zero_rate_halfwidth {
            row.fill(Complex64::default());
        }
    }
    let modulated = fft.inverse_real(spec);
    let mut out = Array2::zeros(patch.dim());
    ndarray::Zip::from(&mut out)
        .and(&patch)
        .and(&modulated)
        .for_each(|o, &x, &m| *o = ratio(m.abs(), x));
    out
}

/// Vocals = 1 - (peak-only reconstruction / patch): bins explained by the
/// repeating peaks of the 2D transform go to accompaniment.
pub fn repetition_mask_2dft(mag: &MagnitudeSpectrogram, cfg: &PrimitiveConfig) -> Result<SoftMask> {
    check_extent(mag, cfg)?;
    if mag.is_silent() {
        return Ok(SoftMask::filled(mag.shape(), 0.5));
    }
    Ok(patchwise(mag, cfg, |fft, p| repetition_patch(fft, p, cfg)))
}

/// Vocals = |reconstruction without the zero-rate band| / patch.
pub fn micromodulation_mask_2dft(mag: &MagnitudeSpectrogram, cfg: &PrimitiveConfig) -> Result<SoftMask> {
    check_extent(mag, cfg)?;
    if mag.is_silent() {
        return Ok(SoftMask::filled(mag.shape(), 0.5));
    }
    Ok(patchwise(mag, cfg, |fft, p| micromodulation_patch(fft, p, cfg)))
}
