//! Harmonic/percussive split by orthogonal median filtering.

use ndarray::{Array2, Axis, Zip};
use rayon::prelude::*;

use super::PrimitiveConfig;
use crate::error::{Error, Result};
use crate::tfr::{MagnitudeSpectrogram, SoftMask};

/// Median of a sliding window of odd width `k`, truncated at the edges.
fn sliding_median(input: &[f64], k: usize, out: &mut [f64]) {
    let half = k / 2;
    let n = input.len();
    let mut buf = Vec::with_capacity(k);
    for (i, o) in out.iter_mut().enumerate() {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        buf.clear();
        buf.extend_from_slice(&input[lo..hi]);
        *o = median_in_place(&mut buf);
    }
}

fn median_in_place(buf: &mut [f64]) -> f64 {
    let len = buf.len();
    let m = len / 2;
    let (lower, upper, _) = buf.select_nth_unstable_by(m, f64::total_cmp);
    let upper = *upper;
    if len % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + upper)
    }
}

/// Median along time, independently for every frequency bin.
pub fn median_filter_time(values: &Array2<f64>, k: usize) -> Array2<f64> {
    let cols: Vec<Vec<f64>> = values
        .axis_iter(Axis(1))
        .into_par_iter()
        .map(|col| {
            let col: Vec<f64> = col.to_vec();
            let mut out = vec![0.0; col.len()];
            sliding_median(&col, k, &mut out);
            out
        })
        .collect();
    let mut res = Array2::zeros(values.dim());
    for (mut dst, src) in res.axis_iter_mut(Axis(1)).zip(cols) {
        dst.iter_mut().zip(src).for_each(|(d, s)| *d = s);
    }
    res
}

/// Median along frequency, independently for every frame.
pub fn median_filter_freq(values: &Array2<f64>, k: usize) -> Array2<f64> {
    let mut res = Array2::zeros(values.dim());
    res.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(values.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut dst, row)| {
            let row = row.to_vec();
            let mut out = vec![0.0; row.len()];
            sliding_median(&row, k, &mut out);
            dst.iter_mut().zip(out).for_each(|(d, s)| *d = s);
        });
    res
}

/// Vocals mask `P^p / (H^p + P^p)`, where `H` is the time-median and `P` the
/// frequency-median of the magnitudes. Bins with `H = P = 0` get 0.5.
pub fn hpss_mask(mag: &MagnitudeSpectrogram, cfg: &PrimitiveConfig) -> Result<SoftMask> {
    cfg.validate()?;
    let (t, f) = mag.shape();
    if t < cfg.hpss_time_kernel || f < cfg.hpss_freq_kernel {
        return Err(Error::invalid(format!(
            "raster {t}x{f} smaller than HPSS kernels {}x{}",
            cfg.hpss_time_kernel, cfg.hpss_freq_kernel
        )));
    }
    let harmonic = median_filter_time(mag.values(), cfg.hpss_time_kernel);
    let percussive = median_filter_freq(mag.values(), cfg.hpss_freq_kernel);
    let p = cfg.hpss_mask_power;
    let mut mask = Array2::zeros((t, f));
    Zip::from(&mut mask)
        .and(&harmonic)
        .and(&percussive)
        .for_each(|m, &h, &pc| {
            *m = if pc > 0.0 {
                // 1 / (1 + (H/P)^p) avoids overflowing P^p for large magnitudes
                1.0 / (1.0 + (h / pc).powf(p))
            } else if h > 0.0 {
                0.0
            } else {
                0.5
            };
        });
    Ok(SoftMask::from_clamped(mask))
}
