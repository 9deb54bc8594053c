use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the four primitives.
///
/// Loadable from a TOML table; missing keys keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrimitiveConfig {
    /// Median filter width along time, in frames (odd).
    pub hpss_time_kernel: usize,
    /// Median filter width along frequency, in bins (odd).
    pub hpss_freq_kernel: usize,
    pub hpss_mask_power: f64,

    /// 2DFT patch extent in frames.
    pub twodft_patch_t: usize,
    /// 2DFT patch extent in bins.
    pub twodft_patch_f: usize,
    /// Peak-picking half-extents `[scale, rate]` in 2D-transform bins.
    pub twodft_peak_neighborhood: [usize; 2],
    /// A 2D-transform bin is a peak only above this multiple of the patch median.
    pub twodft_peak_threshold: f64,
    /// Half-width in rate bins of the band treated as unmodulated.
    pub twodft_zero_rate_halfwidth: usize,

    pub melodic_f0_min: f64,
    pub melodic_f0_max: f64,
    pub melodic_harmonics: usize,
    pub melodic_tolerance_cents: f64,
    pub melodic_step_cents: f64,
    /// Contour jump penalty per 100 cents, as a fraction of the median frame salience.
    pub melodic_transition_weight: f64,
    /// Frames below this fraction of the median frame salience are unvoiced.
    pub melodic_voicing_threshold: f64,
}

impl Default for PrimitiveConfig {
    fn default() -> Self {
        Self {
            hpss_time_kernel: 17,
            hpss_freq_kernel: 17,
            hpss_mask_power: 2.0,
            twodft_patch_t: 256,
            twodft_patch_f: 256,
            twodft_peak_neighborhood: [0, 3],
            twodft_peak_threshold: 4.0,
            twodft_zero_rate_halfwidth: 1,
            melodic_f0_min: 80.0,
            melodic_f0_max: 1000.0,
            melodic_harmonics: 10,
            melodic_tolerance_cents: 50.0,
            melodic_step_cents: 10.0,
            melodic_transition_weight: 0.1,
            melodic_voicing_threshold: 0.6,
        }
    }
}

impl PrimitiveConfig {
    pub fn validate(&self) -> Result<()> {
        let odd = |k: usize, name: &str| {
            if k < 3 || k.is_multiple_of(2) {
                Err(Error::invalid(format!("{name} must be odd and >= 3, got {k}")))
            } else {
                Ok(())
            }
        };
        odd(self.hpss_time_kernel, "hpss_time_kernel")?;
        odd(self.hpss_freq_kernel, "hpss_freq_kernel")?;
        if !(self.hpss_mask_power > 0.0 && self.hpss_mask_power.is_finite()) {
            return Err(Error::invalid("hpss_mask_power must be positive"));
        }
        if self.twodft_patch_t < 2 || self.twodft_patch_f < 2 {
            return Err(Error::invalid("2DFT patch extents must be >= 2"));
        }
        if !(self.twodft_peak_threshold > 0.0) {
            return Err(Error::invalid("twodft_peak_threshold must be positive"));
        }
        if self.twodft_zero_rate_halfwidth >= self.twodft_patch_t / 2 {
            return Err(Error::invalid("twodft_zero_rate_halfwidth too large for patch"));
        }
        if !(self.melodic_f0_min > 0.0 && self.melodic_f0_min < self.melodic_f0_max) {
            return Err(Error::invalid("melodic f0 range must satisfy 0 < min < max"));
        }
        if self.melodic_harmonics == 0 {
            return Err(Error::invalid("melodic_harmonics must be >= 1"));
        }
        if !(self.melodic_tolerance_cents > 0.0) {
            return Err(Error::invalid("melodic_tolerance_cents must be positive"));
        }
        if !(self.melodic_step_cents > 0.0) {
            return Err(Error::invalid("melodic_step_cents must be positive"));
        }
        if !(self.melodic_transition_weight >= 0.0) || !(self.melodic_voicing_threshold >= 0.0) {
            return Err(Error::invalid("melodic weights must be nonnegative"));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
