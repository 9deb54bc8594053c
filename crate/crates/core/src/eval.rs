//! Ground-truth metrics and the confidence/SDR regression.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// A decibel value that may be infinite. Infinities serialize as the
/// strings `"inf"` / `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Db(pub f64);

impl Db {
    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl std::fmt::Display for Db {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            v if v == f64::INFINITY => f.write_str("inf"),
            v if v == f64::NEG_INFINITY => f.write_str("-inf"),
            v if v.is_nan() => f.write_str("nan"),
            v => write!(f, "{v}"),
        }
    }
}

impl Serialize for Db {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Db {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Db(v)),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(Db(f64::INFINITY)),
                "-inf" => Ok(Db(f64::NEG_INFINITY)),
                "nan" => Ok(Db(f64::NAN)),
                other => Err(serde::de::Error::custom(format!("bad dB value '{other}'"))),
            },
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::LengthMismatch(reference.len(), estimate.len()));
    }
    let energy = dot(reference, reference);
    if energy == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(energy)
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else if num == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * (num / den).log10()
    }
}

/// Scale-dependent SDR: `10 log10(|alpha s|^2 / |s - s_hat|^2)` with
/// `alpha = <s_hat, s> / |s|^2`.
pub fn sd_sdr(reference: &[f64], estimate: &[f64]) -> Result<Db> {
    let energy = check(reference, estimate)?;
    let alpha = dot(estimate, reference) / energy;
    let target = alpha * alpha * energy;
    let err: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(s, e)| (s - e) * (s - e))
        .sum();
    Ok(Db(ratio_db(target, err)))
}

/// Scale-invariant SDR: `10 log10(|alpha s|^2 / |alpha s - s_hat|^2)`.
pub fn si_sdr(reference: &[f64], estimate: &[f64]) -> Result<Db> {
    let energy = check(reference, estimate)?;
    let alpha = dot(estimate, reference) / energy;
    let target = alpha * alpha * energy;
    let err: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(s, e)| (alpha * s - e) * (alpha * s - e))
        .sum();
    Ok(Db(ratio_db(target, err)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub source: String,
    pub sd_sdr_db: Db,
    pub si_sdr_db: Db,
}

pub fn evaluate(source: &str, reference: &[f64], estimate: &[f64]) -> Result<MetricResult> {
    Ok(MetricResult {
        source: source.to_string(),
        sd_sdr_db: sd_sdr(reference, estimate)?,
        si_sdr_db: si_sdr(reference, estimate)?,
    })
}

/// Arithmetic mean over the finite values only; `None` if there are none.
pub fn mean_finite(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Ordinary least squares fit of `y` on `x` with Pearson r and a two-sided
/// p-value from the t distribution with n - 2 degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r_value: f64,
    pub p_value: f64,
    pub n: usize,
    /// Points dropped because a coordinate was infinite or NaN.
    pub excluded: usize,
}

pub fn correlation_report(points: &[(f64, f64)]) -> Result<Regression> {
    let finite: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let excluded = points.len() - finite.len();
    let n = finite.len();
    if n < 3 {
        return Err(Error::Degenerate(format!(
            "regression needs >= 3 finite points, have {n} ({excluded} excluded)"
        )));
    }
    let nf = n as f64;
    let mx = finite.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = finite.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in &finite {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance in regression input".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let dof = nf - 2.0;
    let p_value = if n == 2 || (1.0 - r * r) <= 0.0 {
        0.0
    } else {
        let t = r * (dof / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Degenerate(e.to_string()))?;
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok(Regression {
        slope,
        intercept,
        r_value: r,
        p_value,
        n,
        excluded,
    })
}
