//! Small statistical helpers: standard errors, batch means, regression and
//! the per-mode covariance z-test.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::SpectralField;

/// Fewest samples accepted by [`covariance_z_test`].
pub const MIN_SAMPLES: usize = 30;

/// Sample mean and the standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, f64::INFINITY);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (m, (v / n as f64).sqrt())
}

/// Mean of a correlated series with the standard error estimated from
/// `batches` contiguous batch means. A trailing remainder is dropped.
pub fn batch_means(series: &[f64], batches: usize) -> (f64, f64) {
    let len = series.len() / batches.max(1);
    if len == 0 {
        return mean_se(series);
    }
    let means: Vec<f64> = series.chunks_exact(len).take(batches).map(|c| c.iter().sum::<f64>() / len as f64).collect();
    mean_se(&means)
}

/// Least-squares slope of `y` on `t` and its classical standard error.
pub fn ols_slope(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = t.iter().map(|x| (x - tm).powi(2)).sum();
    let sxy: f64 = t.iter().zip(y).map(|(x, v)| (x - tm) * (v - ym)).sum();
    let slope = sxy / sxx;
    let resid: f64 = t.iter().zip(y).map(|(x, v)| (v - ym - slope * (x - tm)).powi(2)).sum();
    let se = if t.len() > 2 { (resid / (n - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    (slope, se)
}

/// `(estimate − target)/SE`, with the degenerate zero-variance case mapped
/// to 0 (exact match) or ±∞.
pub fn z_score(estimate: f64, se: f64, target: f64) -> f64 {
    let diff = estimate - target;
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Which second moment of the mode vector an entry tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    /// `Re E[û^α(k) conj(û^β(k))]`.
    CovRe,
    /// `Im E[û^α(k) conj(û^β(k))]`.
    CovIm,
    /// `Re E[û^α(k) û^β(k)]`.
    PseudoRe,
    /// `Im E[û^α(k) û^β(k)]`.
    PseudoIm,
}

#[derive(Debug, Clone, Serialize)]
pub struct ZEntry {
    pub k: usize,
    pub kind: MomentKind,
    pub alpha: usize,
    pub beta: usize,
    pub estimate: f64,
    pub stderr: f64,
    pub target: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ZTest {
    pub samples: usize,
    pub entries: Vec<ZEntry>,
    pub max_abs_z: f64,
    /// Fraction of entries with `|z| ≥ 3`.
    pub frac_over_3: f64,
}

impl ZTest {
    /// Per-entry gate `|z| ≤ max_z` and global gate on the `|z| ≥ 3` fraction.
    pub fn passes(&self, max_z: f64, max_frac_over_3: f64) -> bool {
        self.max_abs_z <= max_z && self.frac_over_3 <= max_frac_over_3
    }
}

/// Compares the empirical second moments of complex mode vectors with a
/// proper complex Gaussian of covariance `targets[k]` (`k = 1..=K`, index 0
/// unused): covariance real parts against `targets[k]`, everything else
/// against zero.
pub fn covariance_z_test(samples: &[SpectralField], targets: &[DMatrix<f64>]) -> Result<ZTest> {
    let n = samples.len();
    if n < MIN_SAMPLES {
        return Err(Error::InsufficientSamples(format!("{n} samples, need at least {MIN_SAMPLES}")));
    }
    let d = samples[0].dim();
    let kmax = samples[0].max_mode();
    if targets.len() <= kmax {
        return Err(Error::Dimension(format!("{} targets for modes up to {kmax}", targets.len())));
    }
    let mut entries = Vec::new();
    let mut buf = vec![0.0; n];
    for k in 1..=kmax {
        for a in 0..d {
            for b in a..d {
                let kinds: &[MomentKind] = if a == b {
                    &[MomentKind::CovRe, MomentKind::PseudoRe, MomentKind::PseudoIm]
                } else {
                    &[MomentKind::CovRe, MomentKind::CovIm, MomentKind::PseudoRe, MomentKind::PseudoIm]
                };
                for &kind in kinds {
                    for (x, s) in buf.iter_mut().zip(samples) {
                        let (u, v) = (s.get(a, k), s.get(b, k));
                        *x = match kind {
                            MomentKind::CovRe => (u * v.conj()).re,
                            MomentKind::CovIm => (u * v.conj()).im,
                            MomentKind::PseudoRe => (u * v).re,
                            MomentKind::PseudoIm => (u * v).im,
                        };
                    }
                    let (estimate, stderr) = mean_se(&buf);
                    let target = if kind == MomentKind::CovRe { targets[k][(a, b)] } else { 0.0 };
                    let z = z_score(estimate, stderr, target);
                    entries.push(ZEntry { k, kind, alpha: a, beta: b, estimate, stderr, target, z });
                }
            }
        }
    }
    let max_abs_z = entries.iter().fold(0.0_f64, |m, e| m.max(e.z.abs()));
    let over = entries.iter().filter(|e| e.z.abs() >= 3.0).count();
    let frac_over_3 = if entries.is_empty() { 0.0 } else { over as f64 / entries.len() as f64 };
    Ok(ZTest { samples: n, entries, max_abs_z, frac_over_3 })
}
