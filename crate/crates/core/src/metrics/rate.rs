//! Exponential concentration-rate fitting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Added inside the log so a fully concentrated smoother stays finite.
pub const FIT_FLOOR: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationFit {
    pub alpha: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n_points: usize,
}

/// Least-squares slope of `−log(1 − mass + floor)` against `t`.
pub fn concentration_rate(series: &[(f64, f64)]) -> Result<ConcentrationFit> {
    if series.iter().all(|(_, m)| *m >= 1.0 - 1e-12) {
        return Err(Error::InsufficientDecay("mass is already 1 at every sample".into()));
    }
    let below = series.iter().filter(|(_, m)| *m < 1.0).count();
    if below < 5 {
        return Err(Error::InsufficientDecay(format!(
            "only {below} samples with mass below 1, need 5"
        )));
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .map(|(t, m)| (*t, -(1.0 - m.clamp(0.0, 1.0) + FIT_FLOOR).ln()))
        .collect();
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientDecay("all samples at the same time".into()));
    }
    let alpha = sxy / sxx;
    let intercept = my - alpha * mt;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(ConcentrationFit {
        alpha,
        intercept,
        r2,
        n_points: pts.len(),
    })
}
