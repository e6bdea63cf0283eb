//! Empirical probes of flow regularity: trapping-region exits and Lipschitz ratios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Propagator, Region, StateVector, SystemSpec};
use crate::error::{Error, Result};

/// Pairs closer than this are resampled.
pub const MIN_PAIR_DISTANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrappingReport {
    /// Number of sampled trajectories that left the region at least once.
    pub violations: usize,
    /// Worst distance outside the region seen on the check grid.
    pub max_excursion: f64,
    pub n_samples: usize,
}

/// Sample `n_samples` points uniformly in the trapping region, flow each to
/// `horizon` and test membership every `check_dt`.
pub fn check_trapping(
    spec: &SystemSpec,
    horizon: f64,
    check_dt: f64,
    n_samples: usize,
    seed: u64,
) -> Result<TrappingReport> {
    let region = spec.region()?;
    let n_total = spec.steps_for(horizon)?;
    let every = spec.steps_for(check_dt)?.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<StateVector> = (0..n_samples)
        .map(|_| region.sample(&mut rng, spec.dimension))
        .collect();

    let results: Vec<Result<f64>> = starts
        .par_iter()
        .map(|x0| {
            let mut prop = Propagator::new(spec, x0)?;
            let mut worst = region.excursion(prop.state());
            while prop.steps_taken() < n_total {
                match prop.step() {
                    Ok(()) => {}
                    Err(Error::Diverged { bound, .. }) => return Ok(bound),
                    Err(e) => return Err(e),
                }
                if prop.steps_taken() % every == 0 || prop.steps_taken() == n_total {
                    worst = worst.max(region.excursion(prop.state()));
                }
            }
            Ok(worst)
        })
        .collect();

    let mut report = TrappingReport {
        violations: 0,
        max_excursion: 0.0,
        n_samples,
    };
    for r in results {
        let e = r?;
        if e > 0.0 {
            report.violations += 1;
        }
        report.max_excursion = report.max_excursion.max(e);
    }
    Ok(report)
}

/// Draw a pair `(x, y)` inside `region` with `y` a perturbation of `x` whose
/// size is log-uniform over six decades below the region diameter.
pub(crate) fn sample_close_pair<R: Rng>(
    spec: &SystemSpec,
    region: &Region,
    rng: &mut R,
) -> (StateVector, StateVector) {
    let p = spec.dimension;
    let scale = region.diameter(p);
    loop {
        let x = region.sample(rng, p);
        let dir: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
        let r = scale * 10f64.powf(-6.0 * rng.random::<f64>());
        let mut y: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + r * d / norm).collect();
        if matches!(region, Region::Torus) {
            y.iter_mut().for_each(|v| *v = v.rem_euclid(1.0));
        }
        if region.contains(&y) && spec.distance(&x, &y) >= MIN_PAIR_DISTANCE {
            return (x, y.into());
        }
    }
}

/// Largest observed `d(φ_τ x, φ_τ y) / d(x, y)` over sampled pairs in the
/// trapping region; an empirical lower bound on the Lipschitz constant.
pub fn estimate_lipschitz(spec: &SystemSpec, tau: f64, n_pairs: usize, seed: u64) -> Result<f64> {
    let region = spec.region()?;
    spec.steps_for(tau)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<_> = (0..n_pairs)
        .map(|_| sample_close_pair(spec, region, &mut rng))
        .collect();
    let ratios: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|(x, y)| {
            let fx = super::flow(spec, x, tau)?;
            let fy = super::flow(spec, y, tau)?;
            Ok(spec.distance(&fx, &fy) / spec.distance(x, y))
        })
        .collect();
    let mut best = 0.0f64;
    for r in ratios {
        best = best.max(r?);
    }
    Ok(best)
}
