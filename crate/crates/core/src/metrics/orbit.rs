//! Orbit-comparison metrics on the τ-grid.
//!
//! `d_N(x, y) = max_{0 ≤ i ≤ N−1} d(φ_{iτ} x, φ_{iτ} y)` and
//! `D_N(x, y) = (Σ_{i=0}^{N} ρ_{iτ} d(φ_{iτ} x, φ_{iτ} y)²)^{1/2}`.
//! Note the different upper indices.

use crate::dynamics::{Propagator, StateVector, SystemSpec};
use crate::error::{Error, Result};

use super::RhoSchedule;

/// Pointwise distances `d(φ_{iτ} x, φ_{iτ} y)` for `i = 0..len`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitDistances {
    pub tau: f64,
    pub distances: Vec<f64>,
}

impl OrbitDistances {
    /// `d_N`; needs `1 <= n <= len`.
    pub fn max_distance(&self, n: usize) -> f64 {
        assert!(n >= 1 && n <= self.distances.len());
        self.distances[..n].iter().copied().fold(0.0, f64::max)
    }

    /// `D_N²`; needs `n < len`.
    pub fn weighted_sq(&self, rho: &RhoSchedule, n: usize) -> f64 {
        self.distances[..=n]
            .iter()
            .enumerate()
            .map(|(i, d)| rho.value(i as f64 * self.tau) * d * d)
            .sum()
    }

    /// `D_N²` for every `N = 0..len`, accumulated left to right.
    pub fn weighted_sq_profile(&self, rho: &RhoSchedule) -> Vec<f64> {
        let mut acc = 0.0;
        self.distances
            .iter()
            .enumerate()
            .map(|(i, d)| {
                acc += rho.value(i as f64 * self.tau) * d * d;
                acc
            })
            .collect()
    }

    /// `d_N` for every `N = 1..=len` (entry `k` holds `d_{k+1}`).
    pub fn max_profile(&self) -> Vec<f64> {
        let mut acc = 0.0f64;
        self.distances
            .iter()
            .map(|d| {
                acc = acc.max(*d);
                acc
            })
            .collect()
    }
}

/// Distances between the orbits of `x` and `y` at `iτ`, `i = 0..len`.
pub fn orbit_distances(
    x: &StateVector,
    y: &StateVector,
    len: usize,
    tau: f64,
    sspec: &SystemSpec,
) -> Result<OrbitDistances> {
    let stride = sspec.steps_for(tau)?;
    if stride == 0 {
        return Err(Error::InvalidInput("tau must be positive".into()));
    }
    let mut px = Propagator::new(sspec, x)?;
    let mut py = Propagator::new(sspec, y)?;
    let mut distances = Vec::with_capacity(len);
    for i in 0..len {
        if i > 0 {
            for _ in 0..stride {
                px.step()?;
                py.step()?;
            }
        }
        distances.push(sspec.distance(px.state(), py.state()));
    }
    Ok(OrbitDistances { tau, distances })
}

/// `d_N(x, y)`.
pub fn max_orbit_distance(x: &StateVector, y: &StateVector, n: usize, tau: f64, sspec: &SystemSpec) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("d_N needs N >= 1".into()));
    }
    Ok(orbit_distances(x, y, n, tau, sspec)?.max_distance(n))
}

/// `D_N(x, y)` with `τ` taken from the schedule.
pub fn weighted_orbit_distance(
    x: &StateVector,
    y: &StateVector,
    n: usize,
    rho: &RhoSchedule,
    sspec: &SystemSpec,
) -> Result<f64> {
    Ok(orbit_distances(x, y, n + 1, rho.tau, sspec)?.weighted_sq(rho, n).sqrt())
}
