//! Hitting times of the trapping region and mass on `Λ_s = ∩_{0≤r≤s} φ_r(U)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{trajectory_grid, Propagator, Region, StateVector, SystemSpec};
use crate::error::{Error, Result};
use crate::filtering::WeightedEnsemble;
use crate::metrics::mass_of;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "t", rename_all = "snake_case")]
pub enum HittingTime {
    Reached(f64),
    NotReached(f64),
}

impl HittingTime {
    pub fn reached(self) -> Option<f64> {
        match self {
            HittingTime::Reached(t) => Some(t),
            HittingTime::NotReached(_) => None,
        }
    }
}

/// First integrator-grid time at which the orbit of `x` lies in the trapping region.
pub fn hitting_time(sspec: &SystemSpec, x: &StateVector, max_t: f64) -> Result<HittingTime> {
    let region = sspec.region()?;
    let n = sspec.steps_for(max_t)?;
    let mut p = Propagator::new(sspec, x)?;
    loop {
        if region.contains(p.state()) {
            return Ok(HittingTime::Reached(p.time()));
        }
        if p.steps_taken() >= n {
            return Ok(HittingTime::NotReached(max_t));
        }
        p.step()?;
    }
}

/// Forward images `φ_r(u_k)` of region samples on the grid `r = k·r_step`,
/// with a per-`r` inclusion tolerance from held-out samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttractorClouds {
    pub region: Region,
    pub r_grid: Vec<f64>,
    pub clouds: Vec<Vec<StateVector>>,
    /// Largest nearest-neighbour distance from a held-out image to the cloud.
    pub tolerances: Vec<f64>,
}

impl AttractorClouds {
    pub fn build(sspec: &SystemSpec, s_max: f64, r_step: f64, n_ref: usize, n_holdout: usize, seed: u64) -> Result<Self> {
        let region = sspec.region()?.clone();
        if !(r_step > 0.0) || !SystemSpec::divides(r_step, s_max) || n_ref == 0 || n_holdout == 0 {
            return Err(Error::InvalidSpec(
                "attractor clouds need r_step dividing s_max and non-empty samples".into(),
            ));
        }
        sspec.steps_for(r_step)?;
        let k = (s_max / r_step).round() as usize;
        let r_grid: Vec<f64> = (0..=k).map(|i| i as f64 * r_step).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let refs: Vec<StateVector> = (0..n_ref).map(|_| region.sample(&mut rng, sspec.dimension)).collect();
        let held: Vec<StateVector> = (0..n_holdout).map(|_| region.sample(&mut rng, sspec.dimension)).collect();
        let push = |pts: &[StateVector]| -> Result<Vec<Vec<StateVector>>> {
            pts.par_iter().map(|u| trajectory_grid(sspec, u, &r_grid)).collect()
        };
        let ref_orbits = push(&refs)?;
        let held_orbits = push(&held)?;
        let clouds: Vec<Vec<StateVector>> = (0..r_grid.len())
            .map(|j| ref_orbits.iter().map(|o| o[j].clone()).collect())
            .collect();
        let tolerances = (0..r_grid.len())
            .map(|j| {
                held_orbits
                    .par_iter()
                    .map(|o| nearest(sspec, &clouds[j], &o[j]))
                    .reduce(|| 0.0, f64::max)
            })
            .collect();
        Ok(Self {
            region,
            r_grid,
            clouds,
            tolerances,
        })
    }

    pub fn s_max(&self) -> f64 {
        *self.r_grid.last().expect("grid is non-empty")
    }

    /// Membership in `U` and, for every grid `r ∈ (0, s]`, within tolerance
    /// of the `r`-cloud.
    pub fn member(&self, sspec: &SystemSpec, x: &[f64], s: f64) -> bool {
        if !self.region.contains(x) {
            return false;
        }
        self.r_grid
            .iter()
            .enumerate()
            .skip(1)
            .take_while(|(_, r)| **r <= s + 1e-12)
            .all(|(j, _)| nearest(sspec, &self.clouds[j], x) <= self.tolerances[j])
    }

    /// Tolerances used for `r ≤ s`.
    pub fn tolerances_up_to(&self, s: f64) -> Vec<f64> {
        self.r_grid
            .iter()
            .zip(&self.tolerances)
            .filter(|(r, _)| **r <= s + 1e-12)
            .map(|(_, t)| *t)
            .collect()
    }
}

fn nearest(sspec: &SystemSpec, cloud: &[StateVector], x: &[f64]) -> f64 {
    cloud.iter().map(|c| sspec.distance(c, x)).fold(f64::INFINITY, f64::min)
}

/// Weight of the states lying in the approximation of `Λ_s`.
pub fn attractor_mass_of(
    weights: &[f64],
    states: &[StateVector],
    s: f64,
    sspec: &SystemSpec,
    clouds: &AttractorClouds,
) -> Result<f64> {
    if s > clouds.s_max() + 1e-12 || s < 0.0 {
        return Err(Error::InvalidInput(format!(
            "s = {s} outside the cloud range [0, {}]",
            clouds.s_max()
        )));
    }
    let inside: Vec<bool> = states.par_iter().map(|x| clouds.member(sspec, x, s)).collect();
    Ok(mass_of(weights, &inside))
}

/// `π_t(Λ_s)` for the ensemble pushed to `at_time`.
pub fn attractor_mass(
    ens: &WeightedEnsemble,
    at_time: f64,
    s: f64,
    sspec: &SystemSpec,
    clouds: &AttractorClouds,
) -> Result<f64> {
    let states = ens.pushforward(at_time, sspec)?;
    attractor_mass_of(&ens.normalized_weights(), &states, s, sspec, clouds)
}
