//! Ball masses and merging distances of weighted ensembles.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Metric, StateVector, SystemSpec};
use crate::error::Result;
use crate::filtering::{weighted_mean, WeightedEnsemble};

use super::testfn::TestFunctionSet;

/// Total normalised weight of particles within distance `a` of `center`.
pub fn ball_mass(ens: &WeightedEnsemble, center: &StateVector, a: f64) -> f64 {
    ball_mass_of(&ens.normalized_weights(), &ens.particles, center, a, ens.metric)
}

/// [`ball_mass`] for explicit weights and states, e.g. a pushed-forward cloud.
pub fn ball_mass_of(weights: &[f64], states: &[StateVector], center: &[f64], a: f64, metric: Metric) -> f64 {
    let inside: Vec<bool> = states.iter().map(|x| metric.distance(x, center) <= a).collect();
    mass_of(weights, &inside)
}

/// Weight of the flagged particles. Exactly 0 or 1 when none or all are flagged.
pub fn mass_of(weights: &[f64], inside: &[bool]) -> f64 {
    debug_assert_eq!(weights.len(), inside.len());
    if inside.iter().all(|b| *b) {
        return 1.0;
    }
    if !inside.iter().any(|b| *b) {
        return 0.0;
    }
    let m: f64 = weights.iter().zip(inside).filter(|(_, b)| **b).map(|(w, _)| *w).sum();
    m.min(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergingDistance {
    pub per_g: Vec<f64>,
    pub max: f64,
    pub mean: f64,
}

impl MergingDistance {
    fn from_values(per_g: Vec<f64>) -> Self {
        let max = per_g.iter().copied().fold(0.0, f64::max);
        let mean = if per_g.is_empty() {
            0.0
        } else {
            per_g.iter().sum::<f64>() / per_g.len() as f64
        };
        Self { per_g, max, mean }
    }
}

/// `|π_t(g) − π̄_t(g)|` for each test function, both ensembles pushed to `at_time`.
pub fn merging_distance(
    ens_mu: &WeightedEnsemble,
    ens_nu: &WeightedEnsemble,
    gset: &TestFunctionSet,
    at_time: f64,
    sspec: &SystemSpec,
) -> Result<MergingDistance> {
    let push = |e: &WeightedEnsemble| -> Result<Vec<StateVector>> {
        if at_time == 0.0 {
            Ok(e.particles.clone())
        } else {
            e.pushforward(at_time, sspec)
        }
    };
    let sm = push(ens_mu)?;
    let sn = if ens_nu.particles == ens_mu.particles {
        sm.clone()
    } else {
        push(ens_nu)?
    };
    Ok(merging_distance_of(
        &ens_mu.normalized_weights(),
        &sm,
        &ens_nu.normalized_weights(),
        &sn,
        gset,
        ens_mu.metric,
    ))
}

/// [`merging_distance`] on explicit weighted clouds.
pub fn merging_distance_of(
    w_mu: &[f64],
    states_mu: &[StateVector],
    w_nu: &[f64],
    states_nu: &[StateVector],
    gset: &TestFunctionSet,
    metric: Metric,
) -> MergingDistance {
    let per_g = gset
        .functions
        .iter()
        .map(|g| {
            let a = weighted_mean(w_mu, states_mu, |x| g.eval(x, metric));
            let b = weighted_mean(w_nu, states_nu, |x| g.eval(x, metric));
            (a - b).abs()
        })
        .collect();
    MergingDistance::from_values(per_g)
}
