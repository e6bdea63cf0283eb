//! Importance-weighted smoother and filter.
//!
//! For deterministic dynamics the posterior on the initial condition is the
//! prior reweighted by `Z_t(x) = exp(Σ h(t_i, φ_{t_i} x)ᵀ ΔY_i − ½ Σ ‖h(t_i, φ_{t_i} x)‖² Δ)`.
//! The filter at time `t` is that posterior pushed forward by `φ_t`. Particles
//! are drawn once from the prior and never resampled.

mod ensemble;
mod prior;

use rayon::prelude::*;

pub use ensemble::{
    check_degeneracy, ess, log_sum_exp, normalize_log_weights, weighted_mean, PriorLabel, WeightedEnsemble,
    DEGENERATE_ESS, DEGENERATE_SPREAD,
};
pub use prior::{log_density_ratio, PriorKind, PriorSpec};

use crate::dynamics::{Propagator, StateVector, SystemSpec};
use crate::error::{Error, Result};
use crate::observation::{ObservationPath, ObservationSpec, TimeMode};

fn check_path(path: &ObservationPath, ospec: &ObservationSpec, sspec: &SystemSpec) -> Result<()> {
    let expected = if sspec.is_discrete() {
        TimeMode::Discrete
    } else {
        TimeMode::Continuous
    };
    if path.mode != expected {
        return Err(Error::InvalidInput(format!(
            "{:?} observation path for a {:?} system",
            path.mode, expected
        )));
    }
    if path.dt != ospec.grid_dt {
        return Err(Error::InvalidInput(format!(
            "path step {} differs from observation step {}",
            path.dt, ospec.grid_dt
        )));
    }
    if let Some(inc) = path.increments.iter().find(|v| v.len() != ospec.obs_dim) {
        return Err(Error::DimensionMismatch {
            expected: ospec.obs_dim,
            got: inc.len(),
        });
    }
    if path.times.len() != path.increments.len() {
        return Err(Error::InvalidInput("path times and increments differ in length".into()));
    }
    Ok(())
}

/// `log Z_t(x)` over all increments of `path`. An empty path gives 0.
pub fn log_likelihood(
    x: &StateVector,
    path: &ObservationPath,
    ospec: &ObservationSpec,
    sspec: &SystemSpec,
) -> Result<f64> {
    check_path(path, ospec, sspec)?;
    let mut prop = Propagator::new(sspec, x)?;
    let mut h = vec![0.0; ospec.obs_dim];
    let (mut cross, mut energy) = (0.0, 0.0);
    for (t, dy) in path.times.iter().zip(&path.increments) {
        let s = prop.advance_to(*t)?;
        ospec.h_into(*t, s, &mut h)?;
        cross += h.iter().zip(dy).map(|(a, b)| a * b).sum::<f64>();
        energy += h.iter().map(|a| a * a).sum::<f64>();
    }
    Ok(cross - 0.5 * energy * path.dt)
}

/// Cumulative log-likelihoods and pushed-forward states of one particle at
/// a ladder of increment counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleTrack {
    /// `log Z` after `ladder[i]` increments.
    pub log_lik: Vec<f64>,
    /// `φ_{ladder[i]·Δ} x`.
    pub states: Vec<StateVector>,
}

/// One pass over the path recording [`ParticleTrack`] entries. `ladder`
/// must be non-decreasing with entries at most `path.len()`.
pub fn track_particle(
    x: &StateVector,
    path: &ObservationPath,
    ospec: &ObservationSpec,
    sspec: &SystemSpec,
    ladder: &[usize],
) -> Result<ParticleTrack> {
    check_path(path, ospec, sspec)?;
    check_ladder(ladder, path.len())?;
    let mut prop = Propagator::new(sspec, x)?;
    let mut h = vec![0.0; ospec.obs_dim];
    let (mut cross, mut energy) = (0.0, 0.0);
    let mut log_lik = Vec::with_capacity(ladder.len());
    let mut states = Vec::with_capacity(ladder.len());
    let mut next = 0;
    for k in 0..=path.len() {
        while next < ladder.len() && ladder[next] == k {
            let s = prop.advance_to(k as f64 * path.dt)?;
            states.push(StateVector::from(s.to_vec()));
            log_lik.push(cross - 0.5 * energy * path.dt);
            next += 1;
        }
        if k == path.len() || next == ladder.len() {
            break;
        }
        let t = path.times[k];
        let s = prop.advance_to(t)?;
        ospec.h_into(t, s, &mut h)?;
        cross += h.iter().zip(&path.increments[k]).map(|(a, b)| a * b).sum::<f64>();
        energy += h.iter().map(|a| a * a).sum::<f64>();
    }
    Ok(ParticleTrack { log_lik, states })
}

fn check_ladder(ladder: &[usize], len: usize) -> Result<()> {
    if ladder.windows(2).any(|w| w[0] > w[1]) || ladder.last().is_some_and(|&k| k > len) {
        return Err(Error::InvalidInput(format!(
            "ladder must be non-decreasing and bounded by {len}"
        )));
    }
    Ok(())
}

/// Weighted ensemble from explicit particles and prior log weights
/// (zero for an equally weighted sample of the prior).
pub fn smoother_from_particles(
    particles: Vec<StateVector>,
    prior_log_weights: Vec<f64>,
    label: PriorLabel,
    path: &ObservationPath,
    ospec: &ObservationSpec,
    sspec: &SystemSpec,
) -> Result<WeightedEnsemble> {
    ospec.validate(sspec)?;
    if prior_log_weights.len() != particles.len() {
        return Err(Error::InvalidInput("one prior log weight per particle".into()));
    }
    let ll: Vec<f64> = particles
        .par_iter()
        .map(|x| log_likelihood(x, path, ospec, sspec))
        .collect::<Result<_>>()?;
    let log_w: Vec<f64> = prior_log_weights.iter().zip(&ll).map(|(a, b)| a + b).collect();
    check_degeneracy(&log_w)?;
    WeightedEnsemble::new(particles, log_w, path.horizon(), label, sspec.metric())
}

/// Posterior on the initial condition under the true prior `μ`.
pub fn smoother(
    prior: &PriorSpec,
    path: &ObservationPath,
    ospec: &ObservationSpec,
    sspec: &SystemSpec,
) -> Result<WeightedEnsemble> {
    let particles = prior.sample()?;
    let n = particles.len();
    smoother_from_particles(particles, vec![0.0; n], PriorLabel::Mu, path, ospec, sspec)
}

/// Same computation started from a wrong prior `ν`.
pub fn incorrect_smoother(
    nu: &PriorSpec,
    path: &ObservationPath,
    ospec: &ObservationSpec,
    sspec: &SystemSpec,
) -> Result<WeightedEnsemble> {
    let particles = nu.sample()?;
    let n = particles.len();
    smoother_from_particles(particles, vec![0.0; n], PriorLabel::Nu, path, ospec, sspec)
}

/// `ν`-smoother on the particles of `μ`, weighted by `dν/dμ`. Both priors
/// must share their support.
pub fn reweighted_smoother(
    mu: &PriorSpec,
    nu: &PriorSpec,
    path: &ObservationPath,
    ospec: &ObservationSpec,
    sspec: &SystemSpec,
) -> Result<WeightedEnsemble> {
    let particles = mu.sample()?;
    let prior_lw = particles
        .iter()
        .map(|x| log_density_ratio(nu, mu, x))
        .collect::<Result<Vec<_>>>()?;
    smoother_from_particles(particles, prior_lw, PriorLabel::Nu, path, ospec, sspec)
}

/// Smoother for discrete-time systems; rejects continuous-time input.
pub fn discrete_smoother(
    prior: &PriorSpec,
    path: &ObservationPath,
    ospec: &ObservationSpec,
    sspec: &SystemSpec,
) -> Result<WeightedEnsemble> {
    if !sspec.is_discrete() || path.mode != TimeMode::Discrete {
        return Err(Error::InvalidInput("discrete smoother needs a map and a discrete path".into()));
    }
    smoother(prior, path, ospec, sspec)
}

/// Filter ensembles at several observation counts from a single pass.
#[derive(Clone, Debug)]
pub struct EnsembleLadder {
    pub ladder: Vec<usize>,
    pub dt: f64,
    pub label: PriorLabel,
    pub prior_log_weights: Vec<f64>,
    pub particles: Vec<StateVector>,
    pub tracks: Vec<ParticleTrack>,
    pub metric: crate::dynamics::Metric,
}

impl EnsembleLadder {
    pub fn time(&self, i: usize) -> f64 {
        self.ladder[i] as f64 * self.dt
    }

    pub fn log_weights(&self, i: usize) -> Vec<f64> {
        self.prior_log_weights
            .iter()
            .zip(&self.tracks)
            .map(|(a, tr)| a + tr.log_lik[i])
            .collect()
    }

    /// Normalised filter weights at rung `i`, failing on degeneracy.
    pub fn weights(&self, i: usize) -> Result<Vec<f64>> {
        let lw = self.log_weights(i);
        check_degeneracy(&lw)?;
        Ok(normalize_log_weights(&lw))
    }

    /// Particle states pushed forward to rung `i`.
    pub fn states(&self, i: usize) -> Vec<StateVector> {
        self.tracks.iter().map(|tr| tr.states[i].clone()).collect()
    }

    pub fn ensemble(&self, i: usize) -> Result<WeightedEnsemble> {
        let lw = self.log_weights(i);
        check_degeneracy(&lw)?;
        WeightedEnsemble::new(self.particles.clone(), lw, self.time(i), self.label, self.metric)
    }
}

pub fn ensemble_ladder(
    particles: Vec<StateVector>,
    prior_log_weights: Vec<f64>,
    label: PriorLabel,
    path: &ObservationPath,
    ospec: &ObservationSpec,
    sspec: &SystemSpec,
    ladder: &[usize],
) -> Result<EnsembleLadder> {
    ospec.validate(sspec)?;
    check_ladder(ladder, path.len())?;
    if prior_log_weights.len() != particles.len() || particles.is_empty() {
        return Err(Error::InvalidInput("one prior log weight per particle".into()));
    }
    let tracks = particles
        .par_iter()
        .map(|x| track_particle(x, path, ospec, sspec, ladder))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleLadder {
        ladder: ladder.to_vec(),
        dt: path.dt,
        label,
        prior_log_weights,
        particles,
        tracks,
        metric: sspec.metric(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{trajectory_grid, Region};
    use crate::noise::NoiseSource;
    use crate::observation::{simulate_path, simulate_path_with_noise, Gain};

    fn lorenz() -> SystemSpec {
        SystemSpec::lorenz63_classic(0.01).with_region(Region::Ball {
            center: vec![0.0, 0.0, 38.0],
            radius: 40.0,
        })
    }

    #[test]
    fn empty_path_has_zero_likelihood() {
        let sys = lorenz();
        let o = ObservationSpec::identity(3, Gain::Constant { b: 1.0 }, 0.01);
        let x = StateVector::from([1.0, 2.0, 20.0]);
        let path = simulate_path(&o, &sys, &x, 0.0, 1).unwrap();
        assert_eq!(log_likelihood(&x, &path, &o, &sys).unwrap(), 0.0);
        let prior = PriorSpec::uniform_box(vec![0.0, 0.0, 20.0], vec![1.0, 1.0, 21.0], 50, 2);
        let e = smoother(&prior, &path, &o, &sys).unwrap();
        assert!(e.normalized_weights().iter().all(|w| (w - 0.02).abs() < 1e-15));
    }

    #[test]
    fn likelihood_matches_direct_sum() {
        let sys = lorenz();
        let o = ObservationSpec::bilipschitz(3, 0.3, Gain::PowerLaw { b: 0.7, q: 0.5, offset: 1.0 }, 0.02);
        let truth = StateVector::from([1.0, 2.0, 20.0]);
        let path = simulate_path(&o, &sys, &truth, 2.0, 9).unwrap();
        let x = StateVector::from([1.1, 1.9, 20.2]);
        // independent evaluation: whole trajectory, then the two sums separately
        let states = trajectory_grid(&sys, &x, &path.times).unwrap();
        let hs: Vec<Vec<f64>> = path
            .times
            .iter()
            .zip(&states)
            .map(|(t, s)| {
                let k = 0.7 * (t + 1.0f64).sqrt();
                s.iter().map(|v| k * (v + 0.3 * v.sin())).collect()
            })
            .collect();
        let cross: f64 = hs
            .iter()
            .zip(&path.increments)
            .map(|(h, dy)| h.iter().zip(dy).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let energy: f64 = hs.iter().map(|h| h.iter().map(|a| a * a).sum::<f64>()).sum();
        let oracle = cross - 0.5 * energy * 0.02;
        let got = log_likelihood(&x, &path, &o, &sys).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1.0), "{got} vs {oracle}");
    }

    #[test]
    fn zero_gain_leaves_the_prior_untouched() {
        let sys = lorenz();
        let o = ObservationSpec::identity(3, Gain::Constant { b: 0.0 }, 0.01);
        let truth = StateVector::from([1.0, 2.0, 20.0]);
        let path = simulate_path(&o, &sys, &truth, 1.0, 3).unwrap();
        let prior = PriorSpec::uniform_box(vec![0.0, 0.0, 20.0], vec![1.0, 1.0, 21.0], 40, 2);
        let e = smoother(&prior, &path, &o, &sys).unwrap();
        assert!(e.log_weights.iter().all(|l| *l == 0.0));
    }

    #[test]
    fn track_matches_prefix_likelihood_and_flow() {
        let sys = lorenz();
        let o = ObservationSpec::identity(3, Gain::Constant { b: 2.0 }, 0.05);
        let truth = StateVector::from([1.0, 2.0, 20.0]);
        let path = simulate_path(&o, &sys, &truth, 1.0, 4).unwrap();
        let x = StateVector::from([0.5, 2.5, 19.0]);
        let ladder = [0, 0, 3, 10, 20];
        let tr = track_particle(&x, &path, &o, &sys, &ladder).unwrap();
        for (i, k) in ladder.iter().enumerate() {
            let ll = log_likelihood(&x, &path.prefix(*k), &o, &sys).unwrap();
            assert_eq!(tr.log_lik[i], ll);
            let s = crate::dynamics::flow(&sys, &x, *k as f64 * 0.05).unwrap();
            assert_eq!(tr.states[i], s);
        }
        assert!(track_particle(&x, &path, &o, &sys, &[3, 2]).is_err());
        assert!(track_particle(&x, &path, &o, &sys, &[21]).is_err());
    }

    #[test]
    fn discrete_track_uses_map_iterates() {
        let sys = SystemSpec::cat_map();
        let g = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let o = ObservationSpec {
            gain: Gain::Constant { b: 1.0 },
            base: crate::observation::BaseObservation::Linear { g },
            obs_dim: 2,
            grid_dt: 1.0,
        };
        let truth = StateVector::from([0.1, 0.7]);
        let path = simulate_path(&o, &sys, &truth, 5.0, 8).unwrap();
        let x = StateVector::from([0.3, 0.2]);
        let tr = track_particle(&x, &path, &o, &sys, &[0, 2, 5]).unwrap();
        assert_eq!(tr.log_lik[0], 0.0);
        assert_eq!(tr.states[1], crate::dynamics::flow(&sys, &x, 2.0).unwrap());
        // k = 1 term by hand: h(1, T x) = T x
        let tx = crate::dynamics::flow(&sys, &x, 1.0).unwrap();
        let dy = &path.increments[0];
        let oracle = tx[0] * dy[0] + tx[1] * dy[1] - 0.5 * (tx[0] * tx[0] + tx[1] * tx[1]);
        let one = track_particle(&x, &path, &o, &sys, &[1]).unwrap();
        assert!((one.log_lik[0] - oracle).abs() < 1e-14);
        assert!(discrete_smoother(&PriorSpec::uniform_box(vec![0.0; 2], vec![1.0; 2], 10, 0), &path, &o, &sys).is_ok());
    }

    /// Conjugate check: static scalar state observed in discrete time.
    /// The exact posterior mean on a box comes from quadrature.
    #[test]
    fn static_posterior_mean_matches_quadrature() {
        let sys = SystemSpec::identity_map(1);
        let b = 0.8;
        let o = ObservationSpec::identity(1, Gain::Constant { b }, 1.0);
        let truth = StateVector::from([0.3]);
        let path = simulate_path(&o, &sys, &truth, 6.0, 17).unwrap();
        let s: f64 = path.increments.iter().map(|v| v[0]).sum();
        let k = path.len() as f64;
        let log_z = |x: f64| b * x * s - 0.5 * k * b * b * x * x;
        let (lo, hi) = (-2.0f64, 2.0f64);
        let m = 20_000;
        let hq = (hi - lo) / m as f64;
        let (mut z0, mut z1, mut z2) = (0.0, 0.0, 0.0);
        for i in 0..=m {
            let x = lo + i as f64 * hq;
            let wq = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let f = log_z(x).exp();
            z0 += wq * f;
            z1 += wq * f * x;
            z2 += wq * f * x * x;
        }
        let mean = z1 / z0;
        let sd = (z2 / z0 - mean * mean).sqrt();
        let prior = PriorSpec::uniform_box(vec![lo], vec![hi], 40_000, 5);
        let e = smoother(&prior, &path, &o, &sys).unwrap();
        let est = e.expectation(|x| x[0], 0.0, &sys).unwrap();
        assert!((est - mean).abs() < 4.0 * sd / e.ess().sqrt(), "{est} vs {mean}");
    }

    #[test]
    fn reweighting_with_equal_priors_is_the_smoother() {
        let sys = lorenz();
        let o = ObservationSpec::identity(3, Gain::Constant { b: 1.0 }, 0.01);
        let truth = StateVector::from([0.5, 0.5, 20.5]);
        let path = simulate_path(&o, &sys, &truth, 0.5, 3).unwrap();
        let lo = vec![0.0, 0.0, 20.0];
        let hi = vec![1.0, 1.0, 21.0];
        let mu = PriorSpec::uniform_box(lo.clone(), hi.clone(), 60, 2);
        let nu = PriorSpec::tilted_box(lo, hi, vec![0.0; 3], 60, 2);
        let a = smoother(&mu, &path, &o, &sys).unwrap();
        let b = reweighted_smoother(&mu, &nu, &path, &o, &sys).unwrap();
        assert_eq!(a.normalized_weights(), b.normalized_weights());
        assert_eq!(b.prior_label, PriorLabel::Nu);
    }

    #[test]
    fn thread_count_does_not_change_weights() {
        let sys = lorenz();
        let o = ObservationSpec::identity(3, Gain::Constant { b: 3.0 }, 0.01);
        let truth = StateVector::from([0.5, 0.5, 20.5]);
        let path = simulate_path(&o, &sys, &truth, 0.5, 3).unwrap();
        let mu = PriorSpec::uniform_box(vec![0.0, 0.0, 20.0], vec![1.0, 1.0, 21.0], 200, 2);
        let run = |n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(|| smoother(&mu, &path, &o, &sys).unwrap().log_weights)
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn noiseless_observations_favour_the_truth() {
        let sys = lorenz();
        let o = ObservationSpec::identity(3, Gain::Constant { b: 5.0 }, 0.01);
        let truth = StateVector::from([0.5, 0.5, 20.5]);
        let path = simulate_path_with_noise(&o, &sys, &truth, 0.3, 0, NoiseSource::Zero).unwrap();
        let far = StateVector::from([0.9, 0.1, 20.9]);
        let lt = log_likelihood(&truth, &path, &o, &sys).unwrap();
        let lf = log_likelihood(&far, &path, &o, &sys).unwrap();
        assert!(lt > lf);
    }

    #[test]
    fn mismatched_path_is_rejected() {
        let sys = lorenz();
        let o = ObservationSpec::identity(3, Gain::Constant { b: 1.0 }, 0.01);
        let truth = StateVector::from([0.5, 0.5, 20.5]);
        let path = simulate_path(&o, &sys, &truth, 0.1, 3).unwrap();
        let o2 = ObservationSpec::identity(3, Gain::Constant { b: 1.0 }, 0.02);
        assert!(log_likelihood(&truth, &path, &o2, &sys).is_err());
        assert!(log_likelihood(&truth, &path, &o, &SystemSpec::identity_map(3)).is_err());
    }
}
