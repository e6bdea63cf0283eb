//! Filter mass on the nested sets `Λ_s` for a prior started far from the attractor.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::concentration::ladder;
use super::{csv_line, derive_seed, Output};
use crate::assumptions::{attractor_mass_of, hitting_time, AttractorClouds, HittingTime};
use crate::dynamics::{StateVector, SystemSpec};
use crate::error::{Error, Result};
use crate::filtering::{ensemble_ladder, PriorLabel, PriorSpec};
use crate::observation::{simulate_path, ObservationSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct E5Config {
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: usize,
    /// Must carry a trapping region.
    pub system: SystemSpec,
    pub observation: ObservationSpec,
    pub prior: PriorSpec,
    pub horizon: f64,
    pub record_every: usize,
    /// Largest `s` and the spacing of the `r`-grid in `[0, s_max]`.
    pub s_max: f64,
    pub r_step: f64,
    pub n_ref: usize,
    pub n_holdout: usize,
    /// True initial condition; drawn from the prior when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<f64>>,
}

impl E5Config {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.system.region()?;
        self.observation.validate(&self.system)?;
        self.prior.validate()?;
        if self.record_every == 0 || self.n_ref == 0 || self.n_holdout == 0 {
            return Err(Error::InvalidSpec("record_every, n_ref and n_holdout must be positive".into()));
        }
        if !SystemSpec::divides(self.observation.grid_dt, self.horizon) {
            return Err(Error::InvalidSpec("horizon is not a multiple of the observation step".into()));
        }
        if !(self.r_step > 0.0) || !SystemSpec::divides(self.r_step, self.s_max) {
            return Err(Error::InvalidSpec("r_step must divide s_max".into()));
        }
        if let Some(t) = &self.truth {
            self.system.check_state(t)?;
        }
        Ok(())
    }
}

pub fn run_e5(cfg: &E5Config, out: &mut Output) -> Result<serde_json::Value> {
    cfg.validate()?;
    let sys = &cfg.system;
    let truth: StateVector = match &cfg.truth {
        Some(t) => t.clone().into(),
        None => PriorSpec {
            n_particles: 1,
            ..cfg.prior.with_seed(derive_seed(cfg.seed, "truth", 0))
        }
        .sample()?
        .remove(0),
    };
    let path = simulate_path(&cfg.observation, sys, &truth, cfg.horizon, derive_seed(cfg.seed, "path", 0))?;
    let particles = cfg.prior.with_seed(derive_seed(cfg.seed, "particles", 0)).sample()?;
    let hits: Vec<HittingTime> = particles
        .par_iter()
        .map(|x| hitting_time(sys, x, cfg.horizon))
        .collect::<Result<_>>()?;
    let clouds = AttractorClouds::build(
        sys,
        cfg.s_max,
        cfg.r_step,
        cfg.n_ref,
        cfg.n_holdout,
        derive_seed(cfg.seed, "clouds", 0),
    )?;
    let n = particles.len();
    let rungs = ladder(path.len(), cfg.record_every);
    let lad = ensemble_ladder(particles, vec![0.0; n], PriorLabel::Mu, &path, &cfg.observation, sys, &rungs)?;

    let mut csv = String::from("t,s,mass\n");
    let mut masses: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut degenerate_at = None;
    for i in 0..rungs.len() {
        let w = match lad.weights(i) {
            Ok(w) => w,
            Err(Error::AllWeightsDegenerate { .. }) => {
                degenerate_at = Some(lad.time(i));
                break;
            }
            Err(e) => return Err(e),
        };
        let states = lad.states(i);
        let t = lad.time(i);
        let row = clouds
            .r_grid
            .iter()
            .map(|s| attractor_mass_of(&w, &states, *s, sys, &clouds))
            .collect::<Result<Vec<_>>>()?;
        for (s, m) in clouds.r_grid.iter().zip(&row) {
            csv_line(&mut csv, &[&t, s, m]);
        }
        masses.push((t, row));
    }
    out.write("e5_attractor.csv", &csv)?;

    let mut hit_csv = String::from("particle,reached,t\n");
    for (j, h) in hits.iter().enumerate() {
        match h {
            HittingTime::Reached(t) => csv_line(&mut hit_csv, &[&j, &1, t]),
            HittingTime::NotReached(t) => csv_line(&mut hit_csv, &[&j, &0, t]),
        }
    }
    out.write("e5_hitting.csv", &hit_csv)?;

    let reached: Vec<f64> = hits.iter().filter_map(|h| h.reached()).collect();
    let not_reached = hits.len() - reached.len();
    let max_hit = reached.iter().copied().fold(0.0, f64::max);
    let monotone_in_s = masses.iter().all(|(_, row)| row.windows(2).all(|w| w[1] <= w[0]));
    let after_hit = masses.iter().find(|(t, _)| *t >= max_hit);
    Ok(serde_json::json!({
        "truth_x0": truth,
        "max_hitting_time": max_hit,
        "not_reached": not_reached,
        "mean_hitting_time": if reached.is_empty() { None } else { Some(reached.iter().sum::<f64>() / reached.len() as f64) },
        "first_time_after_max_hit": after_hit.map(|(t, _)| *t),
        "mass_s0_after_max_hit": after_hit.map(|(_, row)| row[0]),
        "final_masses": masses.last().map(|(_, row)| row.clone()),
        "monotone_in_s": monotone_in_s,
        "s_grid": clouds.r_grid,
        "tolerances": clouds.tolerances,
        "degenerate_at": degenerate_at,
    }))
}
