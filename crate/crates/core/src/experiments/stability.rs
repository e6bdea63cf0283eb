//! Merging of the filter started from `μ` and from a tilted prior `ν`.

use serde::{Deserialize, Serialize};

use super::concentration::ladder;
use super::{csv_line, derive_seed, E3Config, Output};
use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::filtering::{
    check_degeneracy, ensemble_ladder, log_density_ratio, normalize_log_weights, PriorKind, PriorLabel, PriorSpec,
};
use crate::metrics::{merging_distance_of, TestFunctionSet};
use crate::observation::{simulate_path, ObservationSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilitySettings {
    pub system: SystemSpec,
    pub observation: ObservationSpec,
    /// Uniform box `μ`.
    pub prior: PriorSpec,
    /// `ν` has density `∝ Π (1 + tilt_j u_j)` on the same box.
    pub tilt: Vec<f64>,
    pub horizon: f64,
    pub record_every: usize,
    pub n_realizations: usize,
    pub test_functions: TestFunctionSet,
    pub seed: u64,
}

impl StabilitySettings {
    pub fn nu(&self) -> Result<PriorSpec> {
        match &self.prior.kind {
            PriorKind::UniformBox { lo, hi } => Ok(PriorSpec::tilted_box(
                lo.clone(),
                hi.clone(),
                self.tilt.clone(),
                self.prior.n_particles,
                self.prior.seed,
            )),
            _ => Err(Error::InvalidSpec("stability runs need a uniform box prior".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.observation.validate(&self.system)?;
        self.prior.validate()?;
        let nu = self.nu()?;
        nu.validate()?;
        if nu.support() != self.prior.support() {
            return Err(Error::InvalidSpec("nu must share the support of mu".into()));
        }
        if self.prior.dim() != self.system.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.system.dimension,
                got: self.prior.dim(),
            });
        }
        self.test_functions.validate(self.system.dimension)?;
        if self.test_functions.is_empty() || self.record_every == 0 || self.n_realizations == 0 {
            return Err(Error::InvalidSpec(
                "need test functions, record_every > 0 and n_realizations > 0".into(),
            ));
        }
        if !SystemSpec::divides(self.observation.grid_dt, self.horizon) {
            return Err(Error::InvalidSpec(format!(
                "horizon {} is not a multiple of the observation step {}",
                self.horizon, self.observation.grid_dt
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilitySeries {
    pub realization: usize,
    pub times: Vec<f64>,
    /// `per_g[i][g]` at recorded time `i`.
    pub per_g: Vec<Vec<f64>>,
    pub max: Vec<f64>,
    /// Same computation with `ν = μ`.
    pub control_max: Vec<f64>,
    pub degenerate_at: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityOutcome {
    pub times: Vec<f64>,
    pub series: Vec<StabilitySeries>,
}

impl StabilityOutcome {
    /// Mean and standard error of `max_g` gaps over realizations that
    /// reached recorded time `i`.
    pub fn mean_max(&self, i: usize) -> (f64, f64, usize) {
        let v: Vec<f64> = self.series.iter().filter_map(|s| s.max.get(i).copied()).collect();
        let n = v.len();
        if n == 0 {
            return (f64::NAN, f64::NAN, 0);
        }
        let m = v.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt()
        } else {
            f64::NAN
        };
        (m, se, n)
    }

    pub fn control_max(&self) -> f64 {
        self.series
            .iter()
            .flat_map(|s| s.control_max.iter().copied())
            .fold(0.0, f64::max)
    }
}

pub fn stability_run(s: &StabilitySettings) -> Result<StabilityOutcome> {
    s.validate()?;
    let nu = s.nu()?;
    let metric = s.system.metric();
    let mut series = Vec::with_capacity(s.n_realizations);
    let mut all_times = Vec::new();
    for r in 0..s.n_realizations {
        let truth = PriorSpec {
            n_particles: 1,
            ..s.prior.with_seed(derive_seed(s.seed, "truth", r as u64))
        }
        .sample()?
        .remove(0);
        let path = simulate_path(
            &s.observation,
            &s.system,
            &truth,
            s.horizon,
            derive_seed(s.seed, "path", r as u64),
        )?;
        let particles = s.prior.with_seed(derive_seed(s.seed, "particles", r as u64)).sample()?;
        let log_ratio = particles
            .iter()
            .map(|x| log_density_ratio(&nu, &s.prior, x))
            .collect::<Result<Vec<_>>>()?;
        let n = particles.len();
        let rungs = ladder(path.len(), s.record_every);
        let lad = ensemble_ladder(
            particles,
            vec![0.0; n],
            PriorLabel::Mu,
            &path,
            &s.observation,
            &s.system,
            &rungs,
        )?;
        if r == 0 {
            all_times = (0..rungs.len()).map(|i| lad.time(i)).collect();
        }
        let mut out = StabilitySeries {
            realization: r,
            times: Vec::new(),
            per_g: Vec::new(),
            max: Vec::new(),
            control_max: Vec::new(),
            degenerate_at: None,
        };
        for i in 0..rungs.len() {
            let lw_mu = lad.log_weights(i);
            let lw_nu: Vec<f64> = lw_mu.iter().zip(&log_ratio).map(|(a, b)| a + b).collect();
            if check_degeneracy(&lw_mu).is_err() || check_degeneracy(&lw_nu).is_err() {
                out.degenerate_at = Some(lad.time(i));
                log::warn!("realization {r}: weights degenerate at t = {}", lad.time(i));
                break;
            }
            let w_mu = normalize_log_weights(&lw_mu);
            let w_nu = normalize_log_weights(&lw_nu);
            let states = lad.states(i);
            let m = merging_distance_of(&w_mu, &states, &w_nu, &states, &s.test_functions, metric);
            let c = merging_distance_of(&w_mu, &states, &w_mu, &states, &s.test_functions, metric);
            out.times.push(lad.time(i));
            out.max.push(m.max);
            out.per_g.push(m.per_g);
            out.control_max.push(c.max);
        }
        series.push(out);
    }
    Ok(StabilityOutcome {
        times: all_times,
        series,
    })
}

/// Run and write `<prefix>merging.csv` and `<prefix>merging_mean.csv`.
pub(crate) fn write_stability(s: &StabilitySettings, out: &mut Output, prefix: &str) -> Result<serde_json::Value> {
    let res = stability_run(s)?;
    let names = s.test_functions.names();
    let mut rows = String::from("realization,t,g,value\n");
    for ser in &res.series {
        for (i, t) in ser.times.iter().enumerate() {
            for (name, v) in names.iter().zip(&ser.per_g[i]) {
                csv_line(&mut rows, &[&ser.realization, t, name, v]);
            }
            csv_line(&mut rows, &[&ser.realization, t, &"max", &ser.max[i]]);
            csv_line(&mut rows, &[&ser.realization, t, &"control_max", &ser.control_max[i]]);
        }
    }
    let mut mean = String::from("t,mean_max,se_max,n\n");
    for (i, t) in res.times.iter().enumerate() {
        let (m, se, n) = res.mean_max(i);
        csv_line(&mut mean, &[t, &m, &se, &n]);
    }
    out.write(&format!("{prefix}merging.csv"), &rows)?;
    out.write(&format!("{prefix}merging_mean.csv"), &mean)?;
    let last = res.times.len() - 1;
    let (m0, se0, n0) = res.mean_max(0);
    let (mt, set, nt) = res.mean_max(last);
    Ok(serde_json::json!({
        "horizon": s.horizon,
        "n_realizations": s.n_realizations,
        "mean_max_t0": m0,
        "se_max_t0": se0,
        "n_t0": n0,
        "mean_max_final": mt,
        "se_max_final": set,
        "n_final": nt,
        "final_over_initial": mt / m0,
        "control_max": res.control_max(),
        "degenerate_at": res.series.iter().map(|s| s.degenerate_at).collect::<Vec<_>>(),
    }))
}

pub(crate) fn run_e3(c: &E3Config, out: &mut Output) -> Result<serde_json::Value> {
    write_stability(&c.stability(), out, "e3_")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Region;
    use crate::metrics::TestFunction;
    use crate::observation::Gain;

    fn settings(tilt: f64, b: f64) -> StabilitySettings {
        StabilitySettings {
            system: SystemSpec::lorenz63_classic(0.01).with_region(Region::Ball {
                center: vec![0.0, 0.0, 38.0],
                radius: 40.0,
            }),
            observation: ObservationSpec::identity(3, Gain::Constant { b }, 0.01),
            prior: PriorSpec::uniform_box(vec![-0.5, -0.5, 19.5], vec![0.5, 0.5, 20.5], 400, 0),
            tilt: vec![tilt; 3],
            horizon: 0.3,
            record_every: 10,
            n_realizations: 2,
            test_functions: TestFunctionSet::new(
                (0..3)
                    .map(|index| TestFunction::ClippedCoordinate { index, bound: 100.0 })
                    .collect(),
            ),
            seed: 4,
        }
    }

    #[test]
    fn equal_priors_never_differ() {
        let res = stability_run(&settings(0.0, 1.0)).unwrap();
        for s in &res.series {
            assert!(s.max.iter().all(|v| *v == 0.0));
        }
        assert_eq!(res.control_max(), 0.0);
    }

    #[test]
    fn initial_gap_is_the_prior_mean_shift() {
        let res = stability_run(&settings(0.6, 1.0)).unwrap();
        // tilt * halfwidth / 3 = 0.1, up to Monte Carlo error with 400 particles
        for s in &res.series {
            assert!((s.max[0] - 0.1).abs() < 0.05, "{}", s.max[0]);
        }
    }

    #[test]
    fn non_box_prior_is_rejected() {
        let mut s = settings(0.3, 1.0);
        s.prior = PriorSpec::tilted_box(vec![0.0; 3], vec![1.0; 3], vec![0.1; 3], 10, 0);
        assert!(s.validate().is_err());
    }
}
