//! Smoother concentration around the true initial condition.

use serde::{Deserialize, Serialize};

use super::{csv_line, derive_seed, E2Config, Output};
use crate::dynamics::{StateVector, SystemSpec};
use crate::error::{Error, Result};
use crate::filtering::{ensemble_ladder, ess, PriorLabel, PriorSpec};
use crate::metrics::{ball_mass_of, concentration_rate, ConcentrationFit};
use crate::observation::{simulate_path, ObservationSpec};

/// Masses at or above this count as saturated and end the fitted series.
const SATURATED: f64 = 1.0 - 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSettings {
    pub system: SystemSpec,
    pub observation: ObservationSpec,
    pub prior: PriorSpec,
    pub horizon: f64,
    pub record_every: usize,
    pub radii: Vec<f64>,
    pub n_realizations: usize,
    pub seed: u64,
}

impl ConcentrationSettings {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.observation.validate(&self.system)?;
        self.prior.validate()?;
        if self.prior.dim() != self.system.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.system.dimension,
                got: self.prior.dim(),
            });
        }
        if self.record_every == 0 || self.n_realizations == 0 {
            return Err(Error::InvalidSpec("record_every and n_realizations must be positive".into()));
        }
        if self.radii.is_empty() || self.radii.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::InvalidSpec("radii must be positive".into()));
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

/// Recorded increment counts `0, e, 2e, ..` ending at `len`.
pub(crate) fn ladder(len: usize, every: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..=len).step_by(every).collect();
    if v.last() != Some(&len) {
        v.push(len);
    }
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizationSeries {
    pub realization: usize,
    pub truth_x0: StateVector,
    pub times: Vec<f64>,
    /// `masses[j][i]`: radius `j`, recorded time `i`.
    pub masses: Vec<Vec<f64>>,
    pub ess: Vec<f64>,
    /// Time at which the weights degenerated, if they did.
    pub degenerate_at: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub realization: usize,
    pub radius: f64,
    pub alpha: Option<f64>,
    pub r2: Option<f64>,
    pub n_points: usize,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationOutcome {
    pub series: Vec<RealizationSeries>,
    pub fits: Vec<FitRecord>,
}

impl ConcentrationOutcome {
    /// Masses at the last recorded time, for realizations that reached it.
    pub fn final_masses(&self, radius_index: usize) -> Vec<f64> {
        self.series
            .iter()
            .filter(|s| s.degenerate_at.is_none())
            .map(|s| *s.masses[radius_index].last().expect("at least one time"))
            .collect()
    }
}

/// Median mass over realizations at each recorded time that every realization reached.
pub fn median_curve(series: &[RealizationSeries], radius_index: usize) -> Vec<(f64, f64)> {
    let len = series.iter().map(|s| s.times.len()).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let ms: Vec<f64> = series.iter().map(|s| s.masses[radius_index][i]).collect();
            (series[0].times[i], median(&ms).expect("non-empty"))
        })
        .collect()
}

/// `α(a)` fitted on the median curve.
pub fn pooled_fit(series: &[RealizationSeries], radius_index: usize) -> Result<ConcentrationFit> {
    let curve = median_curve(series, radius_index);
    let (t, m): (Vec<f64>, Vec<f64>) = curve.into_iter().unzip();
    concentration_rate(&fit_series(&t, &m))
}

/// Series `(t, mass)` cut before the first saturated value.
pub(crate) fn fit_series(times: &[f64], masses: &[f64]) -> Vec<(f64, f64)> {
    times
        .iter()
        .zip(masses)
        .map(|(t, m)| (*t, *m))
        .take_while(|(_, m)| *m < SATURATED)
        .collect()
}

pub fn concentration_run(s: &ConcentrationSettings) -> Result<ConcentrationOutcome> {
    s.validate()?;
    let metric = s.system.metric();
    let mut series = Vec::with_capacity(s.n_realizations);
    let mut fits = Vec::new();
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
        let mut times = Vec::new();
        let mut masses = vec![Vec::new(); s.radii.len()];
        let mut ess_v = Vec::new();
        let mut degenerate_at = None;
        for i in 0..rungs.len() {
            let w = match lad.weights(i) {
                Ok(w) => w,
                Err(Error::AllWeightsDegenerate { .. }) => {
                    degenerate_at = Some(lad.time(i));
                    log::warn!("realization {r}: weights degenerate at t = {}", lad.time(i));
                    break;
                }
                Err(e) => return Err(e),
            };
            times.push(lad.time(i));
            ess_v.push(ess(&w));
            for (j, a) in s.radii.iter().enumerate() {
                masses[j].push(ball_mass_of(&w, &lad.particles, &truth, *a, metric));
            }
        }
        for (j, a) in s.radii.iter().enumerate() {
            let pts = fit_series(&times, &masses[j]);
            let rec = match concentration_rate(&pts) {
                Ok(f) => FitRecord {
                    realization: r,
                    radius: *a,
                    alpha: Some(f.alpha),
                    r2: Some(f.r2),
                    n_points: f.n_points,
                    note: None,
                },
                Err(e) => FitRecord {
                    realization: r,
                    radius: *a,
                    alpha: None,
                    r2: None,
                    n_points: pts.len(),
                    note: Some(e.to_string()),
                },
            };
            fits.push(rec);
        }
        series.push(RealizationSeries {
            realization: r,
            truth_x0: truth,
            times,
            masses,
            ess: ess_v,
            degenerate_at,
        });
    }
    Ok(ConcentrationOutcome { series, fits })
}

fn median(v: &[f64]) -> Option<f64> {
    super::percentile(v, 50.0)
}

/// Run and write `<prefix>concentration.csv`, `<prefix>ess.csv` and
/// `<prefix>fits.csv`; returns the summary block.
pub(crate) fn write_concentration(s: &ConcentrationSettings, out: &mut Output, prefix: &str) -> Result<serde_json::Value> {
    let res = concentration_run(s)?;
    let mut conc = String::from("realization,t,radius,mass\n");
    let mut ess_csv = String::from("realization,t,ess\n");
    for ser in &res.series {
        for (i, t) in ser.times.iter().enumerate() {
            for (j, a) in s.radii.iter().enumerate() {
                csv_line(&mut conc, &[&ser.realization, t, a, &ser.masses[j][i]]);
            }
            csv_line(&mut ess_csv, &[&ser.realization, t, &ser.ess[i]]);
        }
    }
    let mut fits = String::from("realization,radius,alpha,r2,n_points\n");
    for f in &res.fits {
        let alpha = f.alpha.map_or(String::new(), |v| v.to_string());
        let r2 = f.r2.map_or(String::new(), |v| v.to_string());
        csv_line(&mut fits, &[&f.realization, &f.radius, &alpha, &r2, &f.n_points]);
    }
    out.write(&format!("{prefix}concentration.csv"), &conc)?;
    out.write(&format!("{prefix}ess.csv"), &ess_csv)?;
    out.write(&format!("{prefix}fits.csv"), &fits)?;

    let per_radius: Vec<serde_json::Value> = s
        .radii
        .iter()
        .enumerate()
        .map(|(j, a)| {
            let fs: Vec<&FitRecord> = res.fits.iter().filter(|f| f.radius == *a).collect();
            let alphas: Vec<f64> = fs.iter().filter_map(|f| f.alpha).collect();
            let r2s: Vec<f64> = fs.iter().filter_map(|f| f.r2).collect();
            let finals = res.final_masses(j);
            let pooled = match pooled_fit(&res.series, j) {
                Ok(f) => serde_json::json!({"alpha": f.alpha, "r2": f.r2, "n_points": f.n_points}),
                Err(e) => serde_json::json!({"alpha": null, "r2": null, "note": e.to_string()}),
            };
            serde_json::json!({
                "radius": a,
                "median_final_mass": median(&finals),
                "n_reached_horizon": finals.len(),
                "median_alpha": median(&alphas),
                "min_alpha": alphas.iter().copied().reduce(f64::min),
                "median_r2": median(&r2s),
                "min_r2": r2s.iter().copied().reduce(f64::min),
                "n_fitted": alphas.len(),
                "median_curve_fit": pooled,
                "fits": fs,
            })
        })
        .collect();
    let degenerate: Vec<Option<f64>> = res.series.iter().map(|s| s.degenerate_at).collect();
    Ok(serde_json::json!({
        "horizon": s.horizon,
        "n_realizations": s.n_realizations,
        "radii": per_radius,
        "degenerate_at": degenerate,
    }))
}

pub(crate) fn run_e2(c: &E2Config, out: &mut Output) -> Result<serde_json::Value> {
    write_concentration(&c.concentration(), out, "e2_")
}
