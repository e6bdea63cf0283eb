//! Orbit-divergence ratios for several systems and `ρ` schedules.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{percentile, Output};
use crate::assumptions::{divergence_run, DivergenceConfig, DivergenceRun};
use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::metrics::RhoSchedule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct E1System {
    pub label: String,
    pub system: SystemSpec,
    /// Pass threshold `L²_min` per schedule label.
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct E1Config {
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: usize,
    pub tau: f64,
    pub horizon: f64,
    pub n_pairs: usize,
    pub b_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default = "default_lo")]
    pub sample_lo: f64,
    #[serde(default = "default_hi")]
    pub sample_hi: f64,
    /// Defaults to the five standard families with `c = 1000`.
    #[serde(default)]
    pub schedules: Vec<RhoSchedule>,
    pub systems: Vec<E1System>,
    /// Every `csv_stride`-th grid point goes to the CSV (the last always does).
    #[serde(default = "default_stride")]
    pub csv_stride: usize,
    /// Seed of the reference run that sets thresholds.
    pub reference_seed: u64,
    #[serde(default = "default_reference_pairs")]
    pub reference_pairs: usize,
}

fn default_lo() -> f64 {
    -10.0
}

fn default_hi() -> f64 {
    10.0
}

fn default_stride() -> usize {
    10
}

fn default_reference_pairs() -> usize {
    1000
}

impl E1Config {
    pub fn schedules(&self) -> Vec<RhoSchedule> {
        if self.schedules.is_empty() {
            RhoSchedule::standard_families(self.tau)
        } else {
            self.schedules.clone()
        }
    }

    fn divergence(&self, seed: u64, n_pairs: usize) -> DivergenceConfig {
        DivergenceConfig {
            n_pairs,
            horizon: self.horizon,
            tau: self.tau,
            b_min: self.b_min,
            seed,
            burn_in: self.burn_in,
            l2_min: None,
            sample_lo: self.sample_lo,
            sample_hi: self.sample_hi,
            collapse_fraction: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.systems.is_empty() || self.n_pairs == 0 || self.csv_stride == 0 {
            return Err(Error::InvalidSpec("E1 needs systems, pairs and a positive csv_stride".into()));
        }
        let mut labels: Vec<&str> = self.systems.iter().map(|s| s.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSpec("E1 system labels must be unique".into()));
        }
        for s in self.systems.iter() {
            s.system.validate()?;
            s.system.steps_for(self.tau)?;
        }
        for r in self.schedules() {
            r.validate()?;
            if r.tau != self.tau {
                return Err(Error::InvalidSpec("every schedule must use the E1 tau".into()));
            }
        }
        self.divergence(self.seed, self.n_pairs).n_steps()?;
        Ok(())
    }
}

/// Threshold rule: half the 1st percentile of per-pair post-burn-in minima.
fn threshold_from(run: &DivergenceRun, k: usize) -> (f64, f64) {
    let p1 = percentile(&run.pair_minima(k), 1.0).unwrap_or(f64::NAN);
    (0.5 * p1, p1)
}

/// Reference-run thresholds: `system label → schedule label → (threshold, p1)`.
pub fn calibrate_e1(cfg: &E1Config) -> Result<BTreeMap<String, BTreeMap<String, (f64, f64)>>> {
    cfg.validate()?;
    let schedules = cfg.schedules();
    let mut out = BTreeMap::new();
    for s in &cfg.systems {
        let run = divergence_run(&s.system, &schedules, &cfg.divergence(cfg.reference_seed, cfg.reference_pairs))?;
        let per: BTreeMap<String, (f64, f64)> = schedules
            .iter()
            .enumerate()
            .map(|(k, r)| (r.label().to_string(), threshold_from(&run, k)))
            .collect();
        out.insert(s.label.clone(), per);
    }
    Ok(out)
}

pub fn run_e1(cfg: &E1Config, out: &mut Output) -> Result<serde_json::Value> {
    let schedules = cfg.schedules();
    let mut entries = Vec::new();
    let mut all_pass = true;
    for s in &cfg.systems {
        let run = divergence_run(&s.system, &schedules, &cfg.divergence(cfg.seed, cfg.n_pairs))?;
        for (k, r) in schedules.iter().enumerate() {
            let mut csv = Vec::new();
            run.write_csv(k, cfg.csv_stride, &mut csv)?;
            let body = String::from_utf8(csv).expect("csv is utf-8");
            out.write(&format!("e1_{}_{}.csv", s.label, r.label()), &body)?;
            let threshold = s.thresholds.get(r.label()).copied();
            let rep = run.report(k, threshold);
            all_pass &= rep.status.is_pass();
            let minima = run.pair_minima(k);
            entries.push(serde_json::json!({
                "system": s.label,
                "schedule": r.label(),
                "min_ratio": minima.iter().copied().fold(f64::INFINITY, f64::min),
                "p1_ratio": percentile(&minima, 1.0),
                "threshold": threshold,
                "collapsed": run.collapsed(k),
                "n_pairs": minima.len(),
                "n_skipped": run.skipped.len(),
                "report": rep,
            }));
        }
    }
    Ok(serde_json::json!({ "all_pass": all_pass, "entries": entries }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_cfg() -> E1Config {
        E1Config {
            seed: 3,
            output_dir: PathBuf::from("unused"),
            workers: 0,
            tau: 1.0,
            horizon: 30.0,
            n_pairs: 1,
            b_min: 0.5,
            burn_in: None,
            sample_lo: -10.0,
            sample_hi: 10.0,
            schedules: vec![],
            systems: vec![E1System {
                label: "identity".into(),
                system: SystemSpec::identity_map(2),
                thresholds: BTreeMap::new(),
            }],
            csv_stride: 1,
            reference_seed: 4,
            reference_pairs: 20,
        }
    }

    #[test]
    fn identity_series_are_constant() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Output::create(dir.path()).unwrap();
        let summary = run_e1(&identity_cfg(), &mut out).unwrap();
        assert_eq!(out.files.len(), 5);
        let body = std::fs::read_to_string(dir.path().join("e1_identity_cubic.csv")).unwrap();
        let ratios: Vec<&str> = body.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
        assert_eq!(ratios.len(), 31);
        let first: f64 = ratios[0].parse().unwrap();
        assert!(ratios.iter().all(|r| (r.parse::<f64>().unwrap() - first).abs() <= 1e-12 * first));
        // no thresholds configured
        assert_eq!(summary["all_pass"], serde_json::json!(false));
    }

    #[test]
    fn calibration_halves_the_reference_percentile() {
        let cfg = identity_cfg();
        let cal = calibrate_e1(&cfg).unwrap();
        let (thr, p1) = cal["identity"]["constant"];
        assert!((thr - 0.5 * p1).abs() < 1e-15 && p1 > 0.0);
    }
}
