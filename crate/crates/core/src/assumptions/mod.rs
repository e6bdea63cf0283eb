//! Numerical checks of the standing hypotheses, each producing an
//! [`AssumptionReport`].

mod attractor;
mod divergence;
mod expansivity;
mod verify;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use attractor::{attractor_mass, attractor_mass_of, hitting_time, AttractorClouds, HittingTime};
pub use divergence::{divergence_run, verify_divergence, DivergenceConfig, DivergenceRun, RatioTrajectory};
pub use expansivity::{expansivity_diagnostic, pair_separation, ExpansivityConfig, PairSeparation};
pub use verify::VerifyConfig;

use crate::dynamics::{check_trapping, estimate_lipschitz, probes::MIN_PAIR_DISTANCE, SystemSpec};
use crate::error::{Error, Result};
use crate::metrics::RhoSchedule;
use crate::observation::{observability_ratio, ObservationSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    pub fn is_pass(self) -> bool {
        self == Status::Pass
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Stats {
    /// `None` for an empty slice. NaNs sort last.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Some(Self {
            min: v[0],
            median,
            max: v[n - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub id: String,
    pub status: Status,
    pub stats: Option<Stats>,
    pub n_samples: usize,
    pub n_skipped: usize,
    pub config_hash: String,
    #[serde(default)]
    pub details: BTreeMap<String, serde_json::Value>,
}

impl AssumptionReport {
    fn new(id: &str, config_hash: String) -> Self {
        Self {
            id: id.to_string(),
            status: Status::Inconclusive,
            stats: None,
            n_samples: 0,
            n_skipped: 0,
            config_hash,
            details: BTreeMap::new(),
        }
    }

    pub fn with_detail(mut self, key: &str, value: impl Serialize) -> Self {
        self.details
            .insert(key.to_string(), serde_json::to_value(value).expect("detail serialises"));
        self
    }
}

/// Short SHA-256 digest of any serialisable configuration.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("config serialises");
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

/// Trapping-region check: passes when no sampled trajectory leaves.
pub fn verify_trapping(
    sspec: &SystemSpec,
    horizon: f64,
    check_dt: f64,
    n_samples: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    let rep = check_trapping(sspec, horizon, check_dt, n_samples, seed)?;
    let mut out = AssumptionReport::new(
        "trapping",
        config_hash(&(sspec, horizon, check_dt, n_samples, seed)),
    );
    out.status = if rep.violations == 0 { Status::Pass } else { Status::Fail };
    out.n_samples = n_samples;
    out.stats = Stats::of(&[rep.max_excursion]);
    Ok(out
        .with_detail("violations", rep.violations)
        .with_detail("max_excursion", rep.max_excursion))
}

/// Lipschitz check: passes when the empirical constant is finite and, if
/// given, at most `c_max`.
pub fn verify_lipschitz(
    sspec: &SystemSpec,
    tau: f64,
    n_pairs: usize,
    seed: u64,
    c_max: Option<f64>,
) -> Result<AssumptionReport> {
    let c = estimate_lipschitz(sspec, tau, n_pairs, seed)?;
    let mut out = AssumptionReport::new("lipschitz", config_hash(&(sspec, tau, n_pairs, seed, c_max)));
    out.n_samples = n_pairs;
    out.stats = Stats::of(&[c]);
    out.status = if c.is_finite() && c_max.is_none_or(|m| c <= m) {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(out.with_detail("c_est", c))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityConfig {
    pub n_pairs: usize,
    pub t_grid: Vec<f64>,
    pub tau: f64,
    pub seed: u64,
    /// Pass requires every ratio `>= 1 − tol`.
    #[serde(default = "default_obs_tol")]
    pub tol: f64,
}

fn default_obs_tol() -> f64 {
    1e-10
}

/// Observability ratios over pairs sampled in the trapping region and the
/// start times `t_grid`. `R_est` in the details is the largest ratio.
pub fn verify_observability(
    ospec: &ObservationSpec,
    sspec: &SystemSpec,
    rho: &RhoSchedule,
    cfg: &ObservabilityConfig,
) -> Result<AssumptionReport> {
    ospec.validate(sspec)?;
    let region = sspec.region()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pairs = Vec::with_capacity(cfg.n_pairs);
    while pairs.len() < cfg.n_pairs {
        let x = region.sample(&mut rng, sspec.dimension);
        let y = region.sample(&mut rng, sspec.dimension);
        if sspec.distance(&x, &y) >= MIN_PAIR_DISTANCE {
            pairs.push((x, y));
        }
    }
    let ratios: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|(x, y)| {
            cfg.t_grid
                .iter()
                .map(|t| observability_ratio(ospec, sspec, x, y, *t, cfg.tau, rho).map(|r| r.lower))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let flat: Vec<f64> = ratios.into_iter().flatten().collect();
    if flat.is_empty() {
        return Err(Error::InvalidInput("observability check needs pairs and times".into()));
    }
    let stats = Stats::of(&flat).expect("non-empty");
    let mut out = AssumptionReport::new("observability", config_hash(&(ospec, sspec, rho, cfg)));
    out.n_samples = flat.len();
    out.stats = Some(stats);
    out.status = if stats.min >= 1.0 - cfg.tol && stats.max.is_finite() {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(out.with_detail("r_est", stats.max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Region;
    use crate::metrics::RhoFamily;
    use crate::observation::Gain;

    #[test]
    fn stats_of_values() {
        let s = Stats::of(&[3.0, 1.0, 2.0, 10.0]).unwrap();
        assert_eq!((s.min, s.median, s.max), (1.0, 2.5, 10.0));
        assert!(Stats::of(&[]).is_none());
    }

    #[test]
    fn identity_observability_is_exactly_one() {
        let sys = SystemSpec::identity_map(2).with_region(Region::Box {
            lo: vec![-1.0; 2],
            hi: vec![1.0; 2],
        });
        let o = ObservationSpec::identity(2, Gain::Constant { b: 1.0 }, 1.0);
        // discrete sum over i = k..=k+τ has τ + 1 terms
        let rho = RhoSchedule::new(RhoFamily::Constant { c: 2.0 }, 1.0).unwrap();
        let cfg = ObservabilityConfig {
            n_pairs: 30,
            t_grid: vec![0.0, 3.0, 7.0],
            tau: 1.0,
            seed: 4,
            tol: 1e-10,
        };
        let rep = verify_observability(&o, &sys, &rho, &cfg).unwrap();
        let s = rep.stats.unwrap();
        assert!((s.min - 1.0).abs() < 1e-10 && (s.max - 1.0).abs() < 1e-10);
        assert_eq!(rep.status, Status::Pass);
        assert_eq!(rep.n_samples, 90);
    }

    #[test]
    fn trapping_and_lipschitz_reports() {
        let sys = SystemSpec::lorenz63_classic(0.01).with_region(Region::Ball {
            center: vec![0.0, 0.0, 38.0],
            radius: 40.0,
        });
        let t = verify_trapping(&sys, 5.0, 0.01, 50, 1).unwrap();
        assert_eq!(t.status, Status::Pass);
        let l = verify_lipschitz(&sys, 0.01, 100, 2, None).unwrap();
        assert_eq!(l.status, Status::Pass);
        let l2 = verify_lipschitz(&sys, 0.01, 100, 2, Some(1.0)).unwrap();
        assert_eq!(l2.status, Status::Fail);
        let small = sys.clone().with_region(Region::Ball {
            center: vec![0.0, 0.0, 0.0],
            radius: 1.0,
        });
        assert_eq!(verify_trapping(&small, 5.0, 0.01, 20, 1).unwrap().status, Status::Fail);
    }

    #[test]
    fn report_serialises() {
        let r = AssumptionReport::new("x", config_hash(&1)).with_detail("k", 2.5);
        let text = serde_json::to_string(&r).unwrap();
        let back: AssumptionReport = serde_json::from_str(&text).unwrap();
        assert_eq!(r, back);
    }
}
