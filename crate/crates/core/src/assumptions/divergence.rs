//! Orbit-divergence evidence: `D_N(x, y)² / Σ_{i≤N} ρ_{iτ}` along sampled pairs.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{config_hash, AssumptionReport, Stats, Status};
use crate::dynamics::{StateVector, SystemSpec};
use crate::error::{Error, Result};
use crate::metrics::{orbit_distances, RhoSchedule};

/// Draw attempts per accepted pair before giving up on `b_min`.
const MAX_ATTEMPTS_PER_PAIR: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceConfig {
    pub n_pairs: usize,
    /// Final time `T`.
    pub horizon: f64,
    pub tau: f64,
    /// Smallest initial separation accepted.
    pub b_min: f64,
    pub seed: u64,
    /// Ratios at `t <= burn_in` are excluded from the minimum; default `10τ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    /// Pass threshold `L²_min`; without it the report is inconclusive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2_min: Option<f64>,
    /// Pairs are drawn uniformly from `[sample_lo, sample_hi]^p`.
    #[serde(default = "default_lo")]
    pub sample_lo: f64,
    #[serde(default = "default_hi")]
    pub sample_hi: f64,
    /// A trajectory that decreases monotonically after burn-in to below
    /// this fraction of its burn-in value counts as collapsed.
    #[serde(default = "default_collapse")]
    pub collapse_fraction: f64,
}

fn default_lo() -> f64 {
    -10.0
}

fn default_hi() -> f64 {
    10.0
}

fn default_collapse() -> f64 {
    1e-3
}

impl DivergenceConfig {
    pub fn new(n_pairs: usize, horizon: f64, tau: f64, b_min: f64, seed: u64) -> Self {
        Self {
            n_pairs,
            horizon,
            tau,
            b_min,
            seed,
            burn_in: None,
            l2_min: None,
            sample_lo: default_lo(),
            sample_hi: default_hi(),
            collapse_fraction: default_collapse(),
        }
    }

    pub fn burn_in(&self) -> f64 {
        self.burn_in.unwrap_or(10.0 * self.tau)
    }

    pub fn n_steps(&self) -> Result<usize> {
        if !(self.tau > 0.0) || !SystemSpec::divides(self.tau, self.horizon) {
            return Err(Error::InvalidSpec(format!(
                "horizon {} is not a multiple of tau {}",
                self.horizon, self.tau
            )));
        }
        Ok((self.horizon / self.tau).round() as usize)
    }
}

/// `ratios[N]` for `N = 0..=T/τ`, time `Nτ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioTrajectory {
    pub pair_id: usize,
    pub ratios: Vec<f64>,
}

impl RatioTrajectory {
    fn tail(&self, start: usize) -> &[f64] {
        &self.ratios[start.min(self.ratios.len())..]
    }

    /// Minimum over `N >= start`.
    pub fn min_from(&self, start: usize) -> f64 {
        self.tail(start).iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Non-increasing from `start` and ending below `fraction` of the value there.
    pub fn collapses_from(&self, start: usize, fraction: f64) -> bool {
        let t = self.tail(start);
        match (t.first(), t.last()) {
            (Some(a), Some(b)) => t.windows(2).all(|w| w[1] <= w[0]) && *b < fraction * a,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRun {
    pub config: DivergenceConfig,
    pub schedules: Vec<RhoSchedule>,
    /// Initial pairs in draw order.
    pub pairs: Vec<(StateVector, StateVector)>,
    /// Indices of pairs dropped after a divergence.
    pub skipped: Vec<usize>,
    /// One trajectory set per schedule, surviving pairs in order.
    pub trajectories: Vec<Vec<RatioTrajectory>>,
    pub system_hash: String,
}

impl DivergenceRun {
    /// First index with `Nτ > burn_in`.
    pub fn burn_in_index(&self) -> usize {
        let b = self.config.burn_in() / self.config.tau;
        (b + 1e-9).floor() as usize + 1
    }

    /// Per-pair minima past burn-in for schedule `k`.
    pub fn pair_minima(&self, k: usize) -> Vec<f64> {
        let s = self.burn_in_index();
        self.trajectories[k].iter().map(|tr| tr.min_from(s)).collect()
    }

    pub fn collapsed(&self, k: usize) -> usize {
        let s = self.burn_in_index();
        self.trajectories[k]
            .iter()
            .filter(|tr| tr.collapses_from(s, self.config.collapse_fraction))
            .count()
    }

    pub fn report(&self, k: usize, l2_min: Option<f64>) -> AssumptionReport {
        let minima = self.pair_minima(k);
        let stats = Stats::of(&minima);
        let collapsed = self.collapsed(k);
        let mut rep = AssumptionReport::new(
            "divergence",
            config_hash(&(&self.system_hash, &self.config, &self.schedules[k], l2_min)),
        );
        rep.n_samples = minima.len();
        rep.n_skipped = self.skipped.len();
        rep.stats = stats;
        rep.status = match (stats, l2_min) {
            (None, _) | (_, None) => Status::Inconclusive,
            (Some(s), Some(l2)) if s.min >= l2 && collapsed == 0 => Status::Pass,
            _ => Status::Fail,
        };
        rep.with_detail("schedule", self.schedules[k].label())
            .with_detail("collapsed", collapsed)
            .with_detail("burn_in", self.config.burn_in())
            .with_detail("l2_min", l2_min)
    }

    /// Rows `pair_id,t,ratio` for schedule `k`, every `stride`-th `N` plus the last.
    pub fn write_csv<W: Write>(&self, k: usize, stride: usize, mut w: W) -> Result<()> {
        let stride = stride.max(1);
        writeln!(w, "pair_id,t,ratio")?;
        for tr in &self.trajectories[k] {
            let last = tr.ratios.len() - 1;
            for (n, r) in tr.ratios.iter().enumerate() {
                if n % stride == 0 || n == last {
                    writeln!(w, "{},{},{}", tr.pair_id, n as f64 * self.config.tau, r)?;
                }
            }
        }
        Ok(())
    }
}

fn draw_pairs(sspec: &SystemSpec, cfg: &DivergenceConfig) -> Result<Vec<(StateVector, StateVector)>> {
    if !(cfg.sample_lo < cfg.sample_hi) || !(cfg.b_min >= 0.0) {
        return Err(Error::InvalidSpec("bad divergence sampling box or b_min".into()));
    }
    let p = sspec.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draw = |rng: &mut ChaCha8Rng| -> StateVector {
        let v: Vec<f64> = (0..p)
            .map(|_| cfg.sample_lo + (cfg.sample_hi - cfg.sample_lo) * rng.random::<f64>())
            .collect();
        if sspec.is_discrete() && sspec.metric() == crate::dynamics::Metric::Torus {
            v.into_iter().map(|x| x.rem_euclid(1.0)).collect::<Vec<_>>().into()
        } else {
            v.into()
        }
    };
    let mut pairs = Vec::with_capacity(cfg.n_pairs);
    let mut attempts = 0;
    while pairs.len() < cfg.n_pairs {
        attempts += 1;
        if attempts > MAX_ATTEMPTS_PER_PAIR * cfg.n_pairs.max(1) {
            return Err(Error::InvalidSpec(format!(
                "no pairs with separation >= {} in the sampling box",
                cfg.b_min
            )));
        }
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        let d = sspec.distance(&x, &y);
        if d >= cfg.b_min && d >= crate::dynamics::probes::MIN_PAIR_DISTANCE {
            pairs.push((x, y));
        }
    }
    Ok(pairs)
}

/// Ratio trajectories for every schedule, sharing one orbit computation per pair.
/// All schedules must use `cfg.tau`.
pub fn divergence_run(sspec: &SystemSpec, schedules: &[RhoSchedule], cfg: &DivergenceConfig) -> Result<DivergenceRun> {
    sspec.validate()?;
    for s in schedules {
        s.validate()?;
        if s.tau != cfg.tau {
            return Err(Error::InvalidSpec(format!(
                "schedule tau {} differs from divergence tau {}",
                s.tau, cfg.tau
            )));
        }
    }
    let n = cfg.n_steps()?;
    let pairs = draw_pairs(sspec, cfg)?;
    let dists: Vec<Result<Option<Vec<f64>>>> = pairs
        .par_iter()
        .map(|(x, y)| match orbit_distances(x, y, n + 1, cfg.tau, sspec) {
            Ok(o) => Ok(Some(o.distances)),
            Err(Error::Diverged { t, .. }) => {
                log::warn!("pair diverged at t = {t}; skipped");
                Ok(None)
            }
            Err(e) => Err(e),
        })
        .collect();
    let mut skipped = Vec::new();
    let mut kept = Vec::new();
    for (i, d) in dists.into_iter().enumerate() {
        match d? {
            Some(v) => kept.push((i, v)),
            None => skipped.push(i),
        }
    }
    let trajectories = schedules
        .iter()
        .map(|rho| {
            let weights: Vec<f64> = (0..=n).map(|i| rho.value(i as f64 * cfg.tau)).collect();
            kept.iter()
                .map(|(id, d)| {
                    let (mut num, mut den) = (0.0, 0.0);
                    let ratios = d
                        .iter()
                        .zip(&weights)
                        .map(|(di, w)| {
                            num += w * di * di;
                            den += w;
                            num / den
                        })
                        .collect();
                    RatioTrajectory { pair_id: *id, ratios }
                })
                .collect()
        })
        .collect();
    Ok(DivergenceRun {
        config: cfg.clone(),
        schedules: schedules.to_vec(),
        pairs,
        skipped,
        trajectories,
        system_hash: config_hash(sspec),
    })
}

/// Single-schedule check: pass when every post-burn-in ratio is at least
/// `cfg.l2_min` and no trajectory collapses.
pub fn verify_divergence(sspec: &SystemSpec, rho: &RhoSchedule, cfg: &DivergenceConfig) -> Result<AssumptionReport> {
    let run = divergence_run(sspec, std::slice::from_ref(rho), cfg)?;
    Ok(run.report(0, cfg.l2_min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{weighted_orbit_distance, RhoFamily};

    #[test]
    fn identity_map_ratio_is_the_squared_separation() {
        let sys = SystemSpec::identity_map(2);
        let rho = RhoSchedule::new(RhoFamily::Affine { c: 1000.0 }, 1.0).unwrap();
        let mut cfg = DivergenceConfig::new(5, 50.0, 1.0, 0.5, 3);
        cfg.l2_min = Some(0.2);
        let run = divergence_run(&sys, std::slice::from_ref(&rho), &cfg).unwrap();
        for (tr, (x, y)) in run.trajectories[0].iter().zip(&run.pairs) {
            let b2 = sys.distance(x, y).powi(2);
            assert!(tr.ratios.iter().all(|r| (r - b2).abs() <= 1e-12 * b2));
        }
        assert_eq!(run.report(0, cfg.l2_min).status, Status::Pass);
    }

    #[test]
    fn contracting_map_fails() {
        let sys = SystemSpec::scaling_map(3, 0.5);
        let rho = RhoSchedule::new(RhoFamily::Constant { c: 1000.0 }, 1.0).unwrap();
        // the ratio decays like 1/N, so a long horizon is needed to see it
        let mut cfg = DivergenceConfig::new(10, 100_000.0, 1.0, 1.0, 5);
        cfg.l2_min = Some(1e-2);
        let rep = verify_divergence(&sys, &rho, &cfg).unwrap();
        assert_eq!(rep.status, Status::Fail);
        assert!(rep.stats.unwrap().max < 1e-2);
        assert_eq!(rep.details["collapsed"], serde_json::json!(10));
    }

    #[test]
    fn ratio_matches_weighted_orbit_distance() {
        let sys = SystemSpec::lorenz63_classic(0.01);
        let rho = RhoSchedule::new(RhoFamily::Quadratic { c: 1000.0 }, 0.01).unwrap();
        let cfg = DivergenceConfig::new(3, 0.5, 0.01, 1.0, 8);
        let run = divergence_run(&sys, std::slice::from_ref(&rho), &cfg).unwrap();
        for (tr, (x, y)) in run.trajectories[0].iter().zip(&run.pairs) {
            for n in [0usize, 7, 50] {
                let d = weighted_orbit_distance(x, y, n, &rho, &sys).unwrap();
                let oracle = d * d / rho.partial_sum(n as u64);
                assert!((tr.ratios[n] - oracle).abs() <= 1e-10 * oracle, "{n}");
            }
        }
    }

    #[test]
    fn swapping_the_pair_changes_nothing() {
        let sys = SystemSpec::lorenz63_classic(0.01);
        let rho = RhoSchedule::new(RhoFamily::Log { c: 1000.0 }, 0.01).unwrap();
        let cfg = DivergenceConfig::new(4, 1.0, 0.01, 1.0, 9);
        let run = divergence_run(&sys, std::slice::from_ref(&rho), &cfg).unwrap();
        for (tr, (x, y)) in run.trajectories[0].iter().zip(&run.pairs) {
            let o = orbit_distances(y, x, 101, 0.01, &sys).unwrap();
            let prof = o.weighted_sq_profile(&rho);
            let mut den = 0.0;
            for (n, r) in tr.ratios.iter().enumerate() {
                den += rho.value(n as f64 * 0.01);
                assert!((prof[n] / den - r).abs() <= 1e-12 * r);
            }
        }
    }

    #[test]
    fn burn_in_and_csv() {
        let sys = SystemSpec::identity_map(1);
        let rho = RhoSchedule::new(RhoFamily::Constant { c: 1.0 }, 1.0).unwrap();
        let cfg = DivergenceConfig::new(2, 20.0, 1.0, 0.1, 1);
        let run = divergence_run(&sys, std::slice::from_ref(&rho), &cfg).unwrap();
        assert_eq!(run.burn_in_index(), 11);
        let mut buf = Vec::new();
        run.write_csv(0, 5, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        // N = 0, 5, 10, 15, 20 for each of two pairs
        assert_eq!(text.lines().count(), 1 + 2 * 5);
        assert!(text.starts_with("pair_id,t,ratio\n0,0,"));
    }

    #[test]
    fn tau_mismatch_is_rejected() {
        let sys = SystemSpec::identity_map(1);
        let rho = RhoSchedule::new(RhoFamily::Constant { c: 1.0 }, 2.0).unwrap();
        let cfg = DivergenceConfig::new(2, 20.0, 1.0, 0.1, 1);
        assert!(divergence_run(&sys, &[rho], &cfg).is_err());
    }
}
