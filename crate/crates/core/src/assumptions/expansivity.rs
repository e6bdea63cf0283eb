//! Separation times of point pairs under a discrete map.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{config_hash, AssumptionReport, Stats, Status};
use crate::dynamics::{inverse_step, Propagator, StateVector, SystemSpec};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansivityConfig {
    /// Pairs start with `delta <= d(x, y) <= eps`.
    pub delta: f64,
    /// Separation means `d(Tⁿx, Tⁿy) > eps` for some `n ≠ 0`.
    pub eps: f64,
    pub j_max: u32,
    pub n_pairs: usize,
    pub seed: u64,
    /// Also search `n < 0` (invertible maps only).
    #[serde(default = "yes")]
    pub bidirectional: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSeparation {
    pub x: StateVector,
    pub y: StateVector,
    /// Smallest `n` in `1..=J` with forward separation.
    pub forward: Option<u32>,
    /// Smallest `n` in `1..=J` with separation under `T^{−n}`.
    pub backward: Option<u32>,
}

impl PairSeparation {
    /// Smallest `|n|` over the searched directions.
    pub fn time(&self) -> Option<u32> {
        match (self.forward, self.backward) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

pub fn pair_separation(
    sspec: &SystemSpec,
    x: &StateVector,
    y: &StateVector,
    eps: f64,
    j_max: u32,
    bidirectional: bool,
) -> Result<PairSeparation> {
    if !sspec.is_discrete() {
        return Err(Error::InvalidInput("expansivity needs a discrete map".into()));
    }
    let mut px = Propagator::new(sspec, x)?;
    let mut py = Propagator::new(sspec, y)?;
    let mut forward = None;
    for n in 1..=j_max {
        px.step()?;
        py.step()?;
        if sspec.distance(px.state(), py.state()) > eps {
            forward = Some(n);
            break;
        }
    }
    let mut backward = None;
    if bidirectional {
        let (mut bx, mut by) = (x.clone(), y.clone());
        for n in 1..=j_max {
            bx = inverse_step(sspec, &bx)?;
            by = inverse_step(sspec, &by)?;
            if sspec.distance(&bx, &by) > eps {
                backward = Some(n);
                break;
            }
        }
    }
    Ok(PairSeparation {
        x: x.clone(),
        y: y.clone(),
        forward,
        backward,
    })
}

/// Pass when every sampled pair separates within `j_max`. Pairs with no
/// forward separation are counted as suspected members of the exceptional set.
pub fn expansivity_diagnostic(sspec: &SystemSpec, cfg: &ExpansivityConfig) -> Result<(AssumptionReport, Vec<PairSeparation>)> {
    if !(cfg.delta > 0.0 && cfg.delta < cfg.eps) {
        return Err(Error::InvalidSpec("expansivity needs 0 < delta < eps".into()));
    }
    let region = sspec.region()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pairs = Vec::with_capacity(cfg.n_pairs);
    let mut attempts = 0usize;
    while pairs.len() < cfg.n_pairs {
        attempts += 1;
        if attempts > 10_000 * cfg.n_pairs.max(1) {
            return Err(Error::InvalidSpec(format!("no pairs with {} <= d <= {}", cfg.delta, cfg.eps)));
        }
        let x = region.sample(&mut rng, sspec.dimension);
        let y = region.sample(&mut rng, sspec.dimension);
        let d = sspec.distance(&x, &y);
        if d >= cfg.delta && d <= cfg.eps {
            pairs.push((x, y));
        }
    }
    let seps = pairs
        .par_iter()
        .map(|(x, y)| pair_separation(sspec, x, y, cfg.eps, cfg.j_max, cfg.bidirectional))
        .collect::<Result<Vec<_>>>()?;
    Ok((summarise(sspec, cfg, &seps), seps))
}

/// Report over precomputed separations.
pub(crate) fn summarise(sspec: &SystemSpec, cfg: &ExpansivityConfig, seps: &[PairSeparation]) -> AssumptionReport {
    let times: Vec<f64> = seps.iter().filter_map(PairSeparation::time).map(f64::from).collect();
    let unseparated = seps.len() - times.len();
    let suspected_v = seps.iter().filter(|s| s.forward.is_none()).count();
    let mut rep = AssumptionReport::new("expansivity", config_hash(&(sspec, cfg)));
    rep.n_samples = seps.len();
    rep.stats = Stats::of(&times);
    rep.status = if seps.is_empty() {
        Status::Inconclusive
    } else if unseparated == 0 {
        Status::Pass
    } else {
        Status::Fail
    };
    rep.with_detail("empirical_j", times.iter().copied().fold(0.0, f64::max))
        .with_detail("unseparated", unseparated)
        .with_detail("suspected_v", suspected_v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Region;

    fn cfg() -> ExpansivityConfig {
        ExpansivityConfig {
            delta: 0.1,
            eps: 0.25,
            j_max: 20,
            n_pairs: 200,
            seed: 6,
            bidirectional: true,
        }
    }

    /// Torus distance of `Aⁿ (x − y)` with the integer power computed exactly.
    fn oracle_forward(x: &[f64], y: &[f64], eps: f64, j_max: u32) -> Option<u32> {
        let mut m = [[1i64, 0], [0, 1]];
        for n in 1..=j_max {
            m = [
                [2 * m[0][0] + m[1][0], 2 * m[0][1] + m[1][1]],
                [m[0][0] + m[1][0], m[0][1] + m[1][1]],
            ];
            let d = [x[0] - y[0], x[1] - y[1]];
            let v: Vec<f64> = (0..2)
                .map(|i| {
                    let w = m[i][0] as f64 * d[0] + m[i][1] as f64 * d[1];
                    w - w.round()
                })
                .collect();
            if (v[0] * v[0] + v[1] * v[1]).sqrt() > eps {
                return Some(n);
            }
        }
        None
    }

    #[test]
    fn cat_map_pairs_separate_as_the_linear_oracle_predicts() {
        let sys = SystemSpec::cat_map();
        let (rep, seps) = expansivity_diagnostic(&sys, &cfg()).unwrap();
        assert_eq!(rep.status, Status::Pass);
        for s in &seps {
            assert_eq!(s.forward, oracle_forward(&s.x, &s.y, 0.25, 20));
        }
        assert!(rep.stats.unwrap().max <= 5.0);
    }

    #[test]
    fn identity_map_never_separates() {
        let sys = SystemSpec::identity_map(2).with_region(Region::Torus);
        let (rep, _) = expansivity_diagnostic(&sys, &cfg()).unwrap();
        assert_eq!(rep.status, Status::Fail);
        assert_eq!(rep.details["suspected_v"], serde_json::json!(200));
    }

    #[test]
    fn stable_direction_pair_is_flagged() {
        let sys = SystemSpec::cat_map();
        // stable eigenvector of [[2,1],[1,1]] for eigenvalue (3 − √5)/2
        let v = [1.0, -(1.0 + 5f64.sqrt()) / 2.0];
        let nv = (v[0] * v[0] + v[1] * v[1]).sqrt();
        let x = StateVector::from([0.3, 0.4]);
        let y = StateVector::from([0.3 + 0.2 * v[0] / nv, (0.4 + 0.2 * v[1] / nv).rem_euclid(1.0)]);
        let s = pair_separation(&sys, &x, &y, 0.25, 20, true).unwrap();
        assert_eq!(s.forward, None);
        assert!(s.backward.is_some());
        let mut c = cfg();
        c.bidirectional = false;
        let rep = summarise(&sys, &c, &[pair_separation(&sys, &x, &y, 0.25, 20, false).unwrap()]);
        assert_eq!(rep.status, Status::Fail);
        assert_eq!(rep.details["suspected_v"], serde_json::json!(1));
    }
}
