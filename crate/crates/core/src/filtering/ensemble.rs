//! Self-normalised weighted particle ensembles.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{flow, Metric, StateVector, SystemSpec};
use crate::error::{Error, Result};

/// Log-weight spread beyond which `exp` underflows for all but the top particle.
pub const DEGENERATE_SPREAD: f64 = 700.0;
/// Effective sample size below which a wide spread counts as degenerate.
pub const DEGENERATE_ESS: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorLabel {
    Mu,
    Nu,
}

/// Particles drawn at time 0 with unnormalised log weights `log Z_t(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedEnsemble {
    pub particles: Vec<StateVector>,
    pub log_weights: Vec<f64>,
    /// Observation time the weights condition on.
    pub t_current: f64,
    pub prior_label: PriorLabel,
    pub metric: Metric,
}

impl WeightedEnsemble {
    pub fn new(
        particles: Vec<StateVector>,
        log_weights: Vec<f64>,
        t_current: f64,
        prior_label: PriorLabel,
        metric: Metric,
    ) -> Result<Self> {
        if particles.is_empty() || particles.len() != log_weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} particles with {} weights",
                particles.len(),
                log_weights.len()
            )));
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::InvalidInput("log weights must be finite or -inf".into()));
        }
        Ok(Self {
            particles,
            log_weights,
            t_current,
            prior_label,
            metric,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Weights `exp(l_j − max) / Σ exp(l_k − max)`.
    pub fn normalized_weights(&self) -> Vec<f64> {
        normalize_log_weights(&self.log_weights)
    }

    /// `1 / Σ w_j²`.
    pub fn ess(&self) -> f64 {
        ess(&self.normalized_weights())
    }

    /// Largest minus smallest finite log weight.
    pub fn spread(&self) -> f64 {
        spread(&self.log_weights)
    }

    pub fn check_degeneracy(&self) -> Result<()> {
        check_degeneracy(&self.log_weights)
    }

    /// Adding a constant leaves the normalised weights unchanged.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            log_weights: self.log_weights.iter().map(|l| l + c).collect(),
            ..self.clone()
        }
    }

    /// Particles pushed forward to time `t`.
    pub fn pushforward(&self, t: f64, sspec: &SystemSpec) -> Result<Vec<StateVector>> {
        self.particles.par_iter().map(|x| flow(sspec, x, t)).collect()
    }

    /// `Σ w_j g(φ_t x_j)`: the smoother at `t = 0`, the filter at `t = t_current`.
    pub fn expectation<G>(&self, g: G, t: f64, sspec: &SystemSpec) -> Result<f64>
    where
        G: Fn(&[f64]) -> f64,
    {
        let states = if t == 0.0 {
            self.particles.clone()
        } else {
            self.pushforward(t, sspec)?
        };
        Ok(weighted_mean(&self.normalized_weights(), &states, g))
    }

    /// Filter expectation `π_t(g)` at the conditioning time.
    pub fn filter_expectation<G>(&self, g: G, sspec: &SystemSpec) -> Result<f64>
    where
        G: Fn(&[f64]) -> f64,
    {
        self.expectation(g, self.t_current, sspec)
    }

    /// CSV dump: `particle,logw,w,x_1..x_p`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let p = self.particles[0].dim();
        let mut header = vec!["particle".to_string(), "logw".into(), "w".into()];
        header.extend((1..=p).map(|j| format!("x_{j}")));
        writeln!(w, "{}", header.join(","))?;
        for (j, (x, (l, wt))) in self
            .particles
            .iter()
            .zip(self.log_weights.iter().zip(self.normalized_weights()))
            .enumerate()
        {
            let coords: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{j},{l},{wt},{}", coords.join(","))?;
        }
        Ok(())
    }
}

/// `Σ w_j g(x_j)`, summed left to right.
pub fn weighted_mean<G>(weights: &[f64], states: &[StateVector], g: G) -> f64
where
    G: Fn(&[f64]) -> f64,
{
    weights.iter().zip(states).map(|(w, x)| if *w == 0.0 { 0.0 } else { w * g(x) }).sum()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn normalize_log_weights(log_w: &[f64]) -> Vec<f64> {
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        let u = 1.0 / log_w.len() as f64;
        return vec![u; log_w.len()];
    }
    let raw: Vec<f64> = log_w.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / s).collect()
}

pub fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

pub fn spread(log_w: &[f64]) -> f64 {
    let finite = log_w.iter().copied().filter(|l| l.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), l| (a.min(l), b.max(l)));
    if hi < lo {
        0.0
    } else {
        hi - lo
    }
}

/// Fails when the spread exceeds [`DEGENERATE_SPREAD`] and the ESS is below
/// [`DEGENERATE_ESS`].
pub fn check_degeneracy(log_w: &[f64]) -> Result<()> {
    let s = spread(log_w);
    let e = ess(&normalize_log_weights(log_w));
    if log_w.len() > 1 && s > DEGENERATE_SPREAD && e < DEGENERATE_ESS {
        return Err(Error::AllWeightsDegenerate { spread: s, ess: e });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ens(log_w: Vec<f64>) -> WeightedEnsemble {
        let particles = (0..log_w.len()).map(|i| StateVector::from(vec![i as f64])).collect();
        WeightedEnsemble::new(particles, log_w, 0.0, PriorLabel::Mu, Metric::Euclidean).unwrap()
    }

    #[test]
    fn uniform_weights() {
        let e = ens(vec![0.0; 4]);
        assert_eq!(e.normalized_weights(), vec![0.25; 4]);
        assert!((e.ess() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn huge_log_weights_do_not_overflow() {
        let e = ens(vec![1e6, 1e6 + 2f64.ln()]);
        let w = e.normalized_weights();
        // 1e6 + ln 2 is only representable to ~1e-10
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-9);
        assert!((w[1] - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn degeneracy_detection() {
        assert!(matches!(
            ens(vec![0.0, -800.0, -900.0]).check_degeneracy(),
            Err(Error::AllWeightsDegenerate { .. })
        ));
        // wide spread but two equal leaders keeps ESS at 2
        assert!(ens(vec![0.0, 0.0, -800.0]).check_degeneracy().is_ok());
        assert!(ens(vec![0.0, -10.0]).check_degeneracy().is_ok());
    }

    #[test]
    fn expectation_of_coordinate() {
        let e = ens(vec![0.0, 0.0, 2f64.ln()]);
        let sys = SystemSpec::identity_map(1);
        let m = e.expectation(|x| x[0], 0.0, &sys).unwrap();
        assert!((m - (0.0 + 1.0 + 2.0 * 2.0) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let e = ens(vec![0.0, 1.0]);
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("particle,logw,w,x_1\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(WeightedEnsemble::new(vec![], vec![], 0.0, PriorLabel::Mu, Metric::Euclidean).is_err());
        let p = vec![StateVector::from(vec![0.0])];
        assert!(WeightedEnsemble::new(p, vec![f64::NAN], 0.0, PriorLabel::Mu, Metric::Euclidean).is_err());
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_and_shift_invariant(
            lw in prop::collection::vec(-50.0f64..50.0, 1..40),
            c in -1e3f64..1e3,
        ) {
            let e = ens(lw);
            let w = e.normalized_weights();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|v| *v >= 0.0));
            let ws = e.shifted(c).normalized_weights();
            for (a, b) in w.iter().zip(&ws) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let n = e.len() as f64;
            let es = e.ess();
            prop_assert!(es >= 1.0 - 1e-12 && es <= n + 1e-9);
        }
    }
}
