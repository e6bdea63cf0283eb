//! Observation functions `h(t, x) = K(t) h̄(x)` and simulation of the noisy
//! observation process on a uniform grid.
//!
//! Continuous time uses left-point (Itô) Euler–Maruyama increments
//! `ΔY_i = h(t_i, φ_{t_i} x0) Δ + √Δ ξ_i`, `t_i = iΔ`, `i = 0..n`.
//! Discrete time uses the random-walk form `ΔY_i = h(i, T^i x0) + ξ_i`,
//! `i = 1..=k`. The likelihood evaluates `h` at exactly the recorded times,
//! so simulation and inference share one discretisation.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{trajectory_grid, StateVector, SystemSpec};
use crate::error::{Error, Result};
use crate::metrics::RhoSchedule;
use crate::noise::NoiseSource;

/// Time-dependent gain `K(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gain {
    Constant { b: f64 },
    /// `K(t) = b (t + offset)^q`
    PowerLaw {
        b: f64,
        q: f64,
        #[serde(default)]
        offset: f64,
    },
}

impl Gain {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Gain::Constant { b } => b,
            Gain::PowerLaw { b, q, offset } => b * (t + offset).powf(q),
        }
    }

    /// Same gain with the amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            Gain::Constant { b } => Gain::Constant { b: b * factor },
            Gain::PowerLaw { b, q, offset } => Gain::PowerLaw {
                b: b * factor,
                q,
                offset,
            },
        }
    }
}

/// Time-independent part `h̄` of the observation function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseObservation {
    /// `h̄(x) = G x` with `G` an `n x p` matrix.
    Linear { g: Vec<Vec<f64>> },
    /// Componentwise `x + eps sin x`, bi-Lipschitz for `eps < 1`.
    BiLipschitz { eps: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSpec {
    pub gain: Gain,
    pub base: BaseObservation,
    pub obs_dim: usize,
    /// Observation grid step Δ (1 for discrete-time systems).
    pub grid_dt: f64,
}

impl ObservationSpec {
    /// Full-state linear observation `h(t, x) = K(t) x`.
    pub fn identity(p: usize, gain: Gain, grid_dt: f64) -> Self {
        Self {
            gain,
            base: BaseObservation::Linear {
                g: (0..p)
                    .map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect(),
            },
            obs_dim: p,
            grid_dt,
        }
    }

    pub fn bilipschitz(p: usize, eps: f64, gain: Gain, grid_dt: f64) -> Self {
        Self {
            gain,
            base: BaseObservation::BiLipschitz { eps },
            obs_dim: p,
            grid_dt,
        }
    }

    pub fn validate(&self, sys: &SystemSpec) -> Result<()> {
        if self.obs_dim == 0 {
            return Err(Error::InvalidSpec("obs_dim must be positive".into()));
        }
        match &self.base {
            BaseObservation::Linear { g } => {
                if g.len() != self.obs_dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.obs_dim,
                        got: g.len(),
                    });
                }
                if let Some(row) = g.iter().find(|r| r.len() != sys.dimension) {
                    return Err(Error::DimensionMismatch {
                        expected: sys.dimension,
                        got: row.len(),
                    });
                }
            }
            BaseObservation::BiLipschitz { eps } => {
                if !(0.0..1.0).contains(eps) {
                    return Err(Error::InvalidSpec("bi-Lipschitz eps must lie in [0, 1)".into()));
                }
                if self.obs_dim != sys.dimension {
                    return Err(Error::DimensionMismatch {
                        expected: sys.dimension,
                        got: self.obs_dim,
                    });
                }
            }
        }
        match self.gain {
            Gain::PowerLaw { q, offset, .. } if q < 0.0 || offset < 0.0 => {
                return Err(Error::InvalidSpec("power-law gain needs q >= 0 and offset >= 0".into()));
            }
            _ => {}
        }
        if sys.is_discrete() {
            if self.grid_dt != 1.0 {
                return Err(Error::InvalidSpec("discrete-time observations need grid_dt = 1".into()));
            }
        } else if !SystemSpec::divides(sys.step_size(), self.grid_dt) || !(self.grid_dt > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "grid_dt {} is not a multiple of integrator_dt {}",
                self.grid_dt,
                sys.step_size()
            )));
        }
        Ok(())
    }

    /// `h̄(x)` written into `out`.
    pub fn base_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.base {
            BaseObservation::Linear { g } => {
                for (o, row) in out.iter_mut().zip(g) {
                    if row.len() != x.len() {
                        return Err(Error::DimensionMismatch {
                            expected: x.len(),
                            got: row.len(),
                        });
                    }
                    *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
                }
            }
            BaseObservation::BiLipschitz { eps } => {
                if out.len() != x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: x.len(),
                        got: out.len(),
                    });
                }
                for (o, v) in out.iter_mut().zip(x) {
                    *o = v + eps * v.sin();
                }
            }
        }
        Ok(())
    }

    /// `h(t, x)` written into `out`.
    pub fn h_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.base_into(x, out)?;
        let k = self.gain.value(t);
        out.iter_mut().for_each(|v| *v *= k);
        Ok(())
    }

    pub fn h_eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.obs_dim];
        self.h_into(t, x, &mut out)?;
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    Continuous,
    Discrete,
}

/// Realised observation increments on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationPath {
    pub mode: TimeMode,
    pub dt: f64,
    /// Evaluation time of `h` for each increment.
    pub times: Vec<f64>,
    pub increments: Vec<Vec<f64>>,
    /// Diagnostics only; inference never reads it.
    pub truth_x0: StateVector,
    pub seed: u64,
    pub spec_hash: String,
}

impl ObservationPath {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// Elapsed time covered by the increments.
    pub fn horizon(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    /// `Y` at the grid points, starting with `Y_0 = 0`, summed left to right.
    pub fn cumulative(&self) -> Vec<Vec<f64>> {
        let n = self.increments.first().map_or(0, Vec::len);
        let mut y = vec![0.0; n];
        let mut out = vec![y.clone()];
        for inc in &self.increments {
            for (a, b) in y.iter_mut().zip(inc) {
                *a += b;
            }
            out.push(y.clone());
        }
        out
    }

    /// The first `k` increments.
    pub fn prefix(&self, k: usize) -> Self {
        let k = k.min(self.len());
        Self {
            times: self.times[..k].to_vec(),
            increments: self.increments[..k].to_vec(),
            ..self.clone()
        }
    }

    /// CSV with a `#` metadata line, then `t,dY_1..dY_n`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let truth: Vec<String> = self.truth_x0.iter().map(|v| v.to_string()).collect();
        writeln!(
            w,
            "# seed={},dt={},mode={},spec_hash={},truth_x0={}",
            self.seed,
            self.dt,
            match self.mode {
                TimeMode::Continuous => "continuous",
                TimeMode::Discrete => "discrete",
            },
            self.spec_hash,
            truth.join(";")
        )?;
        let n = self.increments.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("dY_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (t, inc) in self.times.iter().zip(&self.increments) {
            let mut row = vec![t.to_string()];
            row.extend(inc.iter().map(|v| v.to_string()));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let meta = lines
            .next()
            .ok_or_else(|| Error::Parse("empty path file".into()))??;
        let meta = meta
            .strip_prefix("# ")
            .ok_or_else(|| Error::Parse("missing metadata line".into()))?;
        let mut seed = None;
        let mut dt = None;
        let mut mode = None;
        let mut spec_hash = String::new();
        let mut truth = Vec::new();
        for kv in meta.split(',') {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad metadata field '{kv}'")))?;
            match k {
                "seed" => seed = Some(parse_num::<u64>(v)?),
                "dt" => dt = Some(parse_num::<f64>(v)?),
                "mode" => {
                    mode = Some(match v {
                        "continuous" => TimeMode::Continuous,
                        "discrete" => TimeMode::Discrete,
                        _ => return Err(Error::Parse(format!("unknown mode '{v}'"))),
                    })
                }
                "spec_hash" => spec_hash = v.to_string(),
                "truth_x0" => {
                    truth = v
                        .split(';')
                        .filter(|s| !s.is_empty())
                        .map(parse_num::<f64>)
                        .collect::<Result<_>>()?
                }
                _ => {}
            }
        }
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("missing column header".into()))??;
        let ncols = header.split(',').count();
        if !header.starts_with("t,") && header != "t" {
            return Err(Error::Parse("first column must be 't'".into()));
        }
        let mut times = Vec::new();
        let mut increments = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line.split(',').map(parse_num::<f64>).collect::<Result<_>>()?;
            if vals.len() != ncols {
                return Err(Error::Parse(format!("expected {ncols} columns, got {}", vals.len())));
            }
            times.push(vals[0]);
            increments.push(vals[1..].to_vec());
        }
        Ok(Self {
            mode: mode.ok_or_else(|| Error::Parse("missing mode".into()))?,
            dt: dt.ok_or_else(|| Error::Parse("missing dt".into()))?,
            times,
            increments,
            truth_x0: truth.into(),
            seed: seed.ok_or_else(|| Error::Parse("missing seed".into()))?,
            spec_hash,
        })
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("cannot parse number '{s}'")))
}

/// Short SHA-256 digest of the serialised observation and system specs.
pub fn specs_hash(ospec: &ObservationSpec, sspec: &SystemSpec) -> String {
    let text = serde_json::to_string(&(ospec, sspec)).expect("specs serialise");
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(&digest[..8])
}

/// Evaluation times of `h` for a path covering `horizon`.
pub fn grid_times(ospec: &ObservationSpec, sspec: &SystemSpec, horizon: f64) -> Result<Vec<f64>> {
    let dt = ospec.grid_dt;
    if !SystemSpec::divides(dt, horizon) || horizon < 0.0 {
        return Err(Error::InvalidInput(format!(
            "horizon {horizon} is not a multiple of the observation step {dt}"
        )));
    }
    let n = (horizon / dt).round() as usize;
    Ok(if sspec.is_discrete() {
        (1..=n).map(|i| i as f64).collect()
    } else {
        (0..n).map(|i| i as f64 * dt).collect()
    })
}

pub fn simulate_path(
    ospec: &ObservationSpec,
    sspec: &SystemSpec,
    x0_true: &StateVector,
    horizon: f64,
    seed: u64,
) -> Result<ObservationPath> {
    simulate_path_with_noise(ospec, sspec, x0_true, horizon, seed, NoiseSource::counter(seed))
}

/// As [`simulate_path`] with an explicit noise source (e.g. [`NoiseSource::Zero`]).
pub fn simulate_path_with_noise(
    ospec: &ObservationSpec,
    sspec: &SystemSpec,
    x0_true: &StateVector,
    horizon: f64,
    seed: u64,
    noise: NoiseSource,
) -> Result<ObservationPath> {
    ospec.validate(sspec)?;
    let times = grid_times(ospec, sspec, horizon)?;
    let states = trajectory_grid(sspec, x0_true, &times)?;
    let dt = ospec.grid_dt;
    let sqrt_dt = dt.sqrt();
    let mut h = vec![0.0; ospec.obs_dim];
    let mut increments = Vec::with_capacity(times.len());
    for (i, (t, x)) in times.iter().zip(&states).enumerate() {
        ospec.h_into(*t, x, &mut h)?;
        let xi = noise.gaussians(i as u64, ospec.obs_dim);
        increments.push(h.iter().zip(&xi).map(|(hv, z)| hv * dt + sqrt_dt * z).collect());
    }
    Ok(ObservationPath {
        mode: if sspec.is_discrete() {
            TimeMode::Discrete
        } else {
            TimeMode::Continuous
        },
        dt,
        times,
        increments,
        truth_x0: x0_true.clone(),
        seed,
        spec_hash: specs_hash(ospec, sspec),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityRatio {
    pub lower: f64,
    pub upper: f64,
}

/// `∫_t^{t+τ} ‖h(s, φ_{s−t} x1) − h(s, φ_{s−t} x2)‖² ds / (ρ_t d(x1, x2)²)`.
///
/// Continuous time integrates with the trapezoid rule on the observation
/// grid; discrete time sums `i = k..=k+τ`.
pub fn observability_ratio(
    ospec: &ObservationSpec,
    sspec: &SystemSpec,
    x1: &StateVector,
    x2: &StateVector,
    t: f64,
    tau: f64,
    rho: &RhoSchedule,
) -> Result<ObservabilityRatio> {
    let d = sspec.distance(x1, x2);
    if d < crate::dynamics::probes::MIN_PAIR_DISTANCE {
        return Err(Error::DegeneratePair(crate::dynamics::probes::MIN_PAIR_DISTANCE));
    }
    let dt = ospec.grid_dt;
    if !SystemSpec::divides(dt, tau) {
        return Err(Error::InvalidInput(format!("tau {tau} is not a multiple of grid_dt {dt}")));
    }
    let m = (tau / dt).round() as usize;
    let offsets: Vec<f64> = (0..=m).map(|j| j as f64 * dt).collect();
    let a = trajectory_grid(sspec, x1, &offsets)?;
    let b = trajectory_grid(sspec, x2, &offsets)?;
    let mut ha = vec![0.0; ospec.obs_dim];
    let mut hb = vec![0.0; ospec.obs_dim];
    let mut vals = Vec::with_capacity(m + 1);
    for (j, s) in offsets.iter().enumerate() {
        ospec.h_into(t + s, &a[j], &mut ha)?;
        ospec.h_into(t + s, &b[j], &mut hb)?;
        vals.push(ha.iter().zip(&hb).map(|(u, v)| (u - v) * (u - v)).sum::<f64>());
    }
    let integral = if sspec.is_discrete() {
        vals.iter().sum::<f64>()
    } else if m == 0 {
        0.0
    } else {
        dt * (0.5 * vals[0] + vals[1..m].iter().sum::<f64>() + 0.5 * vals[m])
    };
    let r = integral / (rho.value(t) * d * d);
    Ok(ObservabilityRatio { lower: r, upper: r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::RhoFamily;

    #[test]
    fn identity_observation() {
        let o = ObservationSpec::identity(3, Gain::Constant { b: 1.0 }, 0.01);
        assert_eq!(o.h_eval(5.0, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn power_law_gain() {
        let o = ObservationSpec::identity(
            2,
            Gain::PowerLaw {
                b: 2.0,
                q: 1.0,
                offset: 0.0,
            },
            0.01,
        );
        assert_eq!(o.h_eval(3.0, &[1.0, 0.0]).unwrap(), vec![6.0, 0.0]);
    }

    #[test]
    fn bilipschitz_at_pi() {
        let o = ObservationSpec::bilipschitz(1, 0.5, Gain::Constant { b: 1.0 }, 0.01);
        let v = o.h_eval(0.0, &[std::f64::consts::PI]).unwrap();
        assert!((v[0] - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn bilipschitz_derivative_bounds() {
        let eps = 0.7;
        for i in 0..1000 {
            let x = -10.0 + 0.02 * i as f64;
            let d = 1.0 + eps * f64::cos(x);
            assert!(d >= 1.0 - eps - 1e-15 && d <= 1.0 + eps + 1e-15);
        }
    }

    #[test]
    fn linear_shape_mismatch() {
        let o = ObservationSpec {
            gain: Gain::Constant { b: 1.0 },
            base: BaseObservation::Linear {
                g: vec![vec![1.0, 0.0]],
            },
            obs_dim: 1,
            grid_dt: 0.01,
        };
        assert!(matches!(
            o.h_eval(0.0, &[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(o.validate(&SystemSpec::lorenz63_classic(0.01)).is_err());
    }

    #[test]
    fn grid_compatibility_is_validated() {
        let sys = SystemSpec::lorenz63_classic(0.01);
        assert!(ObservationSpec::identity(3, Gain::Constant { b: 1.0 }, 0.015)
            .validate(&sys)
            .is_err());
        assert!(ObservationSpec::identity(3, Gain::Constant { b: 1.0 }, 0.02)
            .validate(&sys)
            .is_ok());
        assert!(ObservationSpec::identity(2, Gain::Constant { b: 1.0 }, 0.5)
            .validate(&SystemSpec::cat_map())
            .is_err());
    }

    #[test]
    fn zero_gain_zero_noise_gives_zero_increments() {
        let sys = SystemSpec::lorenz63_classic(0.01);
        let o = ObservationSpec::identity(3, Gain::Constant { b: 0.0 }, 0.01);
        let p = simulate_path_with_noise(&o, &sys, &StateVector::from([1.0, 2.0, 3.0]), 1.0, 0, NoiseSource::Zero)
            .unwrap();
        assert_eq!(p.len(), 100);
        assert!(p.increments.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn origin_equilibrium_gives_zero_increments() {
        let sys = SystemSpec::lorenz63_classic(0.01);
        let o = ObservationSpec::identity(3, Gain::Constant { b: 3.0 }, 0.01);
        let p = simulate_path_with_noise(&o, &sys, &StateVector::zeros(3), 2.0, 0, NoiseSource::Zero).unwrap();
        assert!(p.increments.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_noise_sum_is_left_riemann_sum() {
        let sys = SystemSpec::lorenz63_classic(0.01);
        let o = ObservationSpec::identity(3, Gain::Constant { b: 1.5 }, 0.02);
        let x0 = StateVector::from([1.0, 1.0, 1.0]);
        let p = simulate_path_with_noise(&o, &sys, &x0, 1.0, 0, NoiseSource::Zero).unwrap();
        let y = p.cumulative();
        let mut riemann = [0.0; 3];
        let mut x = x0.clone();
        for i in 0..50 {
            let t = i as f64 * 0.02;
            if i > 0 {
                x = crate::dynamics::flow(&sys, &x0, t).unwrap();
            }
            let h = o.h_eval(t, &x).unwrap();
            for k in 0..3 {
                riemann[k] += h[k] * 0.02;
            }
        }
        assert_eq!(y[50], riemann.to_vec());
    }

    #[test]
    fn doubling_gain_doubles_drift() {
        let sys = SystemSpec::lorenz63_classic(0.01);
        let o = ObservationSpec::identity(3, Gain::PowerLaw { b: 1.0, q: 0.5, offset: 1.0 }, 0.01);
        let o2 = ObservationSpec {
            gain: o.gain.scaled(2.0),
            ..o.clone()
        };
        let x0 = StateVector::from([1.0, -2.0, 20.0]);
        let a = simulate_path_with_noise(&o, &sys, &x0, 1.0, 0, NoiseSource::Zero).unwrap();
        let b = simulate_path_with_noise(&o2, &sys, &x0, 1.0, 0, NoiseSource::Zero).unwrap();
        for (u, v) in a.increments.iter().flatten().zip(b.increments.iter().flatten()) {
            assert_eq!(2.0 * u, *v);
        }
    }

    /// Independent re-implementation of the noise stream and the
    /// Euler–Maruyama recurrence for ten steps.
    #[test]
    fn seeded_path_matches_hand_rolled_recurrence() {
        use rand::{RngCore, SeedableRng};
        let sys = SystemSpec::lorenz63_classic(0.01);
        let o = ObservationSpec::identity(3, Gain::Constant { b: 2.0 }, 0.01);
        let x0 = StateVector::from([1.0, 1.0, 1.0]);
        let p = simulate_path(&o, &sys, &x0, 0.1, 42).unwrap();
        assert_eq!(p.len(), 10);
        let mut x = [1.0, 1.0, 1.0];
        for i in 0..10u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
            rng.set_stream(i);
            for k in 0..3 {
                let a = rng.next_u64();
                let b = rng.next_u64();
                let u1 = ((a >> 11) as f64 + 1.0) / 9007199254740992.0;
                let u2 = (b >> 11) as f64 / 9007199254740992.0;
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                let expect = 2.0 * x[k] * 0.01 + 0.1 * z;
                assert!(
                    (p.increments[i as usize][k] - expect).abs() <= 1e-15 * expect.abs().max(1.0),
                    "step {i} comp {k}"
                );
            }
            let next = crate::dynamics::flow(&sys, &StateVector::from(x), 0.01).unwrap();
            x = [next[0], next[1], next[2]];
        }
    }

    #[test]
    fn discrete_path_uses_random_walk_steps() {
        let sys = SystemSpec::cat_map();
        let o = ObservationSpec::identity(2, Gain::Constant { b: 1.0 }, 1.0);
        let x0 = StateVector::from([0.1, 0.2]);
        let p = simulate_path_with_noise(&o, &sys, &x0, 3.0, 0, NoiseSource::Zero).unwrap();
        assert_eq!(p.mode, TimeMode::Discrete);
        assert_eq!(p.times, vec![1.0, 2.0, 3.0]);
        let t1 = crate::dynamics::flow(&sys, &x0, 1.0).unwrap();
        assert_eq!(p.increments[0], t1.into_inner());
    }

    #[test]
    fn path_is_reproducible_and_csv_round_trips() {
        let sys = SystemSpec::lorenz63_classic(0.01);
        let o = ObservationSpec::identity(3, Gain::Constant { b: 1.0 }, 0.01);
        let x0 = StateVector::from([1.0, 2.0, 3.0]);
        let a = simulate_path(&o, &sys, &x0, 0.5, 9).unwrap();
        let b = simulate_path(&o, &sys, &x0, 0.5, 9).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let back = ObservationPath::read_csv(buf.as_slice()).unwrap();
        assert_eq!(a, back);
        assert!(ObservationPath::read_csv("".as_bytes()).is_err());
    }

    #[test]
    fn observability_identity_flow_is_exactly_one() {
        // Zero vector field: the identity flow in continuous time.
        let sys = SystemSpec::bilinear(vec![vec![0.0; 2]; 2], vec![vec![vec![0.0; 2]; 2]; 2], vec![0.0; 2], 0.01);
        let o = ObservationSpec::identity(2, Gain::Constant { b: 1.0 }, 0.01);
        let rho = RhoSchedule::new(RhoFamily::Constant { c: 1.0 }, 1.0).unwrap();
        let r = observability_ratio(&o, &sys, &StateVector::from([0.0, 1.0]), &StateVector::from([2.0, -1.0]), 3.0, 1.0, &rho)
            .unwrap();
        assert!((r.lower - 1.0).abs() < 1e-12);
        assert_eq!(r.lower, r.upper);
    }

    #[test]
    fn observability_power_law_closed_form() {
        let sys = SystemSpec::bilinear(vec![vec![0.0; 2]; 2], vec![vec![vec![0.0; 2]; 2]; 2], vec![0.0; 2], 0.001);
        let (b, q, off) = (1.5, 1.0, 1.0);
        let o = ObservationSpec::identity(2, Gain::PowerLaw { b, q, offset: off }, 0.001);
        let rho = RhoSchedule::new(RhoFamily::Affine { c: 1.0 }, 0.5).unwrap();
        let (t, tau) = (2.0, 0.5);
        let r = observability_ratio(&o, &sys, &StateVector::from([0.0, 1.0]), &StateVector::from([0.5, 0.0]), t, tau, &rho)
            .unwrap();
        // ∫ b² (s+off)² ds over [t, t+τ]
        let antider = |s: f64| b * b * (s + off).powi(3) / 3.0;
        let exact = (antider(t + tau) - antider(t)) / rho.value(t);
        // trapezoid error bound: τ Δ² max|f''| / 12 with f'' = 2 b²
        let bound = tau * 1e-6 * 2.0 * b * b / 12.0 / rho.value(t) + 1e-12;
        assert!((r.lower - exact).abs() <= bound, "{} vs {exact}", r.lower);
    }

    #[test]
    fn observability_rejects_degenerate_pair() {
        let sys = SystemSpec::lorenz63_classic(0.01);
        let o = ObservationSpec::identity(3, Gain::Constant { b: 1.0 }, 0.01);
        let rho = RhoSchedule::new(RhoFamily::Constant { c: 1.0 }, 0.1).unwrap();
        let x = StateVector::from([1.0, 1.0, 1.0]);
        assert!(matches!(
            observability_ratio(&o, &sys, &x, &x, 0.0, 0.1, &rho),
            Err(Error::DegeneratePair(_))
        ));
    }
}
