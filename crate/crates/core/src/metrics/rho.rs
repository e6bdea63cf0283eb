//! Observability rate schedules `ρ_t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RhoFamily {
    /// `c`
    Constant { c: f64 },
    /// `t + c`
    Affine { c: f64 },
    /// `ln(t + c)`
    Log { c: f64 },
    /// `t^2 + c`
    Quadratic { c: f64 },
    /// `t^3 + c`
    Cubic { c: f64 },
}

impl RhoFamily {
    fn offset(&self) -> f64 {
        match *self {
            RhoFamily::Constant { c }
            | RhoFamily::Affine { c }
            | RhoFamily::Log { c }
            | RhoFamily::Quadratic { c }
            | RhoFamily::Cubic { c } => c,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RhoFamily::Constant { .. } => "constant",
            RhoFamily::Affine { .. } => "affine",
            RhoFamily::Log { .. } => "log",
            RhoFamily::Quadratic { .. } => "quadratic",
            RhoFamily::Cubic { .. } => "cubic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoSchedule {
    #[serde(flatten)]
    pub family: RhoFamily,
    pub tau: f64,
}

/// Numerical report on the growth conditions a schedule is expected to meet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoConditions {
    /// `ρ_t → ∞` (decided per family).
    pub unbounded: bool,
    /// `∫_0^T ρ_s ds / ρ_T` at the horizon.
    pub integral_ratio: f64,
    /// `max_t t ρ_t / ∫_0^t ρ_s ds` over the τ-grid up to the horizon.
    pub c_prime: f64,
    pub violations: Vec<String>,
}

impl RhoSchedule {
    pub fn new(family: RhoFamily, tau: f64) -> Result<Self> {
        let s = Self { family, tau };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidSpec("rho schedule needs tau > 0".into()));
        }
        let c = self.family.offset();
        if !(c >= 1.0) || !c.is_finite() {
            return Err(Error::InvalidSpec(format!("rho offset must be >= 1, got {c}")));
        }
        if matches!(self.family, RhoFamily::Log { .. }) && c <= 1.0 {
            return Err(Error::InvalidSpec("log schedule needs c > 1 to stay positive".into()));
        }
        Ok(())
    }

    /// The five schedules `1000, t+1000, ln(t+1000), t^2+1000, t^3+1000`.
    pub fn standard_families(tau: f64) -> Vec<RhoSchedule> {
        let c = 1000.0;
        [
            RhoFamily::Constant { c },
            RhoFamily::Affine { c },
            RhoFamily::Log { c },
            RhoFamily::Quadratic { c },
            RhoFamily::Cubic { c },
        ]
        .into_iter()
        .map(|family| RhoSchedule { family, tau })
        .collect()
    }

    pub fn label(&self) -> &'static str {
        self.family.label()
    }

    pub fn value(&self, t: f64) -> f64 {
        match self.family {
            RhoFamily::Constant { c } => c,
            RhoFamily::Affine { c } => t + c,
            RhoFamily::Log { c } => (t + c).ln(),
            RhoFamily::Quadratic { c } => t * t + c,
            RhoFamily::Cubic { c } => t * t * t + c,
        }
    }

    /// `Σ_{i=0}^{n} ρ_{iτ}`, closed form where one exists.
    pub fn partial_sum(&self, n: u64) -> f64 {
        let nf = n as f64;
        let m = nf + 1.0;
        let tau = self.tau;
        match self.family {
            RhoFamily::Constant { c } => m * c,
            RhoFamily::Affine { c } => tau * nf * m / 2.0 + m * c,
            RhoFamily::Quadratic { c } => tau * tau * nf * m * (2.0 * nf + 1.0) / 6.0 + m * c,
            RhoFamily::Cubic { c } => tau.powi(3) * (nf * m / 2.0).powi(2) + m * c,
            RhoFamily::Log { .. } => (0..=n).map(|i| self.value(i as f64 * tau)).sum(),
        }
    }

    /// `∫_0^t ρ_s ds`.
    pub fn integral(&self, t: f64) -> f64 {
        match self.family {
            RhoFamily::Constant { c } => c * t,
            RhoFamily::Affine { c } => t * t / 2.0 + c * t,
            RhoFamily::Log { c } => {
                let u = t + c;
                (u * u.ln() - u) - (c * c.ln() - c)
            }
            RhoFamily::Quadratic { c } => t.powi(3) / 3.0 + c * t,
            RhoFamily::Cubic { c } => t.powi(4) / 4.0 + c * t,
        }
    }

    /// Evaluate the growth conditions up to `horizon`. Reports, never rejects.
    pub fn conditions(&self, horizon: f64) -> RhoConditions {
        let unbounded = !matches!(self.family, RhoFamily::Constant { .. });
        let integral_ratio = self.integral(horizon) / self.value(horizon);
        let n = (horizon / self.tau).floor() as u64;
        let c_prime = (1..=n)
            .map(|i| {
                let t = i as f64 * self.tau;
                t * self.value(t) / self.integral(t)
            })
            .fold(0.0, f64::max);
        let mut violations = Vec::new();
        if !unbounded {
            violations.push("rho_t does not diverge".to_string());
        }
        RhoConditions {
            unbounded,
            integral_ratio,
            c_prime,
            violations,
        }
    }
}
