//! File-driven assumption checks for the `verify` subcommand.

use serde::{Deserialize, Serialize};

use super::{
    expansivity_diagnostic, verify_divergence, verify_lipschitz, verify_observability, verify_trapping,
    AssumptionReport, DivergenceConfig, ExpansivityConfig, ObservabilityConfig,
};
use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::metrics::RhoSchedule;
use crate::observation::ObservationSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "assumption", rename_all = "snake_case")]
pub enum VerifyConfig {
    Divergence {
        system: SystemSpec,
        rho: RhoSchedule,
        check: DivergenceConfig,
    },
    Observability {
        system: SystemSpec,
        observation: ObservationSpec,
        rho: RhoSchedule,
        check: ObservabilityConfig,
    },
    Trapping {
        system: SystemSpec,
        horizon: f64,
        check_dt: f64,
        n_samples: usize,
        seed: u64,
    },
    Lipschitz {
        system: SystemSpec,
        tau: f64,
        n_pairs: usize,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c_max: Option<f64>,
    },
    Expansivity {
        system: SystemSpec,
        check: ExpansivityConfig,
    },
}

impl VerifyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn id(&self) -> &'static str {
        match self {
            VerifyConfig::Divergence { .. } => "divergence",
            VerifyConfig::Observability { .. } => "observability",
            VerifyConfig::Trapping { .. } => "trapping",
            VerifyConfig::Lipschitz { .. } => "lipschitz",
            VerifyConfig::Expansivity { .. } => "expansivity",
        }
    }

    pub fn run(&self) -> Result<AssumptionReport> {
        match self {
            VerifyConfig::Divergence { system, rho, check } => verify_divergence(system, rho, check),
            VerifyConfig::Observability {
                system,
                observation,
                rho,
                check,
            } => verify_observability(observation, system, rho, check),
            VerifyConfig::Trapping {
                system,
                horizon,
                check_dt,
                n_samples,
                seed,
            } => verify_trapping(system, *horizon, *check_dt, *n_samples, *seed),
            VerifyConfig::Lipschitz {
                system,
                tau,
                n_pairs,
                seed,
                c_max,
            } => verify_lipschitz(system, *tau, *n_pairs, *seed, *c_max),
            VerifyConfig::Expansivity { system, check } => expansivity_diagnostic(system, check).map(|(r, _)| r),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assumptions::Status;

    #[test]
    fn trapping_from_toml() {
        let text = r#"
assumption = "trapping"
horizon = 2.0
check_dt = 0.01
n_samples = 20
seed = 1

[system]
dimension = 3

[system.kind]
type = "ode"
integrator_dt = 0.01

[system.kind.field]
name = "lorenz63"
a = 10.0
b = 28.0
c = 2.6666666666666665

[system.trapping_region]
shape = "ball"
center = [0.0, 0.0, 38.0]
radius = 40.0
"#;
        let cfg = VerifyConfig::from_toml(text).unwrap();
        assert_eq!(cfg.id(), "trapping");
        assert_eq!(cfg.run().unwrap().status, Status::Pass);
    }

    #[test]
    fn divergence_round_trip() {
        let cfg = VerifyConfig::Divergence {
            system: SystemSpec::scaling_map(2, 0.5),
            rho: RhoSchedule::standard_families(1.0)[0],
            check: DivergenceConfig::new(3, 50.0, 1.0, 0.5, 2),
        };
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(VerifyConfig::from_toml(&text).unwrap(), cfg);
    }
}
