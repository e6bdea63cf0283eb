//! Exact Bayes smoother and filter for deterministic dynamics observed
//! through noisy integrated observations, with numerical checks of the
//! conditions under which the filter forgets a wrong prior.
//!
//! The crate is organised bottom-up:
//!
//! - [`dynamics`]: flows and maps, RK4 integration, regularity probes
//! - [`observation`]: observation functions and path simulation
//! - [`filtering`]: importance-weighted smoother / filter ensembles
//! - [`metrics`]: orbit metrics, ball masses, merging distances, spanning numbers
//! - [`assumptions`]: executable checks producing [`assumptions::AssumptionReport`]s
//! - [`experiments`]: config-driven runs behind the `filterstab` CLI

pub mod assumptions;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod filtering;
pub mod metrics;
pub mod noise;
pub mod observation;

pub use dynamics::{flow, trajectory_grid, Metric, Region, StateVector, SystemSpec};
pub use error::{Error, Result};

pub use metrics::RhoSchedule;
pub use observation::{ObservationPath, ObservationSpec};
pub use filtering::{PriorSpec, WeightedEnsemble};
