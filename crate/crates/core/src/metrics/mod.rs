//! Orbit metrics, ensemble statistics and rate fitting.

pub mod ensemble;
pub mod orbit;
pub mod rate;
pub mod rho;
pub mod spanning;
pub mod testfn;

pub use orbit::{max_orbit_distance, orbit_distances, weighted_orbit_distance, OrbitDistances};
pub use rho::{RhoConditions, RhoFamily, RhoSchedule};
pub use ensemble::{ball_mass, ball_mass_of, mass_of, merging_distance, merging_distance_of, MergingDistance};
pub use rate::{concentration_rate, ConcentrationFit};
pub use spanning::{spanning_number, spanning_table};
pub use testfn::{TestFunction, TestFunctionSet};
