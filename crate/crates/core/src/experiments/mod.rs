//! Config-driven experiment runs.
//!
//! Each run reads one TOML file tagged by `experiment = "E1" ... "E5"`,
//! writes CSV series, `summary.json` and an echo of the parsed config to its
//! output directory. CSV bodies depend only on the config and its seeds.

mod concentration;
mod e1;
mod e5;
mod stability;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use concentration::{concentration_run, ConcentrationOutcome, ConcentrationSettings};
pub use e1::{calibrate_e1, run_e1, E1Config, E1System};
pub use e5::{run_e5, E5Config};
pub use stability::{stability_run, StabilityOutcome, StabilitySettings};

use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::filtering::PriorSpec;
use crate::metrics::TestFunctionSet;
use crate::observation::ObservationSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment")]
pub enum ExperimentConfig {
    E1(E1Config),
    E2(E2Config),
    E3(E3Config),
    E4(E4Config),
    E5(E5Config),
}

/// Smoother concentration on a continuous-time system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct E2Config {
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: usize,
    pub system: SystemSpec,
    pub observation: ObservationSpec,
    pub prior: PriorSpec,
    pub horizon: f64,
    /// Observation increments between recorded times.
    pub record_every: usize,
    pub radii: Vec<f64>,
    pub n_realizations: usize,
}

/// Filter stability under a reweighted prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct E3Config {
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: usize,
    pub system: SystemSpec,
    pub observation: ObservationSpec,
    /// Box prior `μ`; `ν` tilts it by `tilt`.
    pub prior: PriorSpec,
    pub tilt: Vec<f64>,
    pub horizon: f64,
    pub record_every: usize,
    pub n_realizations: usize,
    pub test_functions: TestFunctionSet,
}

/// Discrete-time concentration and stability on a map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct E4Config {
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: usize,
    pub system: SystemSpec,
    pub observation: ObservationSpec,
    pub prior: PriorSpec,
    pub horizon: f64,
    pub record_every: usize,
    pub radii: Vec<f64>,
    pub n_realizations: usize,
    pub tilt: Vec<f64>,
    pub n_stability_realizations: usize,
    pub test_functions: TestFunctionSet,
}

impl ExperimentConfig {
    /// Parse and validate. The variant is chosen from the `experiment` key
    /// first so that field errors keep their line positions.
    pub fn from_toml(text: &str) -> Result<Self> {
        let parse = |e: toml::de::Error| Error::Parse(e.to_string());
        let table: toml::Table = toml::from_str(text).map_err(parse)?;
        let cfg = match table.get("experiment").and_then(|v| v.as_str()) {
            Some("E1") => ExperimentConfig::E1(toml::from_str(text).map_err(parse)?),
            Some("E2") => ExperimentConfig::E2(toml::from_str(text).map_err(parse)?),
            Some("E3") => ExperimentConfig::E3(toml::from_str(text).map_err(parse)?),
            Some("E4") => ExperimentConfig::E4(toml::from_str(text).map_err(parse)?),
            Some("E5") => ExperimentConfig::E5(toml::from_str(text).map_err(parse)?),
            other => {
                return Err(Error::Parse(format!(
                    "`experiment` must be one of E1..E5, found {other:?}"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn id(&self) -> &'static str {
        match self {
            ExperimentConfig::E1(_) => "E1",
            ExperimentConfig::E2(_) => "E2",
            ExperimentConfig::E3(_) => "E3",
            ExperimentConfig::E4(_) => "E4",
            ExperimentConfig::E5(_) => "E5",
        }
    }

    fn common(&mut self) -> (&mut u64, &mut PathBuf, usize) {
        match self {
            ExperimentConfig::E1(c) => (&mut c.seed, &mut c.output_dir, c.workers),
            ExperimentConfig::E2(c) => (&mut c.seed, &mut c.output_dir, c.workers),
            ExperimentConfig::E3(c) => (&mut c.seed, &mut c.output_dir, c.workers),
            ExperimentConfig::E4(c) => (&mut c.seed, &mut c.output_dir, c.workers),
            ExperimentConfig::E5(c) => (&mut c.seed, &mut c.output_dir, c.workers),
        }
    }

    pub fn seed(&self) -> u64 {
        *self.clone().common().0
    }

    pub fn output_dir(&self) -> PathBuf {
        self.clone().common().1.clone()
    }

    pub fn workers(&self) -> usize {
        self.clone().common().2
    }

    pub fn set_seed(&mut self, seed: u64) {
        *self.common().0 = seed;
    }

    pub fn set_output_dir(&mut self, dir: PathBuf) {
        *self.common().1 = dir;
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ExperimentConfig::E1(c) => c.validate(),
            ExperimentConfig::E2(c) => c.concentration().validate(),
            ExperimentConfig::E3(c) => c.stability().validate(),
            ExperimentConfig::E4(c) => {
                if !c.system.is_discrete() {
                    return Err(Error::InvalidSpec("E4 needs a discrete map".into()));
                }
                c.concentration().validate()?;
                c.stability().validate()
            }
            ExperimentConfig::E5(c) => c.validate(),
        }
    }
}

impl E2Config {
    pub fn concentration(&self) -> ConcentrationSettings {
        ConcentrationSettings {
            system: self.system.clone(),
            observation: self.observation.clone(),
            prior: self.prior.clone(),
            horizon: self.horizon,
            record_every: self.record_every,
            radii: self.radii.clone(),
            n_realizations: self.n_realizations,
            seed: self.seed,
        }
    }
}

impl E3Config {
    pub fn stability(&self) -> StabilitySettings {
        StabilitySettings {
            system: self.system.clone(),
            observation: self.observation.clone(),
            prior: self.prior.clone(),
            tilt: self.tilt.clone(),
            horizon: self.horizon,
            record_every: self.record_every,
            n_realizations: self.n_realizations,
            test_functions: self.test_functions.clone(),
            seed: self.seed,
        }
    }
}

impl E4Config {
    pub fn concentration(&self) -> ConcentrationSettings {
        ConcentrationSettings {
            system: self.system.clone(),
            observation: self.observation.clone(),
            prior: self.prior.clone(),
            horizon: self.horizon,
            record_every: self.record_every,
            radii: self.radii.clone(),
            n_realizations: self.n_realizations,
            seed: self.seed,
        }
    }

    pub fn stability(&self) -> StabilitySettings {
        StabilitySettings {
            system: self.system.clone(),
            observation: self.observation.clone(),
            prior: self.prior.clone(),
            tilt: self.tilt.clone(),
            horizon: self.horizon,
            record_every: self.record_every,
            n_realizations: self.n_stability_realizations,
            test_functions: self.test_functions.clone(),
            seed: derive_seed(self.seed, "stability", 0),
        }
    }
}

/// What a run wrote and its summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub output_dir: PathBuf,
    pub files: Vec<String>,
    pub summary: serde_json::Value,
    pub wall_clock_s: f64,
}

/// Independent 64-bit seed for `(base, tag, index)`.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let digest = Sha256::digest(format!("{base}/{tag}/{index}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Linear-interpolation percentile, `q ∈ [0, 100]`.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// Output directory of a run and the files written so far.
pub struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }
}

pub(crate) fn csv_line(out: &mut String, fields: &[&dyn std::fmt::Display]) {
    let mut first = true;
    for f in fields {
        if !first {
            out.push(',');
        }
        first = false;
        write!(out, "{f}").expect("write to string");
    }
    out.push('\n');
}

/// Run an experiment inside a thread pool of `workers` threads (0 = all cores).
pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let start = Instant::now();
    let dir = config.output_dir();
    let mut out = Output::create(&dir)?;
    out.write("config.toml", &config.to_toml()?)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers())
        .build()
        .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
    let summary = pool.install(|| match config {
        ExperimentConfig::E1(c) => run_e1(c, &mut out),
        ExperimentConfig::E2(c) => concentration::run_e2(c, &mut out),
        ExperimentConfig::E3(c) => stability::run_e3(c, &mut out),
        ExperimentConfig::E4(c) => {
            let conc = concentration::write_concentration(&c.concentration(), &mut out, "e4_")?;
            let stab = stability::write_stability(&c.stability(), &mut out, "e4_")?;
            Ok(serde_json::json!({ "concentration": conc, "stability": stab }))
        }
        ExperimentConfig::E5(c) => run_e5(c, &mut out),
    })?;
    let wall = start.elapsed().as_secs_f64();
    let full = serde_json::json!({
        "experiment": config.id(),
        "seed": config.seed(),
        "wall_clock_s": wall,
        "results": summary,
    });
    out.write(
        "summary.json",
        &serde_json::to_string_pretty(&full).expect("summary serialises"),
    )?;
    Ok(ExperimentResult {
        experiment: config.id().to_string(),
        output_dir: dir,
        files: out.files,
        summary,
        wall_clock_s: wall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&v, 100.0), Some(4.0));
        assert_eq!(percentile(&v, 50.0), Some(2.5));
        assert!((percentile(&v, 1.0).unwrap() - 1.03).abs() < 1e-12);
        assert_eq!(percentile(&[], 10.0), None);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "a", 1));
        assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "b", 0));
        assert_eq!(derive_seed(7, "x", 3), derive_seed(7, "x", 3));
    }

    #[test]
    fn parse_errors_carry_positions() {
        let err = ExperimentConfig::from_toml("experiment = \"E2\"\nseed = \"x\"\n").unwrap_err();
        let Error::Parse(msg) = err else { panic!("{err:?}") };
        assert!(msg.contains("line"), "{msg}");
    }
}
