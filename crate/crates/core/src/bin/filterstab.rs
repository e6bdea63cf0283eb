//! `filterstab run | verify | calibrate`

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use filterstab::assumptions::VerifyConfig;
use filterstab::experiments::{self, calibrate_e1, ExperimentConfig};

#[derive(Parser)]
#[command(name = "filterstab", version, about = "Bayes smoother / filter experiments and assumption checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config (E1..E5).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check one assumption; exits 2 unless it passes.
    Verify {
        #[arg(long)]
        assumption: String,
        #[arg(long)]
        config: PathBuf,
    },
    /// Print E1 thresholds from the reference run as TOML.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.set_seed(s);
            }
            if let Some(dir) = out {
                cfg.set_output_dir(dir);
            }
            let res = experiments::run(&cfg)?;
            println!(
                "{} finished in {:.1} s; wrote {} files to {}",
                res.experiment,
                res.wall_clock_s,
                res.files.len(),
                res.output_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { assumption, config } => {
            let text = std::fs::read_to_string(&config).with_context(|| config.display().to_string())?;
            let cfg = VerifyConfig::from_toml(&text).with_context(|| config.display().to_string())?;
            if cfg.id() != assumption {
                bail!("config checks `{}` but --assumption is `{assumption}`", cfg.id());
            }
            let rep = cfg.run()?;
            println!("{}", serde_json::to_string_pretty(&rep)?);
            Ok(if rep.status.is_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Calibrate { config } => {
            let ExperimentConfig::E1(cfg) = ExperimentConfig::load(&config)? else {
                bail!("calibration applies to E1 configs only");
            };
            let table = calibrate_e1(&cfg)?;
            for (label, per) in table {
                println!("# {label}: reference seed {}, {} pairs", cfg.reference_seed, cfg.reference_pairs);
                println!("[systems.thresholds] # {label}");
                for (family, (thr, p1)) in per {
                    println!("{family} = {thr:e}  # p1 = {p1:e}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
