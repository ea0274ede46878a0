use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use greenran::policy::PolicyKind;
use greenran::scenario::{ScenarioConfig, SweepAxis};
use greenran::solar::SyntheticSolar;
use greenran::{harness, Error, ErrorCategory, Result};

/// Renewable-aware function split simulator.
#[derive(Debug, Parser)]
#[command(name = "greenran", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train per-node agents and save their Q-tables.
    Train(Common),
    /// Run a frozen policy and write the episode log and summary.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory produced by `train` (needed for learned policies).
        #[arg(long)]
        artifacts: Option<PathBuf>,
    },
    /// Evaluate the configured policies across one parameter axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_axis)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Solve the exact optimum of a small instance.
    Oracle(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the seed list; repeatable.
    #[arg(long)]
    seed: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solar trace CSV shared by every node.
    #[arg(long, conflicts_with = "solar_synthetic")]
    solar: Option<PathBuf>,
    /// Synthetic solar as PEAK,SUNRISE,SUNSET[,CLOUD_SIGMA].
    #[arg(long, value_parser = parse_synthetic)]
    solar_synthetic: Option<SyntheticSolar>,
    #[arg(long, value_parser = parse_policy)]
    policy: Option<PolicyKind>,
}

fn parse_axis(s: &str) -> std::result::Result<SweepAxis, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_policy(s: &str) -> std::result::Result<PolicyKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_synthetic(s: &str) -> std::result::Result<SyntheticSolar, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [peak, sunrise, sunset] => Ok(SyntheticSolar {
            peak,
            sunrise,
            sunset,
            cloud_sigma: 0.0,
        }),
        [peak, sunrise, sunset, cloud_sigma] => Ok(SyntheticSolar {
            peak,
            sunrise,
            sunset,
            cloud_sigma,
        }),
        _ => Err("expected PEAK,SUNRISE,SUNSET[,CLOUD_SIGMA]".into()),
    }
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::from_path(path)?,
            None => ScenarioConfig::default(),
        };
        if !self.seed.is_empty() {
            cfg.run.seeds = self.seed.clone();
        }
        if let Some(out) = &self.out {
            cfg.run.out = out.clone();
        }
        if let Some(path) = &self.solar {
            // Paths given on the command line are relative to the working directory.
            cfg.solar.trace = Some(std::path::absolute(path).map_err(|e| Error::io(path, e))?);
            cfg.solar.cu_trace = None;
            cfg.solar.du_traces = None;
            if let Some(stem) = path.file_stem() {
                cfg.solar.city = stem.to_string_lossy().into_owned();
            }
        }
        if let Some(synthetic) = self.solar_synthetic {
            cfg.solar.trace = None;
            cfg.solar.cu_trace = None;
            cfg.solar.du_traces = None;
            cfg.solar.synthetic = synthetic;
        }
        if let Some(kind) = self.policy {
            cfg.policy.kind = kind;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(common) => {
            let cfg = common.scenario()?;
            for a in harness::cmd_train(&cfg)? {
                let last = a.curve.last().copied().unwrap_or(0.0);
                println!(
                    "seed {}: {} episodes, final episode opex {last:.4} -> {}",
                    a.seed,
                    a.curve.len(),
                    a.dir.display()
                );
            }
        }
        Command::Evaluate { common, artifacts } => {
            let cfg = common.scenario()?;
            for e in harness::cmd_evaluate(&cfg, artifacts.as_deref())? {
                let s = &e.summary;
                println!(
                    "seed {}: {} total_opex {:.4} renewable_used {:.4} unstored {:.4}",
                    e.seed, s.policy, s.total_opex, s.renewable_used, s.unstored
                );
            }
        }
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            let cfg = common.scenario()?;
            for r in harness::cmd_sweep(&cfg, axis, &values)? {
                println!("{}={} {} {:.4}", r.axis, r.value, r.policy, r.total_opex);
            }
        }
        Command::Oracle(common) => {
            let cfg = common.scenario()?;
            for (e, sol) in harness::cmd_oracle(&cfg)? {
                println!(
                    "seed {}: optimum {:.4} ({} frontier states at peak)",
                    e.seed, sol.total_opex, sol.peak_states
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.category() {
                ErrorCategory::Config => 3,
                ErrorCategory::Data => 4,
                ErrorCategory::Runtime => 5,
            })
        }
    }
}
