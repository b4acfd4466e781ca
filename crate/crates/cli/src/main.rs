//! `isacsim`: run sweeps, validate configs, check golden outputs and dump
//! channel traces.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isac_core::channel::trace::{load_channel_trace, to_trace_string};
use isac_core::config::load_layered;
use isac_core::harness::{realization_channels, PointSeeds};
use isac_core::{run_sweep, ScenarioSpec, SweepOptions, SystemConfig};
use log::{info, warn};

const GOLDEN_CONFIG: &str = include_str!("../golden/config.toml");
const GOLDEN_CSV: &str = include_str!("../golden/sweep.csv");

/// Exit code for `run --strict` when some point is infeasible.
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "isacsim", version, about = "Blocker-aware ISAC-NOMA link-level simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// TOML config file; omitted keys take their defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a key, e.g. `--set snr_grid_db=0,15,30` or
    /// `--set power.r_min=1.5`. Repeatable; applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// RNG seed; beats the file and ISACSIM_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Fallback seed used when neither the file nor a flag sets one.
    #[arg(long, env = "ISACSIM_SEED", hide_env_values = true)]
    env_seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<SystemConfig, String> {
        let text = match &self.config {
            Some(path) => Some(
                std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))?,
            ),
            None => None,
        };
        load_layered(text.as_deref(), &self.overrides, self.env_seed, self.seed)
            .map_err(|e| e.to_string())
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the scenario x SNR x realization sweep and write CSV and plots.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long, short, default_value = "out")]
        out: PathBuf,
        /// Comma-separated scenarios, e.g. `none,keep_los:20,switch_nlos:20`.
        #[arg(long)]
        scenarios: Option<String>,
        /// Worker threads.
        #[arg(long, short)]
        jobs: Option<usize>,
        /// Also write the power optimizer trace.
        #[arg(long)]
        trace: bool,
        /// Exit nonzero if any point is infeasible.
        #[arg(long)]
        strict: bool,
        /// Skip the SVG plots.
        #[arg(long)]
        no_plots: bool,
        /// Use the channel set from this trace file for every realization.
        #[arg(long, value_name = "TRACE")]
        channels: Option<PathBuf>,
    },
    /// Parse and validate a config; prints the resolved config.
    ValidateConfig {
        #[command(flatten)]
        config: ConfigArgs,
        /// Do not print the resolved config.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Rerun the frozen-seed regression sweep and compare its CSV byte for byte.
    GoldenTest {
        /// Read `config.toml` and `sweep.csv` from this directory instead of
        /// the built-in copies.
        #[arg(long)]
        golden_dir: Option<PathBuf>,
        /// Rewrite `sweep.csv` in --golden-dir instead of comparing.
        #[arg(long, requires = "golden_dir")]
        update: bool,
        #[arg(long, short)]
        jobs: Option<usize>,
    },
    /// Write the (unblocked) channel trace of one realization.
    DumpChannels {
        #[command(flatten)]
        config: ConfigArgs,
        /// Scenario the realization is drawn for, e.g. `keep_los:20`.
        #[arg(long, default_value = "none")]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        realization: usize,
        /// Trace file to write; `-` for stdout.
        #[arg(long, short, default_value = "-")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode, String> {
    match cmd {
        Command::Run {
            config,
            out,
            scenarios,
            jobs,
            trace,
            strict,
            no_plots,
            channels,
        } => {
            let cfg = config.load()?;
            let scenarios = match scenarios {
                Some(list) => ScenarioSpec::parse_list(&list).map_err(|e| e.to_string())?,
                None => cfg.scenarios().map_err(|e| e.to_string())?,
            };
            let fixed_channels = match channels {
                Some(path) => Some(load_channel_trace(&path).map_err(|e| e.to_string())?),
                None => None,
            };
            let opts = SweepOptions {
                jobs,
                trace,
                plots: !no_plots,
                fixed_channels,
            };
            let started = std::time::Instant::now();
            let summary = run_sweep(&cfg, &scenarios, Some(&out), &opts).map_err(|e| e.to_string())?;
            info!(
                "{} points in {:.1} s, {} rows",
                summary.points.len(),
                started.elapsed().as_secs_f64(),
                summary.rows.len()
            );
            for f in &summary.files {
                println!("{}", f.display());
            }
            let infeasible = summary.infeasible_points();
            if infeasible > 0 {
                warn!("{infeasible} of {} points infeasible", summary.points.len());
                if strict {
                    return Ok(ExitCode::from(EXIT_INFEASIBLE));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateConfig { config, quiet } => {
            let cfg = config.load()?;
            cfg.scenarios().map_err(|e| e.to_string())?;
            if !quiet {
                print!("{}", cfg.to_toml_string().map_err(|e| e.to_string())?);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::GoldenTest {
            golden_dir,
            update,
            jobs,
        } => golden_test(golden_dir.as_deref(), update, jobs),
        Command::DumpChannels {
            config,
            scenario,
            realization,
            out,
        } => {
            let cfg = config.load()?;
            let spec: ScenarioSpec = scenario.parse().map_err(|e: isac_core::Error| e.to_string())?;
            let scenario_index = cfg
                .scenarios()
                .map_err(|e| e.to_string())?
                .iter()
                .position(|s| *s == spec)
                .unwrap_or(0);
            let seeds = PointSeeds::derive(cfg.sweep.rng_seed, scenario_index, 0, realization);
            let set = realization_channels(&cfg, seeds.channel).map_err(|e| e.to_string())?;
            let text = format!(
                "# scenario {spec}, realization {realization}, rng_seed {}\n\
                 # matrices are unblocked; the scenario's blockage is applied at run time\n{}",
                cfg.sweep.rng_seed,
                to_trace_string(&set)
            );
            if out.as_os_str() == "-" {
                print!("{text}");
            } else {
                std::fs::write(&out, text).map_err(|e| format!("cannot write {}: {e}", out.display()))?;
                info!("wrote {}", out.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn golden_test(dir: Option<&Path>, update: bool, jobs: Option<usize>) -> Result<ExitCode, String> {
    let read = |name: &str| -> Result<String, String> {
        let path = dir.expect("dir").join(name);
        std::fs::read_to_string(&path).map_err(|e| format!("cannot read {}: {e}", path.display()))
    };
    let config_text = match dir {
        Some(_) => read("config.toml")?,
        None => GOLDEN_CONFIG.to_string(),
    };
    let cfg = load_layered(Some(&config_text), &[], None, None).map_err(|e| e.to_string())?;
    let scenarios = cfg.scenarios().map_err(|e| e.to_string())?;
    let opts = SweepOptions {
        jobs,
        ..SweepOptions::default()
    };
    let got = run_sweep(&cfg, &scenarios, None, &opts)
        .map_err(|e| e.to_string())?
        .csv;
    if update {
        let path = dir.expect("dir").join("sweep.csv");
        std::fs::write(&path, &got).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        println!("updated {}", path.display());
        return Ok(ExitCode::SUCCESS);
    }
    let want = match dir {
        Some(_) => read("sweep.csv")?,
        None => GOLDEN_CSV.to_string(),
    };
    if got == want {
        println!("golden-test: {} rows identical", got.lines().count().saturating_sub(1));
        return Ok(ExitCode::SUCCESS);
    }
    for (i, (g, w)) in got.lines().zip(want.lines()).enumerate() {
        if g != w {
            eprintln!("first difference at line {}:\n  want: {w}\n  got:  {g}", i + 1);
            break;
        }
    }
    if got.lines().count() != want.lines().count() {
        eprintln!(
            "line count differs: want {}, got {}",
            want.lines().count(),
            got.lines().count()
        );
    }
    Err("golden CSV mismatch".into())
}
