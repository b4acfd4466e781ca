//! Scenario orchestration: per-point pipeline, SNR sweeps, aggregation and
//! report files.

mod aggregate;
pub mod plot;
mod scenario;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use aggregate::{aggregate, AggregateRow, MetricStat};
pub use scenario::{ScenarioKind, ScenarioSpec};

use crate::beamforming::{assemble, ConstraintAudit, HybridBeamformer};
use crate::blockage::{apply_switch, assess, reflection_ratio_noisy, BlockageAction, BlockageDecision};
use crate::channel::{generate_channel_set, Object, SubcarrierChannelSet};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::power::{optimize, OptimizerTrace, PowerOutcome, PowerStatus};
use crate::rates::{PowerAllocation, RateEvaluator, RateReport};

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5eed_u64, |h, &p| splitmix64(h ^ splitmix64(p)))
}

const CHANNEL_STREAM: u64 = 0xc4a7;
const DETECTION_STREAM: u64 = 0xde7e;

/// Random streams of one simulation point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointSeeds {
    /// Channel draw. Shared by every scenario and SNR of a realization so
    /// that comparisons across them see the same channels.
    pub channel: u64,
    /// Detection measurement noise, distinct per point.
    pub detection: u64,
}

impl PointSeeds {
    pub fn derive(rng_seed: u64, scenario_index: usize, snr_index: usize, realization: usize) -> Self {
        PointSeeds {
            channel: mix_seed(&[rng_seed, CHANNEL_STREAM, realization as u64]),
            detection: mix_seed(&[
                rng_seed,
                DETECTION_STREAM,
                scenario_index as u64,
                snr_index as u64,
                realization as u64,
            ]),
        }
    }
}

/// Everything produced for one (scenario, SNR, realization) point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub scenario: ScenarioSpec,
    pub snr_db: f64,
    pub realization: usize,
    pub report: RateReport,
    /// Detection outcome per object, in [`Object::ALL`] order.
    pub decisions: Vec<BlockageDecision>,
    /// Whether the users were moved to their NLOS channels.
    pub switched: bool,
    pub power: PowerOutcome,
    pub audit: ConstraintAudit,
    pub trace: Option<OptimizerTrace>,
}

impl PointResult {
    /// Blockage declared on either user.
    pub fn users_declared_blocked(&self) -> bool {
        self.decisions
            .iter()
            .any(|d| d.object.is_user() && d.declared_blocked)
    }
}

/// Draws the channel set of one realization with the configured echo
/// convention; no blockage is applied.
pub fn realization_channels(cfg: &SystemConfig, channel_seed: u64) -> Result<SubcarrierChannelSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(channel_seed);
    Ok(generate_channel_set(&cfg.dims(), &cfg.channel, &mut rng)?
        .with_echo_attenuation(cfg.detection.echo_attenuation))
}

/// Applies the scenario's blockage loss to both users (cluster 1).
pub fn inject_blockage(channels: &SubcarrierChannelSet, scenario: &ScenarioSpec) -> Result<SubcarrierChannelSet> {
    let mut out = channels.clone();
    for u in Object::USERS {
        out = out.with_blockage(u, scenario.blockage_db)?;
    }
    Ok(out)
}

fn detect_all(
    cfg: &SystemConfig,
    scenario: &ScenarioSpec,
    channels: &SubcarrierChannelSet,
    probe: &HybridBeamformer,
    probe_power: &PowerAllocation,
    detection_seed: u64,
) -> Result<Vec<BlockageDecision>> {
    let reflectors = cfg.reflectors();
    let mut rng = ChaCha8Rng::seed_from_u64(detection_seed);
    let mut decisions = Vec::with_capacity(3);
    for o in Object::ALL {
        let fallback = scenario.kind != ScenarioKind::BlockedKeepLos && channels.has_nlos(o);
        let measured = if cfg.detection.measurement_noise {
            Some(reflection_ratio_noisy(
                o,
                channels,
                probe,
                probe_power,
                &reflectors,
                cfg.noise_var(),
                &mut rng,
            )?)
        } else {
            None
        };
        let decision = match assess(
            o,
            channels,
            probe,
            probe_power,
            &reflectors,
            cfg.detection.nominal_blockage_db,
            fallback,
            measured,
        ) {
            Ok(d) => d,
            // Blockage alerted, LOS kept.
            Err(Error::BlockedWithoutFallback(d)) => *d,
            Err(e) => return Err(e),
        };
        decisions.push(decision);
    }
    Ok(decisions)
}

/// Runs the full pipeline for one point: channels, blockage injection,
/// detection with a probe beamformer, switching, final beamformer, power
/// optimization and rates.
pub fn run_point(
    cfg: &SystemConfig,
    scenario: &ScenarioSpec,
    snr_db: f64,
    realization: usize,
    seeds: PointSeeds,
    keep_trace: bool,
) -> Result<PointResult> {
    run_point_with(cfg, None, scenario, snr_db, realization, seeds, keep_trace)
}

/// Checks that an externally supplied channel set matches the configured
/// dimensions.
pub fn check_fixed_channels(cfg: &SystemConfig, set: &SubcarrierChannelSet) -> Result<()> {
    let s = &cfg.system;
    let got = (set.n_t(), set.n_r(), set.n_radar(), set.k_subcarriers());
    let want = (s.n_t, s.n_r, s.n_radar, s.k_subcarriers);
    if got != want {
        return Err(Error::config(format!(
            "channel trace has (n_t, n_r, n_radar, k) = {got:?}, config expects {want:?}"
        )));
    }
    Ok(())
}

/// As [`run_point`], optionally on a fixed channel set instead of a
/// generated realization.
pub fn run_point_with(
    cfg: &SystemConfig,
    fixed_channels: Option<&SubcarrierChannelSet>,
    scenario: &ScenarioSpec,
    snr_db: f64,
    realization: usize,
    seeds: PointSeeds,
    keep_trace: bool,
) -> Result<PointResult> {
    scenario.validate()?;
    let snr_linear = 10f64.powf(snr_db / 10.0);
    let bf_cfg = cfg.beamforming();
    let power_cfg = cfg.power_optimizer();

    let clean = match fixed_channels {
        Some(set) => {
            check_fixed_channels(cfg, set)?;
            set.with_echo_attenuation(cfg.detection.echo_attenuation)
        }
        None => realization_channels(cfg, seeds.channel)?,
    };
    let blocked = inject_blockage(&clean, scenario)?;
    let probe = assemble(&blocked, &bf_cfg)?;
    let probe_power = PowerAllocation::from_alpha2(
        power_cfg.alpha2_init,
        power_cfg.alpha_c,
        power_cfg.alpha_t,
        snr_linear,
        power_cfg.total_budget,
    )?;
    let decisions = detect_all(cfg, scenario, &blocked, &probe, &probe_power, seeds.detection)?;
    let switched = decisions
        .iter()
        .any(|d| d.action == BlockageAction::SwitchToNlos);
    let (active, bf) = if switched {
        let active = apply_switch(&blocked, &decisions);
        let bf = assemble(&active, &bf_cfg)?;
        (active, bf)
    } else {
        (blocked, probe)
    };

    let ev = RateEvaluator::new(&active, &bf, &cfg.reflectors(), cfg.noise_var())?;
    let (power, trace) = optimize(&ev, &power_cfg, snr_linear)?;
    let report = ev.report(&power.allocation, &scenario.label(), snr_db)?;
    Ok(PointResult {
        scenario: *scenario,
        snr_db,
        realization,
        report,
        decisions,
        switched,
        power,
        audit: bf.audit(),
        trace: keep_trace.then_some(trace),
    })
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    /// Write the optimizer trace CSV.
    pub trace: bool,
    /// Write SVG plots.
    pub plots: bool,
    /// Use this channel set for every realization instead of generating
    /// one.
    pub fixed_channels: Option<SubcarrierChannelSet>,
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub rows: Vec<AggregateRow>,
    pub points: Vec<PointResult>,
    /// Aggregate CSV text, identical to the written `sweep.csv`.
    pub csv: String,
    pub files: Vec<PathBuf>,
}

impl SweepSummary {
    pub fn infeasible_points(&self) -> usize {
        self.points
            .iter()
            .filter(|p| p.power.status == PowerStatus::Infeasible)
            .count()
    }

    pub fn row(&self, scenario: &ScenarioSpec, snr_db: f64) -> Option<&AggregateRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == *scenario && r.snr_db == snr_db)
    }
}

/// Computes every point of the sweep in parallel, in a fixed order.
pub fn run_points(
    cfg: &SystemConfig,
    scenarios: &[ScenarioSpec],
    fixed_channels: Option<&SubcarrierChannelSet>,
    keep_trace: bool,
) -> Result<Vec<PointResult>> {
    let grid = &cfg.sweep.snr_grid_db;
    let n = cfg.sweep.n_realizations;
    let tasks: Vec<(usize, usize, usize)> = (0..scenarios.len())
        .flat_map(|s| (0..grid.len()).flat_map(move |g| (0..n).map(move |r| (s, g, r))))
        .collect();
    tasks
        .par_iter()
        .map(|&(s, g, r)| {
            let seeds = PointSeeds::derive(cfg.sweep.rng_seed, s, g, r);
            run_point_with(cfg, fixed_channels, &scenarios[s], grid[g], r, seeds, keep_trace)
        })
        .collect()
}

fn write_file(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    files.push(path);
    Ok(())
}

/// Runs the sweep and, when `out_dir` is given, writes `sweep.csv`,
/// `points.csv`, optionally `optimizer_trace.csv` and the SVG plots.
pub fn run_sweep(
    cfg: &SystemConfig,
    scenarios: &[ScenarioSpec],
    out_dir: Option<&Path>,
    opts: &SweepOptions,
) -> Result<SweepSummary> {
    cfg.validate()?;
    if scenarios.is_empty() {
        return Err(Error::config("no scenarios to run"));
    }
    let fixed = opts.fixed_channels.as_ref();
    if let Some(set) = fixed {
        check_fixed_channels(cfg, set)?;
    }
    let points = match opts.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::config(format!("cannot start {j} worker threads: {e}")))?
            .install(|| run_points(cfg, scenarios, fixed, opts.trace))?,
        None => run_points(cfg, scenarios, fixed, opts.trace)?,
    };
    let rows = aggregate(scenarios, &cfg.sweep.snr_grid_db, &points);
    let csv = aggregate::rows_to_csv(&rows);
    let mut files = Vec::new();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(dir, "sweep.csv", &csv, &mut files)?;
        write_file(dir, "points.csv", &points_csv(&points), &mut files)?;
        if opts.trace {
            write_file(dir, "optimizer_trace.csv", &trace_csv(&points), &mut files)?;
        }
        if opts.plots {
            for (name, plot) in aggregate::plots(&rows, scenarios, cfg.system.k_subcarriers) {
                write_file(dir, name, &plot.to_svg(), &mut files)?;
            }
        }
    }
    Ok(SweepSummary {
        rows,
        points,
        csv,
        files,
    })
}

/// One line per point with its detection decisions.
pub fn points_csv(points: &[PointResult]) -> String {
    let mut out = String::from(
        "scenario,blockage_db,snr_db,realization,status,alpha2,r_total,r_comm_sum,r_sense_sum,switched",
    );
    for o in Object::ALL {
        let _ = write!(out, ",{o}_ratio,{o}_declared,{o}_action");
    }
    out.push('\n');
    for p in points {
        let _ = write!(
            out,
            "{},{},{},{},{},{:.6},{:.9},{:.9},{:.9},{}",
            p.scenario.kind.name(),
            p.scenario.blockage_db,
            p.snr_db,
            p.realization,
            p.power.status,
            p.power.allocation.alpha2,
            p.report.r_total,
            p.report.r_comm_sum,
            p.report.r_sense_sum,
            p.switched
        );
        for d in &p.decisions {
            let _ = write!(out, ",{:.9e},{},{}", d.ratio, d.declared_blocked, d.action);
        }
        out.push('\n');
    }
    out
}

fn trace_csv(points: &[PointResult]) -> String {
    let mut out = String::from("scenario,blockage_db,snr_db,realization,iter,alpha2,r2,r_total\n");
    for p in points {
        if let Some(t) = &p.trace {
            for e in &t.entries {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{:.6},{:.9},{:.9}",
                    p.scenario.kind.name(),
                    p.scenario.blockage_db,
                    p.snr_db,
                    p.realization,
                    e.iter,
                    e.alpha2,
                    e.r2,
                    e.r_total
                );
            }
        }
    }
    out
}
