//! NOMA power-coefficient search under a weak-user rate floor, and a grid
//! oracle to check it against.

use std::fmt;
use std::fmt::Write as _;

use crate::channel::Object;
use crate::error::{Error, Result};
use crate::rates::{PowerAllocation, RateEvaluator};

/// Improvements at or below this are treated as no improvement.
pub const IMPROVEMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerOptimizerConfig {
    /// Weak-user rate floor in bps/Hz.
    pub r_min: f64,
    pub delta: f64,
    pub max_iters: usize,
    /// Share of the budget for the communication beam (`α₁ + α₂`).
    pub alpha_c: f64,
    /// Share for the target, fixed.
    pub alpha_t: f64,
    pub alpha2_init: f64,
    pub alpha2_min: f64,
    /// Upper clip; `alpha_c − 0.05` keeps `α₁ ≥ 0.05`.
    pub alpha2_max: f64,
    /// Apply the floor to every subcarrier instead of to the sum over
    /// subcarriers.
    pub per_subcarrier_floor: bool,
    /// Per-subcarrier budget `P_k` in watts. Taken from the system section
    /// when loaded from a config file.
    #[serde(skip)]
    pub total_budget: f64,
}

impl Default for PowerOptimizerConfig {
    fn default() -> Self {
        PowerOptimizerConfig {
            r_min: 2.0,
            delta: 0.01,
            max_iters: 200,
            alpha_c: 0.7,
            alpha_t: 0.3,
            alpha2_init: 0.45,
            alpha2_min: 0.15,
            alpha2_max: 0.65,
            per_subcarrier_floor: false,
            total_budget: 1.0,
        }
    }
}

impl PowerOptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_min >= 0.0 && self.r_min.is_finite()) {
            return Err(Error::config(format!("power.r_min = {} must be non-negative", self.r_min)));
        }
        if (self.alpha_c + self.alpha_t - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!(
                "power.alpha_c + power.alpha_t = {} must equal 1",
                self.alpha_c + self.alpha_t
            )));
        }
        if !(self.delta > 0.0 && self.delta < self.alpha_c) {
            return Err(Error::config(format!(
                "power.delta = {} must lie in (0, alpha_c)",
                self.delta
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::config("power.max_iters must be positive"));
        }
        if !(self.alpha2_min > 0.0
            && self.alpha2_min <= self.alpha2_init
            && self.alpha2_init <= self.alpha2_max
            && self.alpha2_max <= self.alpha_c - 0.05 + 1e-12)
        {
            return Err(Error::config(format!(
                "power clip range needs 0 < alpha2_min <= alpha2_init <= alpha2_max <= alpha_c - 0.05, got {} / {} / {}",
                self.alpha2_min, self.alpha2_init, self.alpha2_max
            )));
        }
        if !(self.total_budget > 0.0) {
            return Err(Error::config("power.total_budget must be positive"));
        }
        Ok(())
    }

    fn allocation(&self, alpha2: f64, snr_linear: f64) -> Result<PowerAllocation> {
        PowerAllocation::from_alpha2(alpha2, self.alpha_c, self.alpha_t, snr_linear, self.total_budget)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerStatus {
    /// Floor met and `α₂ > α₁`.
    Feasible,
    /// Floor met but the weak user does not get more power than the strong
    /// one.
    OrderingViolated,
    /// Floor missed even at the upper clip.
    Infeasible,
}

impl PowerStatus {
    pub fn name(self) -> &'static str {
        match self {
            PowerStatus::Feasible => "feasible",
            PowerStatus::OrderingViolated => "ordering_violated",
            PowerStatus::Infeasible => "infeasible",
        }
    }

    pub fn meets_floor(self) -> bool {
        !matches!(self, PowerStatus::Infeasible)
    }
}

impl fmt::Display for PowerStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOutcome {
    pub allocation: PowerAllocation,
    pub status: PowerStatus,
    /// Weak-user rate in the configured floor sense.
    pub r2: f64,
    pub r_total: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub alpha2: f64,
    pub r2: f64,
    pub r_total: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerTrace {
    pub entries: Vec<TraceEntry>,
}

impl OptimizerTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,alpha2,r2,r_total\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{:.6},{:.9},{:.9}", e.iter, e.alpha2, e.r2, e.r_total);
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Point {
    alpha2: f64,
    r2: f64,
    r_total: f64,
}

/// Snaps accumulated steps back onto a 1e-12 lattice.
fn snap(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

fn evaluate(ev: &RateEvaluator, cfg: &PowerOptimizerConfig, alpha2: f64, snr_linear: f64) -> Result<Point> {
    let pa = cfg.allocation(alpha2, snr_linear)?;
    let (comm, _) = ev.comm_rates(&pa)?;
    let (sense, _) = ev.sensing_rates(&pa)?;
    let weak = &comm[Object::User2.index()];
    let r2 = if cfg.per_subcarrier_floor {
        weak.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        weak.iter().sum()
    };
    let r_total = comm.iter().flatten().sum::<f64>() + sense.iter().flatten().sum::<f64>();
    Ok(Point { alpha2, r2, r_total })
}

fn outcome(cfg: &PowerOptimizerConfig, p: Point, snr_linear: f64, iterations: usize) -> Result<PowerOutcome> {
    let allocation = cfg.allocation(p.alpha2, snr_linear)?;
    let status = if p.r2 < cfg.r_min {
        PowerStatus::Infeasible
    } else if allocation.ordering_holds() {
        PowerStatus::Feasible
    } else {
        PowerStatus::OrderingViolated
    };
    Ok(PowerOutcome {
        allocation,
        status,
        r2: p.r2,
        r_total: p.r_total,
        iterations,
    })
}

/// Iterative clipped step search with fixed beamformers. While the weak
/// user is below the floor, `α₂` steps up; otherwise a step down, then up,
/// is taken when it keeps the floor and strictly raises the total rate.
pub fn optimize(
    ev: &RateEvaluator,
    cfg: &PowerOptimizerConfig,
    snr_linear: f64,
) -> Result<(PowerOutcome, OptimizerTrace)> {
    cfg.validate()?;
    let mut trace = OptimizerTrace::default();
    let mut cur = evaluate(ev, cfg, cfg.alpha2_init, snr_linear)?;
    trace.entries.push(TraceEntry {
        iter: 0,
        alpha2: cur.alpha2,
        r2: cur.r2,
        r_total: cur.r_total,
    });
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let next = if cur.r2 < cfg.r_min {
            if cur.alpha2 >= cfg.alpha2_max {
                break;
            }
            Some(evaluate(ev, cfg, snap(cfg.alpha2_max.min(cur.alpha2 + cfg.delta)), snr_linear)?)
        } else {
            let mut accepted = None;
            for cand in [
                cfg.alpha2_min.max(cur.alpha2 - cfg.delta),
                cfg.alpha2_max.min(cur.alpha2 + cfg.delta),
            ] {
                let cand = snap(cand);
                if cand == cur.alpha2 {
                    continue;
                }
                let p = evaluate(ev, cfg, cand, snr_linear)?;
                if p.r2 >= cfg.r_min && p.r_total > cur.r_total + IMPROVEMENT_TOL {
                    accepted = Some(p);
                    break;
                }
            }
            accepted
        };
        let Some(p) = next else { break };
        iterations += 1;
        cur = p;
        trace.entries.push(TraceEntry {
            iter: iterations,
            alpha2: cur.alpha2,
            r2: cur.r2,
            r_total: cur.r_total,
        });
    }
    Ok((outcome(cfg, cur, snr_linear, iterations)?, trace))
}

/// Exhaustive search over `α₂ ∈ {alpha2_min, alpha2_min + step, …}` up to
/// `alpha2_max`, keeping points that meet the floor with `α₂ > α₁`; ties
/// go to the larger `α₂`. With no such point, the best-effort result is the
/// grid point with the largest weak-user rate, flagged by its status.
pub fn oracle_grid_search(
    ev: &RateEvaluator,
    cfg: &PowerOptimizerConfig,
    snr_linear: f64,
    grid_step: f64,
) -> Result<PowerOutcome> {
    cfg.validate()?;
    if !(grid_step > 0.0 && grid_step <= cfg.delta + 1e-15) {
        return Err(Error::config(format!(
            "grid step {grid_step} must lie in (0, delta = {}]",
            cfg.delta
        )));
    }
    let n = ((cfg.alpha2_max - cfg.alpha2_min) / grid_step + 1e-9).floor() as usize;
    let mut best: Option<Point> = None;
    let mut fallback: Option<Point> = None;
    for i in 0..=n {
        let a2 = snap(cfg.alpha2_min + i as f64 * grid_step);
        let p = evaluate(ev, cfg, a2, snr_linear)?;
        if fallback.is_none_or(|f| p.r2 >= f.r2) {
            fallback = Some(p);
        }
        let ordered = a2 > cfg.alpha_c - a2;
        if ordered && p.r2 >= cfg.r_min && best.is_none_or(|b| p.r_total >= b.r_total) {
            best = Some(p);
        }
    }
    let chosen = best.or(fallback).expect("grid has at least one point");
    outcome(cfg, chosen, snr_linear, n + 1)
}

/// Total rate at `alpha2`, for oracle comparisons.
pub fn total_rate_at(ev: &RateEvaluator, cfg: &PowerOptimizerConfig, alpha2: f64, snr_linear: f64) -> Result<f64> {
    evaluate(ev, cfg, alpha2, snr_linear).map(|p| p.r_total)
}

/// Weak-user rate at `alpha2` in the configured floor sense.
pub fn weak_rate_at(ev: &RateEvaluator, cfg: &PowerOptimizerConfig, alpha2: f64, snr_linear: f64) -> Result<f64> {
    evaluate(ev, cfg, alpha2, snr_linear).map(|p| p.r2)
}
