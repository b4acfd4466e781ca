//! Mean/std aggregation of sweep points, CSV rendering and plot series.

use std::fmt::Write as _;

use super::plot::{LinePlot, Series};
use super::{PointResult, ScenarioKind, ScenarioSpec};
use crate::channel::Object;
use crate::power::PowerStatus;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricStat {
    pub name: String,
    pub mean: f64,
    /// Sample standard deviation; zero for a single realization.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub scenario: ScenarioSpec,
    pub snr_db: f64,
    pub n: usize,
    pub metrics: Vec<MetricStat>,
    /// Fraction of realizations with blockage declared on a user.
    pub blockage_detection_rate: f64,
    pub infeasible_fraction: f64,
    /// Fraction meeting the rate floor with `α₂ ≤ α₁`.
    pub ordering_violated_fraction: f64,
    pub switch_rate: f64,
}

impl AggregateRow {
    pub fn metric(&self, name: &str) -> Option<&MetricStat> {
        self.metrics.iter().find(|m| m.name == name)
    }

    /// Mean of `name`; panics on an unknown metric.
    pub fn mean(&self, name: &str) -> f64 {
        self.metric(name)
            .unwrap_or_else(|| panic!("unknown metric {name}"))
            .mean
    }
}

fn point_metrics(p: &PointResult) -> Vec<(String, f64)> {
    let r = &p.report;
    let mut m = vec![
        ("r_total".to_string(), r.r_total),
        ("r_comm_sum".to_string(), r.r_comm_sum),
        ("r_sense_sum".to_string(), r.r_sense_sum),
    ];
    for (i, row) in r.r_user.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            m.push((format!("r_user{}_k{k}", i + 1), *v));
        }
    }
    for o in [Object::Target, Object::User1, Object::User2] {
        m.push((format!("r_sense_{o}"), r.r_sense[o.index()].iter().sum()));
    }
    m.push(("r_weak_user_sum".to_string(), r.weak_user_sum()));
    m.push(("alpha2".to_string(), p.power.allocation.alpha2));
    m
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn fraction(points: &[&PointResult], pred: impl Fn(&PointResult) -> bool) -> f64 {
    points.iter().filter(|p| pred(p)).count() as f64 / points.len() as f64
}

/// One row per (scenario, SNR) in input order; empty groups are skipped.
pub fn aggregate(scenarios: &[ScenarioSpec], snr_grid: &[f64], points: &[PointResult]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for s in scenarios {
        for &snr in snr_grid {
            let group: Vec<&PointResult> = points
                .iter()
                .filter(|p| p.scenario == *s && p.snr_db == snr)
                .collect();
            if group.is_empty() {
                continue;
            }
            let per_point: Vec<Vec<(String, f64)>> = group.iter().map(|p| point_metrics(p)).collect();
            let metrics = (0..per_point[0].len())
                .map(|j| {
                    let values: Vec<f64> = per_point.iter().map(|m| m[j].1).collect();
                    let (mean, std) = mean_std(&values);
                    MetricStat {
                        name: per_point[0][j].0.clone(),
                        mean,
                        std,
                    }
                })
                .collect();
            rows.push(AggregateRow {
                scenario: *s,
                snr_db: snr,
                n: group.len(),
                metrics,
                blockage_detection_rate: fraction(&group, |p| p.users_declared_blocked()),
                infeasible_fraction: fraction(&group, |p| p.power.status == PowerStatus::Infeasible),
                ordering_violated_fraction: fraction(&group, |p| {
                    p.power.status == PowerStatus::OrderingViolated
                }),
                switch_rate: fraction(&group, |p| p.switched),
            });
        }
    }
    rows
}

pub fn rows_to_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from("scenario,blockage_db,snr_db,n_realizations");
    if let Some(first) = rows.first() {
        for m in &first.metrics {
            let _ = write!(out, ",mean_{0},std_{0}", m.name);
        }
    }
    out.push_str(",blockage_detection_rate,infeasible_fraction,ordering_violated_fraction,switch_rate\n");
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{}",
            r.scenario.kind.name(),
            r.scenario.blockage_db,
            r.snr_db,
            r.n
        );
        for m in &r.metrics {
            let _ = write!(out, ",{:.6},{:.6}", m.mean, m.std);
        }
        let _ = writeln!(
            out,
            ",{:.6},{:.6},{:.6},{:.6}",
            r.blockage_detection_rate, r.infeasible_fraction, r.ordering_violated_fraction, r.switch_rate
        );
    }
    out
}

fn series(rows: &[AggregateRow], s: &ScenarioSpec, metric: &str, name: String, dashed: bool) -> Series {
    Series {
        name,
        points: rows
            .iter()
            .filter(|r| r.scenario == *s)
            .map(|r| (r.snr_db, r.mean(metric)))
            .collect(),
        dashed,
    }
}

/// Total sum rate, communication/sensing split and per-user rates.
pub(crate) fn plots(
    rows: &[AggregateRow],
    scenarios: &[ScenarioSpec],
    k_subcarriers: usize,
) -> Vec<(&'static str, LinePlot)> {
    let x_label = "SNR (dB)".to_string();
    let total = LinePlot {
        title: "Total sum rate".into(),
        x_label: x_label.clone(),
        y_label: "Sum rate (bps/Hz)".into(),
        series: scenarios
            .iter()
            .map(|s| series(rows, s, "r_total", s.label(), false))
            .collect(),
    };
    let split = LinePlot {
        title: "Communication and sensing sum rates".into(),
        x_label: x_label.clone(),
        y_label: "Sum rate (bps/Hz)".into(),
        series: scenarios
            .iter()
            .flat_map(|s| {
                [
                    series(rows, s, "r_comm_sum", format!("{} comm", s.label()), false),
                    series(rows, s, "r_sense_sum", format!("{} sense", s.label()), true),
                ]
            })
            .collect(),
    };
    let reference = scenarios
        .iter()
        .find(|s| s.kind == ScenarioKind::NoBlockage)
        .unwrap_or(&scenarios[0]);
    let users = LinePlot {
        title: format!("Per-user rates ({})", reference.label()),
        x_label,
        y_label: "Rate (bps/Hz)".into(),
        series: (1..=2)
            .flat_map(|i| {
                (0..k_subcarriers).map(move |k| (i, k))
            })
            .map(|(i, k)| {
                series(
                    rows,
                    reference,
                    &format!("r_user{i}_k{k}"),
                    format!("user {i}, subcarrier {}", k + 1),
                    i == 2,
                )
            })
            .collect(),
    };
    vec![
        ("sum_rate.svg", total),
        ("comm_sense.svg", split),
        ("user_rates.svg", users),
    ]
}
