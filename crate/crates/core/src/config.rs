//! TOML run configuration with layered overrides.
//!
//! Sections: `[system]`, `[channel]` (with `[channel.user1]` etc.),
//! `[power]`, `[detection]` and `[sweep]`. Every key is optional; missing
//! keys take the defaults below and unknown keys are rejected.
//!
//! Precedence, highest first: `--set`/`--seed` flags, the config file,
//! the `ISACSIM_SEED` environment fallback (seed only), built-in defaults.

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::beamforming::{BeamformingConfig, DEFAULT_ZF_TRUNCATION};
use crate::channel::{ChannelDims, ChannelModelConfig, EchoAttenuation};
use crate::error::{Error, Result};
use crate::harness::ScenarioSpec;
use crate::power::PowerOptimizerConfig;
use crate::rates::{noise_var_from_bandwidth, ReflectorSet};

pub const DEFAULT_SEED: u64 = 2025;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub n_t: usize,
    pub n_r: usize,
    pub n_r_rf: usize,
    pub n_radar: usize,
    pub n_s: usize,
    pub n_clusters: usize,
    pub k_subcarriers: usize,
    /// Per-subcarrier power budget in watts.
    pub p_max: f64,
    pub carrier_freq: f64,
    pub bandwidth: f64,
    /// Element spacing in wavelengths.
    pub antenna_spacing: f64,
    /// Reflection coefficients of user 1, user 2 and the target.
    pub rho: [f64; 3],
    /// Relative singular-value cutoff of the zero-forcing inverse.
    pub zf_truncation: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        SystemSection {
            n_t: 64,
            n_r: 4,
            n_r_rf: 4,
            n_radar: 4,
            n_s: 4,
            n_clusters: 2,
            k_subcarriers: 2,
            p_max: 1.0,
            carrier_freq: 28e9,
            bandwidth: 800e6,
            antenna_spacing: 0.5,
            rho: [0.8, 0.5, 0.5],
            zf_truncation: DEFAULT_ZF_TRUNCATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    /// Blockage loss the detector's blocked hypothesis assumes.
    pub nominal_blockage_db: f64,
    pub echo_attenuation: EchoAttenuation,
    /// Add receiver noise to the echo before measuring its power.
    pub measurement_noise: bool,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            nominal_blockage_db: 20.0,
            echo_attenuation: EchoAttenuation::SingleHop,
            measurement_noise: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub snr_grid_db: Vec<f64>,
    pub n_realizations: usize,
    pub rng_seed: u64,
    /// `none`, `keep_los:<dB>` or `switch_nlos:<dB>`.
    pub scenarios: Vec<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            snr_grid_db: (0..=6).map(|i| 5.0 * i as f64).collect(),
            n_realizations: 100,
            rng_seed: DEFAULT_SEED,
            scenarios: ScenarioSpec::default_set().iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub system: SystemSection,
    pub channel: ChannelModelConfig,
    pub power: PowerOptimizerConfig,
    pub detection: DetectionConfig,
    pub sweep: SweepConfig,
}

fn is_perfect_square(n: usize) -> bool {
    let r = (n as f64).sqrt().round() as usize;
    r * r == n
}

impl SystemConfig {
    /// Parses and validates a config document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        load_layered(Some(text), &[], None, None)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        for (key, v) in [
            ("n_t", s.n_t),
            ("n_r", s.n_r),
            ("n_r_rf", s.n_r_rf),
            ("n_radar", s.n_radar),
            ("n_s", s.n_s),
            ("k_subcarriers", s.k_subcarriers),
        ] {
            if v == 0 {
                return Err(Error::config(format!("system.{key} must be positive")));
            }
        }
        for (key, v) in [("n_t", s.n_t), ("n_r", s.n_r), ("n_radar", s.n_radar)] {
            if !is_perfect_square(v) {
                return Err(Error::config(format!("system.{key} = {v} is not a perfect square")));
            }
        }
        if s.n_clusters != 2 {
            return Err(Error::config(format!(
                "system.n_clusters = {} but the simulator models exactly 2 (users, target)",
                s.n_clusters
            )));
        }
        if s.n_radar != s.n_s {
            return Err(Error::config(format!(
                "system.n_radar = {} must equal system.n_s = {}",
                s.n_radar, s.n_s
            )));
        }
        if s.n_r_rf != s.n_s || s.n_r_rf > s.n_r {
            return Err(Error::config(format!(
                "system.n_r_rf = {} must equal system.n_s and not exceed system.n_r",
                s.n_r_rf
            )));
        }
        if s.n_radar + s.n_r != s.n_clusters * s.n_s {
            return Err(Error::config(format!(
                "system.n_radar + system.n_r = {} must equal n_clusters * n_s = {}",
                s.n_radar + s.n_r,
                s.n_clusters * s.n_s
            )));
        }
        if s.n_clusters * s.n_s > s.n_t {
            return Err(Error::config("system.n_t must be at least n_clusters * n_s"));
        }
        for (key, v) in [
            ("p_max", s.p_max),
            ("carrier_freq", s.carrier_freq),
            ("bandwidth", s.bandwidth),
            ("antenna_spacing", s.antenna_spacing),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("system.{key} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&s.zf_truncation) {
            return Err(Error::config("system.zf_truncation must lie in [0, 1)"));
        }
        ReflectorSet::new(s.rho).map_err(|e| Error::config(format!("system.rho: {e}")))?;
        self.channel.validate()?;
        self.power_optimizer().validate()?;
        let d = &self.detection;
        if !(d.nominal_blockage_db > 0.0 && d.nominal_blockage_db.is_finite()) {
            return Err(Error::config("detection.nominal_blockage_db must be positive"));
        }
        let w = &self.sweep;
        if w.snr_grid_db.is_empty() || w.snr_grid_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("sweep.snr_grid_db must be a non-empty list of numbers"));
        }
        if w.n_realizations == 0 {
            return Err(Error::config("sweep.n_realizations must be positive"));
        }
        self.scenarios()?;
        Ok(())
    }

    pub fn scenarios(&self) -> Result<Vec<ScenarioSpec>> {
        if self.sweep.scenarios.is_empty() {
            return Err(Error::config("sweep.scenarios must not be empty"));
        }
        self.sweep
            .scenarios
            .iter()
            .map(|s| s.parse().map_err(|e| Error::config(format!("sweep.scenarios: {e}"))))
            .collect()
    }

    pub fn dims(&self) -> ChannelDims {
        ChannelDims {
            n_t: self.system.n_t,
            n_r: self.system.n_r,
            n_radar: self.system.n_radar,
            k_subcarriers: self.system.k_subcarriers,
            carrier_freq: self.system.carrier_freq,
            bandwidth: self.system.bandwidth,
            spacing_wavelengths: self.system.antenna_spacing,
        }
    }

    pub fn beamforming(&self) -> BeamformingConfig {
        BeamformingConfig {
            n_r_rf: self.system.n_r_rf,
            n_s: self.system.n_s,
            p_max: self.system.p_max,
            zf_truncation: self.system.zf_truncation,
        }
    }

    /// Power optimizer settings with the budget tied to `system.p_max`.
    pub fn power_optimizer(&self) -> PowerOptimizerConfig {
        PowerOptimizerConfig {
            total_budget: self.system.p_max,
            ..self.power
        }
    }

    pub fn reflectors(&self) -> ReflectorSet {
        ReflectorSet::new(self.system.rho).expect("validated")
    }

    pub fn noise_var(&self) -> f64 {
        noise_var_from_bandwidth(self.system.bandwidth)
    }

    /// Canonical TOML rendering of the full configuration.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot render config: {e}")))
    }
}

fn default_table() -> Table {
    Table::try_from(SystemConfig::default()).expect("defaults serialize")
}

/// Resolves `key` (dotted, or a bare leaf name unique across sections) to
/// a path in the default document.
fn default_at<'a>(defaults: &'a Table, path: &[String]) -> Option<&'a Value> {
    let (last, parents) = path.split_last()?;
    let mut t = defaults;
    for p in parents {
        t = t.get(p)?.as_table()?;
    }
    t.get(last)
}

fn resolve_key(defaults: &Table, key: &str) -> Result<Vec<String>> {
    let parts: Vec<String> = key.split('.').map(|p| p.trim().to_string()).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("bad override key '{key}'")));
    }
    if parts.len() > 1 {
        return Ok(parts);
    }
    let mut hits = Vec::new();
    for (section, v) in defaults {
        if let Value::Table(t) = v {
            if t.contains_key(&parts[0]) {
                hits.push(vec![section.clone(), parts[0].clone()]);
            }
        }
    }
    match hits.len() {
        1 => Ok(hits.pop().expect("one hit")),
        0 => Err(Error::config(format!("unknown config key '{key}'"))),
        _ => Err(Error::config(format!(
            "config key '{key}' is ambiguous; qualify it with a section"
        ))),
    }
}

fn parse_scalar(text: &str) -> Value {
    let text = text.trim();
    match toml::from_str::<Table>(&format!("v = {text}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(text.to_string()),
    }
}

/// Parses an override value: a TOML value, a bare comma-separated list, or
/// a bare string.
pub fn parse_override_value(text: &str) -> Value {
    let text = text.trim();
    if let Ok(mut t) = toml::from_str::<Table>(&format!("v = {text}")) {
        return t.remove("v").expect("parsed key");
    }
    if text.contains(',') {
        return Value::Array(
            text.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(parse_scalar)
                .collect(),
        );
    }
    Value::String(text.to_string())
}

fn set_path(table: &mut Table, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.clone()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(Error::config(format!("config key '{p}' is not a section"))),
        };
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// Integers written where the default is a float (or a float array) are
/// widened so `p_max = 1` and `snr_grid_db = [0, 15]` are accepted.
fn widen_integers(value: &mut Value, default: &Value) {
    match (value, default) {
        (v @ Value::Integer(_), Value::Float(_)) => {
            if let Value::Integer(i) = *v {
                *v = Value::Float(i as f64);
            }
        }
        (Value::Array(items), Value::Array(d)) => {
            if let Some(first) = d.first() {
                for item in items.iter_mut() {
                    widen_integers(item, first);
                }
            }
        }
        (Value::Table(t), Value::Table(d)) => {
            for (k, v) in t.iter_mut() {
                if let Some(dv) = d.get(k) {
                    widen_integers(v, dv);
                }
            }
        }
        _ => {}
    }
}

/// Overlays `top` onto `base`, recursing into tables present in both.
fn deep_merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => deep_merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Splits `KEY=VALUE`.
pub fn split_override(text: &str) -> Result<(&str, &str)> {
    text.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| Error::config(format!("override '{text}' is not KEY=VALUE")))
}

/// Builds the configuration from defaults, the optional file text, the
/// environment seed fallback and command-line overrides.
pub fn load_layered(
    file_text: Option<&str>,
    overrides: &[String],
    env_seed: Option<u64>,
    flag_seed: Option<u64>,
) -> Result<SystemConfig> {
    let defaults = default_table();
    let file: Table = match file_text {
        Some(text) => toml::from_str(text).map_err(|e| Error::config(format!("config file: {e}")))?,
        None => Table::new(),
    };
    let file_has_seed = file
        .get("sweep")
        .and_then(Value::as_table)
        .is_some_and(|t| t.contains_key("rng_seed"));
    let mut table = defaults.clone();
    deep_merge(&mut table, file);
    let mut override_seed = None;
    for o in overrides {
        let (key, raw) = split_override(o)?;
        let path = resolve_key(&defaults, key)?;
        if path == ["sweep", "rng_seed"] {
            override_seed = Some(raw.parse::<u64>().map_err(|_| {
                Error::config(format!("sweep.rng_seed = '{raw}' is not an unsigned 64-bit integer"))
            })?);
            continue;
        }
        let mut value = parse_override_value(raw);
        if default_at(&defaults, &path).is_some_and(Value::is_array) && !value.is_array() {
            value = Value::Array(vec![value]);
        }
        set_path(&mut table, &path, value)?;
    }
    let mut v = Value::Table(table);
    widen_integers(&mut v, &Value::Table(defaults));
    let Value::Table(table) = v else { unreachable!() };
    let mut cfg: SystemConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
    if let Some(seed) = flag_seed.or(override_seed) {
        cfg.sweep.rng_seed = seed;
    } else if !file_has_seed {
        if let Some(seed) = env_seed {
            cfg.sweep.rng_seed = seed;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
