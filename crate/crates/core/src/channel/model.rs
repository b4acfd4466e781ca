//! Random channel-set generation for Monte-Carlo runs.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::set::{ObjectChannels, SubcarrierChannelSet};
use super::synth::{
    subcarrier_frequencies, synthesize_channel, wrap_azimuth, ArrayGeometry, LinkSpec, PathParams,
};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Line-of-sight placement of one object as seen from the base station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectPlacement {
    /// Aggregate LOS power gain `|γ|²` in dB.
    pub gain_db: f64,
    pub distance_m: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl ObjectPlacement {
    fn validate(&self, name: &str) -> Result<()> {
        if !self.gain_db.is_finite() {
            return Err(Error::config(format!("channel.{name}.gain_db must be finite")));
        }
        if !(self.distance_m >= 0.0) || !self.distance_m.is_finite() {
            return Err(Error::config(format!("channel.{name}.distance_m must be >= 0")));
        }
        if !(0.0..=180.0).contains(&self.elevation_deg) {
            return Err(Error::config(format!(
                "channel.{name}.elevation_deg must lie in [0, 180]"
            )));
        }
        if !self.azimuth_deg.is_finite() {
            return Err(Error::config(format!("channel.{name}.azimuth_deg must be finite")));
        }
        Ok(())
    }

    fn los_path(&self, phase: f64) -> PathParams {
        let az = wrap_azimuth(self.azimuth_deg.to_radians());
        let el = self.elevation_deg.to_radians();
        PathParams {
            gain: Complex64::new(10f64.powf(self.gain_db / 20.0), 0.0),
            phase_shift: phase,
            delay: self.distance_m / SPEED_OF_LIGHT,
            aoa_azimuth: az,
            aoa_elevation: el,
            aod_azimuth: az,
            aod_elevation: el,
        }
    }
}

/// Parameters of the clustered-multipath channel generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelModelConfig {
    pub user1: ObjectPlacement,
    pub user2: ObjectPlacement,
    pub target: ObjectPlacement,
    pub nlos_paths_min: usize,
    pub nlos_paths_max: usize,
    /// Aggregate NLOS power deficit relative to the LOS gain.
    pub nlos_deficit_db: f64,
    pub nlos_max_delay_ns: f64,
    /// Half-width of the uniform angular spread around the LOS angles.
    pub nlos_angle_spread_deg: f64,
    /// Draw the LOS phase shift uniformly in `[0, 2π)`; zero otherwise.
    pub random_los_phase: bool,
}

/// Free-space power gain `(λ / 4πd)²` at 28 GHz, in dB.
fn free_space_gain_db(distance_m: f64) -> f64 {
    let wavelength = SPEED_OF_LIGHT / 28e9;
    20.0 * (wavelength / (4.0 * PI * distance_m)).log10()
}

impl Default for ChannelModelConfig {
    fn default() -> Self {
        let place = |d: f64, az: f64| ObjectPlacement {
            gain_db: (free_space_gain_db(d) * 10.0).round() / 10.0,
            distance_m: d,
            azimuth_deg: az,
            elevation_deg: 30.0,
        };
        ChannelModelConfig {
            user1: place(40.0, 100.0),
            user2: place(120.0, 100.0),
            target: place(60.0, 140.0),
            nlos_paths_min: 2,
            nlos_paths_max: 4,
            nlos_deficit_db: 3.0,
            nlos_max_delay_ns: 100.0,
            nlos_angle_spread_deg: 20.0,
            random_los_phase: true,
        }
    }
}

impl ChannelModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.user1.validate("user1")?;
        self.user2.validate("user2")?;
        self.target.validate("target")?;
        if self.nlos_paths_min < 2 || self.nlos_paths_max < self.nlos_paths_min {
            return Err(Error::config(
                "channel.nlos_paths_min must be >= 2 and <= channel.nlos_paths_max",
            ));
        }
        if !(self.nlos_deficit_db >= 0.0) || !self.nlos_deficit_db.is_finite() {
            return Err(Error::config("channel.nlos_deficit_db must be >= 0"));
        }
        if !(self.nlos_max_delay_ns >= 0.0) || !self.nlos_max_delay_ns.is_finite() {
            return Err(Error::config("channel.nlos_max_delay_ns must be >= 0"));
        }
        if !(0.0..=180.0).contains(&self.nlos_angle_spread_deg) {
            return Err(Error::config("channel.nlos_angle_spread_deg must lie in [0, 180]"));
        }
        Ok(())
    }

    fn placement(&self, idx: usize) -> &ObjectPlacement {
        [&self.user1, &self.user2, &self.target][idx]
    }
}

/// Array sizes and band needed to synthesize a channel set.
#[derive(Debug, Clone, Copy)]
pub struct ChannelDims {
    pub n_t: usize,
    pub n_r: usize,
    pub n_radar: usize,
    pub k_subcarriers: usize,
    pub carrier_freq: f64,
    pub bandwidth: f64,
    pub spacing_wavelengths: f64,
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

fn jitter_angle<R: Rng + ?Sized>(rng: &mut R, center: f64, spread: f64) -> f64 {
    if spread == 0.0 {
        center
    } else {
        center + rng.random_range(-spread..=spread)
    }
}

fn nlos_link<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &ChannelModelConfig,
    los: &PathParams,
    los_gain_db: f64,
    carrier: f64,
) -> LinkSpec {
    let n_paths = rng.random_range(cfg.nlos_paths_min..=cfg.nlos_paths_max);
    let total = 10f64.powf((los_gain_db - cfg.nlos_deficit_db) / 10.0);
    let spread = cfg.nlos_angle_spread_deg.to_radians();
    let max_delay = cfg.nlos_max_delay_ns * 1e-9;
    let paths = (0..n_paths)
        .map(|_| {
            let elev = |rng: &mut R, c: f64| jitter_angle(rng, c, spread).clamp(0.0, PI);
            PathParams {
                gain: complex_gaussian(rng, total / n_paths as f64),
                phase_shift: 0.0,
                delay: if max_delay > 0.0 {
                    rng.random_range(0.0..=max_delay)
                } else {
                    0.0
                },
                aoa_azimuth: wrap_azimuth(jitter_angle(rng, los.aoa_azimuth, spread)),
                aoa_elevation: elev(rng, los.aoa_elevation),
                aod_azimuth: wrap_azimuth(jitter_angle(rng, los.aod_azimuth, spread)),
                aod_elevation: elev(rng, los.aod_elevation),
            }
        })
        .collect();
    LinkSpec::nlos(paths, carrier)
}

/// Draws one channel set: LOS and NLOS downlinks for both users and the
/// target, plus monostatic user echo channels at the radar array.
///
/// Both users share the cluster's LOS departure angles; the target channel
/// is synthesized directly at the radar array.
pub fn generate_channel_set<R: Rng + ?Sized>(
    dims: &ChannelDims,
    cfg: &ChannelModelConfig,
    rng: &mut R,
) -> Result<SubcarrierChannelSet> {
    let tx = ArrayGeometry::new(dims.n_t, dims.spacing_wavelengths)?;
    let user_rx = ArrayGeometry::new(dims.n_r, dims.spacing_wavelengths)?;
    let radar_rx = ArrayGeometry::new(dims.n_radar, dims.spacing_wavelengths)?;
    let freqs = subcarrier_frequencies(dims.carrier_freq, dims.bandwidth, dims.k_subcarriers);

    let mut objects = Vec::with_capacity(3);
    for idx in 0..3 {
        let place = cfg.placement(idx);
        let phase = if cfg.random_los_phase {
            rng.random_range(0.0..TAU)
        } else {
            0.0
        };
        let los = LinkSpec::los(place.los_path(phase), dims.carrier_freq);
        let nlos = nlos_link(rng, cfg, &los.paths[0], place.gain_db, dims.carrier_freq);
        let is_user = idx < 2;
        let chans = if is_user {
            ObjectChannels {
                los: synthesize_channel(&los, &tx, &user_rx, &freqs)?,
                nlos: synthesize_channel(&nlos, &tx, &user_rx, &freqs)?,
                echo_los: Some(synthesize_channel(&los.monostatic(), &tx, &radar_rx, &freqs)?),
                echo_nlos: Some(synthesize_channel(&nlos.monostatic(), &tx, &radar_rx, &freqs)?),
            }
        } else {
            ObjectChannels {
                los: synthesize_channel(&los.monostatic(), &tx, &radar_rx, &freqs)?,
                nlos: synthesize_channel(&nlos.monostatic(), &tx, &radar_rx, &freqs)?,
                echo_los: None,
                echo_nlos: None,
            }
        };
        objects.push(chans);
    }
    let target = objects.pop().unwrap();
    let user2 = objects.pop().unwrap();
    let user1 = objects.pop().unwrap();
    SubcarrierChannelSet::new(
        dims.n_t,
        dims.n_r,
        dims.n_radar,
        dims.carrier_freq,
        dims.bandwidth,
        user1,
        user2,
        target,
    )
}
