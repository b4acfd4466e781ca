use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;

use super::synth::blockage_amplitude;

/// The three reflectors / receivers the base station deals with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Object {
    /// Strong NOMA user.
    User1,
    /// Weak NOMA user.
    User2,
    /// Dedicated passive sensing target.
    Target,
}

impl Object {
    pub const ALL: [Object; 3] = [Object::User1, Object::User2, Object::Target];
    pub const USERS: [Object; 2] = [Object::User1, Object::User2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Object::User1 => "user1",
            Object::User2 => "user2",
            Object::Target => "target",
        }
    }

    pub fn is_user(self) -> bool {
        !matches!(self, Object::Target)
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.name() == name)
    }
}

impl fmt::Display for Object {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkState {
    Los,
    Nlos,
}

impl LinkState {
    pub fn name(self) -> &'static str {
        match self {
            LinkState::Los => "los",
            LinkState::Nlos => "nlos",
        }
    }
}

/// How many hops of the monostatic echo a blocker attenuates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EchoAttenuation {
    /// Only the forward link: echo amplitude scaled by `β`.
    #[default]
    SingleHop,
    /// Forward and return: echo amplitude scaled by `β²`.
    RoundTrip,
}

impl EchoAttenuation {
    pub fn hops(self) -> i32 {
        match self {
            EchoAttenuation::SingleHop => 1,
            EchoAttenuation::RoundTrip => 2,
        }
    }
}

/// Per-object channel matrices for every subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectChannels {
    pub los: Vec<ComplexMatrix>,
    pub nlos: Vec<ComplexMatrix>,
    /// Echo channels observed at the radar array (`N_R x N_t`). Unused for
    /// the target, whose channel is already the radar-side matrix.
    pub echo_los: Option<Vec<ComplexMatrix>>,
    pub echo_nlos: Option<Vec<ComplexMatrix>>,
}

/// Channels of both users and the target, with per-object link state and
/// blockage loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcarrierChannelSet {
    k_subcarriers: usize,
    n_t: usize,
    n_r: usize,
    n_radar: usize,
    carrier_freq: f64,
    bandwidth: f64,
    objects: [ObjectChannels; 3],
    active: [LinkState; 3],
    blockage_db: [f64; 3],
    echo_attenuation: EchoAttenuation,
}

impl SubcarrierChannelSet {
    /// Validates dimensions and fills in missing user echo channels with
    /// the downlink matrices (possible only when `N_r == N_R`).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_t: usize,
        n_r: usize,
        n_radar: usize,
        carrier_freq: f64,
        bandwidth: f64,
        user1: ObjectChannels,
        user2: ObjectChannels,
        target: ObjectChannels,
    ) -> Result<Self> {
        let k = user1.los.len();
        if k == 0 {
            return Err(Error::Schema("channel set has no subcarriers".into()));
        }
        let mut objects = [user1, user2, target];
        for (o, ch) in Object::ALL.iter().zip(objects.iter_mut()) {
            let rows = if o.is_user() { n_r } else { n_radar };
            check_block(*o, "los", &ch.los, k, rows, n_t)?;
            check_block(*o, "nlos", &ch.nlos, k, rows, n_t)?;
            if o.is_user() {
                for (variant, echo, fallback) in [
                    ("echo_los", &mut ch.echo_los, &ch.los),
                    ("echo_nlos", &mut ch.echo_nlos, &ch.nlos),
                ] {
                    match echo {
                        Some(e) => check_block(*o, variant, e, k, n_radar, n_t)?,
                        None if n_r == n_radar => *echo = Some(fallback.clone()),
                        None => {
                            return Err(Error::Schema(format!(
                                "{o} {variant} missing and N_r={n_r} != N_R={n_radar}"
                            )))
                        }
                    }
                }
            } else {
                ch.echo_los = None;
                ch.echo_nlos = None;
            }
        }
        Ok(SubcarrierChannelSet {
            k_subcarriers: k,
            n_t,
            n_r,
            n_radar,
            carrier_freq,
            bandwidth,
            objects,
            active: [LinkState::Los; 3],
            blockage_db: [0.0; 3],
            echo_attenuation: EchoAttenuation::default(),
        })
    }

    pub fn k_subcarriers(&self) -> usize {
        self.k_subcarriers
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_radar(&self) -> usize {
        self.n_radar
    }

    pub fn carrier_freq(&self) -> f64 {
        self.carrier_freq
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn active(&self, o: Object) -> LinkState {
        self.active[o.index()]
    }

    pub fn blockage_db(&self, o: Object) -> f64 {
        self.blockage_db[o.index()]
    }

    pub fn echo_attenuation(&self) -> EchoAttenuation {
        self.echo_attenuation
    }

    pub fn object(&self, o: Object) -> &ObjectChannels {
        &self.objects[o.index()]
    }

    pub fn has_nlos(&self, o: Object) -> bool {
        !self.objects[o.index()].nlos.is_empty()
    }

    pub fn with_blockage(&self, o: Object, blockage_db: f64) -> Result<Self> {
        blockage_amplitude(blockage_db)?;
        let mut out = self.clone();
        out.blockage_db[o.index()] = blockage_db;
        Ok(out)
    }

    pub fn with_active(&self, o: Object, state: LinkState) -> Self {
        let mut out = self.clone();
        out.active[o.index()] = state;
        out
    }

    pub fn with_echo_attenuation(&self, mode: EchoAttenuation) -> Self {
        let mut out = self.clone();
        out.echo_attenuation = mode;
        out
    }

    /// Stored matrix, without blockage.
    pub fn raw(&self, o: Object, state: LinkState, k: usize) -> &ComplexMatrix {
        let ch = &self.objects[o.index()];
        match state {
            LinkState::Los => &ch.los[k],
            LinkState::Nlos => &ch.nlos[k],
        }
    }

    /// Stored echo matrix, without blockage.
    pub fn raw_echo(&self, o: Object, state: LinkState, k: usize) -> &ComplexMatrix {
        let ch = &self.objects[o.index()];
        let echo = match state {
            LinkState::Los => ch.echo_los.as_ref(),
            LinkState::Nlos => ch.echo_nlos.as_ref(),
        };
        match echo {
            Some(e) => &e[k],
            None => self.raw(o, state, k),
        }
    }

    /// Blockage only attenuates the line-of-sight path.
    fn amplitude(&self, o: Object) -> f64 {
        match self.active(o) {
            LinkState::Los => {
                blockage_amplitude(self.blockage_db(o)).expect("validated on insertion")
            }
            LinkState::Nlos => 1.0,
        }
    }

    /// Active downlink channel at subcarrier `k`, blockage applied.
    pub fn downlink(&self, o: Object, k: usize) -> ComplexMatrix {
        let h = self.raw(o, self.active(o), k);
        let beta = self.amplitude(o);
        if beta == 1.0 {
            h.clone()
        } else {
            h.scale(beta)
        }
    }

    pub fn downlink_all(&self, o: Object) -> Vec<ComplexMatrix> {
        (0..self.k_subcarriers).map(|k| self.downlink(o, k)).collect()
    }

    /// Active monostatic echo channel at the radar array, blockage applied
    /// according to [`EchoAttenuation`].
    pub fn echo(&self, o: Object, k: usize) -> ComplexMatrix {
        if !o.is_user() {
            return self.downlink(o, k);
        }
        let h = self.raw_echo(o, self.active(o), k);
        let beta = self.amplitude(o).powi(self.echo_attenuation.hops());
        if beta == 1.0 {
            h.clone()
        } else {
            h.scale(beta)
        }
    }
}

fn check_block(
    o: Object,
    variant: &str,
    mats: &[ComplexMatrix],
    k: usize,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if mats.len() != k {
        return Err(Error::Schema(format!(
            "{o} {variant}: {} subcarrier matrices, expected {k}",
            mats.len()
        )));
    }
    for (i, m) in mats.iter().enumerate() {
        if m.shape() != (rows, cols) {
            return Err(Error::Schema(format!(
                "{o} {variant} subcarrier {i}: {:?}, expected ({rows}, {cols})",
                m.shape()
            )));
        }
        if !m.is_finite() {
            return Err(Error::Schema(format!(
                "{o} {variant} subcarrier {i}: non-finite entries"
            )));
        }
    }
    Ok(())
}
