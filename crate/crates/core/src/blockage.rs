//! Backscatter-based blockage detection and LOS→NLOS switching.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::beamforming::HybridBeamformer;
use crate::channel::{LinkState, Object, SubcarrierChannelSet};
use crate::error::{Error, Result};
use crate::numerics::{hermitian, matmul, power, ComplexMatrix};
use crate::rates::{PowerAllocation, ReflectorSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockageAction {
    KeepLos,
    SwitchToNlos,
}

impl BlockageAction {
    pub fn name(self) -> &'static str {
        match self {
            BlockageAction::KeepLos => "keep_los",
            BlockageAction::SwitchToNlos => "switch_nlos",
        }
    }
}

impl fmt::Display for BlockageAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockageDecision {
    pub object: Object,
    /// Measured reflected-to-transmitted power ratio.
    pub ratio: f64,
    pub expected_unblocked: f64,
    pub expected_blocked: f64,
    pub declared_blocked: bool,
    pub action: BlockageAction,
}

fn beam(bf: &HybridBeamformer, o: Object, k: usize) -> ComplexMatrix {
    if o.is_user() {
        bf.comm_precoder(k)
    } else {
        bf.sensing_precoder(k)
    }
}

/// Received echo `ρ_o W_Rᴴ H_o,echo(k) F_beam(k)` and the beam itself.
fn echo_and_beam(
    o: Object,
    k: usize,
    channels: &SubcarrierChannelSet,
    bf: &HybridBeamformer,
    reflectors: &ReflectorSet,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let f = beam(bf, o, k);
    let e = matmul(&matmul(&hermitian(&bf.w_radar), &channels.echo(o, k))?, &f)?
        .scale(reflectors.get(o));
    Ok((e, f))
}

fn ratio_with<F>(
    o: Object,
    channels: &SubcarrierChannelSet,
    bf: &HybridBeamformer,
    pa: &PowerAllocation,
    reflectors: &ReflectorSet,
    mut received_power: F,
) -> Result<f64>
where
    F: FnMut(&ComplexMatrix, f64) -> f64,
{
    let p = pa.p_object(o);
    let mut reflected = 0.0;
    let mut transmitted = 0.0;
    for k in 0..channels.k_subcarriers() {
        let (e, f) = echo_and_beam(o, k, channels, bf, reflectors)?;
        reflected += received_power(&e, p);
        transmitted += p * power(&f);
    }
    if !(transmitted > 0.0) {
        return Err(Error::config(format!("no power transmitted towards {o}")));
    }
    Ok(reflected / transmitted)
}

/// Noise-free `Σ_k p‖ρ W_Rᴴ H F‖² / Σ_k p‖F‖²`.
pub fn reflection_ratio(
    o: Object,
    channels: &SubcarrierChannelSet,
    bf: &HybridBeamformer,
    pa: &PowerAllocation,
    reflectors: &ReflectorSet,
) -> Result<f64> {
    ratio_with(o, channels, bf, pa, reflectors, |e, p| p * power(e))
}

/// As [`reflection_ratio`], with `CN(0, noise_var)` added to every entry of
/// the received echo before its power is measured.
pub fn reflection_ratio_noisy<R: Rng + ?Sized>(
    o: Object,
    channels: &SubcarrierChannelSet,
    bf: &HybridBeamformer,
    pa: &PowerAllocation,
    reflectors: &ReflectorSet,
    noise_var: f64,
    rng: &mut R,
) -> Result<f64> {
    let normal = Normal::new(0.0, (noise_var / 2.0).sqrt())
        .map_err(|e| Error::config(format!("measurement noise: {e}")))?;
    ratio_with(o, channels, bf, pa, reflectors, |e, p| {
        let amp = p.sqrt();
        e.iter()
            .map(|z| (z * amp + Complex64::new(normal.sample(rng), normal.sample(rng))).norm_sqr())
            .sum()
    })
}

/// Log-domain midpoint rule: blocked iff `ratio < sqrt(unblocked · blocked)`.
/// A blocked verdict without an NLOS fallback is returned as
/// [`Error::BlockedWithoutFallback`] carrying the decision.
pub fn decide(
    object: Object,
    ratio: f64,
    expected_unblocked: f64,
    expected_blocked: f64,
    nlos_available: bool,
) -> Result<BlockageDecision> {
    if !(expected_blocked > 0.0 && expected_blocked < expected_unblocked)
        || !expected_unblocked.is_finite()
    {
        return Err(Error::config(format!(
            "blockage references must satisfy 0 < blocked < unblocked, got {expected_blocked:e} and {expected_unblocked:e}"
        )));
    }
    if !(ratio >= 0.0) {
        return Err(Error::config(format!("reflection ratio {ratio} is not a non-negative number")));
    }
    let declared_blocked = if ratio == 0.0 {
        true
    } else {
        ratio.ln() < 0.5 * (expected_unblocked.ln() + expected_blocked.ln())
    };
    let mut decision = BlockageDecision {
        object,
        ratio,
        expected_unblocked,
        expected_blocked,
        declared_blocked,
        action: BlockageAction::KeepLos,
    };
    if declared_blocked {
        if !nlos_available {
            return Err(Error::BlockedWithoutFallback(Box::new(decision)));
        }
        decision.action = BlockageAction::SwitchToNlos;
    }
    Ok(decision)
}

/// Measures object `o` with the given probe beamformer and decides against
/// the unblocked reference and the reference for `nominal_blockage_db`.
#[allow(clippy::too_many_arguments)]
pub fn assess(
    o: Object,
    channels: &SubcarrierChannelSet,
    bf: &HybridBeamformer,
    pa: &PowerAllocation,
    reflectors: &ReflectorSet,
    nominal_blockage_db: f64,
    nlos_available: bool,
    measured_ratio: Option<f64>,
) -> Result<BlockageDecision> {
    if !(nominal_blockage_db > 0.0) {
        return Err(Error::config(format!(
            "nominal blockage {nominal_blockage_db} dB must be positive"
        )));
    }
    let ratio = match measured_ratio {
        Some(r) => r,
        None => reflection_ratio(o, channels, bf, pa, reflectors)?,
    };
    let reference = channels.with_blockage(o, 0.0)?.with_active(o, LinkState::Los);
    let expected_unblocked = reflection_ratio(o, &reference, bf, pa, reflectors)?;
    let hops = if o.is_user() { channels.echo_attenuation().hops() } else { 1 };
    let expected_blocked =
        expected_unblocked * 10f64.powf(-nominal_blockage_db / 10.0 * hops as f64);
    decide(o, ratio, expected_unblocked, expected_blocked, nlos_available)
}

/// Flips objects with a switch decision to NLOS. Users form one cluster: a
/// switch for either moves both.
pub fn apply_switch(channels: &SubcarrierChannelSet, decisions: &[BlockageDecision]) -> SubcarrierChannelSet {
    let switched = |pred: &dyn Fn(Object) -> bool| {
        decisions
            .iter()
            .any(|d| d.action == BlockageAction::SwitchToNlos && pred(d.object))
    };
    let mut out = channels.clone();
    if switched(&|o| o.is_user()) {
        for u in Object::USERS {
            out = out.with_active(u, LinkState::Nlos);
        }
    }
    if switched(&|o| o == Object::Target) {
        out = out.with_active(Object::Target, LinkState::Nlos);
    }
    out
}
